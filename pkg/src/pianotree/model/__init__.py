from .batch import EOS, SOS, TreeBatch, collate
from .dims import ModelDims
from .vae import (
    DecodeOutput,
    LatentPosterior,
    LossReport,
    PianoTreeVAE,
    kl_divergence,
    sample_latent,
)
from .api import decode, embed_note, encode, generate

__all__ = [
    "EOS",
    "SOS",
    "DecodeOutput",
    "LatentPosterior",
    "LossReport",
    "ModelDims",
    "PianoTreeVAE",
    "TreeBatch",
    "collate",
    "decode",
    "embed_note",
    "encode",
    "generate",
    "kl_divergence",
    "sample_latent",
]
