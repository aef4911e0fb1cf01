"""PianoTree VAE: a tree-structured variational autoencoder for polyphonic piano segments."""

__version__ = "0.1.0"
