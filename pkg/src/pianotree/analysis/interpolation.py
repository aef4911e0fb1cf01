"""Spherical interpolation between latent codes and decoding along the arc."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from ..codec.segment import PolySegment

LINEAR_FALLBACK = 1e-6


def slerp(z1, z2, alpha: float) -> np.ndarray:
    """Point at fraction ``alpha`` of the great-circle arc from ``z1`` to ``z2``.

    Falls back to linear interpolation when the angle is below 1e-6 rad.
    """
    a = np.asarray(z1, dtype=np.float64)
    b = np.asarray(z2, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("slerp is undefined for a zero vector")
    cos = np.clip(np.dot(a / na, b / nb), -1.0, 1.0)
    omega = np.arccos(cos)
    if omega < LINEAR_FALLBACK:
        return (1 - alpha) * a + alpha * b
    s = np.sin(omega)
    return (np.sin((1 - alpha) * omega) / s) * a + (np.sin(alpha * omega) / s) * b


def alphas(n_steps: int) -> list[float]:
    if n_steps < 2:
        raise ValueError("need at least 2 interpolation steps")
    return [i / (n_steps - 1) for i in range(n_steps)]


@torch.no_grad()
def interpolate(model, seg_a: PolySegment, seg_b: PolySegment, n_steps: int) -> list[tuple[float, PolySegment]]:
    """Decode ``n_steps`` points on the arc between two posterior means.

    Each point is decoded on its own, so the endpoints equal a direct
    decode of either mean.
    """
    from ..model.api import encode, generate

    post = encode(model, [seg_a, seg_b])
    mu = post.mu.cpu().double().numpy()
    out = []
    for a in alphas(n_steps):
        z = torch.as_tensor(slerp(mu[0], mu[1], a)).to(post.mu)
        out.append((a, generate(model, z[None])[0]))
    return out


def interpolate_latents(z_a: Sequence[float], z_b: Sequence[float], n_steps: int) -> np.ndarray:
    return np.stack([slerp(z_a, z_b, a) for a in alphas(n_steps)])
