"""Procedural generator families with distinct upsampling artifacts.

Each family halves the source by 2x2 averaging and re-upsamples it with its
own kernel. The output keeps the source shape, and the family name is the
attribution label.
"""
from __future__ import annotations

import numpy as np

from ..imaging import check_image, make_rng
from .layers import UpsampleBilinear2x, UpsampleNearest2x, UpsampleTConv2x

FAMILIES = ("nearest", "bilinear", "checkerboard_tconv")

# uneven side taps: odd outputs get a different gain than even ones
TCONV_TAPS = (0.3, 1.0, 0.5)
TCONV_JITTER = 0.05


def downscale2x(img: np.ndarray) -> np.ndarray:
    h, w, c = img.shape
    if h % 2 or w % 2:
        raise ValueError(f"procedural families need even dimensions, got {h}x{w}")
    return img.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def tconv_kernel(seed: int) -> np.ndarray:
    """Separable 3x3 kernel from the base taps, side taps jittered by ``seed``."""
    jitter = make_rng(seed).uniform(-TCONV_JITTER, TCONV_JITTER, size=2)
    taps = np.array([TCONV_TAPS[0] + jitter[0], TCONV_TAPS[1], TCONV_TAPS[2] + jitter[1]])
    return np.outer(taps, taps)


def procedural_generate(family: str, src, seed: int = 0) -> np.ndarray:
    """Deterministic re-generation of ``src`` by ``family``; only the tconv family uses ``seed``."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    img = check_image(src, "src")
    small = downscale2x(img)[None]
    c = img.shape[2]
    if family == "nearest":
        layer = UpsampleNearest2x(c, c)
    elif family == "bilinear":
        layer = UpsampleBilinear2x(c, c)
    else:
        weight = np.zeros((c, c, 3, 3))
        for ch in range(c):
            weight[ch, ch] = tconv_kernel(seed)
        layer = UpsampleTConv2x(c, c, {"weight": weight})
    out, _ = layer.forward(small)
    return np.clip(out[0], 0.0, 1.0)
