"""Orthonormal 2-D DCT-II and log-magnitude spectral features."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .imaging import check_batch, check_image

EPS_LOG = 1e-6


@lru_cache(maxsize=64)
def dct_matrix(n: int) -> np.ndarray:
    """``(n, n)`` orthonormal DCT-II basis; row ``k`` is frequency ``k``."""
    if n < 1:
        raise ValueError(f"transform length must be >= 1, got {n}")
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    mat.setflags(write=False)
    return mat


def _check_plane(x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise ValueError(f"{what} must be at least 2-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def dct2(channel) -> np.ndarray:
    """Orthonormal 2-D DCT-II over the last two axes (rows, then columns).

    Leading axes are treated as a batch.
    """
    x = _check_plane(channel, "channel")
    ch, cw = dct_matrix(x.shape[-2]), dct_matrix(x.shape[-1])
    return ch @ x @ cw.T


def idct2(coeffs) -> np.ndarray:
    """Inverse of `dct2`."""
    c = _check_plane(coeffs, "coefficients")
    ch, cw = dct_matrix(c.shape[-2]), dct_matrix(c.shape[-1])
    return ch.T @ c @ cw


def block_dct2(plane: np.ndarray, block: int = 8) -> np.ndarray:
    """DCT of every ``block x block`` tile; returns ``(H/b, W/b, b, b)``."""
    h, w = plane.shape
    if h % block or w % block:
        raise ValueError(f"plane {h}x{w} is not a multiple of the {block}x{block} block")
    tiles = plane.reshape(h // block, block, w // block, block).transpose(0, 2, 1, 3)
    return dct2(tiles)


def block_idct2(tiles: np.ndarray) -> np.ndarray:
    nh, nw, b, _ = tiles.shape
    return idct2(tiles).transpose(0, 2, 1, 3).reshape(nh * b, nw * b)


def to_gray(img) -> np.ndarray:
    """Unweighted channel mean; works on single images and batches."""
    return np.asarray(img, dtype=np.float64).mean(axis=-1)


def log_spectrum(img, eps_log: float = EPS_LOG, flatten: bool = True) -> np.ndarray:
    """``log(|dct2(gray)| + eps_log)`` of one image, flattened row-major by default."""
    if not eps_log > 0:
        raise ValueError(f"eps_log must be positive, got {eps_log}")
    spec = np.log(np.abs(dct2(to_gray(check_image(img)))) + eps_log)
    return spec.ravel() if flatten else spec


def _pool(spec: np.ndarray, grid: int) -> np.ndarray:
    h, w = spec.shape[-2:]
    if grid < 1 or h % grid or w % grid:
        raise ValueError(f"grid {grid} does not divide image size {h}x{w}")
    lead = spec.shape[:-2]
    cells = spec.reshape(*lead, grid, h // grid, grid, w // grid)
    return cells.mean(axis=(-3, -1)).reshape(*lead, grid * grid)


def extract_pooled(img, grid: int = 8, eps_log: float = EPS_LOG) -> np.ndarray:
    """Average the log spectrum over a ``grid x grid`` partition of frequency space.

    Band ``(i, j)`` lands at index ``i * grid + j``; band ``(0, 0)`` holds DC.
    """
    return _pool(log_spectrum(img, eps_log, flatten=False), grid)


def format_feature_row(values) -> str:
    """One CSV row with 9 significant digits per value."""
    return ",".join(f"{v:.9g}" for v in np.asarray(values, dtype=np.float64).ravel())


class DctFeatures(TransformerMixin, BaseEstimator):
    """Stateless transformer from image batches to log-DCT feature rows.

    Parameters
    ----------
    grid : int or None
        Pooling grid; ``None`` returns the full flattened log spectrum.
    eps_log : float
        Floor added to coefficient magnitudes before the log.
    """

    def __init__(self, grid: int | None = 8, eps_log: float = EPS_LOG):
        self.grid = grid
        self.eps_log = eps_log

    def fit(self, X, y=None):
        X = check_batch(X)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X) -> np.ndarray:
        X = check_batch(X)
        if not self.eps_log > 0:
            raise ValueError(f"eps_log must be positive, got {self.eps_log}")
        spec = np.log(np.abs(dct2(to_gray(X))) + self.eps_log)
        if self.grid is None:
            return spec.reshape(len(X), -1)
        return _pool(spec, self.grid)
