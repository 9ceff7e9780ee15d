"""Distortion metrics and a desk-scale Frechet feature distance.

The Frechet distance follows the FID recipe on a frozen 32-D random
projection of pooled log-DCT features instead of Inception activations;
reports call it ``FD32``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .imaging import Dataset, check_batch, make_rng

PSNR_CAP_DB = 99.0
EMBED_SEED = 0x46443332  # "FD32"


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l1_distance(a, b) -> float:
    """Mean absolute difference."""
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def l2_distance(a, b) -> float:
    """Root mean squared difference."""
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio for unit peak, capped at 99 dB."""
    a, b = _pair(a, b)
    err = float(np.mean((a - b) ** 2))
    if err < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / err))


# ------------------------------------------------------------ linear algebra

class EigenConvergenceError(ArithmeticError):
    pass


def off_norm(a: np.ndarray) -> float:
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 100, history: list | None = None):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F`` (or exactly zero). Returns ascending eigenvalues and the
    matching orthonormal eigenvectors as columns. If ``history`` is a list,
    the off-diagonal norm is appended before the first and after each sweep.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite values")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-9 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    threshold = tol * scale
    off = off_norm(a)
    if history is not None:
        history.append(off)
    sweeps = 0
    while off > threshold:
        if sweeps == max_sweeps:
            raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible next to the diagonal: zeroing it is below round-off
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q])) or apq == 0.0:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
        off = off_norm(a)
        if history is not None:
            history.append(off)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sqrtm_psd(a) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix; negative eigenvalues clamp to 0."""
    w, v = jacobi_eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# ------------------------------------------------------------ Frechet distance

@dataclass(frozen=True)
class FrechetStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int


def fit_gaussian(features, ridge: float = 1e-6) -> FrechetStats:
    """Sample mean and unbiased covariance, plus ``ridge`` on the diagonal."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be a 2-D (samples, dims) array, got shape {x.shape}")
    if len(x) < 2:
        raise ValueError("need at least 2 samples to fit a Gaussian")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (len(x) - 1)
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(x.shape[1])
    return FrechetStats(mean, cov, len(x))


def frechet_distance(s1: FrechetStats, s2: FrechetStats) -> float:
    """Squared Frechet distance between two Gaussians.

    ``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)``; the symmetric
    inner product keeps every matrix square root on a PSD argument.
    """
    if s1.mean.shape != s2.mean.shape or s1.cov.shape != s2.cov.shape:
        raise ValueError("Gaussian statistics have different dimensions")
    root1 = sqrtm_psd(s1.cov)
    inner = root1 @ s2.cov @ root1
    w, _ = jacobi_eigh(0.5 * (inner + inner.T))
    cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = s1.mean - s2.mean
    d2 = float(diff @ diff + np.trace(s1.cov) + np.trace(s2.cov) - 2.0 * cross)
    return max(d2, 0.0)


class FeatureEmbedder(TransformerMixin, BaseEstimator):
    """Frozen random projection of pooled log-DCT features (an Inception stand-in)."""

    def __init__(self, d_out: int = 32, grid: int = 8, seed: int = EMBED_SEED):
        self.d_out = d_out
        self.grid = grid
        self.seed = seed

    @property
    def projection(self) -> np.ndarray:
        d_in = self.grid * self.grid
        return make_rng(self.seed).standard_normal((self.d_out, d_in)) / np.sqrt(d_in)

    def fit(self, X=None, y=None):
        self.projection_ = self.projection
        return self

    def transform(self, X) -> np.ndarray:
        from .spectral import DctFeatures

        proj = getattr(self, "projection_", None)
        if proj is None:
            proj = self.projection
        feats = DctFeatures(grid=self.grid).transform(check_batch(X))
        return feats @ proj.T


def embed_features(images, e: FeatureEmbedder | None = None) -> np.ndarray:
    e = e or FeatureEmbedder()
    if isinstance(images, Dataset):
        images = images.images
    return e.transform(images)


def frechet_between(a, b, e: FeatureEmbedder | None = None) -> float:
    """FD32 between two image sets."""
    return frechet_distance(fit_gaussian(embed_features(a, e)), fit_gaussian(embed_features(b, e)))
