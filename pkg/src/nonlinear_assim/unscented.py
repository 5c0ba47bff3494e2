"""Scaled unscented transform.

Sigma points are laid out along axis -2: a set for an L-dimensional belief
has shape ``(2L+1, L)``; batches prepend further axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianBelief, batch_cholesky_psd, cholesky_psd, symmetrize


@dataclass(frozen=True)
class UTParams:
    alpha: float = 0.6
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.beta < 0 or self.kappa < 0:
            raise ValueError("beta and kappa must be non-negative")

    def lam(self, L: int) -> float:
        """Composite scaling parameter alpha^2 (L + kappa) - L."""
        return self.alpha**2 * (L + self.kappa) - L


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray


def ut_weights(L: int, p: UTParams = UTParams()) -> tuple[np.ndarray, np.ndarray]:
    lam = p.lam(L)
    c = L + lam
    w_mean = np.full(2 * L + 1, 1.0 / (2.0 * c))
    w_cov = w_mean.copy()
    w_mean[0] = lam / c
    w_cov[0] = lam / c + (1.0 - p.alpha**2 + p.beta)
    return w_mean, w_cov


def _spread(mean: np.ndarray, S: np.ndarray) -> np.ndarray:
    # columns of S become the +/- offsets
    offsets = np.swapaxes(S, -1, -2)
    m = mean[..., None, :]
    return np.concatenate([m, m + offsets, m - offsets], axis=-2)


def sigma_points(belief: GaussianBelief, p: UTParams = UTParams()) -> SigmaSet:
    """Sigma set ``mean, mean + S[:, i], mean - S[:, i]`` with ``S S^T = (L+lam) P``."""
    L = belief.dim
    S, _ = cholesky_psd((L + p.lam(L)) * belief.cov)
    w_mean, w_cov = ut_weights(L, p)
    return SigmaSet(_spread(belief.mean, S), w_mean, w_cov)


def batch_sigma_points(means: np.ndarray, covs: np.ndarray, p: UTParams = UTParams()) -> np.ndarray:
    """Sigma points for a stack of beliefs: ``(..., L)`` -> ``(..., 2L+1, L)``."""
    L = means.shape[-1]
    S = batch_cholesky_psd((L + p.lam(L)) * covs)
    return _spread(means, S)


def weighted_mean(points: np.ndarray, w_mean: np.ndarray) -> np.ndarray:
    return np.einsum("j,...jd->...d", w_mean, points)


def ut_cross_cov(xs, x_mean, ys, y_mean, w_cov) -> np.ndarray:
    """``sum_i w_cov[i] (xs[i] - x_mean)(ys[i] - y_mean)^T``; works on batches."""
    dx = xs - np.asarray(x_mean)[..., None, :]
    dy = ys - np.asarray(y_mean)[..., None, :]
    return np.einsum("j,...ja,...jb->...ab", w_cov, dx, dy)


def ut_moments(transformed, w_mean, w_cov, additive_cov=None) -> GaussianBelief:
    """Weighted mean and covariance of a transformed sigma set (plus ``additive_cov``)."""
    transformed = np.asarray(transformed, dtype=float)
    mean = weighted_mean(transformed, w_mean)
    cov = ut_cross_cov(transformed, mean, transformed, mean, w_cov)
    if additive_cov is not None:
        cov = cov + additive_cov
    return GaussianBelief(mean, symmetrize(cov))
