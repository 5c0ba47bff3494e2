"""Multinomial and systematic resampling for particle filters."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import RngStream


class ResamplingKind(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


def _check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return w


def _bracket(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    # index m with Q[m-1] < u <= Q[m]; u is scaled by the total so the last
    # bracket closes exactly and empty (zero-weight) brackets are never hit
    Q = np.cumsum(w)
    return np.searchsorted(Q, u * Q[-1], side="left")


def multinomial_resample(w, rng: RngStream) -> np.ndarray:
    """I i.i.d. draws from the categorical distribution ``w``."""
    w = _check_weights(w)
    u = 1.0 - rng.uniform(size=w.size)  # (0, 1]
    return _bracket(w, u)


def systematic_resample(w, rng: RngStream | None = None, offset: float | None = None) -> np.ndarray:
    """Stratified selection with one shared offset ``u1 ~ U(0, 1/I]``.

    ``offset`` fixes ``u1`` (used by tests); otherwise it is drawn from ``rng``.
    """
    w = _check_weights(w)
    I = w.size
    if offset is None:
        if rng is None:
            raise ValueError("need rng or offset")
        offset = (1.0 - rng.uniform()) / I
    elif not 0.0 < offset <= 1.0 / I:
        raise ValueError("offset must lie in (0, 1/I]")
    u = offset + np.arange(I) / I
    return _bracket(w, u)


_KERNELS = {
    ResamplingKind.MULTINOMIAL: multinomial_resample,
    ResamplingKind.SYSTEMATIC: systematic_resample,
}


def resample_indices(w, kind: ResamplingKind, rng: RngStream) -> np.ndarray:
    return _KERNELS[ResamplingKind(kind)](w, rng)


@dataclass
class ParticleSet:
    """Weighted particles carrying their own Gaussian (UKF) beliefs.

    Attributes:
        states: (I, L) particle states.
        weights: (I,) normalized weights.
        means: (I, L) per-particle belief means.
        covs: (I, L, L) per-particle belief covariances.
    """

    states: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def mean(self) -> np.ndarray:
        return self.weights @ self.states

    def variance(self) -> np.ndarray:
        d = self.states - self.mean()
        return self.weights @ (d * d)


def resample_particles(particles: ParticleSet, kind: ResamplingKind, rng: RngStream) -> ParticleSet:
    """Copy (state, belief) pairs by resampled index and reset weights to 1/I."""
    idx = resample_indices(particles.weights, kind, rng)
    I = len(particles)
    return ParticleSet(
        states=particles.states[idx],
        weights=np.full(I, 1.0 / I),
        means=particles.means[idx],
        covs=particles.covs[idx],
    )
