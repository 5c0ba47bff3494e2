"""Evaluation metrics over repeated trials, plus histogram KL divergence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateData, InfiniteDivergence

KL_SMOOTHING = 1e-12
DEFAULT_BINS = 30


@dataclass(frozen=True)
class TrialMatrix:
    """``estimates[j, n]`` is trial j's estimate at step n; ``truth[n]`` the reference."""

    estimates: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        est = np.atleast_2d(np.asarray(self.estimates, dtype=float))
        truth = np.asarray(self.truth, dtype=float).ravel()
        if est.shape[1] != truth.size or est.size == 0:
            raise ValueError("estimates must be (M, N) with N matching truth")
        if not (np.all(np.isfinite(est)) and np.all(np.isfinite(truth))):
            raise ValueError("TrialMatrix entries must be finite")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "truth", truth)

    @property
    def M(self) -> int:
        return self.estimates.shape[0]

    @property
    def N(self) -> int:
        return self.estimates.shape[1]

    @property
    def errors(self) -> np.ndarray:
        return self.truth - self.estimates

    @property
    def scale(self) -> float:
        s = float(np.max(np.abs(self.truth)))
        if s == 0:
            raise DegenerateData("truth is identically zero")
        return s


def se_per_step(t: TrialMatrix) -> np.ndarray:
    return np.mean(t.errors**2, axis=0)


def nse_per_step(t: TrialMatrix) -> np.ndarray:
    return np.mean((t.errors / t.scale) ** 2, axis=0)


def mse(t: TrialMatrix) -> float:
    # mean over steps of the per-step means, so mse == mean(se_per_step) exactly
    return float(np.mean(se_per_step(t)))


def nmse(t: TrialMatrix) -> float:
    return float(np.mean(nse_per_step(t)))


def error_std(t: TrialMatrix) -> float:
    """Step-averaged spread of absolute errors across trials (1/M normalization)."""
    if t.M < 2:
        raise ValueError("error_std needs at least two trials")
    e = np.abs(t.errors)
    return float(np.mean(np.std(e, axis=0, ddof=0)))


def confidence_band(t: TrialMatrix, n_std: float = 2.0):
    """Per-step ``(mean, lower, upper)`` of the trial estimates."""
    if t.M < 2:
        raise ValueError("confidence_band needs at least two trials")
    mean = t.estimates.mean(axis=0)
    half = n_std * t.estimates.std(axis=0, ddof=1)
    return mean, mean - half, mean + half


@dataclass(frozen=True)
class HistogramPair:
    """Empirical distribution ``p`` and reference ``q`` over shared ``edges``."""

    edges: np.ndarray
    p: np.ndarray
    q: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or np.asarray(self.edges).size != p.size + 1:
            raise ValueError("p, q and edges are inconsistent")
        if np.any(p < 0) or np.any(q < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
            raise ValueError("p and q must each sum to 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def histogram_vs_normal(samples, n_bins: int = DEFAULT_BINS, width: float = 3.0) -> HistogramPair:
    """Histogram of ``samples`` over mean +/- width*std against the matched normal.

    Samples outside the range are dropped; both distributions are renormalized
    over the covered bins.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateData("need at least two samples")
    mu, s = float(x.mean()), float(x.std(ddof=1))
    if not s > 0:
        raise DegenerateData("samples have zero spread")
    edges = np.linspace(mu - width * s, mu + width * s, n_bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    if counts.sum() == 0:
        raise DegenerateData("no samples inside the histogram range")
    q = np.diff(ndtr((edges - mu) / s))
    return HistogramPair(edges, counts / counts.sum(), q / q.sum(), counts)


def kl_divergence(h: HistogramPair, smoothing: float = KL_SMOOTHING) -> float:
    """Discrete D(P || Q) in nats, with ``smoothing`` added to every bin of both."""
    p = h.p + smoothing
    q = h.q + smoothing
    p, q = p / p.sum(), q / q.sum()
    mask = p > 0
    if np.any(q[mask] == 0):
        raise InfiniteDivergence("reference has zero mass where P does not")
    return float(max(np.sum(p[mask] * np.log(p[mask] / q[mask])), 0.0))
