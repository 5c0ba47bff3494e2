"""
State-space primitives shared by every other module.

Conventions used throughout the package:

* Vectors and batches of vectors are numpy arrays whose *last* axis is the
  state (length L) or measurement (length K) axis. Model functions must
  broadcast over any leading axes so that filters can push whole sigma-point
  sets or particle clouds through a single call.
* Noise is additive and diagonal, parameterized by standard deviations.
* Randomness flows exclusively through :class:`RngStream`; nothing touches
  numpy's global generator.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NotFactorizable

__all__ = [
    "ModelDims",
    "NoiseSpec",
    "ObservationSelector",
    "StateSpaceModel",
    "GaussianBelief",
    "RngStream",
    "TimeSeries",
    "cholesky_psd",
    "batch_cholesky_psd",
    "symmetrize",
    "gaussian_draw",
    "perturb_observations",
]

JITTER_MAX = 1e-6


@dataclass(frozen=True)
class ModelDims:
    state_dim: int
    measurement_dim: int

    def __post_init__(self):
        if self.state_dim < 1 or self.measurement_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.measurement_dim > self.state_dim:
            raise ValueError("measurement_dim may not exceed state_dim")


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal process/measurement noise given as standard deviations."""

    process_std: np.ndarray
    measurement_std: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.process_std, dtype=float))
        r = np.atleast_1d(np.asarray(self.measurement_std, dtype=float))
        for name, v in (("process_std", q), ("measurement_std", r)):
            if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"{name} must be a finite non-negative vector")
        object.__setattr__(self, "process_std", q)
        object.__setattr__(self, "measurement_std", r)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.process_std**2)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.measurement_std**2)


@dataclass(frozen=True)
class ObservationSelector:
    """Measurement map that picks a subset of state components.

    Indices are 0-based and strictly increasing.
    """

    observed_indices: tuple[int, ...]
    state_dim: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.observed_indices)
        if not idx:
            raise ValueError("at least one component must be observed")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("observed_indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.state_dim:
            raise ValueError("observed_indices out of bounds")
        object.__setattr__(self, "observed_indices", idx)

    @classmethod
    def full(cls, state_dim: int) -> "ObservationSelector":
        return cls(tuple(range(state_dim)), state_dim)

    @property
    def measurement_dim(self) -> int:
        return len(self.observed_indices)

    @property
    def hidden_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.state_dim) if i not in self.observed_indices)

    @property
    def matrix(self) -> np.ndarray:
        H = np.zeros((self.measurement_dim, self.state_dim))
        H[np.arange(self.measurement_dim), self.observed_indices] = 1.0
        return H

    def select(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., list(self.observed_indices)]

    def embed(self, y: np.ndarray, fill: float = 0.0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape[:-1] + (self.state_dim,), fill, dtype=float)
        out[..., list(self.observed_indices)] = y
        return out


Transition = Callable[[np.ndarray, int, "np.ndarray | None"], np.ndarray]


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time model ``x_{n+1} = f(x_n, year_n) + w``, ``y = H x + v``.

    ``transition(x, year, noise)`` advances a state (or a batch of states)
    observed in ``year`` by one step. ``noise`` is an already-scaled process
    noise draw, or ``None`` for deterministic propagation.
    """

    dims: ModelDims
    transition: Transition
    noise: NoiseSpec
    selector: ObservationSelector
    name: str = "model"
    state_labels: tuple[str, ...] = ()

    def __post_init__(self):
        L, K = self.dims.state_dim, self.dims.measurement_dim
        if self.noise.process_std.shape != (L,):
            raise ValueError(f"process_std must have length {L}")
        if self.noise.measurement_std.shape != (K,):
            raise ValueError(f"measurement_std must have length {K}")
        if self.selector.state_dim != L or self.selector.measurement_dim != K:
            raise ValueError("selector does not match model dimensions")

    @property
    def L(self) -> int:
        return self.dims.state_dim

    @property
    def K(self) -> int:
        return self.dims.measurement_dim

    def propagate(self, x: np.ndarray, year: int, noise: np.ndarray | None = None) -> np.ndarray:
        return self.transition(np.asarray(x, dtype=float), year, noise)

    def measure(self, x: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        y = self.selector.select(x)
        return y if noise is None else y + noise

    def with_noise(self, process_std=None, measurement_std=None) -> "StateSpaceModel":
        q = self.noise.process_std if process_std is None else process_std
        r = self.noise.measurement_std if measurement_std is None else measurement_std
        q = np.broadcast_to(np.asarray(q, dtype=float), (self.L,)).copy()
        r = np.broadcast_to(np.asarray(r, dtype=float), (self.K,)).copy()
        return dataclasses.replace(self, noise=NoiseSpec(q, r))

    def with_selector(self, selector: ObservationSelector, measurement_std=None) -> "StateSpaceModel":
        K = selector.measurement_dim
        if measurement_std is None:
            measurement_std = np.resize(self.noise.measurement_std, K)
        r = np.broadcast_to(np.asarray(measurement_std, dtype=float), (K,)).copy()
        return dataclasses.replace(
            self,
            dims=ModelDims(self.L, K),
            selector=selector,
            noise=NoiseSpec(self.noise.process_std, r),
        )


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_psd(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.cov))))
        return bool(np.min(np.linalg.eigvalsh(self.cov)) >= -tol * scale)


def _tag_to_int(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's counter-based Philox generator seeded through a
    ``SeedSequence`` whose spawn key is ``(stream_id, *path)``. Child streams
    extend the path, so every (trial, purpose) pair gets an independent
    sequence without any shared mutable state.
    """

    def __init__(self, seed: int, stream_id: int = 0, path: Sequence = ()):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(_tag_to_int(t) for t in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *self.path))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *tags) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(_tag_to_int(t) for t in tags))

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


@dataclass(frozen=True)
class TimeSeries:
    """Annual (or ``step``-spaced) series of vectors.

    ``values`` is always stored with shape ``(N, d)``.
    """

    start_year: int
    values: np.ndarray
    step: int = 1
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("TimeSeries values must be a non-empty (N, d) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("TimeSeries values must be finite")
        if self.step < 1:
            raise ValueError("step must be positive")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "start_year", int(self.start_year))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def years(self) -> np.ndarray:
        return self.start_year + self.step * np.arange(len(self))

    @property
    def end_year(self) -> int:
        return int(self.years[-1])

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def replace(self, **changes) -> "TimeSeries":
        return dataclasses.replace(self, **changes)

    def slice_years(self, first: int, last: int) -> "TimeSeries":
        i0 = (first - self.start_year) // self.step
        i1 = (last - self.start_year) // self.step + 1
        if i0 < 0 or i1 > len(self) or i0 >= i1:
            raise ValueError(f"years {first}-{last} outside series range")
        return self.replace(start_year=first, values=self.values[i0:i1])


def _semidefinite_cholesky(m: np.ndarray, tol: float) -> np.ndarray | None:
    """Cholesky that accepts (numerically) zero pivots; None on failure."""
    n = m.shape[0]
    S = np.zeros_like(m)
    for j in range(n):
        d = m[j, j] - S[j, :j] @ S[j, :j]
        if d > tol:
            S[j, j] = np.sqrt(d)
            S[j + 1:, j] = (m[j + 1:, j] - S[j + 1:, :j] @ S[j, :j]) / S[j, j]
        elif d >= -tol:
            resid = m[j + 1:, j] - S[j + 1:, :j] @ S[j, :j]
            if np.any(np.abs(resid) > np.sqrt(tol)):
                return None
        else:
            return None
    return S


def _jitter_ladder(jitter_max: float):
    yield 0.0
    eps = 1e-12
    while eps <= jitter_max * (1 + 1e-9):
        yield eps
        eps *= 100.0


def cholesky_psd(m: np.ndarray, jitter_max: float = JITTER_MAX) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Tries ``m + eps*I`` for eps in ``0, 1e-12, 1e-10, ...`` up to
    ``jitter_max`` and returns ``(S, eps)`` for the first eps that succeeds.
    Exactly singular PSD input (e.g. a zero matrix) factors at eps = 0.

    Raises:
        NotFactorizable: if even ``jitter_max`` fails.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise NotFactorizable("matrix has non-finite entries")
    n = m.shape[0]
    scale = max(float(np.max(np.abs(np.diag(m)))), 1e-300)
    for eps in _jitter_ladder(jitter_max):
        a = m + eps * np.eye(n) if eps else m
        try:
            return np.linalg.cholesky(a), eps
        except np.linalg.LinAlgError:
            S = _semidefinite_cholesky(a, tol=1e-14 * scale)
            if S is not None:
                return S, eps
    raise NotFactorizable(f"matrix not factorizable with jitter up to {jitter_max:g}")


def batch_cholesky_psd(ms: np.ndarray, jitter_max: float = JITTER_MAX) -> np.ndarray:
    """:func:`cholesky_psd` over a stack of matrices (last two axes)."""
    try:
        return np.linalg.cholesky(ms)
    except np.linalg.LinAlgError:
        flat = ms.reshape((-1,) + ms.shape[-2:])
        out = np.stack([cholesky_psd(m, jitter_max)[0] for m in flat])
        return out.reshape(ms.shape)


def gaussian_draw(rng: RngStream, mean, std) -> np.ndarray:
    """Return ``mean + std * z`` with ``z`` i.i.d. standard normal from ``rng``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    shape = np.broadcast_shapes(mean.shape, std.shape)
    return mean + std * rng.normal(shape)


def perturb_observations(rng: RngStream, truth: TimeSeries, r) -> TimeSeries:
    """Add independent ``N(0, diag(r**2))`` noise to every value of ``truth``."""
    r = np.broadcast_to(np.asarray(r, dtype=float), (truth.dim,))
    noisy = gaussian_draw(rng, truth.values, r)
    meta = dict(truth.meta)
    meta.update(measurement_std=r.tolist(), seed=rng.seed, stream_id=rng.stream_id)
    return truth.replace(values=noisy, label=f"{truth.label} + noise".strip(), meta=meta)
