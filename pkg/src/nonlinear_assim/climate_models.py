"""Stochastic climate models: a 1-D energy balance model and a 2-D coupled
temperature / sea-level model, both Euler-Maruyama discretized with dt = 1 yr.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ModelDims,
    NoiseSpec,
    ObservationSelector,
    RngStream,
    StateSpaceModel,
)

DEFAULT_Q_EBM = 0.05
DEFAULT_Q_COUPLED = (0.05, 0.3)


@dataclass(frozen=True)
class EBMParams:
    """Zero-dimensional energy balance model constants (SI-ish units per year).

    Attributes:
        forcing_coeff: CO2 forcing coefficient [W/m^2].
        co2_pi: pre-industrial CO2 concentration [ppm].
        feedback: climate feedback parameter [W/m^2/degC], negative.
        heat_capacity: atmosphere + upper-ocean heat capacity.
        albedo: planetary albedo.
        insolation: solar insolation [W/m^2].
        preindustrial_temp: equilibrium temperature T0 [degC].
    """

    forcing_coeff: float = 5.0
    co2_pi: float = 280.0
    feedback: float = -1.3
    heat_capacity: float = 51.0
    albedo: float = 0.3
    insolation: float = 1368.0
    preindustrial_temp: float = 14.0
    dt: float = 1.0
    base_year: int = 1850

    def __post_init__(self):
        if self.heat_capacity <= 0:
            raise ValueError("heat_capacity must be positive")
        if not 0.0 <= self.albedo <= 1.0:
            raise ValueError("albedo must lie in [0, 1]")
        if self.co2_pi <= 0:
            raise ValueError("co2_pi must be positive")
        if self.feedback >= 0:
            raise ValueError("feedback must be negative (restoring)")

    @property
    def thermal_offset(self) -> float:
        """Linearized outgoing-radiation offset A that balances T0."""
        return self.insolation * (1.0 - self.albedo) / 4.0 + self.feedback * self.preindustrial_temp


@dataclass(frozen=True)
class Coupled2DParams:
    a11: float = -0.16
    a12: float = 0.008
    c1: float = 0.0187
    a21: float = 0.4673
    a22: float = -0.0145
    c2: float = 0.2072
    dt: float = 1.0
    base_year: int = 1880

    def __post_init__(self):
        vals = (self.a11, self.a12, self.c1, self.a21, self.a22, self.c2, self.dt)
        if not all(np.isfinite(vals)):
            raise ValueError("coefficients must be finite")
        if self.a11 >= 0 or self.a22 >= 0:
            raise ValueError("a11 and a22 must be negative (damping)")

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def c(self) -> np.ndarray:
        return np.array([self.c1, self.c2])


def co2_at(year, p: EBMParams = EBMParams()):
    """Cubic CO2 concentration path [ppm]; defined for any year."""
    return p.co2_pi * (1.0 + ((np.asarray(year, dtype=float) - 1850.0) / 220.0) ** 3)


def ebm_step(T, n, noise=None, p: EBMParams = EBMParams()):
    """Advance temperature ``T`` (degC) observed in year ``n`` by one step.

    ``noise`` is the already-scaled increment sigma * dW (or None).
    """
    T = np.asarray(T, dtype=float)
    forcing = p.forcing_coeff * np.log(co2_at(n, p) / p.co2_pi)
    out = T + (p.dt / p.heat_capacity) * (p.feedback * (T - p.preindustrial_temp) + forcing)
    if noise is not None:
        out = out + noise
    return out


def coupled_step(state, n, noise=None, p: Coupled2DParams = Coupled2DParams()):
    """Advance ``(T anomaly degC, H cm)`` by one step. ``n`` is unused (autonomous)."""
    x = np.asarray(state, dtype=float)
    T, H = x[..., 0], x[..., 1]
    out = np.stack(
        [
            T + (p.a11 * T + p.a12 * H + p.c1) * p.dt,
            H + (p.a21 * T + p.a22 * H + p.c2) * p.dt,
        ],
        axis=-1,
    )
    if noise is not None:
        out = out + noise
    return out


class _EBMTransition:
    # module-level class rather than a closure so models pickle cleanly
    def __init__(self, p: EBMParams):
        self.p = p

    def __call__(self, x, year, noise=None):
        return ebm_step(x, year, noise, self.p)


class _CoupledTransition:
    def __init__(self, p: Coupled2DParams):
        self.p = p

    def __call__(self, x, year, noise=None):
        return coupled_step(x, year, noise, self.p)


def make_ebm_model(
    params: EBMParams = EBMParams(), q: float = DEFAULT_Q_EBM, r: float = 1.0
) -> StateSpaceModel:
    """1-D model on absolute temperature with identity measurement."""
    return StateSpaceModel(
        dims=ModelDims(1, 1),
        transition=_EBMTransition(params),
        noise=NoiseSpec([q], [r]),
        selector=ObservationSelector.full(1),
        name="ebm1d",
        state_labels=("temperature_degC",),
    )


SELECTORS = {"both": (0, 1), "temperature": (0,), "sealevel": (1,)}


def make_coupled_model(
    params: Coupled2DParams = Coupled2DParams(),
    q=DEFAULT_Q_COUPLED,
    r: float = 1.0,
    observe: str = "both",
) -> StateSpaceModel:
    """2-D model on (temperature anomaly, sea level in cm).

    ``observe`` is one of ``both``, ``temperature`` or ``sealevel``.
    """
    try:
        idx = SELECTORS[observe]
    except KeyError:
        raise ValueError(f"unknown selector {observe!r}") from None
    return StateSpaceModel(
        dims=ModelDims(2, len(idx)),
        transition=_CoupledTransition(params),
        noise=NoiseSpec(np.broadcast_to(q, (2,)), np.full(len(idx), float(r))),
        selector=ObservationSelector(idx, 2),
        name="coupled2d",
        state_labels=("temperature_anomaly_degC", "sea_level_cm"),
    )


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Monte Carlo trajectories.

    ``values[p, k]`` is path ``p`` after ``k + 1`` stochastic steps from the
    initial state, labeled ``years[k]``. The initial state itself is the
    (noise-free) state one step before ``years[0]``.
    """

    values: np.ndarray
    years: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1] != self.years.size:
            raise ValueError("values must be (paths, steps, L) matching years")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory contains non-finite values")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1]


def simulate_ensemble(
    model: StateSpaceModel,
    x0,
    n_paths: int,
    steps: int,
    rng: RngStream,
    start_year: int,
) -> TrajectoryEnsemble:
    """Simulate ``n_paths`` independent trajectories of ``steps`` steps.

    Path ``p`` draws its Wiener increments from ``rng.child(p)``, so adding
    paths never changes existing ones.
    """
    if n_paths < 1 or steps < 1:
        raise ValueError("n_paths and steps must be >= 1")
    L = model.L
    q = model.noise.process_std
    z = np.stack([rng.child(p).normal((steps, L)) for p in range(n_paths)])
    out = np.empty((n_paths, steps, L))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths, L)).copy()
    for k in range(steps):
        x = model.propagate(x, start_year - 1 + k, q * z[:, k])
        out[:, k] = x
    years = start_year + np.arange(steps)
    return TrajectoryEnsemble(out, years)


def deterministic_trajectory(model: StateSpaceModel, x0, steps: int, first_year: int) -> np.ndarray:
    """Noise-free propagation; row ``k`` is the state after ``k`` steps from
    ``x0`` (observed in ``first_year``), so row 0 is ``x0`` itself."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = [x]
    for k in range(steps):
        x = model.propagate(x, first_year + k)
        out.append(x)
    return np.stack(out)
