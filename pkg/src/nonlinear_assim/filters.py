"""
Sequential estimators over a :class:`~nonlinear_assim.core.StateSpaceModel`:

* ``ukf_run``  - additive-noise unscented Kalman filter
* ``enkf_run`` - stochastic (perturbed-observation) ensemble Kalman filter
* ``upf_run``  - unscented particle filter (per-particle UKF proposals)

All three consume an observation series ``y_obs`` of length N and return a
:class:`FilterResult` with N rows. Row 0 is the initial belief (built from
``y_obs[0]``); rows 1..N-1 are the posteriors after assimilating
``y_obs[n]``, reached by one model step from the year of ``y_obs[n-1]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    GaussianBelief,
    RngStream,
    StateSpaceModel,
    TimeSeries,
    batch_cholesky_psd,
    cholesky_psd,
    symmetrize,
)
from .errors import FilterDiverged, WeightCollapseWarning
from .resampling import ParticleSet, ResamplingKind, resample_particles
from .unscented import UTParams, batch_sigma_points, ut_cross_cov, ut_weights, weighted_mean

LOG_2PI = np.log(2.0 * np.pi)
ENKF_RIDGE = 1e-12
# innovation covariances below (this * measurement scale)^2 are round-off, not signal
SINGULAR_REL = 1e-12


@dataclass
class FilterResult:
    """Per-step output of a filter run.

    Attributes:
        means: (N, L) posterior means.
        covs: (N, L, L) posterior covariances (UKF belief, ensemble or particle
            sample covariance).
        years: (N,) year of each row.
        diagnostics: per-step series keyed by name; NaN where undefined.
        config: echo of the run configuration.
        diverged_at: first step with non-finite output, or None.
    """

    means: np.ndarray
    covs: np.ndarray
    years: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def __len__(self):
        return self.means.shape[0]

    def check(self) -> "FilterResult":
        if self.diverged:
            raise FilterDiverged(f"{self.config.get('filter', 'filter')} diverged", step=self.diverged_at)
        return self


def initial_belief(model: StateSpaceModel, y0, hidden_start=None, variance: float = 1.0) -> GaussianBelief:
    """Prior centred on the first observation.

    Observed components take their values from ``y0``; hidden components take
    ``hidden_start`` (a full-length state vector or one value per hidden
    component) or 0.
    """
    sel = model.selector
    mean = sel.embed(np.atleast_1d(np.asarray(y0, dtype=float)))
    hidden = list(sel.hidden_indices)
    if hidden and hidden_start is not None:
        hs = np.atleast_1d(np.asarray(hidden_start, dtype=float))
        mean[hidden] = hs[hidden] if hs.size == model.L else hs
    return GaussianBelief(mean, variance * np.eye(model.L))


def _prepare(model: StateSpaceModel, y_obs: TimeSeries, init: GaussianBelief):
    y = y_obs.values
    if y.shape[1] != model.K:
        raise ValueError(f"observations have {y.shape[1]} components, model measures {model.K}")
    if init.dim != model.L:
        raise ValueError("initial belief dimension does not match the model")
    N = y.shape[0]
    means = np.full((N, model.L), np.nan)
    covs = np.full((N, model.L, model.L), np.nan)
    means[0], covs[0] = init.mean, init.cov
    return y, y_obs.years, means, covs


def _diverged(*arrays) -> bool:
    return not all(np.all(np.isfinite(a)) for a in arrays)


def ukf_update(model, means, covs, y, year, ut: UTParams, weights=None):
    """One UKF predict/update cycle on a batch of beliefs.

    Sigma points from ``(means, covs)`` are propagated deterministically; Q is
    added to the predicted covariance, sigma points are redrawn from the
    predicted belief and pushed through the (noise-free) measurement map,
    and R is added to the innovation covariance.

    Args:
        means: (B, L) prior means.
        covs: (B, L, L) prior covariances.
        y: (K,) observation.
    Returns:
        (post_means, post_covs, gains) with shapes (B, L), (B, L, L), (B, L, K).
    Raises:
        numpy.linalg.LinAlgError: if an innovation covariance is singular.
    """
    L = model.L
    wm, wc = weights if weights is not None else ut_weights(L, ut)
    Q, R = model.noise.Q, model.noise.R

    X = model.propagate(batch_sigma_points(means, covs, ut), year)
    x_pred = weighted_mean(X, wm)
    P_pred = symmetrize(ut_cross_cov(X, x_pred, X, x_pred, wc) + Q)

    X = batch_sigma_points(x_pred, P_pred, ut)
    Y = model.measure(X)
    y_pred = weighted_mean(Y, wm)
    P_yy = symmetrize(ut_cross_cov(Y, y_pred, Y, y_pred, wc) + R)
    P_xy = ut_cross_cov(X, x_pred, Y, y_pred, wc)
    scale = np.maximum(1.0, np.max(np.abs(y_pred), axis=-1))
    if np.any(np.linalg.eigvalsh(P_yy)[..., 0] <= (SINGULAR_REL * scale) ** 2):
        raise np.linalg.LinAlgError("innovation covariance is singular")

    gain = np.swapaxes(np.linalg.solve(P_yy, np.swapaxes(P_xy, -1, -2)), -1, -2)
    innov = y - y_pred
    post_means = x_pred + np.einsum("bik,bk->bi", gain, innov)
    post_covs = symmetrize(P_pred - gain @ P_yy @ np.swapaxes(gain, -1, -2))
    return post_means, post_covs, gain


def ukf_run(
    model: StateSpaceModel,
    y_obs: TimeSeries,
    ut: UTParams = UTParams(),
    init: GaussianBelief | None = None,
) -> FilterResult:
    """Unscented Kalman filter (additive process and measurement noise)."""
    if init is None:
        init = initial_belief(model, y_obs.values[0])
    y, years, means, covs = _prepare(model, y_obs, init)
    cholesky_psd(init.cov)
    weights = ut_weights(model.L, ut)
    gain_norm = np.full(len(y), np.nan)
    diverged_at = None

    m, P = init.mean[None], init.cov[None]
    for n in range(1, len(y)):
        try:
            m, P, K = ukf_update(model, m, P, y[n], years[n - 1], ut, weights)
        except (np.linalg.LinAlgError, ValueError):
            diverged_at = n
            break
        if _diverged(m, P):
            diverged_at = n
            break
        means[n], covs[n] = m[0], P[0]
        gain_norm[n] = np.linalg.norm(K[0], 2)

    return FilterResult(
        means, covs, years,
        diagnostics={"gain_norm": gain_norm},
        config={"filter": "ukf", "alpha": ut.alpha, "beta": ut.beta, "kappa": ut.kappa},
        diverged_at=diverged_at,
    )


def ensemble_gain(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Kalman gain from ensemble sample covariances (1/(I-1) normalization)."""
    I = X.shape[0]
    Ex = X - X.mean(axis=0)
    Ey = Y - Y.mean(axis=0)
    P_xy = Ex.T @ Ey / (I - 1)
    P_yy = Ey.T @ Ey / (I - 1) + ENKF_RIDGE * np.eye(Y.shape[1])
    return np.linalg.solve(P_yy, P_xy.T).T


def enkf_analysis(X: np.ndarray, Y: np.ndarray, y) -> tuple[np.ndarray, np.ndarray]:
    """Update every member with ``x_i += K (y - y_i)``; returns (members, gain)."""
    K = ensemble_gain(X, Y)
    return X + (y - Y) @ K.T, K


def enkf_run(
    model: StateSpaceModel,
    y_obs: TimeSeries,
    I: int,
    init: GaussianBelief | None = None,
    rng: RngStream | None = None,
    process_scale: float = 1.0,
) -> FilterResult:
    """Stochastic ensemble Kalman filter.

    Members receive independent process noise at the forecast and independent
    measurement noise in their predicted observations. ``process_scale``
    multiplies the model's process noise standard deviation.
    """
    if I < 2:
        raise ValueError("ensemble size must be at least 2")
    if rng is None:
        raise ValueError("enkf_run needs an RngStream")
    if init is None:
        init = initial_belief(model, y_obs.values[0])
    y, years, means, covs = _prepare(model, y_obs, init)
    L, K = model.L, model.K
    q = process_scale * model.noise.process_std
    r = model.noise.measurement_std
    gain_norm = np.full(len(y), np.nan)
    diverged_at = None

    S, _ = cholesky_psd(init.cov)
    X = init.mean + rng.normal((I, L)) @ S.T
    for n in range(1, len(y)):
        X = model.propagate(X, years[n - 1], q * rng.normal((I, L)))
        Y = model.measure(X, r * rng.normal((I, K)))
        try:
            X, gain = enkf_analysis(X, Y, y[n])
        except np.linalg.LinAlgError:
            diverged_at = n
            break
        if _diverged(X):
            diverged_at = n
            break
        means[n] = X.mean(axis=0)
        covs[n] = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
        gain_norm[n] = np.linalg.norm(gain, 2)

    return FilterResult(
        means, covs, years,
        diagnostics={"gain_norm": gain_norm},
        config={"filter": "enkf", "ensemble_size": I, "process_scale": process_scale},
        diverged_at=diverged_at,
    )


def log_gaussian_diag(x, mean, std) -> np.ndarray:
    """log N(x; mean, diag(std^2)), reduced over the last axis."""
    z = (np.asarray(x) - mean) / std
    return -0.5 * np.sum(z * z + 2.0 * np.log(std) + LOG_2PI, axis=-1)


def log_gaussian_dense(x, mean, cov) -> np.ndarray:
    """log N(x; mean, cov) for batches; ``cov`` of shape (..., d, d)."""
    d = np.asarray(x) - mean
    S = batch_cholesky_psd(cov)
    z = np.linalg.solve(S, d[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(S, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (np.sum(z * z, axis=-1) + logdet + d.shape[-1] * LOG_2PI)


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - np.max(logw))
    return w / w.sum()


def upf_run(
    model: StateSpaceModel,
    y_obs: TimeSeries,
    I: int,
    ut: UTParams = UTParams(),
    init: GaussianBelief | None = None,
    resampler: ResamplingKind = ResamplingKind.SYSTEMATIC,
    rng: RngStream | None = None,
    warn: bool = True,
) -> FilterResult:
    """Unscented particle filter.

    Each particle carries a state and a covariance. Per step, a UKF cycle
    started from the particle (state, covariance) yields the proposal
    ``N(mean_i, P_i)``; a new state is drawn from it and weighted by
    likelihood x transition density / proposal density (in log space). The
    set is then resampled every step, (state, covariance) pairs together.
    The reported estimate is the mean of the resampled set.

    Steps whose effective sample size falls below I/100 are counted in
    ``diagnostics["collapsed_steps"]`` and, if ``warn``, reported once with
    a :class:`WeightCollapseWarning`.
    """
    if I < 2:
        raise ValueError("particle count must be at least 2")
    if rng is None:
        raise ValueError("upf_run needs an RngStream")
    if np.any(model.noise.measurement_std <= 0):
        raise ValueError("upf_run needs strictly positive measurement noise")
    if init is None:
        init = initial_belief(model, y_obs.values[0])
    resampler = ResamplingKind(resampler)
    y, years, means, covs = _prepare(model, y_obs, init)
    N, L = len(y), model.L
    q, r = model.noise.process_std, model.noise.measurement_std
    active = q > 0
    weights_ut = ut_weights(L, ut)

    diag = {k: np.full(N, np.nan) for k in ("ess", "weight_entropy")}
    diag["particle_variance"] = np.full((N, L), np.nan)
    diag["particle_variance"][0] = np.diag(init.cov)

    S0, _ = cholesky_psd(init.cov)
    particles = ParticleSet(
        states=init.mean + rng.normal((I, L)) @ S0.T,
        weights=np.full(I, 1.0 / I),
        means=np.broadcast_to(init.mean, (I, L)).copy(),
        covs=np.broadcast_to(init.cov, (I, L, L)).copy(),
    )
    collapsed = 0
    diverged_at = None
    for n in range(1, N):
        year = years[n - 1]
        prev = particles.states
        try:
            m_post, P_post, _ = ukf_update(model, prev, particles.covs, y[n], year, ut, weights_ut)
            S = batch_cholesky_psd(P_post)
        except (np.linalg.LinAlgError, ValueError):
            diverged_at = n
            break
        x_hat = m_post + np.einsum("bij,bj->bi", S, rng.normal((I, L)))

        logw = log_gaussian_diag(model.measure(x_hat), y[n], r)
        if np.any(active):
            f_prev = model.propagate(prev, year)
            a = np.flatnonzero(active)
            logw = logw + log_gaussian_diag(x_hat[:, a], f_prev[:, a], q[a])
            logw = logw - log_gaussian_dense(x_hat[:, a], m_post[:, a], P_post[:, a][:, :, a])
        if not np.any(np.isfinite(logw)) or np.any(np.isnan(logw)) or _diverged(x_hat):
            diverged_at = n
            break
        w = _normalize_log(logw)

        weighted = ParticleSet(x_hat, w, m_post, P_post)
        ess = weighted.ess
        diag["ess"][n] = ess
        nz = w[w > 0]
        diag["weight_entropy"][n] = -np.sum(nz * np.log(nz))
        if ess < I / 100:
            collapsed += 1

        particles = resample_particles(weighted, resampler, rng)
        est = particles.mean()
        d = particles.states - est
        means[n] = est
        covs[n] = d.T @ d / I
        diag["particle_variance"][n] = np.diag(covs[n])

    diag["collapsed_steps"] = collapsed
    if collapsed and warn:
        warnings.warn(
            f"effective sample size below I/100 at {collapsed} step(s)",
            WeightCollapseWarning,
            stacklevel=2,
        )
    return FilterResult(
        means, covs, years,
        diagnostics=diag,
        config={
            "filter": "upf", "particles": I, "resampler": resampler.value,
            "alpha": ut.alpha, "beta": ut.beta, "kappa": ut.kappa,
        },
        diverged_at=diverged_at,
    )
