"""Process-noise estimation from a single observed series.

The recipe: subtract a trailing moving average, check the residuals for
stationarity with an augmented Dickey-Fuller test, pick the window whose
residuals look most stationary, and report the residual variance as Q.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .core import TimeSeries
from .errors import NonStationaryWarning, SeriesTooShort, SingularRegression, WindowTooLarge

# MacKinnon (1994/2010) approximate p-value surface, constant-only regression,
# one variable. Polynomial coefficients in ascending powers of the statistic.
MACKINNON_C = {
    "tau_max": 2.74,
    "tau_min": -18.83,
    "tau_star": -1.61,
    "small_p": (2.1659, 1.4412, 0.038269),
    "large_p": (1.7339, 0.93202, -0.12745, -0.010368),
}
P_FLOOR = 1e-30


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lag_order: int
    n_obs: int
    regression: str = "c"


@dataclass(frozen=True)
class NoiseEstimate:
    """Outcome of the moving-average window search.

    Attributes:
        window: selected window size k.
        variance: residual variance at k (1/(N-1) normalization).
        p_value: ADF p-value of the residuals at k.
        table: ``{k: p_value}`` for every evaluated window.
        residuals: residual series at k.
    """

    window: int
    variance: float
    p_value: float
    table: dict = field(default_factory=dict)
    residuals: TimeSeries | None = field(default=None, compare=False)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    @property
    def stationary(self) -> bool:
        return self.p_value < 0.05

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "variance": self.variance,
            "std": self.std,
            "p_value": self.p_value,
            "stationary": self.stationary,
            "table": [[k, p] for k, p in self.table.items()],
        }


def moving_average(series: TimeSeries, k: int) -> TimeSeries:
    """Trailing k-point mean; entry n averages values n-k+1..n.

    The result starts at the k-th input year.
    """
    n = len(series)
    if k < 2:
        raise ValueError("window must be at least 2")
    if k > n:
        raise WindowTooLarge(f"window {k} exceeds series length {n}")
    c = np.cumsum(np.vstack([np.zeros((1, series.dim)), series.values]), axis=0)
    sma = (c[k:] - c[:-k]) / k
    return series.replace(
        start_year=series.start_year + (k - 1) * series.step,
        values=sma,
        label=f"SMA{k}({series.label})",
    )


def residuals(series: TimeSeries, k: int) -> TimeSeries:
    """``T_n - SMA_n`` on the support of the moving average."""
    sma = moving_average(series, k)
    return sma.replace(values=series.values[k - 1:] - sma.values, label=f"resid{k}({series.label})")


def schwert_maxlag(n: int) -> int:
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def mackinnon_pvalue(stat: float) -> float:
    """Approximate asymptotic p-value of an ADF t-statistic (constant only)."""
    c = MACKINNON_C
    if stat > c["tau_max"]:
        return 1.0
    if stat < c["tau_min"]:
        return P_FLOOR
    coef = c["small_p"] if stat <= c["tau_star"] else c["large_p"]
    p = float(ndtr(np.polynomial.polynomial.polyval(stat, coef)))
    return min(max(p, P_FLOOR), 1.0)


def _ols(y: np.ndarray, X: np.ndarray):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise SingularRegression("ADF design matrix is rank deficient")
    resid = y - X @ beta
    return beta, float(resid @ resid)


def _design(x: np.ndarray, lags: int, nobs: int):
    """Regressors [const, y_{t-1}, dy_{t-1}..dy_{t-lags}] for the last ``nobs`` rows."""
    dx = np.diff(x)
    T = dx.size
    cols = [np.ones(nobs), x[T - nobs:T]]
    cols += [dx[T - nobs - j:T - j] for j in range(1, lags + 1)]
    return dx[T - nobs:], np.column_stack(cols)


def _aic(ssr: float, nobs: int, k: int) -> float:
    llf = -0.5 * nobs * (np.log(2 * np.pi) + np.log(ssr / nobs) + 1.0)
    return -2.0 * llf + 2.0 * k


def adf_test(series, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and AIC lag selection.

    Lag orders 0..max_lag are compared on the common sample allowed by
    ``max_lag``; the chosen order is then refit on its own full sample.

    Args:
        series: 1-D array or single-column :class:`TimeSeries`.
        max_lag: largest lag tried; defaults to ``floor(12 (N/100)^(1/4))``.

    Raises:
        SeriesTooShort: if fewer than ``max_lag + 10`` values.
        SingularRegression: on a degenerate (e.g. constant) series.
    """
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("adf_test takes a single series")
        x = x[:, 0]
    n = x.size
    if max_lag is None:
        max_lag = schwert_maxlag(n)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n < max_lag + 10:
        raise SeriesTooShort(f"need at least {max_lag + 10} values, got {n}")
    if np.ptp(x) == 0:
        raise SingularRegression("constant series")

    common = n - 1 - max_lag
    best_aic, best_lag = np.inf, 0
    for p in range(max_lag + 1):
        y, X = _design(x, p, common)
        _, ssr = _ols(y, X)
        aic = _aic(ssr, common, X.shape[1])
        if aic < best_aic:
            best_aic, best_lag = aic, p

    nobs = n - 1 - best_lag
    y, X = _design(x, best_lag, nobs)
    beta, ssr = _ols(y, X)
    sigma2 = ssr / (nobs - X.shape[1])
    cov = sigma2 * np.linalg.inv(X.T @ X)
    stat = float(beta[1] / np.sqrt(cov[1, 1]))
    if not np.isfinite(stat):
        raise SingularRegression("non-finite ADF statistic")
    return AdfResult(stat, mackinnon_pvalue(stat), best_lag, nobs)


def estimate_process_noise(
    series: TimeSeries,
    k_min: int = 2,
    k_max: int = 20,
    max_lag: int | None = None,
) -> NoiseEstimate:
    """Pick the window whose residuals minimize the ADF p-value.

    Ties go to the smaller window. The returned variance is the plain sample
    variance of the residuals; it is not corrected for the (k-1)/k shrinkage
    a trailing mean induces on white noise.

    Warns:
        NonStationaryWarning: if even the best p-value is >= 0.05.
    """
    if series.dim != 1:
        raise ValueError("estimate_process_noise takes a single-component series")
    if not 2 <= k_min <= k_max:
        raise ValueError("need 2 <= k_min <= k_max")
    table = {}
    for k in range(k_min, k_max + 1):
        table[k] = adf_test(residuals(series, k), max_lag).p_value
    best = min(table, key=lambda k: (table[k], k))
    resid = residuals(series, best)
    est = NoiseEstimate(
        window=best,
        variance=float(np.var(resid.values[:, 0], ddof=1)),
        p_value=table[best],
        table=table,
        residuals=resid,
    )
    if not est.stationary:
        warnings.warn(
            f"smallest ADF p-value {est.p_value:.3g} at window {best} is not below 0.05",
            NonStationaryWarning,
            stacklevel=2,
        )
    return est
