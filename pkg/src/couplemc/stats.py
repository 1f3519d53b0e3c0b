"""Statistical post-processing for correlated time averages.

Standard errors come from batched means over equal time windows; the
integrated autocorrelation time is obtained either directly from a
uniformly sampled series or by inverting the asymptotic variance relation
Var[estimate] = Var[phi] * tau / T.  The error ratio of the corrected
estimator against the plain one factors into a variance part and a
correlation-time part, and the variance-optimal control coefficient is the
usual regression slope Cov(X, Y) / Var(Y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class BatchedSeries:
    """Per-batch means of a time average over equal simulated-time windows."""

    means: np.ndarray
    batch_duration: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        object.__setattr__(self, "means", means)
        if means.ndim != 1 or means.shape[0] < 2:
            raise ValueError("need at least 2 batches")
        if not self.batch_duration > 0:
            raise ValueError("batch duration must be positive")

    @property
    def n_batches(self) -> int:
        return self.means.shape[0]


def batched_standard_error(series: BatchedSeries) -> float:
    """Standard error of the overall time average from batch-mean scatter:
    sqrt(sample variance of batch means / number of batches)."""
    m = series.means
    return float(np.sqrt(np.var(m, ddof=1) / m.shape[0]))


def kubo_tau(estimator_variance: float, t_total: float, var_phi: float) -> float:
    """Correlation time implied by Var[estimate] = var_phi * tau / T."""
    if not var_phi > 0:
        raise ValueError("var_phi must be positive (constant observable?)")
    return estimator_variance * t_total / var_phi


@dataclass(frozen=True, eq=False)
class AcfEstimate:
    """Autocovariance C(t), normalized ACF rho(t) and integrated time tau."""

    lags: np.ndarray
    covariance: np.ndarray
    rho: np.ndarray
    tau: float


def direct_tau(samples: np.ndarray, spacing: float,
               rho_cutoff: float = 0.05,
               max_lag_fraction: float = 0.1) -> AcfEstimate:
    """Integrated autocorrelation time from a uniformly sampled series.

    The empirical ACF is integrated (trapezoid, two-sided by symmetry) up
    to the first lag where rho < rho_cutoff, capped at max_lag_fraction of
    the series length.  For an uncorrelated series this yields tau equal to
    the sample spacing.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    n = x.shape[0]
    if n < 100:
        raise ValueError(f"series too short ({n} samples; need at least 100)")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    xc = x - x.mean()
    m = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n] / n
    c0 = acov[0]
    if c0 <= 0:
        raise ValueError("zero variance: constant series has no correlation time")
    rho = acov / c0
    max_lag = max(1, int(n * max_lag_fraction))
    below = np.nonzero(rho[1:max_lag + 1] < rho_cutoff)[0]
    cut = int(below[0]) + 1 if below.size else max_lag
    tau = 2.0 * float(np.trapezoid(rho[:cut + 1], dx=spacing))
    lags = np.arange(cut + 1) * spacing
    return AcfEstimate(lags, acov[:cut + 1], rho[:cut + 1], tau)


def error_ratio(coupled_se: float, simple_se: float) -> float:
    """Ratio of the corrected estimator's standard error to the plain one's
    at equal simulated time."""
    if not simple_se > 0:
        raise ValueError("simple_se must be positive")
    return coupled_se / simple_se


def error_ratio_se(e_n: float, n_coupled_batches: int, n_simple_batches: int) -> float:
    """Delta-method standard error of the error ratio.

    Treats the two batch-mean variances as independent scaled chi-squares
    with (k - 1) degrees of freedom each.
    """
    if min(n_coupled_batches, n_simple_batches) < 2:
        raise ValueError("need at least 2 batches on each side")
    rel = 0.5 / (n_coupled_batches - 1) + 0.5 / (n_simple_batches - 1)
    return e_n * float(np.sqrt(rel))


def error_ratio_factors(var_diff: float, var_phi: float,
                        tau_couple: float, tau: float) -> tuple[float, float]:
    """Variance and correlation-time factors (e_var, e_tau) whose product
    approximates the error ratio: sqrt(var_diff/var_phi), sqrt(tau_couple/tau)."""
    if not var_phi > 0:
        raise ValueError("var_phi must be positive")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if var_diff < 0 or tau_couple < 0:
        raise ValueError("variances and correlation times must be nonnegative")
    return float(np.sqrt(var_diff / var_phi)), float(np.sqrt(tau_couple / tau))


@dataclass(frozen=True)
class ErrorRatioReport:
    """Error ratio with its factor decomposition and standard errors."""

    e_n: float
    e_n_se: float
    e_var: float
    e_tau: float


def optimal_alpha(x_samples: np.ndarray, y_samples: np.ndarray) -> tuple[float, float]:
    """Variance-optimal control coefficient from paired samples.

    Returns (alpha_star, residual_factor): alpha_star = Cov(X, Y) / Var(Y)
    and residual_factor = 1 - corr(X, Y)^2, the variance fraction left
    after optimal correction.
    """
    x = np.asarray(x_samples, dtype=float)
    y = np.asarray(y_samples, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two paired one-dimensional sample vectors")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 paired samples")
    var_y = float(np.var(y, ddof=1))
    if var_y <= 0:
        raise ValueError("degenerate control samples: Var(Y) = 0")
    cov = float(np.cov(x, y, ddof=1)[0, 1])
    var_x = float(np.var(x, ddof=1))
    alpha_star = cov / var_y
    if var_x <= 0:
        residual = 1.0
    else:
        residual = max(0.0, min(1.0, 1.0 - cov * cov / (var_x * var_y)))
    return alpha_star, residual
