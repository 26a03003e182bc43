"""Target statistics, bootstrap interval constructions, and scoring.

Three interval kinds are supported.  The basic (reverse percentile)
interval reflects bootstrap quantiles around the point estimate,
(2 th - q_{1-a/2}, 2 th - q_{a/2}); the normal interval is
th - b* -/+ z sqrt(v*) with bootstrap bias b* and variance v*; the
unreversed percentile interval takes the plain bootstrap quantiles and so
retains the skewness of the bootstrap distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .factors import FactorModelFit
from .panel import PanelSeries, sample_autocov

INTERVAL_KINDS = ("reverse_percentile", "normal", "unreversed_percentile")


@dataclass(frozen=True)
class StatisticId:
    """Identifier of a bootstrap target statistic.

    ``mean_statistic`` uses the strength exponent ``nu`` and an optional
    weight vector (all ones when None); ``spiked_eigenvalue`` uses the
    autocovariance lag and the 1-based eigenvalue index.
    """

    kind: str
    nu: float = 1.0
    weights: tuple[float, ...] | None = None
    lag: int = 1
    index: int = 1
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in ("mean_statistic", "spiked_eigenvalue"):
            raise InvalidInputError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "mean_statistic" and not 0.0 < self.nu <= 1.0:
            raise InvalidInputError(f"nu={self.nu} outside (0, 1]")
        if self.kind == "spiked_eigenvalue":
            if self.index < 1:
                raise InvalidInputError("eigenvalue index must be >= 1")
            if self.lag < 1:
                raise InvalidInputError("autocovariance lag must be >= 1")

    @property
    def key(self) -> str:
        if self.kind == "mean_statistic":
            return "mean"
        suffix = "" if self.standardize else "_raw"
        return f"eig{self.index}_lag{self.lag}{suffix}"


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    kind: str

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise InvalidInputError(f"level {self.level} outside (0, 1)")
        if self.lower > self.upper:
            raise InvalidInputError(
                f"inverted interval: lower {self.lower} > upper {self.upper}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, theta: float) -> bool:
        return self.lower <= theta <= self.upper


@dataclass(frozen=True)
class CoverageRow:
    """One aggregated cell of a coverage experiment."""

    T: int
    N: int
    level: float
    kind: str
    statistic: str
    coverage: float
    avg_width: float
    avg_score: float
    M: int
    nu: float = float("nan")
    failures: int = 0


# -- statistics ---------------------------------------------------------


def mean_statistic_from_factors(
    Q: np.ndarray,
    factor_mean: np.ndarray,
    T: int,
    N: int,
    nu: float,
    weights=None,
) -> float:
    """Standardised mean statistic sqrt(T/N^nu) c' Q fbar."""
    if not 0.0 < nu <= 1.0:
        raise InvalidInputError(f"nu={nu} outside (0, 1]")
    c = np.ones(Q.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if c.shape[0] != Q.shape[0]:
        raise InvalidInputError(
            f"weight vector length {c.shape[0]} does not match N={Q.shape[0]}"
        )
    scale = math.sqrt(T / N**nu)
    return float(scale * (c @ Q @ factor_mean))


def mean_statistic(fit: FactorModelFit, nu: float, weights=None) -> float:
    """Sample mean statistic of a fitted factor model."""
    fbar = fit.factors.values.mean(axis=1)
    return mean_statistic_from_factors(
        fit.loadings.Q, fbar, fit.factors.n_periods, fit.loadings.n_series, nu, weights
    )


def mean_statistic_from_panel(
    panel_values: np.ndarray, T: int, N: int, nu: float, weights=None
) -> float:
    """Mean statistic evaluated directly on a panel: sqrt(T/N^nu) c' ybar."""
    if not 0.0 < nu <= 1.0:
        raise InvalidInputError(f"nu={nu} outside (0, 1]")
    c = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    return float(math.sqrt(T / N**nu) * (c @ panel_values.mean(axis=1)))


def _sym_autocov_eigenvalues(panel: PanelSeries, k: int) -> np.ndarray:
    """Descending eigenvalues of G(k) G(k)' without forming N x N products
    when the cross-section is larger than the usable sample.

    G(k) = A B' / m with A, B demeaned N x m slices, so its squared
    singular values can be taken from the m x m core R_A R_B' of the thin
    QR factors of A and B, which is cheaper when N > m.
    """
    n, T = panel.n_series, panel.n_periods
    m = T - k
    if n <= m:
        g = sample_autocov(panel, k).matrix
        vals = np.linalg.eigvalsh(g @ g.T)[::-1]
        return np.clip(vals, 0.0, None)
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    _, ra = np.linalg.qr(centered[:, k:])
    _, rb = np.linalg.qr(centered[:, :m])
    sv = np.linalg.svd(ra @ rb.T / m, compute_uv=False)
    out = np.zeros(n)
    out[: sv.shape[0]] = sv**2
    return out


def spiked_eigenvalue(
    panel: PanelSeries, k: int, i: int, standardize: bool = True
) -> float:
    """i-th largest eigenvalue of the symmetrised lag-k autocovariance.

    Returns the raw eigenvalue of G(k) G(k)' or, when ``standardize`` is
    set, sqrt(T) / N^2 times it, the scale on which interval widths are
    comparable across (N, T).
    """
    if i < 1 or i > panel.n_series:
        raise InvalidInputError(f"eigenvalue index {i} outside [1, {panel.n_series}]")
    vals = _sym_autocov_eigenvalues(panel, k)
    value = float(vals[i - 1])
    if standardize:
        value *= math.sqrt(panel.n_periods) / panel.n_series**2
    return value


# -- quantiles and intervals ---------------------------------------------


def empirical_quantile(samples, p: float) -> float:
    """Linear-interpolation sample quantile.

    Sort ascending, set h = (n - 1) p + 1, and return
    x_[h] + (h - [h]) (x_[h]+1 - x_[h]) on 1-based indexing with
    x_{n+1} := x_n.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise InvalidInputError("empty sample")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"probability {p} outside [0, 1]")
    h = (x.size - 1) * p + 1.0
    lo = int(math.floor(h))
    frac = h - lo
    hi = min(lo + 1, x.size)
    return float(x[lo - 1] + frac * (x[hi - 1] - x[lo - 1]))


def normal_quantile(p: float) -> float:
    """Standard normal quantile by the AS 241 rational approximation.

    Wichura's PPND16: a 7/7-degree rational minimax fit in
    r = p - 1/2 for central p, and in sqrt(-log(min(p, 1-p))) in the
    tails, accurate to about 1e-15 (far inside the 1e-8 contract).
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"probability {p} outside (0, 1)")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = ((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                   + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                 + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
               + 1.3314166789178437745e2) * r + 3.3871328727963666080
        den = ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                   + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                 + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
               + 4.2313330701600911252e1) * r + 1.0
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = ((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                   + 2.41780725177450611770e-1) * r + 1.27045825245236838258) * r
                 + 3.64784832476320460504) * r + 5.76949722146069140550) * r
               + 4.63033784615654529590) * r + 1.42343711074968357734
        den = ((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                   + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                 + 6.89767334985100004550e-1) * r + 1.67638483018380384940) * r
               + 2.05319162663775882187) * r + 1.0
    else:
        r -= 5.0
        num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                   + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                 + 2.96560571828504891230e-1) * r + 1.78482653991729133580) * r
               + 5.46378491116411436990) * r + 6.65790464350110377720
        den = ((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                   + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                 + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
               + 5.99832206555887937690e-1) * r + 1.0
    val = num / den
    return -val if q < 0 else val


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha {alpha} outside (0, 1)")


def reverse_percentile_interval(
    theta_hat: float, samples, alpha: float
) -> IntervalEstimate:
    """Basic bootstrap interval (2 th - q_{1-a/2}, 2 th - q_{a/2})."""
    _check_alpha(alpha)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 20:
        raise InvalidInputError("need at least 20 bootstrap samples")
    lo = 2.0 * theta_hat - empirical_quantile(samples, 1.0 - alpha / 2.0)
    hi = 2.0 * theta_hat - empirical_quantile(samples, alpha / 2.0)
    return IntervalEstimate(lo, hi, 1.0 - alpha, "reverse_percentile")


def normal_interval(theta_hat: float, samples, alpha: float) -> IntervalEstimate:
    """Bias-corrected normal interval th - b* -/+ z_{1-a/2} sqrt(v*)."""
    _check_alpha(alpha)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        raise InvalidInputError("need at least 2 bootstrap samples")
    bias = samples.mean() - theta_hat
    var = samples.var(ddof=1)
    z = normal_quantile(1.0 - alpha / 2.0)
    center = theta_hat - bias
    half = z * math.sqrt(var)
    return IntervalEstimate(center - half, center + half, 1.0 - alpha, "normal")


def unreversed_percentile_interval(samples, alpha: float) -> IntervalEstimate:
    """Plain bootstrap quantile interval (q_{a/2}, q_{1-a/2})."""
    _check_alpha(alpha)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 20:
        raise InvalidInputError("need at least 20 bootstrap samples")
    lo = empirical_quantile(samples, alpha / 2.0)
    hi = empirical_quantile(samples, 1.0 - alpha / 2.0)
    return IntervalEstimate(lo, hi, 1.0 - alpha, "unreversed_percentile")


def build_interval(
    kind: str, theta_hat: float, samples, alpha: float
) -> IntervalEstimate:
    if kind == "reverse_percentile":
        return reverse_percentile_interval(theta_hat, samples, alpha)
    if kind == "normal":
        return normal_interval(theta_hat, samples, alpha)
    if kind == "unreversed_percentile":
        return unreversed_percentile_interval(samples, alpha)
    raise InvalidInputError(f"unknown interval kind {kind!r}")


def interval_score(
    lower: float, upper: float, theta: float, alpha: float
) -> float:
    """Width plus (2/alpha)-weighted penalties for missing theta."""
    _check_alpha(alpha)
    if lower > upper:
        raise InvalidInputError("inverted interval")
    score = upper - lower
    if theta < lower:
        score += 2.0 / alpha * (lower - theta)
    elif theta > upper:
        score += 2.0 / alpha * (theta - upper)
    return score


def aggregate_coverage(
    intervals: list[IntervalEstimate],
    truth: float,
    *,
    T: int,
    N: int,
    statistic: str,
    nu: float = float("nan"),
    failures: int = 0,
) -> CoverageRow:
    """Empirical coverage, mean width, and mean score over replications."""
    if not intervals:
        raise InvalidInputError("need at least one replication")
    level = intervals[0].level
    kind = intervals[0].kind
    covered = sum(1 for iv in intervals if iv.covers(truth))
    # sorted reductions make the aggregate exactly permutation-invariant
    widths = np.sort([iv.width for iv in intervals])
    scores = np.sort(
        [interval_score(iv.lower, iv.upper, truth, 1.0 - iv.level) for iv in intervals]
    )
    m = len(intervals)
    return CoverageRow(
        T=T,
        N=N,
        level=level,
        kind=kind,
        statistic=statistic,
        coverage=covered / m,
        avg_width=float(np.mean(widths)),
        avg_score=float(np.mean(scores)),
        M=m,
        nu=nu,
        failures=failures,
    )
