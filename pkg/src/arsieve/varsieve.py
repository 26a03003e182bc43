"""VAR sieve fit for the extracted factors via Yule-Walker equations.

The order-p coefficients solve A_p = Pi_1 Pi_0^{-1} on the block-Toeplitz
system assembled from sample autocovariances, with the block orientation
pinned by a simulate/refit round-trip test: the blocks are R(k) =
Cov(f_t, f_{t-k}), i.e. the transpose of :func:`factor_autocov`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSampleError,
    InvalidInputError,
    InvalidLagError,
    SingularSystemError,
)
from .panel import FactorSeries, demean

CRITERIA = ("aic", "sc", "fixed", "rate-rule")

_RIDGE_REL = 1e-10
_RIDGE_ESCALATION = 100.0

STABLE_RADIUS = 0.999  # below: stable; up to 1.0: marginal; above: explosive


@dataclass(frozen=True)
class VarSieveModel:
    """Order-p VAR fit on demeaned factors."""

    p: int
    coeffs: tuple[np.ndarray, ...]  # p matrices, each r x r
    residuals: np.ndarray  # r x (T - p), for t = p+1..T
    residual_cov: np.ndarray  # centered, divisor T - p
    factor_mean: np.ndarray  # removed before fitting, re-added on generation
    spectral_radius: float

    @property
    def rank(self) -> int:
        return self.coeffs[0].shape[0]


@dataclass(frozen=True)
class OrderSelection:
    criterion: str
    p_max: int
    chosen_p: int
    scores: np.ndarray = field(default_factory=lambda: np.empty(0))


def factor_autocov(factors: FactorSeries, k: int) -> np.ndarray:
    """(1/(T-k)) sum_{t=1}^{T-k} f_t f_{t+k}', on pre-demeaned factors.

    Entry (i, j) pairs f_{i,t} with f_{j,t+k}; the Yule-Walker assembly
    transposes this where Cov(f_t, f_{t-k}) is required.
    """
    T = factors.n_periods
    if k < 0 or k > T - 2:
        raise InvalidLagError(f"lag {k} outside [0, {T - 2}] for T={T}")
    f = factors.values
    m = T - k
    return f[:, :m] @ f[:, k:].T / m


def yule_walker_system(
    factors: FactorSeries, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble (Pi0, Pi1) from sample autocovariances of demeaned factors.

    Pi0 is the rp x rp block-Toeplitz matrix with block (i, j) equal to
    R(j - i) and Pi1 the r x rp row (R(1), ..., R(p)), where
    R(k) = factor_autocov(k)' and R(-k) = R(k)'.  Pi0 is symmetric.
    """
    r = factors.n_factors
    gammas = [factor_autocov(factors, k).T for k in range(p + 1)]  # R(0..p)
    pi0 = np.empty((r * p, r * p))
    for i in range(p):
        for j in range(p):
            lag = j - i
            block = gammas[lag] if lag >= 0 else gammas[-lag].T
            pi0[i * r : (i + 1) * r, j * r : (j + 1) * r] = block
    pi1 = np.hstack([gammas[k] for k in range(1, p + 1)])
    return pi0, pi1


def companion_matrix(coeffs) -> np.ndarray:
    """rp x rp companion matrix of VAR coefficient matrices."""
    coeffs = [np.asarray(a, dtype=np.float64) for a in coeffs]
    p = len(coeffs)
    r = coeffs[0].shape[0]
    comp = np.zeros((r * p, r * p))
    comp[:r, :] = np.hstack(coeffs)
    if p > 1:
        comp[r:, : r * (p - 1)] = np.eye(r * (p - 1))
    return comp


def spectral_radius(coeffs) -> float:
    return float(np.abs(np.linalg.eigvals(companion_matrix(coeffs))).max())


def _solve_ridged(pi0: np.ndarray, pi1: np.ndarray, rp: int) -> np.ndarray:
    """Solve A = Pi1 Pi0^{-1} with a ridge on Pi0, escalating once."""
    eps = _RIDGE_REL * np.trace(pi0) / rp
    for attempt in range(2):
        ridged = pi0 + eps * np.eye(rp)
        try:
            sol = np.linalg.solve(ridged, pi1.T).T
        except np.linalg.LinAlgError:
            sol = None
        if sol is not None and np.all(np.isfinite(sol)):
            return sol
        eps = eps * _RIDGE_ESCALATION if eps > 0 else _RIDGE_REL
    raise SingularSystemError(
        f"Yule-Walker system ({rp}x{rp}) singular after ridge escalation"
    )


def yule_walker_fit(factors: FactorSeries, p: int) -> VarSieveModel:
    """Fit an order-p VAR to the factors by Yule-Walker.

    The factors are demeaned first (the mean is stored for re-addition at
    generation time); residuals run over t = p+1..T and the residual
    covariance is centered with divisor T - p.
    """
    if p < 1:
        raise InvalidInputError(f"order must be >= 1, got {p}")
    T = factors.n_periods
    if T <= 4 * p:
        raise InsufficientSampleError(f"need T > 4p, got T={T}, p={p}")
    centered, mean = demean(factors)
    r = factors.n_factors
    pi0, pi1 = yule_walker_system(centered, p)
    stacked = _solve_ridged(pi0, pi1, r * p)
    coeffs = tuple(
        np.ascontiguousarray(stacked[:, l * r : (l + 1) * r]) for l in range(p)
    )
    g = centered.values
    resid = g[:, p:].copy()
    for l in range(1, p + 1):
        resid -= coeffs[l - 1] @ g[:, p - l : T - l]
    rc = resid - resid.mean(axis=1, keepdims=True)
    residual_cov = rc @ rc.T / (T - p)
    residual_cov = (residual_cov + residual_cov.T) / 2.0
    return VarSieveModel(
        p=p,
        coeffs=coeffs,
        residuals=resid,
        residual_cov=residual_cov,
        factor_mean=mean,
        spectral_radius=spectral_radius(coeffs),
    )


def rate_rule_order(T: int) -> int:
    """max(1, floor((T / ln T)^(1/6))), the slow-growth default."""
    return max(1, int(np.floor((T / np.log(T)) ** (1.0 / 6.0))))


def select_order(
    factors: FactorSeries,
    criterion: str = "aic",
    p_max: int | None = None,
    p_fixed: int | None = None,
) -> OrderSelection:
    """Choose the sieve order by AIC/SC, the rate rule, or a fixed value.

    AIC and SC compare log det of the residual covariance computed on the
    common window t = p_max+1..T, plus penalty 2 p r^2 / T_eff (AIC) or
    ln(T_eff) p r^2 / T_eff (SC), with T_eff = T - p_max.
    """
    if criterion not in CRITERIA:
        raise InvalidInputError(f"criterion must be one of {CRITERIA}")
    T = factors.n_periods
    if criterion == "fixed":
        if p_fixed is None or p_fixed < 1:
            raise InvalidInputError("fixed criterion needs p_fixed >= 1")
        return OrderSelection("fixed", p_max=p_fixed, chosen_p=p_fixed)
    if criterion == "rate-rule":
        p = rate_rule_order(T)
        return OrderSelection("rate-rule", p_max=p, chosen_p=p)

    if p_max is None:
        p_max = min(max(1, rate_rule_order(T) + 4), T // 4)
    if p_max < 1 or p_max > T // 4:
        raise InvalidInputError(f"p_max must lie in [1, {T // 4}] for T={T}")
    centered, _ = demean(factors)
    r = factors.n_factors
    g = centered.values
    t_eff = T - p_max
    scores = np.empty(p_max)
    for p in range(1, p_max + 1):
        pi0, pi1 = yule_walker_system(centered, p)
        stacked = _solve_ridged(pi0, pi1, r * p)
        resid = g[:, p_max:].copy()
        for l in range(1, p + 1):
            resid -= stacked[:, (l - 1) * r : l * r] @ g[:, p_max - l : T - l]
        rc = resid - resid.mean(axis=1, keepdims=True)
        cov = rc @ rc.T / t_eff
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            logdet = -np.inf  # perfect fit; ties resolve to the smallest p
        penalty = p * r * r / t_eff
        scores[p - 1] = logdet + (
            2.0 * penalty if criterion == "aic" else np.log(t_eff) * penalty
        )
    chosen = int(np.argmin(scores)) + 1
    return OrderSelection(criterion, p_max=p_max, chosen_p=chosen, scores=scores)


def stability_check(model: VarSieveModel) -> str:
    """Classify the fitted model as stable, marginal, or explosive."""
    rho = model.spectral_radius
    if rho < STABLE_RADIUS:
        return "stable"
    if rho <= 1.0:
        return "marginal"
    return "explosive"


def model_to_dict(model: VarSieveModel) -> dict:
    """JSON-ready summary of a fitted sieve model."""
    return {
        "p": model.p,
        "coefficients": [
            {"lag": l + 1, "matrix": a.tolist()} for l, a in enumerate(model.coeffs)
        ],
        "residual_cov": model.residual_cov.tolist(),
        "factor_mean": model.factor_mean.tolist(),
        "spectral_radius": model.spectral_radius,
    }
