"""AR-sieve bootstrap path generation and replicate orchestration.

Each replicate resamples whole centered-residual columns (never mixing
coordinates, so cross-sectional dependence of the innovations survives),
recurses the fitted VAR from a zero initial state, discards a burn-in,
re-adds the factor mean, and maps the path back through the estimated
loadings.  Replicate b owns a private generator seeded with
stable_mix(root_seed, b); stage streams (resampling vs. panel noise) are
split off that sub-seed, so results are independent of worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import var_recursion
from .errors import ExplosiveModelError, InvalidInputError, ReplicateError
from .factors import FactorModelFit, LoadingMatrix, fit_factor_model
from .inference import StatisticId, mean_statistic_from_factors, spiked_eigenvalue
from .panel import FactorSeries, PanelSeries, sample_autocov
from .rng import SeededGenerator, stable_mix
from .varsieve import VarSieveModel, stability_check

VARIANTS = ("factor-only", "noise-augmented")

# stage tags mixed into a replicate's sub-seed
_STAGE_INNOVATIONS = 0
_STAGE_PANEL_NOISE = 1


@dataclass(frozen=True)
class BootstrapConfig:
    B: int
    root_seed: int
    burn_in: int | None = None  # None: 50 + 10 p, doubled when marginal
    variant: str = "factor-only"
    levels: tuple[float, ...] = (0.95,)
    statistics: tuple[StatisticId, ...] = ()
    reestimate: bool = False  # refit the factor model on each y* panel
    noise_cov_method: str = "diagonal"
    threads: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise InvalidInputError("B must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise InvalidInputError("burn_in must be non-negative")
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}")
        for lv in self.levels:
            if not 0.0 < lv < 1.0:
                raise InvalidInputError(f"level {lv} outside (0, 1)")


@dataclass(frozen=True)
class BootstrapReplicate:
    index: int
    sub_seed: int
    statistics: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class NoiseCovEstimate:
    matrix: np.ndarray
    method: str


def center_residuals(residuals: np.ndarray) -> np.ndarray:
    """Subtract the column mean so the resampling pool has mean zero."""
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.ndim != 2 or residuals.shape[1] < 2:
        raise InvalidInputError("need at least two residual columns")
    return residuals - residuals.mean(axis=1, keepdims=True)


def resample_innovations(
    centered: np.ndarray, count: int, sub_seed: int
) -> np.ndarray:
    """Draw ``count`` whole columns i.i.d. uniformly from the pool."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    centered = np.asarray(centered, dtype=np.float64)
    gen = SeededGenerator(sub_seed)
    idx = gen.indices(count, centered.shape[1])
    return centered[:, idx]


def resolve_burn_in(model: VarSieveModel, requested: int | None) -> int:
    """Default burn-in 50 + 10 p, doubled for a marginal fit."""
    if requested is not None:
        return requested
    burn = 50 + 10 * model.p
    if stability_check(model) == "marginal":
        burn *= 2
    return burn


def generate_factor_path(
    model: VarSieveModel,
    innovations: np.ndarray,
    length: int,
    burn_in: int,
) -> FactorSeries:
    """Recurse the fitted VAR over the innovations and keep the tail.

    Starts from p zero vectors, discards the first ``burn_in`` outputs,
    and adds the stored factor mean back to every remaining column.
    """
    if stability_check(model) == "explosive":
        raise ExplosiveModelError(
            f"spectral radius {model.spectral_radius:.4f} > 1; refusing to generate"
        )
    innovations = np.asarray(innovations, dtype=np.float64)
    total = length + burn_in
    if innovations.shape[1] < total:
        raise InvalidInputError(
            f"need {total} innovation columns, got {innovations.shape[1]}"
        )
    coeffs = np.ascontiguousarray(np.stack(model.coeffs, axis=0))
    out = np.empty((model.rank, total))
    var_recursion(coeffs, np.ascontiguousarray(innovations[:, :total]), out)
    return FactorSeries(out[:, burn_in:] + model.factor_mean[:, None])


def reconstruct_panel(path: FactorSeries, loadings: LoadingMatrix) -> PanelSeries:
    """Map a factor path back to the observation space: y* = Q f*."""
    if loadings.rank != path.n_factors:
        raise InvalidInputError(
            f"loadings have rank {loadings.rank}, path has {path.n_factors} factors"
        )
    return PanelSeries(loadings.Q @ path.values)


def estimate_noise_cov(
    panel: PanelSeries,
    loadings: LoadingMatrix,
    factors: FactorSeries,
    method: str = "diagonal",
) -> NoiseCovEstimate:
    """Covariance of the idiosyncratic residual u_t = y_t - Q f_t.

    ``diagonal`` keeps only the variances.  ``hard-threshold`` zeroes
    off-diagonal entries with |s_ij| < tau sqrt(s_ii s_jj), tau = 0.5,
    then clips negative eigenvalues to restore positive semi-definiteness.
    """
    if method not in ("diagonal", "hard-threshold"):
        raise InvalidInputError(f"unknown noise covariance method {method!r}")
    u = panel.values - loadings.Q @ factors.values
    u = u - u.mean(axis=1, keepdims=True)
    cov = u @ u.T / panel.n_periods
    if method == "diagonal":
        return NoiseCovEstimate(matrix=np.diag(np.diag(cov)), method=method)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    keep = np.abs(cov) >= 0.5 * np.outer(sd, sd)
    np.fill_diagonal(keep, True)
    thresholded = np.where(keep, cov, 0.0)
    thresholded = (thresholded + thresholded.T) / 2.0
    vals, vecs = np.linalg.eigh(thresholded)
    psd = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return NoiseCovEstimate(matrix=(psd + psd.T) / 2.0, method=method)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    tol = -1e-10 * max(1.0, float(vals.max(initial=0.0)))
    if vals.min(initial=0.0) < tol:
        raise InvalidInputError("noise covariance is not positive semi-definite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def reconstruct_panel_noise_augmented(
    path: FactorSeries,
    loadings: LoadingMatrix,
    noise_cov: np.ndarray,
    sub_seed: int,
) -> PanelSeries:
    """y** = Q f* + Sigma^{1/2} z with z i.i.d. standard normal columns."""
    base = reconstruct_panel(path, loadings)
    root = _psd_sqrt(np.asarray(noise_cov, dtype=np.float64))
    gen = SeededGenerator(sub_seed)
    n, T = base.n_series, base.n_periods
    z = gen.normals(n * T).reshape(n, T)
    return PanelSeries(base.values + root @ z)


def _factor_lag_cov(values: np.ndarray, k: int) -> np.ndarray:
    """Demeaned lag-k autocovariance of a factor path, y-orientation."""
    centered = values - values.mean(axis=1, keepdims=True)
    m = values.shape[1] - k
    return centered[:, k:] @ centered[:, :m].T / m


def bootstrap_statistics(
    path: FactorSeries,
    fit: FactorModelFit,
    config: BootstrapConfig,
    sub_seed: int,
    noise_cov: np.ndarray | None,
) -> dict[str, float]:
    """Evaluate every configured statistic on one bootstrap draw.

    For the factor-only variant the statistics are computed from
    factor-level objects: the mean statistic from f*-bar through the
    original loadings, and spiked eigenvalues through the identity
    eig(G_y G_y') = N^2 eig(G_f G_f') that holds exactly for a rank-r
    panel y* = Q f* with Q'Q = N I.  The noise-augmented variant forms
    the y** panel and evaluates on it directly, as does ``reestimate``.
    """
    n = fit.loadings.n_series
    panel = None
    refit = None
    if config.variant == "noise-augmented":
        panel = reconstruct_panel_noise_augmented(
            path, fit.loadings, noise_cov, stable_mix(sub_seed, _STAGE_PANEL_NOISE)
        )
    elif config.reestimate:
        panel = reconstruct_panel(path, fit.loadings)
    if config.reestimate and panel is not None:
        refit = fit_factor_model(panel, k0=fit.k0, r=fit.r)

    out: dict[str, float] = {}
    eig_cache: dict[int, np.ndarray] = {}
    for stat in config.statistics:
        if stat.kind == "mean_statistic":
            if refit is not None:
                fbar = refit.factors.values.mean(axis=1)
                out[stat.key] = mean_statistic_from_factors(
                    refit.loadings.Q, fbar, path.n_periods, n, stat.nu, stat.weights
                )
            elif panel is not None:
                ybar = panel.values.mean(axis=1)
                c = np.ones(n) if stat.weights is None else np.asarray(stat.weights)
                scale = np.sqrt(path.n_periods / n**stat.nu)
                out[stat.key] = float(scale * (c @ ybar))
            else:
                fbar = path.values.mean(axis=1)
                out[stat.key] = mean_statistic_from_factors(
                    fit.loadings.Q, fbar, path.n_periods, n, stat.nu, stat.weights
                )
        elif stat.kind == "spiked_eigenvalue":
            source = refit.factors if refit is not None else path
            if panel is not None and refit is None:
                out[stat.key] = spiked_eigenvalue(
                    panel, stat.lag, stat.index, standardize=stat.standardize
                )
                continue
            if stat.lag not in eig_cache:
                g = _factor_lag_cov(source.values, stat.lag)
                lam = np.linalg.eigvalsh(g @ g.T)[::-1]
                eig_cache[stat.lag] = n * n * np.clip(lam, 0.0, None)
            lam_raw = eig_cache[stat.lag]
            if stat.index > lam_raw.shape[0]:
                raise InvalidInputError(
                    f"eigenvalue index {stat.index} exceeds factor rank"
                )
            value = lam_raw[stat.index - 1]
            if stat.standardize:
                value = np.sqrt(path.n_periods) * value / (n * n)
            out[stat.key] = float(value)
        else:
            raise InvalidInputError(f"unknown statistic kind {stat.kind!r}")
    return out


def _run_one(
    args: tuple[int, PanelSeries, FactorModelFit, VarSieveModel, BootstrapConfig,
                np.ndarray, int, np.ndarray | None]
) -> BootstrapReplicate:
    b, panel, fit, model, config, pool, burn, noise_cov = args
    sub_seed = stable_mix(config.root_seed, b)
    try:
        innov = resample_innovations(
            pool, panel.n_periods + burn, stable_mix(sub_seed, _STAGE_INNOVATIONS)
        )
        path = generate_factor_path(model, innov, panel.n_periods, burn)
        stats = bootstrap_statistics(path, fit, config, sub_seed, noise_cov)
    except Exception as exc:  # tag with the replicate index before surfacing
        raise ReplicateError(b, exc) from exc
    return BootstrapReplicate(index=b, sub_seed=sub_seed, statistics=stats)


def _run_chunk(payload):
    chunk, rest = payload
    return [_run_one((b, *rest)) for b in chunk]


def run_bootstrap(
    panel: PanelSeries,
    fit: FactorModelFit,
    model: VarSieveModel,
    config: BootstrapConfig,
) -> list[BootstrapReplicate]:
    """Run B sieve-bootstrap replicates and return them ordered by index.

    Deterministic in (panel, config): replicate b always derives its
    generator from stable_mix(root_seed, b), so the output is identical
    for any thread count and scheduling.
    """
    pool = center_residuals(model.residuals)
    burn = resolve_burn_in(model, config.burn_in)
    noise_cov = None
    if config.variant == "noise-augmented":
        noise_cov = estimate_noise_cov(
            panel, fit.loadings, fit.factors, config.noise_cov_method
        ).matrix
    rest = (panel, fit, model, config, pool, burn, noise_cov)
    if config.threads <= 1:
        return [_run_one((b, *rest)) for b in range(config.B)]
    chunk_size = max(1, -(-config.B // (config.threads * 4)))
    chunks = [
        list(range(lo, min(lo + chunk_size, config.B)))
        for lo in range(0, config.B, chunk_size)
    ]
    with ProcessPoolExecutor(max_workers=config.threads) as ex:
        parts = list(ex.map(_run_chunk, [(c, rest) for c in chunks]))
    reps = [rep for part in parts for rep in part]
    reps.sort(key=lambda rep: rep.index)
    return reps


def replicate_statistic(reps: list[BootstrapReplicate], key: str) -> np.ndarray:
    """Column of one statistic across replicates, ordered by index."""
    return np.array([rep.statistics[key] for rep in reps])


def write_replicates_csv(path, reps: list[BootstrapReplicate]) -> None:
    """Long-format sink: one line per (replicate, statistic_id, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replicate,statistic_id,value\n")
        for rep in reps:
            for key in sorted(rep.statistics):
                fh.write(f"{rep.index},{key},{rep.statistics[key]!r}\n")


def write_replicates_json(path, reps: list[BootstrapReplicate]) -> None:
    """Same sink as the CSV writer, as a JSON record list."""
    import json

    records = [
        {"replicate": rep.index, "statistic_id": key, "value": rep.statistics[key]}
        for rep in reps
        for key in sorted(rep.statistics)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")
