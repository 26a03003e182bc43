"""Data-generating processes and the Monte Carlo coverage harness.

Two shipped DGPs: a two-factor model with independent AR(1) factors whose
innovation variances scale as N^nu (strength exponent nu), and a
three-factor VAR(1) with fixed cosine loadings.  The harness simulates M
panels per grid cell, runs the full estimation + bootstrap pipeline on
each, builds the requested intervals, and aggregates empirical coverage,
width, and interval score against analytic truths.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import var_recursion
from .bootstrap import BootstrapConfig, replicate_statistic, run_bootstrap
from .errors import ArsieveError, ConfigError, InvalidInputError
from .factors import (
    default_ratio_bound,
    estimate_num_factors,
    fit_factor_model,
)
from .inference import (
    INTERVAL_KINDS,
    CoverageRow,
    IntervalEstimate,
    StatisticId,
    aggregate_coverage,
    build_interval,
    mean_statistic,
    spiked_eigenvalue,
)
from .panel import FactorSeries, PanelSeries
from .rng import SeededGenerator, stable_mix
from .varsieve import select_order, stability_check, yule_walker_fit

DGP_KINDS = ("two_factor_ar1", "three_factor_var1", "custom")

_DGP_BURN = 200  # discarded pre-run before the retained sample


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    N: int
    T: int
    nu: float = 1.0
    ar_coeff: float = 0.5
    innovation_scales: tuple[float, ...] = (1.0, 0.5)  # variance = scale * N^nu
    seed: int = 0
    noise_variance: float = 1.0
    custom_loadings: np.ndarray | None = None
    custom_coeffs: tuple[np.ndarray, ...] | None = None
    custom_innovation_cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise InvalidInputError(f"dgp kind must be one of {DGP_KINDS}")
        if not 0.0 < self.nu <= 1.0:
            raise InvalidInputError(f"nu={self.nu} outside (0, 1]")
        if abs(self.ar_coeff) >= 1.0:
            raise InvalidInputError("ar_coeff must satisfy |phi| < 1")


@dataclass(frozen=True)
class DgpTruth:
    """Population quantities of a simulated panel, plus the realized paths."""

    kind: str
    qo: np.ndarray  # loading columns as generated (orthonormal for 2-factor)
    loadings: np.ndarray  # sqrt(N)-scaled counterpart used by y = Q f + u
    factors: FactorSeries  # realized factor paths in the generated scale
    theta_mean: float  # population standardized mean statistic
    coeff_matrices: tuple[np.ndarray, ...]
    innovation_cov: np.ndarray  # of the generated-scale factors
    sigma0: np.ndarray  # lag-0 factor covariance (generated scale)

    def factor_gamma(self, k: int) -> np.ndarray:
        """Population Cov(f_{t+k}, f_t) of the generated-scale factors."""
        if len(self.coeff_matrices) != 1:
            raise InvalidInputError("analytic autocovariance needs a VAR(1) truth")
        a = self.coeff_matrices[0]
        return np.linalg.matrix_power(a, k) @ self.sigma0

    def extracted_factor_gamma(self, k: int) -> np.ndarray:
        """Same autocovariance on the scale of extracted factors f/sqrt(N)."""
        return self.factor_gamma(k) / self.qo.shape[0]

    def delta_raw(self, k: int, i: int) -> float:
        """i-th eigenvalue of the population Gamma_y(k) Gamma_y(k)'."""
        gam = self.factor_gamma(k)
        gram = self.qo.T @ self.qo  # identity for orthonormal loadings
        core = gam @ gram @ gam.T @ gram
        vals = np.sort(np.linalg.eigvals(core).real)[::-1]
        if i > vals.shape[0]:
            return 0.0
        return float(max(vals[i - 1], 0.0))

    def delta_standardized(self, k: int, i: int, T: int) -> float:
        n = self.qo.shape[0]
        return float(np.sqrt(T) * self.delta_raw(k, i) / n**2)

    def statistic_truth(self, stat: StatisticId, T: int) -> float:
        if stat.kind == "mean_statistic":
            return self.theta_mean
        if stat.standardize:
            return self.delta_standardized(stat.lag, stat.index, T)
        return self.delta_raw(stat.lag, stat.index)


def _sign_normalize(mat: np.ndarray) -> np.ndarray:
    anchor = np.argmax(np.abs(mat), axis=0)
    signs = np.where(mat[anchor, np.arange(mat.shape[1])] < 0, -1.0, 1.0)
    return mat * signs


def _simulate_var_paths(
    coeffs: tuple[np.ndarray, ...], innovations: np.ndarray, keep: int
) -> np.ndarray:
    """Zero-initialized VAR recursion, returning the last ``keep`` columns."""
    stacked = np.ascontiguousarray(np.stack(coeffs, axis=0))
    out = np.empty_like(innovations)
    var_recursion(stacked, np.ascontiguousarray(innovations), out)
    return out[:, innovations.shape[1] - keep :]


def simulate_two_factor(spec: DgpSpec) -> tuple[PanelSeries, DgpTruth]:
    """Two independent AR(1) factors behind a random orthonormal loading.

    Loadings come from the QR factor of an N x 2 standard normal draw,
    sign-normalized per column.  Factor i has innovation variance
    innovation_scales[i] * N^nu; observation noise is unit-variance
    Gaussian.  Draw order: loadings, factor innovations, noise.
    """
    if spec.N < 3 or spec.T < 50:
        raise InvalidInputError("two-factor DGP needs N >= 3 and T >= 50")
    r = len(spec.innovation_scales)
    gen = SeededGenerator(spec.seed)
    raw = gen.normals(spec.N * r).reshape(spec.N, r)
    qo, _ = np.linalg.qr(raw)
    qo = _sign_normalize(qo)

    total = spec.T + _DGP_BURN
    sds = np.sqrt(np.array(spec.innovation_scales) * spec.N**spec.nu)
    innov = gen.normals(r * total).reshape(r, total) * sds[:, None]
    coeffs = (np.eye(r) * spec.ar_coeff,)
    paths = _simulate_var_paths(coeffs, innov, spec.T)

    noise = gen.normals(spec.N * spec.T).reshape(spec.N, spec.T)
    panel = PanelSeries(qo @ paths + np.sqrt(spec.noise_variance) * noise)

    inn_cov = np.diag(sds**2)
    sigma0 = np.diag(sds**2 / (1.0 - spec.ar_coeff**2))
    truth = DgpTruth(
        kind=spec.kind,
        qo=qo,
        loadings=np.sqrt(spec.N) * qo,
        factors=FactorSeries(paths),
        theta_mean=0.0,
        coeff_matrices=coeffs,
        innovation_cov=inn_cov,
        sigma0=sigma0,
    )
    return panel, truth


THREE_FACTOR_COEFF = np.array(
    [[0.5, 0.1, 0.1], [0.1, 0.5, 0.1], [0.1, 0.1, 0.5]]
)


def fourier_loadings(n: int) -> np.ndarray:
    """N x 3 cosine loadings; the third column carries the local pattern."""
    i = np.arange(1, n + 1)
    return np.column_stack(
        [
            np.cos(2.0 * np.pi * i / n),
            np.cos(4.0 * np.pi * i / n),
            0.5 * np.cos(16.0 * np.pi * i / n),
        ]
    )


def simulate_three_factor_var1(spec: DgpSpec) -> tuple[PanelSeries, DgpTruth]:
    """Three VAR(1) factors behind fixed cosine loadings, unit noise."""
    if spec.N < 5:
        raise InvalidInputError("three-factor DGP needs N >= 5")
    q = fourier_loadings(spec.N)
    gen = SeededGenerator(spec.seed)
    total = spec.T + _DGP_BURN
    innov = gen.normals(3 * total).reshape(3, total)
    coeffs = (THREE_FACTOR_COEFF.copy(),)
    paths = _simulate_var_paths(coeffs, innov, spec.T)
    noise = gen.normals(spec.N * spec.T).reshape(spec.N, spec.T)
    panel = PanelSeries(q @ paths + np.sqrt(spec.noise_variance) * noise)
    sigma0 = scipy.linalg.solve_discrete_lyapunov(THREE_FACTOR_COEFF, np.eye(3))
    truth = DgpTruth(
        kind=spec.kind,
        qo=q,
        loadings=q,
        factors=FactorSeries(paths),
        theta_mean=0.0,
        coeff_matrices=coeffs,
        innovation_cov=np.eye(3),
        sigma0=sigma0,
    )
    return panel, truth


def simulate_custom(spec: DgpSpec) -> tuple[PanelSeries, DgpTruth]:
    """User-supplied loadings and VAR coefficients, Gaussian innovations."""
    if spec.custom_loadings is None or spec.custom_coeffs is None:
        raise InvalidInputError("custom DGP needs loadings and coefficients")
    q = np.asarray(spec.custom_loadings, dtype=np.float64)
    coeffs = tuple(np.asarray(a, dtype=np.float64) for a in spec.custom_coeffs)
    r = coeffs[0].shape[0]
    cov = (
        np.eye(r)
        if spec.custom_innovation_cov is None
        else np.asarray(spec.custom_innovation_cov, dtype=np.float64)
    )
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    gen = SeededGenerator(spec.seed)
    total = spec.T + _DGP_BURN
    innov = root @ gen.normals(r * total).reshape(r, total)
    paths = _simulate_var_paths(coeffs, innov, spec.T)
    noise = gen.normals(spec.N * spec.T).reshape(spec.N, spec.T)
    panel = PanelSeries(q @ paths + np.sqrt(spec.noise_variance) * noise)
    if len(coeffs) == 1:
        sigma0 = scipy.linalg.solve_discrete_lyapunov(coeffs[0], cov)
    else:
        sigma0 = np.full((r, r), np.nan)  # no closed form kept for p > 1
    truth = DgpTruth(
        kind=spec.kind,
        qo=q,
        loadings=q,
        factors=FactorSeries(paths),
        theta_mean=0.0,
        coeff_matrices=coeffs,
        innovation_cov=cov,
        sigma0=sigma0,
    )
    return panel, truth


def simulate(spec: DgpSpec) -> tuple[PanelSeries, DgpTruth]:
    if spec.kind == "two_factor_ar1":
        return simulate_two_factor(spec)
    if spec.kind == "three_factor_var1":
        return simulate_three_factor_var1(spec)
    return simulate_custom(spec)


# -- coverage experiment --------------------------------------------------


@dataclass(frozen=True)
class ExperimentGrid:
    cells: tuple[tuple[int, int], ...]  # (T, N)
    nus: tuple[float, ...]
    M: int
    B: int
    levels: tuple[float, ...] = (0.95,)
    kinds: tuple[str, ...] = ("reverse_percentile",)
    statistics: tuple[StatisticId, ...] = (StatisticId("mean_statistic"),)
    root_seed: int = 0
    dgp: str = "two_factor_ar1"
    k0: int = 2
    r: int | None = 2  # None selects the rank per replication
    criterion: str = "aic"
    p_max: int | None = None
    p_fixed: int | None = None
    variant: str = "factor-only"
    burn_in: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise InvalidInputError("M must be >= 1")
        if self.B < 20:
            raise InvalidInputError("B must be >= 20")
        for kind in self.kinds:
            if kind not in INTERVAL_KINDS:
                raise InvalidInputError(f"unknown interval kind {kind!r}")
        for level in self.levels:
            if not 0.0 < level < 1.0:
                raise InvalidInputError(f"level {level} outside (0, 1)")
        for nu in self.nus:
            if not 0.0 < nu <= 1.0:
                raise InvalidInputError(f"nu {nu} outside (0, 1]")


def _cell_list(grid: ExperimentGrid) -> list[tuple[int, int, float]]:
    return [(T, N, nu) for nu in grid.nus for (T, N) in grid.cells]


def _truth_for_cell(
    grid: ExperimentGrid, T: int, N: int, nu: float, stat: StatisticId
) -> float:
    """Analytic truth, independent of the per-replication draws."""
    if stat.kind == "mean_statistic":
        return 0.0
    spec = _cell_spec(grid, T, N, nu, seed=0)
    if spec.kind == "two_factor_ar1":
        sds2 = np.array(spec.innovation_scales) * N**nu
        gammas = spec.ar_coeff**stat.lag * sds2 / (1.0 - spec.ar_coeff**2)
        raw = np.sort(gammas**2)[::-1]
        value = raw[stat.index - 1] if stat.index <= raw.shape[0] else 0.0
    elif spec.kind == "three_factor_var1":
        q = fourier_loadings(N)
        sigma0 = scipy.linalg.solve_discrete_lyapunov(THREE_FACTOR_COEFF, np.eye(3))
        gam = np.linalg.matrix_power(THREE_FACTOR_COEFF, stat.lag) @ sigma0
        gram = q.T @ q
        core = gam @ gram @ gam.T @ gram
        vals = np.sort(np.linalg.eigvals(core).real)[::-1]
        value = max(vals[stat.index - 1], 0.0) if stat.index <= 3 else 0.0
    else:
        raise InvalidInputError("no analytic truth for the custom DGP")
    if stat.standardize:
        value = np.sqrt(T) * value / N**2
    return float(value)


def _cell_spec(grid: ExperimentGrid, T: int, N: int, nu: float, seed: int) -> DgpSpec:
    return DgpSpec(kind=grid.dgp, N=N, T=T, nu=nu, seed=seed)


def _cell_statistics(grid: ExperimentGrid, nu: float) -> tuple[StatisticId, ...]:
    """Bind the cell's strength exponent into the mean statistics."""
    return tuple(
        dataclasses.replace(s, nu=nu) if s.kind == "mean_statistic" else s
        for s in grid.statistics
    )


def run_replication(
    grid: ExperimentGrid, cell_index: int, T: int, N: int, nu: float, m: int
) -> dict:
    """One simulate/fit/bootstrap pass; returns interval bounds per statistic."""
    sim_seed = stable_mix(grid.root_seed, cell_index, m, 0)
    boot_seed = stable_mix(grid.root_seed, cell_index, m, 1)
    stats = _cell_statistics(grid, nu)
    try:
        panel, _ = simulate(_cell_spec(grid, T, N, nu, seed=sim_seed))
        fit = fit_factor_model(panel, k0=grid.k0, r=grid.r)
        bound = min(default_ratio_bound(N), fit.spectrum.size - 1)
        r_hat = fit.r
        if grid.r is not None and bound >= 1:
            r_hat, _ = estimate_num_factors(fit.spectrum.eigenvalues, bound)
        selection = select_order(
            fit.factors, grid.criterion, p_max=grid.p_max, p_fixed=grid.p_fixed
        )
        model = yule_walker_fit(fit.factors, selection.chosen_p)
        if stability_check(model) == "explosive":
            raise ArsieveError(
                f"explosive sieve fit (radius {model.spectral_radius:.3f})"
            )
        config = BootstrapConfig(
            B=grid.B,
            root_seed=boot_seed,
            burn_in=grid.burn_in,
            variant=grid.variant,
            statistics=stats,
        )
        reps = run_bootstrap(panel, fit, model, config)
        result = {"ok": True, "r_hat": r_hat, "p": selection.chosen_p, "stats": {}}
        for stat in stats:
            if stat.kind == "mean_statistic":
                theta_hat = mean_statistic(fit, nu=stat.nu)
            else:
                theta_hat = spiked_eigenvalue(
                    panel, stat.lag, stat.index, standardize=stat.standardize
                )
            samples = replicate_statistic(reps, stat.key)
            bounds = {}
            for kind in grid.kinds:
                for level in grid.levels:
                    iv = build_interval(kind, theta_hat, samples, 1.0 - level)
                    bounds[(kind, level)] = (iv.lower, iv.upper)
            result["stats"][stat.key] = {"theta_hat": theta_hat, "bounds": bounds}
        return result
    except ArsieveError as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _replication_worker(args):
    return run_replication(*args)


def run_coverage_experiment(
    grid: ExperimentGrid, diagnostics: dict | None = None
) -> list[CoverageRow]:
    """Full Monte Carlo sweep over the grid; deterministic in root_seed.

    Failed replications are excluded from the aggregation and counted in
    the ``failures`` column of every row of their cell.  When a
    ``diagnostics`` dict is supplied it receives per-cell rank-selection
    counts and failure messages.
    """
    rows: list[CoverageRow] = []
    cells = _cell_list(grid)
    for ci, (T, N, nu) in enumerate(cells):
        tasks = [(grid, ci, T, N, nu, m) for m in range(grid.M)]
        if grid.threads <= 1:
            results = [run_replication(*t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=grid.threads) as ex:
                results = list(ex.map(_replication_worker, tasks, chunksize=1))
        ok = [res for res in results if res["ok"]]
        failures = len(results) - len(ok)
        if diagnostics is not None:
            key = (T, N, nu)
            diagnostics[key] = {
                "r_hat": [res["r_hat"] for res in ok],
                "p": [res["p"] for res in ok],
                "errors": [res["error"] for res in results if not res["ok"]],
            }
        if not ok:
            continue
        stats = _cell_statistics(grid, nu)
        for stat in stats:
            truth = _truth_for_cell(grid, T, N, nu, stat)
            for kind in grid.kinds:
                for level in grid.levels:
                    intervals = [
                        IntervalEstimate(*res["stats"][stat.key]["bounds"][(kind, level)],
                                         level=level, kind=kind)
                        for res in ok
                    ]
                    rows.append(
                        aggregate_coverage(
                            intervals,
                            truth,
                            T=T,
                            N=N,
                            statistic=stat.key,
                            nu=nu,
                            failures=failures,
                        )
                    )
    return rows


# -- table emission --------------------------------------------------------

_CSV_COLUMNS = (
    "T", "N", "level", "coverage", "width", "score",
    "kind", "statistic", "nu", "M", "failures",
)


def _row_values(row: CoverageRow) -> list:
    return [
        row.T, row.N, row.level, row.coverage, row.avg_width, row.avg_score,
        row.kind, row.statistic, row.nu, row.M, row.failures,
    ]


def emit_table(rows: list[CoverageRow], fmt: str = "csv") -> str:
    """Render coverage rows as csv, json, or a paper-layout markdown table."""
    if not rows:
        raise InvalidInputError("no rows to emit")
    if fmt == "csv":
        lines = [",".join(_CSV_COLUMNS)]
        for row in rows:
            lines.append(
                ",".join(
                    repr(v) if isinstance(v, float) else str(v)
                    for v in _row_values(row)
                )
            )
        return "\n".join(lines) + "\n"
    if fmt == "json":
        payload = [dict(zip(_CSV_COLUMNS, _row_values(row))) for row in rows]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        return _emit_markdown(rows)
    raise InvalidInputError(f"unknown format {fmt!r}")


def _emit_markdown(rows: list[CoverageRow]) -> str:
    levels = sorted({row.level for row in rows}, reverse=True)
    groups: dict[tuple, list[CoverageRow]] = {}
    for row in rows:
        groups.setdefault((row.statistic, row.kind, row.nu), []).append(row)
    out = []
    for (stat, kind, nu), members in sorted(groups.items()):
        out.append(f"### {stat} / {kind} / nu={nu}")
        header = ["T", "N"]
        for lv in levels:
            pct = f"{100 * lv:g}%"
            header += [f"coverage {pct}", f"width {pct}", f"score {pct}"]
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "---|" * len(header))
        by_cell: dict[tuple[int, int], dict[float, CoverageRow]] = {}
        for row in members:
            by_cell.setdefault((row.T, row.N), {})[row.level] = row
        for (T, N) in sorted(by_cell):
            cells = [str(T), str(N)]
            for lv in levels:
                row = by_cell[(T, N)].get(lv)
                if row is None:
                    cells += ["", "", ""]
                else:
                    cells += [
                        f"{row.coverage:.3f}",
                        f"{row.avg_width:.3f}",
                        f"{row.avg_score:.3f}",
                    ]
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


# -- grid config file ------------------------------------------------------

_GRID_KEYS = {
    "cells", "nus", "M", "B", "levels", "kinds", "statistics", "seed",
    "dgp", "k0", "r", "criterion", "p_max", "p_fixed", "variant",
    "burn_in", "threads", "output", "format",
}


def _parse_statistic(entry: dict) -> StatisticId:
    kind = entry.get("kind")
    if kind == "mean_statistic":
        return StatisticId("mean_statistic", nu=float(entry.get("nu", 1.0)))
    if kind == "spiked_eigenvalue":
        return StatisticId(
            "spiked_eigenvalue",
            lag=int(entry.get("lag", 1)),
            index=int(entry.get("index", 1)),
            standardize=bool(entry.get("standardize", True)),
        )
    raise ConfigError(f"statistics: unknown kind {kind!r}")


def load_grid_config(path) -> tuple[ExperimentGrid, dict]:
    """Parse the JSON grid schema; returns (grid, extras) where extras
    carries the output path and format keys."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    unknown = set(raw) - _GRID_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("cells", "M", "B"):
        if key not in raw:
            raise ConfigError(f"missing required config key: {key}")
    try:
        cells = tuple((int(c[0]), int(c[1])) for c in raw["cells"])
        statistics = tuple(
            _parse_statistic(s)
            for s in raw.get("statistics", [{"kind": "mean_statistic"}])
        )
        grid = ExperimentGrid(
            cells=cells,
            nus=tuple(float(v) for v in raw.get("nus", [1.0])),
            M=int(raw["M"]),
            B=int(raw["B"]),
            levels=tuple(float(v) for v in raw.get("levels", [0.95])),
            kinds=tuple(raw.get("kinds", ["reverse_percentile"])),
            statistics=statistics,
            root_seed=int(raw.get("seed", 0)),
            dgp=raw.get("dgp", "two_factor_ar1"),
            k0=int(raw.get("k0", 2)),
            r=None if raw.get("r", 2) in (None, "auto") else int(raw.get("r", 2)),
            criterion=raw.get("criterion", "aic"),
            p_max=None if raw.get("p_max") is None else int(raw["p_max"]),
            p_fixed=None if raw.get("p_fixed") is None else int(raw["p_fixed"]),
            variant=raw.get("variant", "factor-only"),
            burn_in=None if raw.get("burn_in") is None else int(raw["burn_in"]),
            threads=int(raw.get("threads", 1)),
        )
    except (InvalidInputError, ValueError, TypeError, IndexError) as exc:
        raise ConfigError(str(exc)) from exc
    extras = {"output": raw.get("output"), "format": raw.get("format", "csv")}
    return grid, extras
