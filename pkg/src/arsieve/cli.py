"""Command-line front end.

Subcommands: ``simulate`` (write a DGP panel plus truth sidecar),
``estimate`` (fit the factor model and sieve, report JSON), ``apply``
(full bootstrap inference on a CSV panel: per-coordinate mean intervals
and the lag-k autocovariance surface), and ``coverage`` (Monte Carlo
experiment from a JSON grid config).

Every error prints a single machine-parsable line ``error:<stage>: ...``
to stderr and exits nonzero.  All commands are deterministic given their
flags, including --seed; --threads (or ARSIEVE_THREADS) only changes the
schedule, never the output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import simlab
from .bootstrap import BootstrapConfig
from .errors import ArsieveError, ConfigError, CsvParseError
from .factors import fit_factor_model
from .inference import INTERVAL_KINDS, build_interval
from .panel import PanelSeries, read_panel_csv, write_panel_csv
from .varsieve import model_to_dict, select_order, stability_check, yule_walker_fit

_DGP_ALIASES = {
    "two-factor": "two_factor_ar1",
    "two_factor_ar1": "two_factor_ar1",
    "three-factor": "three_factor_var1",
    "three_factor_var1": "three_factor_var1",
}


class _StageError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        self.message = message
        super().__init__(message)


def _threads_default() -> int:
    env = os.environ.get("ARSIEVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arsieve",
        description="Factor-based AR-sieve bootstrap for high-dimensional time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a simulated panel CSV + truth JSON")
    sim.add_argument("--dgp", default="two-factor", choices=sorted(_DGP_ALIASES))
    sim.add_argument("--N", type=int, required=True)
    sim.add_argument("--T", type=int, required=True)
    sim.add_argument("--nu", type=float, default=1.0)
    sim.add_argument("--ar-coeff", type=float, default=0.5)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="panel.csv")
    sim.add_argument("--truth-out", default=None, help="default: <out>.truth.json")

    est = sub.add_parser("estimate", help="fit factor model + VAR sieve, report JSON")
    est.add_argument("--input", required=True)
    est.add_argument("--transpose", action="store_true", help="input is time-major")
    est.add_argument("--k0", type=int, default=2)
    est.add_argument("--r", default="auto", help="number of factors or 'auto'")
    est.add_argument("--criterion", default="aic",
                     choices=["aic", "sc", "fixed", "rate-rule"])
    est.add_argument("--p", type=int, default=None, help="order for --criterion fixed")
    est.add_argument("--p-max", type=int, default=None)
    est.add_argument("--include-loadings", action="store_true",
                     help="embed the N x r loading matrix in the report")
    est.add_argument("--out", default=None, help="default: stdout")

    app = sub.add_parser("apply", help="bootstrap intervals for a CSV panel")
    app.add_argument("--input", required=True)
    app.add_argument("--out", required=True, help="output directory")
    app.add_argument("--transpose", action="store_true")
    app.add_argument("--k0", type=int, default=2)
    app.add_argument("--r", default="auto")
    app.add_argument("--criterion", default="aic",
                     choices=["aic", "sc", "fixed", "rate-rule"])
    app.add_argument("--p", type=int, default=None)
    app.add_argument("--p-max", type=int, default=None)
    app.add_argument("--B", type=int, default=999)
    app.add_argument("--seed", type=int, default=0)
    app.add_argument("--burn-in", type=int, default=None)
    app.add_argument("--levels", type=float, nargs="+", default=[0.90])
    app.add_argument("--kind", default=None, choices=list(INTERVAL_KINDS),
                     help="default: reverse_percentile for means, "
                          "unreversed_percentile for the autocovariance surface")
    app.add_argument("--lag", type=int, default=1)
    app.add_argument("--nu", type=float, default=1.0)
    app.add_argument("--variant", default="factor-only",
                     choices=["factor-only", "noise-augmented"])
    app.add_argument("--threads", type=int, default=_threads_default())

    cov = sub.add_parser("coverage", help="Monte Carlo coverage experiment")
    cov.add_argument("--config", required=True)
    cov.add_argument("--out", default=None, help="override config output path")
    cov.add_argument("--format", default=None, choices=["csv", "json", "markdown"])
    cov.add_argument("--threads", type=int, default=None)
    return parser


# -- simulate ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    if not 0.0 < args.nu <= 1.0:
        raise _StageError("simulate", f"--nu must lie in (0, 1], got {args.nu}")
    spec = simlab.DgpSpec(
        kind=_DGP_ALIASES[args.dgp],
        N=args.N,
        T=args.T,
        nu=args.nu,
        ar_coeff=args.ar_coeff,
        seed=args.seed,
    )
    try:
        panel, truth = simlab.simulate(spec)
    except ArsieveError as exc:
        raise _StageError("simulate", str(exc)) from exc
    out = Path(args.out)
    truth_out = Path(args.truth_out) if args.truth_out else out.with_suffix(
        out.suffix + ".truth.json"
    )
    try:
        write_panel_csv(out, panel)
        payload = {
            "dgp": spec.kind,
            "N": spec.N,
            "T": spec.T,
            "nu": spec.nu,
            "ar_coeff": spec.ar_coeff,
            "seed": spec.seed,
            "theta_mean": truth.theta_mean,
            "coeff_matrices": [a.tolist() for a in truth.coeff_matrices],
            "innovation_cov": truth.innovation_cov.tolist(),
            "sigma0": truth.sigma0.tolist(),
            "loadings": truth.qo.tolist(),
            "delta1_standardized_lag1": truth.delta_standardized(1, 1, spec.T),
            "delta2_standardized_lag1": truth.delta_standardized(1, 2, spec.T),
        }
        _write_json(truth_out, payload)
    except OSError as exc:
        raise _StageError("io", f"cannot write output: {exc}") from exc
    print(f"wrote {out} ({panel.n_series}x{panel.n_periods}) and {truth_out}")
    return 0


# -- estimate ---------------------------------------------------------------


def _load_panel(args) -> PanelSeries:
    try:
        return read_panel_csv(args.input, transpose=args.transpose)
    except FileNotFoundError as exc:
        raise _StageError("io", f"cannot read {args.input}: {exc}") from exc
    except CsvParseError as exc:
        raise _StageError("parse", str(exc)) from exc


def _resolve_rank(args, panel: PanelSeries) -> tuple[int | None, list[str]]:
    warnings = []
    if args.r == "auto":
        if panel.n_series == 1:
            warnings.append("N=1 panel: forcing r=1, no rank selection possible")
            return 1, warnings
        return None, warnings
    try:
        r = int(args.r)
    except ValueError:
        raise _StageError("config", f"--r must be an integer or 'auto', got {args.r!r}")
    if r < 1 or r > panel.n_series:
        raise _StageError("config", f"--r must lie in [1, N={panel.n_series}]")
    return r, warnings


def _fit_pipeline(args, panel: PanelSeries):
    r, warnings = _resolve_rank(args, panel)
    try:
        fit = fit_factor_model(panel, k0=args.k0, r=r)
        selection = select_order(
            fit.factors, args.criterion, p_max=args.p_max, p_fixed=args.p
        )
        model = yule_walker_fit(fit.factors, selection.chosen_p)
    except ArsieveError as exc:
        raise _StageError("fit", str(exc)) from exc
    return fit, selection, model, warnings


def cmd_estimate(args) -> int:
    panel = _load_panel(args)
    fit, selection, model, warnings = _fit_pipeline(args, panel)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    head = min(panel.n_series, 20)
    report = {
        "N": panel.n_series,
        "T": panel.n_periods,
        "k0": fit.k0,
        "r": fit.r,
        "r_selection": "ratio" if args.r == "auto" else "fixed",
        "ratio_path": fit.ratio_path.tolist(),
        "eigenvalues_head": fit.spectrum.eigenvalues[:head].tolist(),
        "order": {
            "criterion": selection.criterion,
            "p_max": selection.p_max,
            "chosen_p": selection.chosen_p,
            "scores": selection.scores.tolist(),
        },
        "coefficient_norms": [float(np.linalg.norm(a)) for a in model.coeffs],
        "spectral_radius": model.spectral_radius,
        "stability": stability_check(model),
        "model": model_to_dict(model),
    }
    if args.include_loadings:
        report["loadings"] = fit.loadings.Q.tolist()
    if args.out:
        _write_json(Path(args.out), report)
        print(f"wrote {args.out}")
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


# -- apply ------------------------------------------------------------------


def _apply_degenerate(args, panel: PanelSeries, outdir: Path) -> int:
    """Constant panel: every interval is zero-width at the projection."""
    print(
        "warning: degenerate data (panel is constant over time); "
        "factor space is unidentified, emitting zero-width intervals",
        file=sys.stderr,
    )
    fit = fit_factor_model(panel, k0=args.k0, r=1)
    est_mean = fit.loadings.Q @ fit.factors.values.mean(axis=1)
    mean_kind = args.kind or "reverse_percentile"
    lines = ["index,level,kind,estimate,lower,upper"]
    for level in args.levels:
        for i in range(panel.n_series):
            v = repr(float(est_mean[i]))
            lines.append(f"{i},{level},{mean_kind},{v},{v},{v}")
    (outdir / "mean_intervals.csv").write_text("\n".join(lines) + "\n")
    zero = np.zeros((panel.n_series, panel.n_series))
    _write_matrix_csv(outdir / f"autocov_lag{args.lag}_estimate.csv", zero)
    for level in args.levels:
        tag = f"{round(level * 100):g}"
        for side in ("lower", "upper"):
            _write_matrix_csv(
                outdir / f"autocov_lag{args.lag}_{side}_level{tag}.csv", zero
            )
    _write_json(
        outdir / "apply_summary.json",
        {"degenerate": True, "N": panel.n_series, "T": panel.n_periods},
    )
    return 0


def cmd_apply(args) -> int:
    panel = _load_panel(args)
    outdir = Path(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _StageError("io", f"cannot create {outdir}: {exc}") from exc
    for level in args.levels:
        if not 0.0 < level < 1.0:
            raise _StageError("config", f"level {level} outside (0, 1)")
    if args.B < 20:
        raise _StageError("config", "--B must be >= 20 for quantile intervals")
    if np.ptp(panel.values, axis=1).max() == 0.0:
        return _apply_degenerate(args, panel, outdir)

    fit, selection, model, warnings = _fit_pipeline(args, panel)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.lag > panel.n_periods - 2:
        raise _StageError("config", f"--lag {args.lag} too large for T={panel.n_periods}")
    config = BootstrapConfig(
        B=args.B,
        root_seed=args.seed,
        burn_in=args.burn_in,
        variant=args.variant,
        statistics=(),
        threads=1,
    )
    try:
        reps = _apply_bootstrap(panel, fit, model, config, args)
    except ArsieveError as exc:
        raise _StageError("bootstrap", str(exc)) from exc

    mean_kind = args.kind or "reverse_percentile"
    surface_kind = args.kind or "unreversed_percentile"
    _write_apply_outputs(args, panel, fit, model, selection, reps, outdir,
                         mean_kind, surface_kind)
    print(f"wrote bootstrap outputs to {outdir}")
    return 0


def _apply_bootstrap(panel, fit, model, config, args):
    """Collect the mean vector and autocovariance surface per replicate.

    Reuses the replicate machinery of run_bootstrap but keeps the
    vector/matrix outputs needed for the per-coordinate intervals.
    """
    from .bootstrap import (
        _factor_lag_cov,
        center_residuals,
        generate_factor_path,
        resample_innovations,
        resolve_burn_in,
    )
    from .rng import stable_mix

    pool = center_residuals(model.residuals)
    burn = resolve_burn_in(model, config.burn_in)
    q = fit.loadings.Q
    n = panel.n_series
    means = np.empty((config.B, n))
    surfaces = np.empty((config.B, n, n))
    for b in range(config.B):
        sub_seed = stable_mix(config.root_seed, b)
        innov = resample_innovations(
            pool, panel.n_periods + burn, stable_mix(sub_seed, 0)
        )
        path = generate_factor_path(model, innov, panel.n_periods, burn)
        means[b] = q @ path.values.mean(axis=1)
        # for y* = Q f* the panel autocovariance is exactly Q G_f(lag) Q'
        surfaces[b] = q @ _factor_lag_cov(path.values, args.lag) @ q.T
    return means, surfaces


def _write_apply_outputs(args, panel, fit, model, selection, reps, outdir,
                         mean_kind, surface_kind):
    from .panel import sample_autocov

    means, surfaces = reps
    q = fit.loadings.Q
    est_mean = q @ fit.factors.values.mean(axis=1)
    lines = ["index,level,kind,estimate,lower,upper"]
    for level in args.levels:
        alpha = 1.0 - level
        for i in range(panel.n_series):
            iv = build_interval(mean_kind, float(est_mean[i]), means[:, i], alpha)
            lines.append(
                f"{i},{level},{mean_kind},{est_mean[i]!r},{iv.lower!r},{iv.upper!r}"
            )
    (outdir / "mean_intervals.csv").write_text("\n".join(lines) + "\n")

    est_surface = sample_autocov(panel, args.lag).matrix
    _write_matrix_csv(outdir / f"autocov_lag{args.lag}_estimate.csv", est_surface)
    n = panel.n_series
    for level in args.levels:
        alpha = 1.0 - level
        lower = np.empty((n, n))
        upper = np.empty((n, n))
        flat = surfaces.reshape(surfaces.shape[0], -1)
        for idx in range(n * n):
            iv = build_interval(
                surface_kind, float(est_surface.flat[idx]), flat[:, idx], alpha
            )
            lower.flat[idx] = iv.lower
            upper.flat[idx] = iv.upper
        tag = f"{round(level * 100):g}"
        _write_matrix_csv(outdir / f"autocov_lag{args.lag}_lower_level{tag}.csv", lower)
        _write_matrix_csv(outdir / f"autocov_lag{args.lag}_upper_level{tag}.csv", upper)

    _write_json(
        outdir / "apply_summary.json",
        {
            "N": panel.n_series,
            "T": panel.n_periods,
            "k0": fit.k0,
            "r": fit.r,
            "chosen_p": selection.chosen_p,
            "spectral_radius": model.spectral_radius,
            "B": args.B,
            "seed": args.seed,
            "levels": list(args.levels),
            "lag": args.lag,
            "mean_interval_kind": mean_kind,
            "surface_interval_kind": surface_kind,
            "variant": args.variant,
        },
    )


# -- coverage ---------------------------------------------------------------


def cmd_coverage(args) -> int:
    try:
        grid, extras = simlab.load_grid_config(args.config)
    except FileNotFoundError as exc:
        raise _StageError("io", f"cannot read {args.config}: {exc}") from exc
    except ConfigError as exc:
        raise _StageError("config", str(exc)) from exc
    if args.threads is not None:
        grid = dataclasses.replace(grid, threads=args.threads)
    fmt = args.format or extras.get("format") or "csv"
    out_path = args.out or extras.get("output")
    cells = len(grid.cells) * len(grid.nus)
    print(
        f"coverage: {cells} cell(s), M={grid.M}, B={grid.B}, seed={grid.root_seed}",
        file=sys.stderr,
    )
    rows = simlab.run_coverage_experiment(grid)
    if not rows:
        raise _StageError("coverage", "every replication failed")
    table = simlab.emit_table(rows, fmt)
    if out_path:
        Path(out_path).write_text(table)
        print(f"wrote {out_path}")
    else:
        sys.stdout.write(table)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "estimate": cmd_estimate,
        "apply": cmd_apply,
        "coverage": cmd_coverage,
    }
    try:
        return handlers[args.command](args)
    except _StageError as exc:
        print(f"error:{exc.stage}: {exc.message}", file=sys.stderr)
        return 2
    except ArsieveError as exc:
        print(f"error:{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
