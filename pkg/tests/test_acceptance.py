"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The Monte Carlo
criteria run at desk scale and share their heavy experiment runs through
module-scoped fixtures.
"""

import json

import numpy as np
import pytest

from arsieve.bootstrap import (
    center_residuals,
    generate_factor_path,
    resample_innovations,
    resolve_burn_in,
)
from arsieve.cli import main as cli_main
from arsieve.factors import (
    fit_factor_model,
    sym_eigendecomposition,
)
from arsieve.inference import (
    StatisticId,
    interval_score,
    normal_interval,
    reverse_percentile_interval,
    unreversed_percentile_interval,
)
from arsieve.panel import FactorSeries
from arsieve.rng import stable_mix
from arsieve.simlab import (
    THREE_FACTOR_COEFF,
    DgpSpec,
    ExperimentGrid,
    emit_table,
    run_coverage_experiment,
    simulate_two_factor,
)
from arsieve.varsieve import select_order, yule_walker_fit


def report(num: int, desc: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {desc} ({detail})"
    print(line, flush=True)
    assert ok, line


# -- shared desk-scale runs -------------------------------------------------


@pytest.fixture(scope="module")
def table1_cell():
    """nu=1, T=200, N=50, M=300, B=399; all three interval kinds."""
    grid = ExperimentGrid(
        cells=((200, 50),),
        nus=(1.0,),
        M=300,
        B=399,
        levels=(0.95,),
        kinds=("reverse_percentile", "normal", "unreversed_percentile"),
        statistics=(
            StatisticId("mean_statistic"),
            StatisticId("spiked_eigenvalue", lag=1, index=1),
        ),
        root_seed=20240601,
    )
    rows = run_coverage_experiment(grid)
    return {(row.statistic, row.kind): row for row in rows}


@pytest.fixture(scope="module")
def weak_factor_cells():
    """T=200, N=500 at nu=0.2 and nu=1; M=200, B=199; reverse percentile."""
    out = {}
    for nu in (0.2, 1.0):
        grid = ExperimentGrid(
            cells=((200, 500),),
            nus=(nu,),
            M=200,
            B=199,
            levels=(0.95,),
            kinds=("reverse_percentile",),
            statistics=(StatisticId("mean_statistic"),),
            root_seed=555,
        )
        out[nu] = run_coverage_experiment(grid)[0]
    return out


def _bootstrap_conditional_run(seed: int, N: int, T: int, B: int = 500):
    """Mean bootstrap lag-1 factor autocovariance and top eigenvalue."""
    spec = DgpSpec(
        "two_factor_ar1", N=N, T=T, nu=1.0, seed=stable_mix(33, seed, N, T)
    )
    panel, _ = simulate_two_factor(spec)
    fit = fit_factor_model(panel, k0=2, r=2)
    selection = select_order(fit.factors, "aic")
    model = yule_walker_fit(fit.factors, selection.chosen_p)
    pool = center_residuals(model.residuals)
    burn = resolve_burn_in(model, None)
    root = stable_mix(44, seed, N, T)
    gamma_sum = np.zeros((2, 2))
    lam_sum = 0.0
    for b in range(B):
        innov = resample_innovations(pool, T + burn, stable_mix(root, b))
        path = generate_factor_path(model, innov, T, burn).values
        centered = path - path.mean(axis=1, keepdims=True)
        g = centered[:, 1:] @ centered[:, :-1].T / (T - 1)
        gamma_sum += g
        lam_sum += np.linalg.eigvalsh(g @ g.T)[-1]
    return gamma_sum / B, N * N * lam_sum / B


@pytest.fixture(scope="module")
def consistency_sweep():
    """20 seeds over (N,T) in {(50,200),(100,500),(200,1000)}, B=500."""
    cells = [(50, 200), (100, 500), (200, 1000)]
    truth_gamma = np.diag([2.0 / 3.0, 1.0 / 3.0])  # phi sigma^2/(1-phi^2) per factor
    dists = np.empty((20, 3))
    deltas = np.empty(20)
    for seed in range(20):
        for j, (N, T) in enumerate(cells):
            gbar, delta = _bootstrap_conditional_run(seed, N, T)
            dists[seed, j] = np.linalg.norm(gbar - truth_gamma, 2)
            if (N, T) == (200, 1000):
                deltas[seed] = delta
    return dists, deltas


# -- criteria ---------------------------------------------------------------


def test_criterion_1_table1_reverse_percentile(table1_cell):
    row = table1_cell[("mean", "reverse_percentile")]
    cov_ok = abs(row.coverage - 0.941) <= 0.04
    width_ok = abs(row.avg_width / 8.369 - 1.0) <= 0.15
    report(
        1,
        "reverse-percentile 95% mean statistic at (T=200, N=50)",
        cov_ok and width_ok,
        f"coverage={row.coverage:.3f} (target 0.941 +/- 0.04), "
        f"width={row.avg_width:.3f} (target 8.369 +/- 15%), "
        f"score={row.avg_score:.3f}, M={row.M}, failures={row.failures}",
    )


def test_criterion_2_table1_normal_parity(table1_cell):
    normal = table1_cell[("mean", "normal")]
    reverse = table1_cell[("mean", "reverse_percentile")]
    cov_ok = abs(normal.coverage - 0.944) <= 0.04
    parity_ok = abs(normal.coverage - reverse.coverage) < 0.03
    report(
        2,
        "normal-interval coverage parity at (T=200, N=50)",
        cov_ok and parity_ok,
        f"normal={normal.coverage:.3f} (target 0.944 +/- 0.04), "
        f"reverse={reverse.coverage:.3f}, gap={abs(normal.coverage - reverse.coverage):.3f}",
    )


def test_criterion_3_weak_factor_over_coverage(weak_factor_cells):
    weak = weak_factor_cells[0.2]
    strong = weak_factor_cells[1.0]
    ok = weak.coverage >= 0.97 and weak.coverage > strong.coverage
    report(
        3,
        "weak-factor over-coverage at (T=200, N=500)",
        ok,
        f"nu=0.2 coverage={weak.coverage:.3f} (>= 0.97), "
        f"nu=1.0 coverage={strong.coverage:.3f}",
    )


def test_criterion_4_eigenvalue_interval_skewness(table1_cell):
    unrev = table1_cell[("eig1_lag1", "unreversed_percentile")]
    rev = table1_cell[("eig1_lag1", "reverse_percentile")]
    gap = unrev.coverage - rev.coverage
    report(
        4,
        "unreversed beats reverse percentile for the top eigenvalue",
        gap >= 0.05,
        f"unreversed={unrev.coverage:.3f}, reverse={rev.coverage:.3f}, gap={gap:.3f} (>= 0.05)",
    )


def test_criterion_5_conditional_autocov_consistency(consistency_sweep):
    dists, _ = consistency_sweep
    decreasing = int(np.sum(dists[:, 0] > dists[:, 2]))
    means = dists.mean(axis=0)
    chain_ok = means[0] > means[1] > means[2]  # seed-averaged strict chain
    report(
        5,
        "bootstrap autocovariance error decreases from (50,200) to (200,1000)",
        decreasing >= 16 and chain_ok,
        f"{decreasing}/20 seeds decreasing; mean dist "
        f"{means[0]:.4f} -> {means[1]:.4f} -> {means[2]:.4f}",
    )


def test_criterion_6_eigenvalue_consistency(consistency_sweep):
    _, deltas = consistency_sweep
    truth = (2.0 / 3.0 * 200) ** 2  # (phi sigma^2/(1-phi^2))^2 at N=200, nu=1
    rel = abs(deltas.mean() - truth) / truth
    report(
        6,
        "bootstrap top eigenvalue within 15% of the analytic truth at (200,1000)",
        rel < 0.15,
        f"relative error of the 20-seed average = {rel:.4f} (< 0.15)",
    )


def _simulate_ar_paths(coeffs, T, seed, burn=300):
    rng = np.random.default_rng(seed)
    coeffs = [np.asarray(a, dtype=float) for a in coeffs]
    r = coeffs[0].shape[0]
    total = T + burn
    innov = rng.normal(size=(r, total))
    f = np.zeros((r, total))
    for t in range(total):
        acc = innov[:, t].copy()
        for l in range(1, min(len(coeffs), t) + 1):
            acc += coeffs[l - 1] @ f[:, t - l]
        f[:, t] = acc
    return FactorSeries(f[:, burn:])


def test_criterion_7_yule_walker_recovery():
    hits = 0
    for seed in range(100):
        series = _simulate_ar_paths([np.array([[0.5]])], 5000, 7000 + seed)
        model = yule_walker_fit(series, 1)
        hits += abs(model.coeffs[0][0, 0] - 0.5) < 0.05
    series = _simulate_ar_paths([THREE_FACTOR_COEFF], 20000, 4242)
    model = yule_walker_fit(series, 1)
    max_err = np.abs(model.coeffs[0] - THREE_FACTOR_COEFF).max()
    ok = hits >= 95 and max_err < 0.05
    report(
        7,
        "Yule-Walker recovers AR(1) and the 3x3 VAR(1) matrix",
        ok,
        f"scalar hits={hits}/100 (>= 95), VAR entrywise error={max_err:.4f} (< 0.05)",
    )


def test_criterion_8_factor_count_accuracy():
    hits = 0
    for seed in range(200):
        spec = DgpSpec("two_factor_ar1", N=100, T=500, nu=1.0, seed=stable_mix(88, seed))
        panel, _ = simulate_two_factor(spec)
        fit = fit_factor_model(panel, k0=2, r=None, R=100 // 3)
        hits += fit.r == 2
    report(
        8,
        "ratio estimator selects r=2 at (nu=1, T=500, N=100)",
        hits >= 190,
        f"r_hat=2 in {hits}/200 seeds (>= 190)",
    )


def test_criterion_9_exact_formula_suite():
    score_ok = (
        abs(interval_score(0.0, 1.0, 0.5, 0.05) - 1.0) < 1e-12
        and abs(interval_score(0.0, 1.0, 1.5, 0.10) - 11.0) < 1e-12
        and abs(interval_score(2.0, 4.0, 1.0, 0.20) - 12.0) < 1e-12
    )
    samples = np.arange(1.0, 101.0)
    rev = reverse_percentile_interval(50.5, samples, 0.10)
    rev_ok = abs(rev.lower - 5.95) < 1e-8 and abs(rev.upper - 95.05) < 1e-8
    unrev = unreversed_percentile_interval(samples, 0.10)
    unrev_ok = abs(unrev.lower - 5.95) < 1e-8 and abs(unrev.upper - 95.05) < 1e-8
    z = np.random.default_rng(0).normal(size=4001)
    z = (z - z.mean()) / z.std(ddof=1)
    norm = normal_interval(0.0, z, 0.05)
    norm_ok = (
        abs(norm.lower + 1.959963984540054) < 1e-8
        and abs(norm.upper - 1.959963984540054) < 1e-8
    )

    worst = 0.0
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        raw = rng.normal(size=(n, n))
        s = (raw + raw.T) / 2.0
        spec = sym_eigendecomposition(s)
        resid = s @ spec.eigenvectors - spec.eigenvectors * spec.eigenvalues
        bound = 1e-8 * (np.linalg.norm(s, 2) + 1.0)
        worst = max(worst, np.linalg.norm(resid, axis=0).max() / bound)
    eig_ok = worst <= 1.0
    report(
        9,
        "closed-form interval/score arithmetic and eigen residuals",
        score_ok and rev_ok and unrev_ok and norm_ok and eig_ok,
        f"score_exact={score_ok}, reverse={rev_ok}, unreversed={unrev_ok}, "
        f"normal={norm_ok}, eig residual worst x bound={worst:.3e}",
    )


def test_criterion_10_determinism_suite(tmp_path):
    # (a) simulate twice: byte-identical panel and truth
    sim_args = ["simulate", "--N", "10", "--T", "60", "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(sim_args + ["--out", str(a)]) == 0
    assert cli_main(sim_args + ["--out", str(b)]) == 0
    sim_ok = a.read_bytes() == b.read_bytes()

    # (b) apply twice: byte-identical interval files
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    apply_args = [
        "apply", "--input", str(a), "--B", "40", "--seed", "3",
        "--r", "2", "--criterion", "fixed", "--p", "1",
    ]
    assert cli_main(apply_args + ["--out", str(out1)]) == 0
    assert cli_main(apply_args + ["--out", str(out2)]) == 0
    apply_ok = all(
        (out1 / name).read_bytes() == (out2 / name).read_bytes()
        for name in (
            "mean_intervals.csv",
            "autocov_lag1_estimate.csv",
            "autocov_lag1_lower_level90.csv",
            "autocov_lag1_upper_level90.csv",
        )
    )

    # (c) coverage harness output independent of thread count, twice
    cfg = tmp_path / "grid.json"
    cfg.write_text(
        json.dumps(
            {
                "cells": [[60, 10]],
                "M": 3,
                "B": 25,
                "levels": [0.9],
                "kinds": ["reverse_percentile"],
                "statistics": [{"kind": "mean_statistic"}],
                "seed": 12,
                "criterion": "fixed",
                "p_fixed": 1,
            }
        )
    )
    t1, t2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    assert cli_main(["coverage", "--config", str(cfg), "--out", str(t1),
                     "--threads", "1"]) == 0
    assert cli_main(["coverage", "--config", str(cfg), "--out", str(t2),
                     "--threads", "2"]) == 0
    coverage_ok = t1.read_bytes() == t2.read_bytes()

    report(
        10,
        "byte-identical outputs under repetition and thread-count changes",
        sim_ok and apply_ok and coverage_ok,
        f"simulate={sim_ok}, apply={apply_ok}, coverage_threads={coverage_ok}",
    )
