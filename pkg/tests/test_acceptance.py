"""End-to-end acceptance checks.

Each test exercises one headline property of the package at full tolerance
and prints a single ``[acceptance] ... PASS/FAIL`` line (run with ``-s`` to
see the lines for passing tests too).  Budgets are calibrated so the whole
file stays well inside the stated wall-clock limits.
"""

import json
import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import replace
from functools import lru_cache

import numpy as np

import oracles
from moreau_admm.cli import main as cli_main
from moreau_admm.diagnostics import consensus_residual, convergence_gate
from moreau_admm.dpsm import DpsmParams
from moreau_admm.experiments import (
    ExperimentConfig,
    averaged_mse_curve,
    dimension_sweep,
    gamma_grid_search,
    run_experiment,
)
from moreau_admm.graph import CommGraph, default_edge_prob, erdos_renyi
from moreau_admm.madm import MadmParams, init_state, run
from moreau_admm.problems import (
    PhaseRetrievalInstance,
    QuadraticConsensusInstance,
    abs_square_prox,
    moreau_envelope,
)

PAPER_MADM = dict(rho_lambda=20.0, rho_beta=1.0, eta=1.1)


def report(num, name, ok, details):
    line = f"[acceptance] C{num:02d} {name}: {'PASS' if ok else 'FAIL'} ({details})"
    print(line)
    return line


@contextmanager
def quiet_runtime_warnings():
    # marginal random graphs can trip the convergence gate's advisory
    # warning; the criteria below judge the produced curves, and genuine
    # trial failures still surface through the error records
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# -----------------------------------------------------------------------------
# C1: closed-form prox vs. 1-D search oracle
# -----------------------------------------------------------------------------


def test_c01_prox_value_matches_search_oracle():
    rng = np.random.default_rng(1234)
    total, chunk = 100_000, 10_000
    start = time.perf_counter()
    worst = 0.0
    for _ in range(total // chunk):
        dims = rng.integers(1, 7, size=chunk)
        bs = rng.normal(0.0, 2.0, size=chunk)
        gammas = 10.0 ** rng.uniform(-3.0, 1.0, size=chunk)
        b2 = np.empty(chunk)
        cs = np.empty(chunk)
        gss = np.empty(chunk)
        vals = np.empty(chunk)
        for i in range(chunk):
            d = int(dims[i])
            a = rng.standard_normal(d)
            w = rng.normal(0.0, 2.0, size=d)
            x = abs_square_prox(a, bs[i], w, gammas[i])
            s = float(a @ a)
            t = float(a @ x)
            b2[i] = bs[i] * bs[i]
            cs[i] = float(a @ w)
            gss[i] = gammas[i] * s
            # along-a reduction of the subproblem value; the orthogonal
            # part of x equals w's and contributes nothing
            vals[i] = abs(t * t - b2[i]) + (t - cs[i]) ** 2 / (2.0 * gss[i])
        ref = oracles.prox_value_oracle(b2, cs, gss)
        worst = max(worst, float(np.max(np.abs(vals - ref))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed <= 60.0
    line = report(1, "prox value vs search oracle", ok, f"max |phi gap| {worst:.3e}, {elapsed:.1f}s over {total} calls")
    assert ok, line


# -----------------------------------------------------------------------------
# C2: envelope gradient identity
# -----------------------------------------------------------------------------


def test_c02_envelope_gradient_identity():
    rng = np.random.default_rng(77)
    dim, points = 5, 1000
    worst = 0.0
    for family in ("quadratic", "magnitude"):
        for _ in range(points):
            if family == "quadratic":
                inst = QuadraticConsensusInstance(rng.standard_normal((1, dim)), curvature=1.3)
                gamma = 0.7
            else:
                inst = PhaseRetrievalInstance.generate(1, dim, rng)
                gamma = 0.4 / inst.objectives()[0].weak_convexity_bound
            obj = inst.objectives()[0]
            w = rng.normal(0.0, 2.0, size=dim)
            p = obj.prox(w, gamma)
            grad = (w - p) / gamma
            fd = oracles.central_difference_gradient(lambda v: moreau_envelope(obj, v, gamma), w)
            rel = float(np.linalg.norm(fd - grad)) / (1.0 + float(np.linalg.norm(grad)))
            worst = max(worst, rel)
    ok = worst <= 1e-5
    line = report(2, "envelope gradient identity", ok, f"worst relative error {worst:.3e} on {points} points/family")
    assert ok, line


# -----------------------------------------------------------------------------
# C3: parameter gate, exact decisions
# -----------------------------------------------------------------------------


def test_c03_gate_exact_decisions():
    g = CommGraph(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])  # min degree 3
    base = MadmParams(**PAPER_MADM, rho_f=10.0)
    coeff = (2.0 * math.sqrt(2.0) - 1.0) / 2.0

    good = convergence_gate(base, g)
    ok = good.overall
    ok = ok and good.cond_prox.margin == 20.0 * 3 - 10.0 / 2.0
    ok = ok and good.cond_eta.margin == 1.0 / 1.1 - (0.5 + 1.0 / 20.0)
    ok = ok and good.cond_ratio.margin == 20.0 - coeff * 1.0

    eta_bad = convergence_gate(replace(base, eta=1.9), g)
    ok = ok and not eta_bad.overall and not eta_bad.cond_eta.ok
    ok = ok and eta_bad.cond_prox.ok and eta_bad.cond_ratio.ok
    ok = ok and eta_bad.cond_eta.margin == 1.0 / 1.9 - (0.5 + 1.0 / 20.0)

    beta_bad = convergence_gate(replace(base, rho_beta=30.0), g)
    ok = ok and not beta_bad.overall and not beta_bad.cond_ratio.ok
    ok = ok and beta_bad.cond_ratio.margin == 20.0 - coeff * 30.0

    line = report(3, "parameter gate exact decisions", ok, "base passes; eta=1.9 and rho_beta=30 fail as hand-computed")
    assert ok, line


# -----------------------------------------------------------------------------
# C4 + C6 share one quadratic-consensus run
# -----------------------------------------------------------------------------


@lru_cache(maxsize=1)
def quadratic_run():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    g = erdos_renyi(10, default_edge_prob(10), rng)
    inst = QuadraticConsensusInstance(rng.standard_normal((10, 5)), curvature=1.0)
    params = MadmParams(rho_lambda=2.0, rho_beta=0.5, eta=1.0, max_iters=2000, tol=1e-12)
    x0 = rng.standard_normal(5)
    result = run(g, inst.objectives(), params, init_state(g, x0), x_true=inst.x_true)
    return g, inst, result, time.perf_counter() - start


def test_c04_quadratic_consensus_reaches_mean():
    g, inst, result, elapsed = quadratic_run()
    residual = consensus_residual(result.state, g)
    mean_err = float(np.linalg.norm(result.state.x.mean(axis=0) - inst.x_true))
    iters = len(result.trace)
    ok = residual <= 1e-8 and mean_err <= 1e-6 and iters <= 2000 and elapsed <= 5.0
    line = report(
        4,
        "quadratic consensus optimum",
        ok,
        f"residual {residual:.2e}, mean error {mean_err:.2e}, {iters} iters, {elapsed:.2f}s",
    )
    assert ok, line


def test_c06_merit_nonincreasing():
    _, _, result, _ = quadratic_run()
    assert result.gate.overall  # compliant parameters by construction
    psi = np.array([rec.psi for rec in result.trace])
    diffs = np.diff(psi)
    worst = float(diffs.max())
    ok = worst <= 1e-9
    line = report(6, "merit non-increasing", ok, f"max per-step increase {worst:.2e} over {len(psi)} iterations")
    assert ok, line


# -----------------------------------------------------------------------------
# C5: dual-change bound on a full-scale run
# -----------------------------------------------------------------------------


def test_c05_dual_change_bound_holds():
    cfg = ExperimentConfig(
        num_agents=50,
        dimension=10,
        num_trials=1,
        seed=0,
        madm=MadmParams(**PAPER_MADM, max_iters=500, tol=0.0),
    )
    with quiet_runtime_warnings():
        results = run_experiment(cfg, methods=("madm",))
    assert results[0].error is None
    trace = results[0].madm.trace
    checked = [rec for rec in trace if not math.isnan(rec.lemma2_rhs)]
    # the bound needs the previous auxiliary change, so the first recorded
    # iteration carries nan and every later one is checked
    assert len(checked) == len(trace) - 1
    worst = max(rec.lemma2_lhs - rec.lemma2_rhs * (1.0 + 1e-9) for rec in checked)
    ok = worst <= 0.0
    line = report(5, "dual-change bound", ok, f"{len(checked)} iterations checked, worst slack {worst:.2e}")
    assert ok, line


# -----------------------------------------------------------------------------
# C7: head-to-head at full scale
# -----------------------------------------------------------------------------


def first_crossing(curve, threshold=1e-6):
    below = np.nonzero(np.asarray(curve) <= threshold)[0]
    return int(below[0]) + 1 if below.size else None


def test_c07_madm_beats_baseline_at_scale():
    cfg = ExperimentConfig(
        num_agents=50,
        dimension=10,
        num_trials=10,
        seed=0,
        madm=MadmParams(**PAPER_MADM, max_iters=1000, tol=0.0),
        dpsm=DpsmParams(mu0=0.04, gamma_decay=0.99, max_iters=1000),
    )
    start = time.perf_counter()
    with quiet_runtime_warnings():
        results = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    assert all(r.error is None for r in results)
    madm_curve = averaged_mse_curve(results, "madm")
    dpsm_curve = averaged_mse_curve(results, "dpsm")
    madm_k = first_crossing(madm_curve)
    dpsm_k = first_crossing(dpsm_curve)
    ok = madm_k is not None and (dpsm_k is None or madm_k < dpsm_k)
    ok = ok and madm_curve[-1] <= dpsm_curve[-1]
    ok = ok and elapsed <= 600.0
    line = report(
        7,
        "faster than baseline at scale",
        ok,
        f"1e-6 crossings: madm {madm_k}, dpsm {dpsm_k}; finals {madm_curve[-1]:.2e} vs {dpsm_curve[-1]:.2e}; {elapsed:.0f}s",
    )
    assert ok, line


# -----------------------------------------------------------------------------
# C8: baseline step-decay sensitivity
# -----------------------------------------------------------------------------


def test_c08_baseline_step_decay_sensitivity():
    cfg = ExperimentConfig(
        num_agents=50,
        dimension=10,
        num_trials=6,
        seed=0,
        dpsm=DpsmParams(mu0=0.04, gamma_decay=0.99, max_iters=500),
    )
    with quiet_runtime_warnings():
        rows = gamma_grid_search(cfg)
    errs = np.array([err for _, err in rows])
    diffs = np.diff(errs)
    nonmonotone = bool((diffs < 0).any() and (diffs > 0).any())
    spread = float(errs.max() / errs.min())
    ok = np.all(np.isfinite(errs)) and nonmonotone and spread >= 10.0
    line = report(8, "step-decay sensitivity", ok, f"non-monotone={nonmonotone}, best/worst spread {spread:.1e}")
    assert ok, line


# -----------------------------------------------------------------------------
# C9: stability across problem dimension
# -----------------------------------------------------------------------------


def test_c09_dimension_sweep_stability():
    cfg = ExperimentConfig(
        num_agents=50,
        dimension=list(range(1, 21)),
        num_trials=3,
        seed=0,
        madm=MadmParams(**PAPER_MADM, max_iters=1000, tol=0.0),
        dpsm=DpsmParams(mu0=0.04, gamma_decay=0.99, max_iters=1000),
    )
    with quiet_runtime_warnings():
        rows = dimension_sweep(cfg)
    madm_vals = np.array([err for _, method, err in rows if method == "madm"])
    dpsm_vals = np.array([err for _, method, err in rows if method == "dpsm"])
    assert madm_vals.size == 20 and dpsm_vals.size == 20
    assert np.all(np.isfinite(madm_vals)) and np.all(np.isfinite(dpsm_vals))
    madm_ratio = float(madm_vals.max() / madm_vals.min())
    dpsm_ratio = float(dpsm_vals.max() / dpsm_vals.min())
    ok = madm_ratio < dpsm_ratio
    line = report(9, "dimension-sweep stability", ok, f"max/min final MSE: madm {madm_ratio:.2e} < dpsm {dpsm_ratio:.2e}")
    assert ok, line


# -----------------------------------------------------------------------------
# C10: byte-identical reruns, including concurrent trials
# -----------------------------------------------------------------------------


def test_c10_byte_identical_reruns(tmp_path):
    def config_for(out_dir, dimension=4):
        payload = {
            "num_agents": 14,
            "dimension": dimension,
            "edge_prob": 0.5,
            "num_trials": 4,
            "seed": 3,
            "madm": {"rho_lambda": 60.0, "rho_beta": 1.0, "eta": 1.1, "max_iters": 60, "tol": 0.0},
            "dpsm": {"mu0": 0.05, "gamma_decay": 0.95, "max_iters": 60},
            "gamma_grid": [0.9, 0.99],
            "out_dir": str(out_dir),
        }
        path = tmp_path / f"cfg_{out_dir.name}.json"
        path.write_text(json.dumps(payload))
        return path

    def snapshot(out_dir, pattern):
        return {p.name: p.read_bytes() for p in sorted(out_dir.glob(pattern))}

    run_dirs = [tmp_path / name for name in ("run_a", "run_b", "run_c")]
    for out_dir, jobs in zip(run_dirs, (1, 1, 2)):
        assert cli_main(["run", "--config", str(config_for(out_dir)), "--jobs", str(jobs)]) == 0
    snaps = [snapshot(d, "trace_*.csv") | snapshot(d, "gate.txt") for d in run_dirs]
    ok = len(snaps[0]) == 9 and snaps[0] == snaps[1] == snaps[2]

    grid_dirs = [tmp_path / name for name in ("grid_a", "grid_b")]
    for out_dir, jobs in zip(grid_dirs, (1, 2)):
        assert cli_main(["grid", "--config", str(config_for(out_dir)), "--jobs", str(jobs)]) == 0
    ok = ok and snapshot(grid_dirs[0], "summary_grid.csv") == snapshot(grid_dirs[1], "summary_grid.csv")

    sweep_dirs = [tmp_path / name for name in ("sweep_a", "sweep_b")]
    for out_dir, jobs in zip(sweep_dirs, (1, 2)):
        assert cli_main(["sweep", "--config", str(config_for(out_dir, dimension=[2, 3])), "--jobs", str(jobs)]) == 0
    ok = ok and snapshot(sweep_dirs[0], "summary_sweep.csv") == snapshot(sweep_dirs[1], "summary_sweep.csv")

    line = report(10, "byte-identical reruns", ok, "run/grid/sweep CSVs identical across reruns and jobs=2")
    assert ok, line
