"""Experiment harness: seeded trials, step-size grid search, dimension sweep.

A trial is fully determined by its seed: the communication graph, the
ground-truth signal, the measurements, and the power-iteration start are
drawn from one generator in that fixed order.  Trials are therefore
independent of execution order and safe to run concurrently; results are
always gathered in trial-index order so emitted files are byte-identical
regardless of scheduling.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics, dpsm, madm
from .graph import CommGraph, default_edge_prob, erdos_renyi
from .problems import PhaseRetrievalInstance

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "TrialResult",
    "trial_seed",
    "spectral_init",
    "run_trial",
    "run_experiment",
    "gamma_grid_search",
    "dimension_sweep",
    "load_config",
    "default_gamma_grid",
    "write_grid_csv",
    "write_sweep_csv",
]

_MASK64 = (1 << 64) - 1


def _splitmix64(v: int) -> int:
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    z = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Fixed 64-bit mixer: splitmix64 applied to the master seed, then
    re-mixed with the trial index.  Documented so archived results stay
    reproducible; do not change."""
    return _splitmix64(_splitmix64(master_seed & _MASK64) + trial_index)


def default_gamma_grid() -> list[float]:
    return [0.90, 0.925, 0.95, 0.96, 0.97, 0.98, 0.99, 0.995, 0.999]


class ConfigError(Exception):
    """Invalid experiment configuration (bad file, key, or value)."""


@dataclass
class ExperimentConfig:
    """Everything a run needs; JSON configs mirror these field names.

    ``dimension`` may be a single int or a list (the sweep grid).
    ``edge_prob=None`` resolves to ``min(1, 2 ln(L) / L)``.  ``rho_f=None``
    inside ``madm`` resolves per trial to the largest local
    weak-convexity bound.
    """

    num_agents: int = 50
    dimension: int | list = 10
    edge_prob: float | None = None
    num_trials: int = 50
    seed: int = 0
    madm: madm.MadmParams = field(
        default_factory=lambda: madm.MadmParams(
            rho_lambda=20.0, rho_beta=1.0, eta=1.1, max_iters=500, tol=0.0
        )
    )
    dpsm: dpsm.DpsmParams = field(
        default_factory=lambda: dpsm.DpsmParams(mu0=0.04, gamma_decay=0.99, max_iters=500)
    )
    gamma_grid: list = field(default_factory=default_gamma_grid)
    out_dir: str = "results"

    def resolved_edge_prob(self) -> float:
        if self.edge_prob is not None:
            return self.edge_prob
        return default_edge_prob(self.num_agents)

    def dimension_list(self) -> list[int]:
        if isinstance(self.dimension, int):
            return [self.dimension]
        return list(self.dimension)

    def single_dimension(self) -> int:
        dims = self.dimension_list()
        if len(dims) != 1:
            raise ConfigError("this command needs a single dimension, not a sweep list")
        return dims[0]


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    madm: madm.MadmRunResult | None = None
    dpsm: dpsm.DpsmRunResult | None = None
    error: str | None = None


# -----------------------------------------------------------------------------
# config files
# -----------------------------------------------------------------------------

_TOP_KEYS = {
    "num_agents",
    "dimension",
    "edge_prob",
    "num_trials",
    "seed",
    "madm",
    "dpsm",
    "gamma_grid",
    "out_dir",
}
_MADM_KEYS = {"rho_lambda", "rho_beta", "eta", "rho_f", "max_iters", "tol"}
_DPSM_KEYS = {"mu0", "gamma_decay", "max_iters", "projection_radius", "tol"}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where} (allowed: {sorted(allowed)})")


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config, rejecting unknown keys.

    Missing keys fall back to the defaults of :class:`ExperimentConfig`;
    ``"none"`` and ``null`` both mean "unset" for optional values.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")

    def opt(value):
        return None if value is None or value == "none" else value

    base = ExperimentConfig()
    try:
        madm_raw = raw.get("madm", {})
        if not isinstance(madm_raw, dict):
            raise ConfigError("'madm' must be an object")
        _check_keys(madm_raw, _MADM_KEYS, "'madm'")
        madm_params = replace(
            base.madm,
            **{k: (opt(v) if k == "rho_f" else v) for k, v in madm_raw.items()},
        )

        dpsm_raw = raw.get("dpsm", {})
        if not isinstance(dpsm_raw, dict):
            raise ConfigError("'dpsm' must be an object")
        _check_keys(dpsm_raw, _DPSM_KEYS, "'dpsm'")
        dpsm_params = replace(
            base.dpsm,
            **{k: (opt(v) if k == "projection_radius" else v) for k, v in dpsm_raw.items()},
        )

        cfg = ExperimentConfig(
            num_agents=int(raw.get("num_agents", base.num_agents)),
            dimension=raw.get("dimension", base.dimension),
            edge_prob=opt(raw.get("edge_prob", base.edge_prob)),
            num_trials=int(raw.get("num_trials", base.num_trials)),
            seed=int(raw.get("seed", base.seed)),
            madm=madm_params,
            dpsm=dpsm_params,
            gamma_grid=list(raw.get("gamma_grid", base.gamma_grid)),
            out_dir=str(raw.get("out_dir", base.out_dir)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if cfg.num_agents < 2:
        raise ConfigError("num_agents must be at least 2")
    if cfg.num_trials < 1:
        raise ConfigError("num_trials must be positive")
    dims = cfg.dimension_list()
    if not dims or any((not isinstance(d, int)) or d < 1 for d in dims):
        raise ConfigError("dimension must be a positive int or a list of positive ints")
    if cfg.edge_prob is not None and not (0.0 < cfg.edge_prob <= 1.0):
        raise ConfigError("edge_prob must lie in (0, 1]")
    if any((not isinstance(gv, (int, float))) or not (0.0 < gv < 1.0) for gv in cfg.gamma_grid):
        raise ConfigError("gamma_grid values must lie in (0, 1)")
    return cfg


# -----------------------------------------------------------------------------
# spectral initialization
# -----------------------------------------------------------------------------


def spectral_init(inst: PhaseRetrievalInstance, rng=None, num_iters: int = 200) -> np.ndarray:
    """Leading eigenvector of ``(1/L) sum_i b_i^2 a_i a_i^T`` by power
    iteration (fixed count, seeded start), scaled to the magnitude
    estimate ``sqrt(mean_i b_i^2)``.

    The sign of the output is whatever the power iteration lands on; the
    signal is identifiable only up to sign anyway.
    """
    b2 = inst.observations**2
    if not np.any(b2 > 0.0):
        raise ValueError("all observations are zero; spectral initialization is undefined")
    A = inst.measurements
    Y = (A.T * b2) @ A / inst.num_agents
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(inst.dim)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise RuntimeError("degenerate start vector")
    v /= nrm
    for _ in range(num_iters):
        w = Y @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise RuntimeError("power iteration hit the null space of the data matrix")
        v = w / nrm
    return v * np.sqrt(np.mean(b2))


# -----------------------------------------------------------------------------
# trials
# -----------------------------------------------------------------------------


def _make_trial_data(config: ExperimentConfig, seed: int, dim: int):
    # Draw order is part of the trial contract: graph, signal/measurements,
    # power-iteration start.
    rng = np.random.default_rng(seed)
    g = erdos_renyi(config.num_agents, config.resolved_edge_prob(), rng)
    inst = PhaseRetrievalInstance.generate(config.num_agents, dim, rng)
    x0 = spectral_init(inst, rng)
    return g, inst, x0


def run_trial(
    config: ExperimentConfig,
    seed: int,
    methods=("madm", "dpsm"),
    trial_index: int = 0,
    dim: int | None = None,
) -> TrialResult:
    """Run one seeded trial: generate the data, then run the requested
    methods from the same spectral initialization."""
    dim = config.single_dimension() if dim is None else dim
    g, inst, x0 = _make_trial_data(config, seed, dim)
    objectives = inst.objectives()
    result = TrialResult(trial_index=trial_index, seed=seed)
    if "madm" in methods:
        init = madm.init_state(g, x0)
        result.madm = madm.run(g, objectives, config.madm, init, x_true=inst.x_true)
    if "dpsm" in methods:
        result.dpsm = dpsm.dpsm_run(g, objectives, config.dpsm, x0, x_true=inst.x_true)
    return result


def _trial_job(args):
    config, seed, methods, idx, dim = args
    return run_trial(config, seed, methods=methods, trial_index=idx, dim=dim)


def _run_trials(config: ExperimentConfig, methods, jobs: int, dim: int | None = None) -> list[TrialResult]:
    """All trials for one configuration, gathered in trial-index order.
    A failed trial is kept as an error record and excluded from averages."""
    args = [
        (config, trial_seed(config.seed, t), tuple(methods), t, dim) for t in range(config.num_trials)
    ]
    results: list[TrialResult] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_trial_job, a) for a in args]
            for t, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - trial isolation
                    warnings.warn(f"trial {t} failed: {exc}", RuntimeWarning, stacklevel=2)
                    results.append(TrialResult(trial_index=t, seed=args[t][1], error=str(exc)))
    else:
        for t, a in enumerate(args):
            try:
                results.append(_trial_job(a))
            except Exception as exc:  # noqa: BLE001 - trial isolation
                warnings.warn(f"trial {t} failed: {exc}", RuntimeWarning, stacklevel=2)
                results.append(TrialResult(trial_index=t, seed=a[1], error=str(exc)))
    return results


def run_experiment(config: ExperimentConfig, methods=("madm", "dpsm"), jobs: int = 1) -> list[TrialResult]:
    """num_trials seeded trials at the configured single dimension."""
    return _run_trials(config, methods, jobs, dim=config.single_dimension())


def check_config(config: ExperimentConfig) -> diagnostics.GateReport:
    """Evaluate the convergence conditions on trial 0 of this
    configuration (the gate depends on graph degrees and data-derived
    weak-convexity bounds)."""
    seed = trial_seed(config.seed, 0)
    g, inst, _ = _make_trial_data(config, seed, config.single_dimension())
    params = madm.resolve_rho_f(config.madm, inst.objectives())
    return diagnostics.convergence_gate(params, g)


def _final_mse(trace) -> float:
    return trace[-1].mse if trace else float("nan")


def average_final_mse(results: list[TrialResult], method: str) -> float:
    """Arithmetic mean of per-trial final MSE over the successful trials."""
    finals = []
    for r in results:
        run_result = getattr(r, method)
        if r.error is None and run_result is not None:
            finals.append(_final_mse(run_result.trace))
    if not finals:
        return float("nan")
    return float(np.mean(finals))


def averaged_mse_curve(results: list[TrialResult], method: str) -> np.ndarray:
    """Per-iteration MSE averaged over successful trials; shorter traces
    (early stops) are padded with their final value."""
    traces = [
        getattr(r, method).trace
        for r in results
        if r.error is None and getattr(r, method) is not None and getattr(r, method).trace
    ]
    if not traces:
        return np.empty(0)
    length = max(len(tr) for tr in traces)
    rows = np.empty((len(traces), length))
    for i, tr in enumerate(traces):
        vals = [rec.mse for rec in tr]
        vals.extend([vals[-1]] * (length - len(vals)))
        rows[i] = vals
    return rows.mean(axis=0)


# -----------------------------------------------------------------------------
# grid search and sweep
# -----------------------------------------------------------------------------


def gamma_grid_search(config: ExperimentConfig, jobs: int = 1) -> list[tuple[float, float]]:
    """Average the baseline's final MSE over trials for every step-decay
    value in the grid.  Trial data depends only on the trial seed, so each
    decay value sees identical instances."""
    rows = []
    for gv in config.gamma_grid:
        cfg = replace(config, dpsm=replace(config.dpsm, gamma_decay=float(gv)))
        results = _run_trials(cfg, ("dpsm",), jobs, dim=config.single_dimension())
        rows.append((float(gv), average_final_mse(results, "dpsm")))
    return rows


def dimension_sweep(config: ExperimentConfig, jobs: int = 1) -> list[tuple[int, str, float]]:
    """Average final MSE for both methods at every dimension in the sweep
    list, holding all solver parameters fixed across dimensions."""
    rows = []
    for dim in config.dimension_list():
        results = _run_trials(config, ("madm", "dpsm"), jobs, dim=dim)
        rows.append((dim, "madm", average_final_mse(results, "madm")))
        rows.append((dim, "dpsm", average_final_mse(results, "dpsm")))
    return rows


def write_grid_csv(rows, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("gamma,mse\n")
        for gv, err in rows:
            fh.write(f"{repr(float(gv))},{repr(float(err))}\n")


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("N,method,mse\n")
        for dim, method, err in rows:
            fh.write(f"{int(dim)},{method},{repr(float(err))}\n")
