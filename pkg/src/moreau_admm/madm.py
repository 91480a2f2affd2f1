"""Decentralized ADMM over edge variables with exact proximal primal steps.

Each undirected edge e = (i, j) carries an auxiliary consensus variable
``z_e``, a relaxation companion ``beta_e``, and one dual vector per
endpoint.  An iteration sweeps the blocks in the fixed order

    x  ->  z  ->  beta  ->  lambda

where the x block is a proximal (implicit subgradient) step on each local
objective, z has a closed form, beta is relaxed toward z with step
``eta``, and the duals take the usual ascent step.  The order is part of
the method: permuting it changes the fixed points of the merit function
and is guarded by a regression test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from time import perf_counter

import numpy as np

from . import diagnostics
from .graph import CommGraph, is_connected

__all__ = [
    "MadmParams",
    "MadmState",
    "StepRecord",
    "MadmRunResult",
    "MadmError",
    "init_state",
    "x_update",
    "z_update",
    "beta_update",
    "lambda_update",
    "step",
    "run",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class MadmParams:
    """Penalty and relaxation parameters.

    ``rho_f`` is the weak-convexity bound used by the convergence gate
    (``(rho / 2)`` convention); ``None`` means "resolve from the
    objectives' own bounds at run time".
    """

    rho_lambda: float
    rho_beta: float
    eta: float
    rho_f: float | None = None
    max_iters: int = 5000
    tol: float = 1e-10

    def __post_init__(self) -> None:
        if self.rho_lambda <= 0.0:
            raise ValueError(f"rho_lambda must be positive, got {self.rho_lambda}")
        if self.rho_beta <= 0.0:
            raise ValueError(f"rho_beta must be positive, got {self.rho_beta}")
        if not (0.0 < self.eta < 2.0):
            raise ValueError(f"eta must lie in (0, 2), got {self.eta}")
        if self.rho_f is not None and self.rho_f < 0.0:
            raise ValueError(f"rho_f must be nonnegative, got {self.rho_f}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if self.tol < 0.0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")


@dataclass
class MadmState:
    """Full iterate: agent estimates ``x`` (L, N); per-edge ``z``,
    ``beta``, and the two anchored duals ``lam_lo`` / ``lam_hi`` (E, N),
    where ``lam_lo[e]`` belongs to the lower-indexed endpoint of edge e;
    iteration counter ``k``."""

    x: np.ndarray
    z: np.ndarray
    beta: np.ndarray
    lam_lo: np.ndarray
    lam_hi: np.ndarray
    k: int = 0

    def copy(self) -> "MadmState":
        return MadmState(
            self.x.copy(), self.z.copy(), self.beta.copy(), self.lam_lo.copy(), self.lam_hi.copy(), self.k
        )

    def all_finite(self) -> bool:
        return bool(
            np.isfinite(self.x).all()
            and np.isfinite(self.z).all()
            and np.isfinite(self.beta).all()
            and np.isfinite(self.lam_lo).all()
            and np.isfinite(self.lam_hi).all()
        )


@dataclass(frozen=True)
class StepRecord:
    """Frobenius norms of the block changes in one iteration, plus the new
    merit value.

    ``dlambda`` stacks both anchored dual blocks.  ``dlambda_sum`` is the
    change of the per-edge summed dual ``lam_lo + lam_hi`` — the multiplier
    the auxiliary update actually controls (it equals
    ``rho_beta (z - beta_prev)`` after every sweep), and the quantity the
    dual-change bound constrains.
    """

    dx: float
    dz: float
    dbeta: float
    dlambda: float
    dlambda_sum: float
    psi: float


@dataclass
class MadmRunResult:
    state: MadmState
    trace: list
    gate: diagnostics.GateReport


class MadmError(RuntimeError):
    """Solver failure; carries the failing iteration and the trace so far."""

    def __init__(self, message: str, iteration: int, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace if trace is not None else []


def init_state(g: CommGraph, z0: np.ndarray) -> MadmState:
    """Starting state from per-edge values ``z0``: each agent takes the
    mean of its incident edges, ``beta`` copies ``z``, duals start at
    zero.  A single vector is broadcast to every edge."""
    z0 = np.asarray(z0, dtype=float)
    if z0.ndim == 1:
        z0 = np.tile(z0, (g.num_edges, 1))
    if z0.shape != (g.num_edges, z0.shape[1]):
        raise ValueError(f"z0 must be (num_edges, dim), got {z0.shape}")
    if np.any(g.degrees == 0):
        raise ValueError("every agent needs at least one neighbor")
    x = np.empty((g.num_agents, z0.shape[1]))
    for v in range(g.num_agents):
        x[v] = z0[g.incident_edges[v]].mean(axis=0)
    return MadmState(
        x=x,
        z=z0.copy(),
        beta=z0.copy(),
        lam_lo=np.zeros_like(z0),
        lam_hi=np.zeros_like(z0),
        k=0,
    )


def x_update(state: MadmState, g: CommGraph, objectives, params: MadmParams) -> np.ndarray:
    """Proximal step per agent: averaging the dual-shifted incident edge
    variables gives ``u_i``, and

        x_i = prox_{f_i}(u_i; 1 / (rho_lambda * |N_i|)).

    Agents are processed in ascending order and each agent's incident
    edges in canonical order, so accumulation is deterministic.
    """
    rl = params.rho_lambda
    x_new = np.empty_like(state.x)
    for v in range(g.num_agents):
        eids = g.incident_edges[v]
        if eids.size == 0:
            raise ValueError(f"agent {v} has no neighbors")
        lam = np.where(g.incident_is_lower[v][:, None], state.lam_lo[eids], state.lam_hi[eids])
        u = (state.z[eids] - lam / rl).mean(axis=0)
        x_new[v] = objectives[v].prox(u, 1.0 / (rl * eids.size))
    return x_new


def z_update(state: MadmState, g: CommGraph, params: MadmParams) -> np.ndarray:
    """Closed-form minimizer of the per-edge quadratic subproblem given the
    fresh ``x`` and the previous ``beta`` and duals:

        z_e = (rho_lambda (x_i + x_j) + rho_beta beta_e + lam_i + lam_j)
              / (2 rho_lambda + rho_beta).
    """
    rl, rb = params.rho_lambda, params.rho_beta
    num = rl * (state.x[g.edge_i] + state.x[g.edge_j]) + rb * state.beta + state.lam_lo + state.lam_hi
    return num / (2.0 * rl + rb)


def beta_update(state: MadmState, params: MadmParams) -> np.ndarray:
    """Relaxation toward the fresh ``z``: ``beta - eta (beta - z)``."""
    return state.beta - params.eta * (state.beta - state.z)


def lambda_update(state: MadmState, g: CommGraph, params: MadmParams):
    """Dual ascent on both endpoints' consensus gaps against the fresh
    ``x`` and ``z``."""
    rl = params.rho_lambda
    lam_lo = state.lam_lo + rl * (state.x[g.edge_i] - state.z)
    lam_hi = state.lam_hi + rl * (state.x[g.edge_j] - state.z)
    return lam_lo, lam_hi


def step(state: MadmState, g: CommGraph, objectives, params: MadmParams):
    """One full sweep x -> z -> beta -> lambda.

    Returns the new state and a :class:`StepRecord`; the input state is
    left untouched.
    """
    x_new = x_update(state, g, objectives, params)
    cur = MadmState(x=x_new, z=state.z, beta=state.beta, lam_lo=state.lam_lo, lam_hi=state.lam_hi, k=state.k)
    z_new = z_update(cur, g, params)
    cur.z = z_new
    beta_new = beta_update(cur, params)
    lam_lo_new, lam_hi_new = lambda_update(cur, g, params)

    rec = StepRecord(
        dx=float(np.linalg.norm(x_new - state.x)),
        dz=float(np.linalg.norm(z_new - state.z)),
        dbeta=float(np.linalg.norm(beta_new - state.beta)),
        dlambda=float(
            np.sqrt(
                np.sum((lam_lo_new - state.lam_lo) ** 2) + np.sum((lam_hi_new - state.lam_hi) ** 2)
            )
        ),
        dlambda_sum=float(
            np.linalg.norm((lam_lo_new + lam_hi_new) - (state.lam_lo + state.lam_hi))
        ),
        psi=float("nan"),
    )
    new_state = MadmState(x=x_new, z=z_new, beta=beta_new, lam_lo=lam_lo_new, lam_hi=lam_hi_new, k=state.k + 1)
    rec = replace(rec, psi=diagnostics.eval_psi(new_state, g, objectives, params))
    return new_state, rec


def resolve_rho_f(params: MadmParams, objectives) -> MadmParams:
    """Fill an unset ``rho_f`` with the largest of the objectives'
    weak-convexity bounds."""
    if params.rho_f is not None:
        return params
    bound = max((float(o.weak_convexity_bound) for o in objectives), default=0.0)
    return replace(params, rho_f=bound)


def run(
    g: CommGraph,
    objectives,
    params: MadmParams,
    init: MadmState,
    x_true: np.ndarray | None = None,
    callback=None,
    ignore_gate: bool = False,
) -> MadmRunResult:
    """Iterate :func:`step` until ``max(consensus residual, ||dx||_F)``
    drops to ``params.tol`` or the iteration budget runs out.

    The convergence gate is always evaluated and recorded in the result;
    a failing gate emits a warning unless ``ignore_gate`` acknowledges it.
    One trace row is appended per iteration; ``callback(state, row)``, if
    given, runs after each.  Non-finite iterates raise :class:`MadmError`
    carrying the trace up to the last good iteration.
    """
    if not is_connected(g):
        raise ValueError("solver requires a connected graph")
    if len(objectives) != g.num_agents:
        raise ValueError(f"{len(objectives)} objectives for {g.num_agents} agents")
    params = resolve_rho_f(params, objectives)
    gate = diagnostics.convergence_gate(params, g)
    if not gate.overall and not ignore_gate:
        warnings.warn(
            "penalty parameters fail the convergence conditions:\n" + gate.summary(),
            RuntimeWarning,
            stacklevel=2,
        )

    state = init.copy()
    trace: list[diagnostics.IterationTrace] = []
    prev_rec: StepRecord | None = None
    for _ in range(params.max_iters):
        t0 = perf_counter()
        state, rec = step(state, g, objectives, params)
        if not state.all_finite():
            raise MadmError(f"non-finite iterate at iteration {state.k}", state.k, trace)
        res = diagnostics.consensus_residual(state, g)
        aug = diagnostics.eval_aug_lagrangian(state, g, objectives, params.rho_lambda)
        if x_true is not None:
            err = diagnostics.mse(state.x, x_true)
            err_raw = diagnostics.mse(state.x, x_true, aligned=False)
        else:
            err = err_raw = float("nan")
        if prev_rec is not None:
            lhs, rhs, _ = diagnostics.dual_change_monitor([prev_rec, rec], params.rho_beta)
        else:
            lhs, rhs = rec.dlambda_sum**2, float("nan")
        row = diagnostics.IterationTrace(
            k=state.k,
            mse=err,
            mse_raw=err_raw,
            psi=rec.psi,
            aug_lagrangian=aug,
            consensus_residual=res,
            dx=rec.dx,
            dz=rec.dz,
            dbeta=rec.dbeta,
            dlambda=rec.dlambda,
            lemma2_lhs=lhs,
            lemma2_rhs=rhs,
            wall_time=perf_counter() - t0,
        )
        trace.append(row)
        if callback is not None:
            callback(state, row)
        if max(res, rec.dx) <= params.tol:
            break
        prev_rec = rec
    return MadmRunResult(state=state, trace=trace, gate=gate)


# -----------------------------------------------------------------------------
# checkpoints
# -----------------------------------------------------------------------------


def _write_block(fh, name: str, arr: np.ndarray) -> None:
    fh.write(name + "\n")
    for row in arr:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_checkpoint(state: MadmState, path) -> None:
    """Write the full state as decimal text.  ``repr`` round-trips every
    float64 exactly, so a resumed run continues bit-identically."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"iteration {state.k}\n")
        fh.write(f"agents {state.x.shape[0]} dim {state.x.shape[1]} edges {state.z.shape[0]}\n")
        _write_block(fh, "x", state.x)
        _write_block(fh, "z", state.z)
        _write_block(fh, "beta", state.beta)
        _write_block(fh, "lambda_lo", state.lam_lo)
        _write_block(fh, "lambda_hi", state.lam_hi)


def load_checkpoint(path) -> MadmState:
    """Read a file written by :func:`save_checkpoint`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 2 or not lines[0].startswith("iteration "):
        raise ValueError(f"{path}: not a checkpoint file")
    k = int(lines[0].split()[1])
    head = lines[1].split()
    if len(head) != 6 or head[0] != "agents" or head[2] != "dim" or head[4] != "edges":
        raise ValueError(f"{path}: malformed shape line {lines[1]!r}")
    L, N, E = int(head[1]), int(head[3]), int(head[5])

    pos = 2
    blocks = {}
    for name, rows in (("x", L), ("z", E), ("beta", E), ("lambda_lo", E), ("lambda_hi", E)):
        if pos >= len(lines) or lines[pos] != name:
            raise ValueError(f"{path}: expected block {name!r} at line {pos + 1}")
        pos += 1
        data = []
        for r in range(rows):
            vals = lines[pos + r].split()
            if len(vals) != N:
                raise ValueError(f"{path}: block {name!r} row {r} has {len(vals)} values, expected {N}")
            data.append([float(v) for v in vals])
        pos += rows
        blocks[name] = np.array(data, dtype=float).reshape(rows, N)
    return MadmState(
        x=blocks["x"],
        z=blocks["z"],
        beta=blocks["beta"],
        lam_lo=blocks["lambda_lo"],
        lam_hi=blocks["lambda_hi"],
        k=k,
    )
