"""Merit functions, convergence-condition checks, and trace records.

Everything here is read-only: no function mutates solver state.  The trace
CSV schema is fixed so downstream tooling can rely on the exact header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .graph import CommGraph

__all__ = [
    "IterationTrace",
    "TRACE_FIELDS",
    "GateCondition",
    "GateReport",
    "eval_aug_lagrangian",
    "eval_psi",
    "convergence_gate",
    "mse",
    "consensus_residual",
    "dual_change_monitor",
    "write_trace_csv",
    "read_trace_csv",
]

RATIO_COEFF = (2.0 * math.sqrt(2.0) - 1.0) / 2.0


@dataclass
class IterationTrace:
    """One row of per-iteration diagnostics.

    ``lemma2_lhs`` / ``lemma2_rhs`` are the two sides of the dual-change
    bound (squared dual step versus penalty-scaled auxiliary steps); the
    column names are fixed by the trace schema.  Fields that a method does
    not define (e.g. consensus residual for the subgradient baseline) are
    NaN.
    """

    k: int
    mse: float
    mse_raw: float
    psi: float
    aug_lagrangian: float
    consensus_residual: float
    dx: float
    dz: float
    dbeta: float
    dlambda: float
    lemma2_lhs: float
    lemma2_rhs: float
    wall_time: float


TRACE_FIELDS = tuple(f.name for f in fields(IterationTrace))


@dataclass(frozen=True)
class GateCondition:
    ok: bool
    margin: float


@dataclass(frozen=True)
class GateReport:
    """Outcome of the sufficient convergence conditions on the penalties."""

    cond_prox: GateCondition
    cond_eta: GateCondition
    cond_ratio: GateCondition

    @property
    def overall(self) -> bool:
        return self.cond_prox.ok and self.cond_eta.ok and self.cond_ratio.ok

    def summary(self) -> str:
        def line(label, rule, cond):
            state = "PASS" if cond.ok else "FAIL"
            return f"{label:6s} {rule:42s} margin={cond.margin:.6g}  {state}"

        return "\n".join(
            [
                f"overall: {'PASS' if self.overall else 'FAIL'}",
                line("prox", "rho_lambda * min_degree > rho_f", self.cond_prox),
                line("eta", "1/eta >= 1/2 + rho_beta / rho_lambda", self.cond_eta),
                line("ratio", f"rho_lambda >= {RATIO_COEFF:.6f} * rho_beta", self.cond_ratio),
            ]
        )


def convergence_gate(params, g: CommGraph, rho_f_convention: str = "half") -> GateReport:
    """Check the three sufficient conditions for convergence to a
    stationary point:

      * ``rho_lambda * |N_i| > rho_f`` for every agent (checked at the
        minimum degree), which makes each primal prox subproblem strongly
        convex;
      * ``1 / eta >= 1/2 + rho_beta / rho_lambda``;
      * ``rho_lambda >= (2 sqrt(2) - 1) / 2 * rho_beta``.

    The first condition is stated for a modulus defined via
    ``f + rho ||x||^2``.  Bounds in this package use the
    ``f + (rho / 2) ||x||^2`` convention, so with the default
    ``rho_f_convention="half"`` the supplied ``params.rho_f`` is halved
    before the comparison; pass ``"full"`` if it is already in the stated
    convention.  Strictness follows the inequalities: the first is strict,
    the other two admit equality (zero margin passes).
    """
    if rho_f_convention not in ("half", "full"):
        raise ValueError(f"unknown rho_f_convention {rho_f_convention!r}")
    if params.rho_f is None:
        raise ValueError("rho_f is unresolved; supply a weak-convexity bound")
    rho_f = params.rho_f / 2.0 if rho_f_convention == "half" else params.rho_f
    min_deg = int(g.degrees.min())
    m_prox = params.rho_lambda * min_deg - rho_f
    m_eta = 1.0 / params.eta - (0.5 + params.rho_beta / params.rho_lambda)
    m_ratio = params.rho_lambda - RATIO_COEFF * params.rho_beta
    return GateReport(
        cond_prox=GateCondition(ok=m_prox > 0.0, margin=m_prox),
        cond_eta=GateCondition(ok=m_eta >= 0.0, margin=m_eta),
        cond_ratio=GateCondition(ok=m_ratio >= 0.0, margin=m_ratio),
    )


def eval_aug_lagrangian(state, g: CommGraph, objectives, rho_lambda: float) -> float:
    """Augmented Lagrangian of the edge-consensus formulation: the sum of
    local objectives plus, per edge, the inner products of both anchored
    duals with their consensus gaps and the quadratic penalties
    ``(rho_lambda / 2) ||x_i - z_e||^2`` for both endpoints."""
    total = 0.0
    for i, obj in enumerate(objectives):
        total += float(obj.evaluate(state.x[i]))
    di = state.x[g.edge_i] - state.z
    dj = state.x[g.edge_j] - state.z
    total += float(np.sum(state.lam_lo * di)) + float(np.sum(state.lam_hi * dj))
    total += 0.5 * rho_lambda * (float(np.sum(di * di)) + float(np.sum(dj * dj)))
    return total


def eval_psi(state, g: CommGraph, objectives, params) -> float:
    """Merit function: augmented Lagrangian plus
    ``(rho_beta / 2) ||Z - beta||_F^2``."""
    d = state.z - state.beta
    return eval_aug_lagrangian(state, g, objectives, params.rho_lambda) + 0.5 * params.rho_beta * float(
        np.sum(d * d)
    )


def mse(x_all: np.ndarray, x_true: np.ndarray, aligned: bool = True) -> float:
    """Mean squared estimation error over agents.

    With ``aligned=True`` (default) a single global sign is chosen to
    minimize the error, matching the sign ambiguity of magnitude-only
    measurements; ``aligned=False`` scores against ``+x_true`` as is.
    """
    x_all = np.asarray(x_all, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    plus = float(np.mean(np.sum((x_all - x_true) ** 2, axis=1)))
    if not aligned:
        return plus
    minus = float(np.mean(np.sum((x_all + x_true) ** 2, axis=1)))
    return min(plus, minus)


def consensus_residual(state, g: CommGraph) -> float:
    """Worst-case disagreement between an edge variable and either
    endpoint: ``max_e max(||x_i - z_e||, ||x_j - z_e||)``."""
    di = np.linalg.norm(state.x[g.edge_i] - state.z, axis=1)
    dj = np.linalg.norm(state.x[g.edge_j] - state.z, axis=1)
    return float(max(di.max(), dj.max()))


def dual_change_monitor(window, rho_beta: float, rel_slack: float = 1e-9):
    """Check the dual-change bound over the last two step records:

        lhs_k <= rho_beta^2 (||dz_k||^2 + ||dbeta_{k-1}||^2)

    where ``lhs_k`` is the squared change of the per-edge summed dual
    (``dlambda_sum``), the multiplier the auxiliary update controls: after
    every sweep it equals ``rho_beta (z - beta_prev)`` exactly, which is
    what makes this bound hold along trajectories.  The stacked per-endpoint
    dual change (``dlambda``) is not constrained this way and routinely
    exceeds the right-hand side during transients.

    ``window`` must hold at least two records with ``dz``, ``dbeta`` and
    ``dlambda_sum`` attributes, ordered oldest to newest.  Returns
    ``(lhs, rhs, ok)`` where ``ok`` allows relative slack for round-off.
    """
    if len(window) < 2:
        raise ValueError("dual_change_monitor needs two consecutive step records")
    prev, cur = window[-2], window[-1]
    lhs = cur.dlambda_sum**2
    rhs = rho_beta**2 * (cur.dz**2 + prev.dbeta**2)
    return lhs, rhs, bool(lhs <= rhs * (1.0 + rel_slack) + 1e-300)


# -----------------------------------------------------------------------------
# trace CSV
# -----------------------------------------------------------------------------


def _fmt_cell(v) -> str:
    # repr of a Python float round-trips and is byte-stable
    return repr(float(v))


def write_trace_csv(trace, path, include_wall_time: bool = False) -> None:
    """Write trace rows under the fixed header.

    ``wall_time`` is zeroed unless ``include_wall_time`` is set: emitted
    files are byte-identical across reruns by contract, and measured times
    are not.  In-memory records keep the real measurements either way.
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(TRACE_FIELDS) + "\n")
        for rec in trace:
            cells = [str(int(rec.k))]
            for name in TRACE_FIELDS[1:-1]:
                cells.append(_fmt_cell(getattr(rec, name)))
            cells.append(_fmt_cell(rec.wall_time if include_wall_time else 0.0))
            fh.write(",".join(cells) + "\n")


def read_trace_csv(path) -> list[IterationTrace]:
    """Read a file written by :func:`write_trace_csv`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != ",".join(TRACE_FIELDS):
        raise ValueError(f"{path}: missing or unexpected trace header")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(TRACE_FIELDS):
            raise ValueError(f"{path}: row has {len(cells)} cells, expected {len(TRACE_FIELDS)}")
        out.append(IterationTrace(int(cells[0]), *[float(c) for c in cells[1:]]))
    return out
