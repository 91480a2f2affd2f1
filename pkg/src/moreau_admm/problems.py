"""Local objective bundles for decentralized minimization.

Two problem families are provided.  Robust phase retrieval gives each agent
a single magnitude-only measurement

    f_i(x) = | <a_i, x>^2 - b_i^2 |,

which is non-smooth and weakly convex but admits an exact proximal point by
reduction to one dimension along ``a_i``.  Quadratic consensus gives each
agent ``f_i(x) = (curvature / 2) * ||x - c_i||^2`` with known minimizer at
the mean of the centers; it exists to validate solvers against closed-form
answers.

Weak-convexity moduli throughout this package use the ``(rho / 2)``
convention: ``rho`` is the smallest value making ``f + (rho / 2) ||.||^2``
convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "LocalObjective",
    "zero_objective",
    "PhaseRetrievalInstance",
    "pr_objective",
    "pr_subgradient",
    "pr_prox",
    "pr_weak_convexity_bound",
    "abs_square_prox",
    "moreau_envelope",
    "QuadraticConsensusInstance",
    "quadratic_prox",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class LocalObjective:
    """Capability bundle for one agent's objective.

    Attributes:
        evaluate: ``x -> f(x)``.
        subgradient: ``x -> g`` with ``g`` a subgradient of f at x.
        prox: ``(w, gamma) -> argmin_x f(x) + ||x - w||^2 / (2 gamma)``,
            exact, with a deterministic tie rule where the minimizer is
            not unique.
        weak_convexity_bound: smallest known rho >= 0 such that
            ``f + (rho / 2) ||.||^2`` is convex.
    """

    evaluate: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    prox: Callable[[np.ndarray, float], np.ndarray]
    weak_convexity_bound: float


def zero_objective() -> LocalObjective:
    """The identically-zero objective; its prox is the identity."""
    return LocalObjective(
        evaluate=lambda x: 0.0,
        subgradient=lambda x: np.zeros_like(x, dtype=float),
        prox=lambda w, gamma: np.array(w, dtype=float, copy=True),
        weak_convexity_bound=0.0,
    )


# -----------------------------------------------------------------------------
# robust phase retrieval
# -----------------------------------------------------------------------------


class PhaseRetrievalInstance:
    """Per-agent magnitude measurements of a common signal.

    Agent i holds one sensing vector ``a_i`` (row i of ``measurements``)
    and one observation ``b_i`` with ``b_i = <a_i, x_true>`` (noiseless;
    validated at construction).  The signal is identifiable only up to a
    global sign.
    """

    def __init__(self, measurements: np.ndarray, observations: np.ndarray, x_true: np.ndarray) -> None:
        A = np.asarray(measurements, dtype=float)
        b = np.asarray(observations, dtype=float)
        x = np.asarray(x_true, dtype=float)
        if A.ndim != 2:
            raise ValueError("measurements must be a (num_agents, dim) array")
        if b.shape != (A.shape[0],):
            raise ValueError(
                f"observations shape {b.shape} does not match {A.shape[0]} agents"
            )
        if x.shape != (A.shape[1],):
            raise ValueError(f"x_true shape {x.shape} does not match dim {A.shape[1]}")
        resid = np.abs(A @ x - b)
        scale = 1.0 + np.abs(b)
        if np.any(resid > 1e-8 * scale):
            raise ValueError("observations are inconsistent with <a_i, x_true>")
        self.measurements = A
        self.observations = b
        self.x_true = x

    @classmethod
    def generate(cls, num_agents: int, dim: int, rng) -> "PhaseRetrievalInstance":
        """Draw ``a_i`` and ``x_true`` with i.i.d. standard normal entries
        and set ``b_i = <a_i, x_true>``."""
        rng = np.random.default_rng(rng)
        x_true = rng.standard_normal(dim)
        A = rng.standard_normal((num_agents, dim))
        return cls(A, A @ x_true, x_true)

    @property
    def num_agents(self) -> int:
        return self.measurements.shape[0]

    @property
    def dim(self) -> int:
        return self.measurements.shape[1]

    def objectives(self) -> list[LocalObjective]:
        """One :class:`LocalObjective` per agent."""
        return [self._objective(i) for i in range(self.num_agents)]

    def _objective(self, agent: int) -> LocalObjective:
        a = self.measurements[agent]
        b = float(self.observations[agent])
        s = float(a @ a)
        if s == 0.0:
            raise ValueError(f"agent {agent} has a zero sensing vector")
        return LocalObjective(
            evaluate=lambda x, a=a, b=b: float(abs((a @ x) ** 2 - b * b)),
            subgradient=lambda x, a=a, b=b: _abs_square_subgradient(a, b, x),
            prox=lambda w, gamma, a=a, b=b: abs_square_prox(a, b, w, gamma),
            weak_convexity_bound=2.0 * s,
        )


def pr_objective(inst: PhaseRetrievalInstance, agent: int, x: np.ndarray) -> float:
    """``| <a_i, x>^2 - b_i^2 |`` for agent i."""
    a = inst.measurements[agent]
    b = inst.observations[agent]
    return float(abs((a @ x) ** 2 - b * b))


def _abs_square_subgradient(a: np.ndarray, b: float, x: np.ndarray) -> np.ndarray:
    t = float(a @ x)
    r = t * t - b * b
    # sign(0) taken as 0: the zero vector is a valid subgradient at a kink.
    return (2.0 * t * np.sign(r)) * a


def pr_subgradient(inst: PhaseRetrievalInstance, agent: int, x: np.ndarray) -> np.ndarray:
    """A subgradient ``2 <a_i, x> sign(<a_i, x>^2 - b_i^2) a_i``."""
    return _abs_square_subgradient(inst.measurements[agent], float(inst.observations[agent]), x)


def pr_weak_convexity_bound(inst: PhaseRetrievalInstance, agent: int) -> float:
    """Weak-convexity modulus ``2 ||a_i||^2`` (the curvature of
    ``-<a_i, x>^2`` is what must be cancelled)."""
    a = inst.measurements[agent]
    return 2.0 * float(a @ a)


def abs_square_prox(a: np.ndarray, b: float, w: np.ndarray, gamma: float) -> np.ndarray:
    """Exact proximal point of ``x -> | <a, x>^2 - b^2 |`` at ``w``.

    The subproblem separates along ``a``: with ``s = ||a||^2``,
    ``c = <a, w>`` and ``t = <a, x>`` it reduces to minimizing

        phi(t) = | t^2 - b^2 | + (t - c)^2 / (2 gamma s)

    over the scalar t, after which ``x = w + ((t - c) / s) a``.  The global
    minimizer of phi lies among the stationary points of the two quadratic
    pieces and the breakpoints ``+-|b|``:

      * ``t = c / (1 + 2 gamma s)`` when it lands in the outer piece
        ``t^2 >= b^2`` (always convex);
      * ``t = c / (1 - 2 gamma s)`` when ``1 - 2 gamma s > 0`` (inner piece
        convex) and it lands in ``t^2 <= b^2``;
      * ``t = +|b|`` and ``t = -|b|``.

    Exact ties are broken toward the candidate whose sign matches ``c``,
    and toward ``+|b|`` when ``c == 0``; this pins down the minimizer in
    the non-convex regime ``2 gamma s >= 1`` where it need not be unique.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    if a.shape != w.shape:
        raise ValueError(f"shape mismatch: a {a.shape} vs w {w.shape}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    s = float(a @ a)
    if s == 0.0:
        raise ValueError("sensing vector a must be nonzero")
    c = float(a @ w)
    b2 = float(b) * float(b)
    gs = gamma * s

    def phi(t: float) -> float:
        return abs(t * t - b2) + (t - c) ** 2 / (2.0 * gs)

    cands = []
    t1 = c / (1.0 + 2.0 * gs)
    if t1 * t1 >= b2:
        cands.append(t1)
    denom = 1.0 - 2.0 * gs
    if denom > 0.0:
        t2 = c / denom
        if t2 * t2 <= b2:
            cands.append(t2)
    br = math.sqrt(b2)
    cands.append(br)
    cands.append(-br)

    def preferred(t: float) -> bool:
        if c == 0.0:
            return t >= 0.0
        return t * c > 0.0

    best = cands[0]
    best_phi = phi(best)
    for t in cands[1:]:
        p = phi(t)
        if p < best_phi or (p == best_phi and preferred(t) and not preferred(best)):
            best, best_phi = t, p
    return w + ((best - c) / s) * a


def pr_prox(inst: PhaseRetrievalInstance, agent: int, w: np.ndarray, gamma: float) -> np.ndarray:
    """Exact prox of agent i's measurement penalty; see :func:`abs_square_prox`."""
    return abs_square_prox(inst.measurements[agent], float(inst.observations[agent]), w, gamma)


# -----------------------------------------------------------------------------
# Moreau envelope
# -----------------------------------------------------------------------------


def moreau_envelope(obj: LocalObjective, w: np.ndarray, gamma: float) -> float:
    """Moreau envelope ``f(p) + ||p - w||^2 / (2 gamma)`` at ``p = prox(w, gamma)``.

    Requires ``gamma * weak_convexity_bound < 1`` so that the prox
    subproblem is strongly convex; the envelope is then differentiable with
    gradient ``(w - p) / gamma``.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if gamma * obj.weak_convexity_bound >= 1.0:
        raise ValueError(
            f"gamma={gamma} is outside the uniqueness regime "
            f"gamma * rho < 1 (rho={obj.weak_convexity_bound})"
        )
    w = np.asarray(w, dtype=float)
    p = obj.prox(w, gamma)
    d = p - w
    return float(obj.evaluate(p)) + float(d @ d) / (2.0 * gamma)


# -----------------------------------------------------------------------------
# quadratic consensus
# -----------------------------------------------------------------------------


class QuadraticConsensusInstance:
    """Each agent pulls toward its own center: ``f_i = (k / 2) ||x - c_i||^2``.

    The consensus optimum is the arithmetic mean of the centers, exposed as
    ``x_true`` so diagnostics can reuse the same error metrics as for
    phase retrieval.
    """

    def __init__(self, centers: np.ndarray, curvature: float = 1.0) -> None:
        C = np.asarray(centers, dtype=float)
        if C.ndim != 2:
            raise ValueError("centers must be a (num_agents, dim) array")
        if curvature <= 0.0:
            raise ValueError(f"curvature must be positive, got {curvature}")
        self.centers = C
        self.curvature = float(curvature)
        self.x_true = C.mean(axis=0)

    @property
    def num_agents(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def objectives(self) -> list[LocalObjective]:
        k = self.curvature
        out = []
        for i in range(self.num_agents):
            c = self.centers[i]
            out.append(
                LocalObjective(
                    evaluate=lambda x, c=c: 0.5 * k * float(np.sum((x - c) ** 2)),
                    subgradient=lambda x, c=c: k * (x - c),
                    prox=lambda w, gamma, c=c: quadratic_prox_point(c, k, w, gamma),
                    weak_convexity_bound=0.0,
                )
            )
        return out


def quadratic_prox_point(center: np.ndarray, curvature: float, w: np.ndarray, gamma: float) -> np.ndarray:
    """Closed-form prox of ``(k / 2) ||x - c||^2``:
    ``(w + gamma k c) / (1 + gamma k)``."""
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    w = np.asarray(w, dtype=float)
    return (w + gamma * curvature * np.asarray(center, dtype=float)) / (1.0 + gamma * curvature)


def quadratic_prox(inst: QuadraticConsensusInstance, agent: int, w: np.ndarray, gamma: float) -> np.ndarray:
    """Prox of agent i's quadratic pull; see :func:`quadratic_prox_point`."""
    return quadratic_prox_point(inst.centers[agent], inst.curvature, w, gamma)


# -----------------------------------------------------------------------------
# instance serialization
# -----------------------------------------------------------------------------


def _fmt(values) -> str:
    # repr round-trips float64 exactly in decimal text
    return " ".join(repr(float(v)) for v in values)


def save_instance(inst: PhaseRetrievalInstance, path) -> None:
    """Write a phase-retrieval instance as decimal text: the dimension, the
    ground-truth signal, then one ``a_i ... b_i`` line per agent."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{inst.dim}\n")
        fh.write(_fmt(inst.x_true) + "\n")
        for i in range(inst.num_agents):
            fh.write(_fmt(inst.measurements[i]) + " " + repr(float(inst.observations[i])) + "\n")


def load_instance(path) -> PhaseRetrievalInstance:
    """Read the format written by :func:`save_instance` (exact round-trip)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 3:
        raise ValueError(f"{path}: truncated instance file")
    dim = int(lines[0])
    x_true = np.array([float(v) for v in lines[1].split()])
    if x_true.shape != (dim,):
        raise ValueError(f"{path}: ground-truth line has {x_true.size} values, expected {dim}")
    A_rows, b_vals = [], []
    for ln in lines[2:]:
        vals = [float(v) for v in ln.split()]
        if len(vals) != dim + 1:
            raise ValueError(f"{path}: agent line has {len(vals)} values, expected {dim + 1}")
        A_rows.append(vals[:dim])
        b_vals.append(vals[dim])
    return PhaseRetrievalInstance(np.array(A_rows), np.array(b_vals), x_true)
