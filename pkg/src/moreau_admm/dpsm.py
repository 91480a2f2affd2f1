"""Decentralized projected subgradient baseline.

The classic template: every iteration each agent mixes its neighbors'
estimates through a doubly stochastic weight matrix, then takes a local
subgradient step with a geometrically decaying step size, then (optionally)
projects onto a centered Euclidean ball.  Subgradients are evaluated at the
pre-mixing iterate.
"""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from . import diagnostics
from .graph import CommGraph, metropolis_weights

__all__ = ["DpsmParams", "DpsmRunResult", "DpsmError", "step_size", "dpsm_step", "dpsm_run"]


@dataclass(frozen=True)
class DpsmParams:
    """Step schedule ``mu_k = mu0 * gamma_decay**k`` plus an optional
    projection radius (``None`` disables projection).  ``tol`` stops the
    run early when the successive change drops below it; the default 0
    runs the full budget so traces across trials stay aligned."""

    mu0: float
    gamma_decay: float
    max_iters: int = 500
    projection_radius: float | None = None
    tol: float = 0.0

    def __post_init__(self) -> None:
        if self.mu0 <= 0.0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if not (0.0 < self.gamma_decay < 1.0):
            raise ValueError(f"gamma_decay must lie in (0, 1), got {self.gamma_decay}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if self.projection_radius is not None and self.projection_radius <= 0.0:
            raise ValueError(f"projection_radius must be positive, got {self.projection_radius}")
        if self.tol < 0.0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")


@dataclass
class DpsmRunResult:
    x: np.ndarray
    trace: list


class DpsmError(RuntimeError):
    def __init__(self, message: str, iteration: int, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace if trace is not None else []


def step_size(params: DpsmParams, k: int) -> float:
    """``mu_k = mu0 * gamma_decay**k`` (k counts from 0)."""
    return params.mu0 * params.gamma_decay**k


def _project(x_all: np.ndarray, radius: float | None) -> np.ndarray:
    if radius is None:
        return x_all
    norms = np.linalg.norm(x_all, axis=1)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return x_all * scale[:, None]


def dpsm_step(x_all: np.ndarray, weights: np.ndarray, objectives, params: DpsmParams, k: int) -> np.ndarray:
    """One synchronous round: mix, step against the pre-mixing
    subgradients, project."""
    mixed = weights @ x_all
    g = np.empty_like(x_all)
    for i, obj in enumerate(objectives):
        g[i] = obj.subgradient(x_all[i])
    return _project(mixed - step_size(params, k) * g, params.projection_radius)


def dpsm_run(
    g: CommGraph,
    objectives,
    params: DpsmParams,
    init: np.ndarray,
    x_true: np.ndarray | None = None,
    weights: np.ndarray | None = None,
    callback=None,
) -> DpsmRunResult:
    """Run the baseline from per-agent initial estimates ``init`` (a single
    vector is broadcast to every agent).

    Trace rows use the shared per-iteration schema; fields the baseline
    does not define (merit values, consensus residual, the auxiliary-block
    norms) are NaN.
    """
    if len(objectives) != g.num_agents:
        raise ValueError(f"{len(objectives)} objectives for {g.num_agents} agents")
    x = np.asarray(init, dtype=float)
    if x.ndim == 1:
        x = np.tile(x, (g.num_agents, 1))
    if x.shape[0] != g.num_agents:
        raise ValueError(f"init must be (num_agents, dim), got {x.shape}")
    x = x.copy()
    W = metropolis_weights(g) if weights is None else np.asarray(weights, dtype=float)

    nan = float("nan")
    trace: list[diagnostics.IterationTrace] = []
    for k in range(params.max_iters):
        t0 = perf_counter()
        x_new = dpsm_step(x, W, objectives, params, k)
        if not np.isfinite(x_new).all():
            raise DpsmError(f"non-finite iterate at iteration {k + 1}", k + 1, trace)
        dx = float(np.linalg.norm(x_new - x))
        x = x_new
        if x_true is not None:
            err = diagnostics.mse(x, x_true)
            err_raw = diagnostics.mse(x, x_true, aligned=False)
        else:
            err = err_raw = nan
        row = diagnostics.IterationTrace(
            k=k + 1,
            mse=err,
            mse_raw=err_raw,
            psi=nan,
            aug_lagrangian=nan,
            consensus_residual=nan,
            dx=dx,
            dz=nan,
            dbeta=nan,
            dlambda=nan,
            lemma2_lhs=nan,
            lemma2_rhs=nan,
            wall_time=perf_counter() - t0,
        )
        trace.append(row)
        if callback is not None:
            callback(x, row)
        if params.tol > 0.0 and dx <= params.tol:
            break
    return DpsmRunResult(x=x, trace=trace)
