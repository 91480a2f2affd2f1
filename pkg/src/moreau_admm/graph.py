"""Undirected communication topologies for peer-to-peer consensus solvers."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

__all__ = [
    "CommGraph",
    "default_edge_prob",
    "erdos_renyi",
    "is_connected",
    "metropolis_weights",
    "save_graph",
    "load_graph",
]


class CommGraph:
    """Static undirected graph over agents ``0 .. num_agents - 1``.

    Edges are kept in canonical orientation ``(i, j)`` with ``i < j``,
    sorted lexicographically and duplicate-free.  Instances are treated as
    immutable after construction; the solvers rely on the fixed canonical
    edge order for deterministic accumulation, so do not mutate the stored
    arrays.

    Connectivity is not enforced here so that partial topologies can be
    inspected; solver entry points and :func:`metropolis_weights` check
    :func:`is_connected` themselves.
    """

    def __init__(self, num_agents: int, edges) -> None:
        if num_agents < 1:
            raise ValueError(f"num_agents must be positive, got {num_agents}")
        canon = []
        seen = set()
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) is not allowed")
            if not (0 <= i < num_agents and 0 <= j < num_agents):
                raise ValueError(f"edge ({i}, {j}) out of range for {num_agents} agents")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            canon.append((i, j))
        canon.sort()

        self.num_agents = num_agents
        self.edges: list[tuple[int, int]] = canon
        self.neighbors: list[list[int]] = [[] for _ in range(num_agents)]
        for i, j in canon:
            self.neighbors[i].append(j)
            self.neighbors[j].append(i)
        for nb in self.neighbors:
            nb.sort()
        self.degrees = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)

        # Canonical endpoint arrays: edge e connects edge_i[e] < edge_j[e].
        self.edge_i = np.array([i for i, _ in canon], dtype=np.int64)
        self.edge_j = np.array([j for _, j in canon], dtype=np.int64)

        # Incidence lookup per agent, in canonical edge order:
        # incident_edges[v] lists edge indices touching v, and
        # incident_is_lower[v] marks where v is the lower-indexed endpoint.
        self.incident_edges: list[np.ndarray] = []
        self.incident_is_lower: list[np.ndarray] = []
        per_agent: list[list[tuple[int, bool]]] = [[] for _ in range(num_agents)]
        for e, (i, j) in enumerate(canon):
            per_agent[i].append((e, True))
            per_agent[j].append((e, False))
        for v in range(num_agents):
            self.incident_edges.append(np.array([e for e, _ in per_agent[v]], dtype=np.int64))
            self.incident_is_lower.append(np.array([lo for _, lo in per_agent[v]], dtype=bool))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def __repr__(self) -> str:
        return f"CommGraph(num_agents={self.num_agents}, num_edges={self.num_edges})"


def default_edge_prob(num_agents: int) -> float:
    """Edge probability ``min(1, 2 ln(L) / L)``, safely above the
    connectivity threshold ``ln(L) / L`` of an Erdos-Renyi graph."""
    if num_agents < 2:
        raise ValueError("need at least two agents")
    return min(1.0, 2.0 * math.log(num_agents) / num_agents)


def erdos_renyi(num_agents: int, edge_prob: float, seed=None, max_attempts: int = 1000) -> CommGraph:
    """Sample a connected Erdos-Renyi graph G(L, p).

    Each unordered pair is included independently with probability
    ``edge_prob``; disconnected samples are rejected and redrawn, up to
    ``max_attempts`` times.

    Args:
        num_agents: number of nodes L, at least 2.
        edge_prob: inclusion probability in (0, 1].
        seed: int seed or ``numpy.random.Generator``.
        max_attempts: rejection budget before giving up.

    Returns:
        A connected :class:`CommGraph`.

    Raises:
        ValueError: on invalid ``num_agents`` or ``edge_prob``.
        RuntimeError: if no connected sample is found within the budget.
    """
    if num_agents < 2:
        raise ValueError(f"num_agents must be >= 2, got {num_agents}")
    if not (0.0 < edge_prob <= 1.0):
        raise ValueError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    n_pairs = num_agents * (num_agents - 1) // 2
    pairs = [(i, j) for i in range(num_agents) for j in range(i + 1, num_agents)]
    for _ in range(max_attempts):
        keep = rng.random(n_pairs) < edge_prob
        g = CommGraph(num_agents, [p for p, k in zip(pairs, keep) if k])
        if is_connected(g):
            return g
    raise RuntimeError(
        f"no connected graph found in {max_attempts} attempts "
        f"(num_agents={num_agents}, edge_prob={edge_prob})"
    )


def is_connected(g: CommGraph) -> bool:
    """Breadth-first reachability of every agent from agent 0."""
    if g.num_agents == 1:
        return True
    seen = [False] * g.num_agents
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        v = queue.popleft()
        for w in g.neighbors[v]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == g.num_agents


def metropolis_weights(g: CommGraph) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix with Metropolis-Hastings
    weights ``W[i, j] = 1 / (1 + max(deg(i), deg(j)))`` for neighbors and
    the complementary mass on the diagonal.

    Requires a connected graph.
    """
    if not is_connected(g):
        raise ValueError("metropolis_weights requires a connected graph")
    L = g.num_agents
    w = np.zeros((L, L))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(g.degrees[i], g.degrees[j]))
    for i in range(L):
        w[i, i] = 1.0 - w[i].sum()
    return w


def save_graph(g: CommGraph, path) -> None:
    """Write edge-list text: first line ``L E``, then one ``i j`` line per
    canonical edge (0-based, i < j)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{g.num_agents} {g.num_edges}\n")
        for i, j in g.edges:
            fh.write(f"{i} {j}\n")


def load_graph(path) -> CommGraph:
    """Read the edge-list format written by :func:`save_graph`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: header must be 'num_agents num_edges'")
    num_agents, num_edges = int(head[0]), int(head[1])
    if len(lines) - 1 != num_edges:
        raise ValueError(
            f"{path}: header promises {num_edges} edges, found {len(lines) - 1}"
        )
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: malformed edge line {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if i >= j:
            raise ValueError(f"{path}: edge ({i}, {j}) not in canonical i < j order")
        edges.append((i, j))
    return CommGraph(num_agents, edges)
