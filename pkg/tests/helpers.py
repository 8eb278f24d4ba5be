"""Shared test fixtures: random graph/config generators and independent
reference implementations used as oracles."""

from __future__ import annotations

import numpy as np

from covertrain.cover import ConcaveFn, ConcaveKind, CoverConfig
from covertrain.graph import BipartiteGraph, NeighborEntry


def random_graph(rng: np.random.Generator, max_v: int = 10, max_bags: int = 4,
                 max_u_per_bag: int = 4, max_k: int = 4) -> BipartiteGraph:
    """Random bipartite cover structure; node ids follow the (bag, instance)
    convention but edges are arbitrary subsets, degree capped at k."""
    n_bags = int(rng.integers(2, max_bags + 1))
    u_nodes = {}
    all_u: list[tuple[int, int]] = []
    for b in range(n_bags):
        n_u = int(rng.integers(1, max_u_per_bag + 1))
        nodes = tuple((b, j) for j in range(n_u))
        u_nodes[b] = nodes
        all_u.extend(nodes)
    v_count = int(rng.integers(1, max_v + 1))
    v_nodes = tuple(sorted(all_u))[:v_count]
    k = int(rng.integers(1, max_k + 1))
    edges = {}
    for v in v_nodes:
        deg = int(rng.integers(0, k + 1))
        if deg > 0:
            idx = rng.choice(len(all_u), size=min(deg, len(all_u)), replace=False)
            chosen = sorted(all_u[i] for i in idx)
            edges[v] = tuple(NeighborEntry(b, j, 0.0) for (b, j) in chosen)
        else:
            edges[v] = ()
    return BipartiteGraph(v_nodes=v_nodes, u_nodes=u_nodes, edges=edges, k=k)


def random_cover_config(rng: np.random.Generator, k: int) -> CoverConfig:
    kind = (ConcaveKind.identity, ConcaveKind.sqrt, ConcaveKind.log1p)[int(rng.integers(3))]
    t = int(rng.integers(1, 4))
    alpha = float(rng.choice([0.5, 0.9, 1.0]))
    return CoverConfig(t=t, alpha=alpha, g=ConcaveFn(kind), k=k)


def oracle_total_cover(S, graph: BipartiteGraph, cfg: CoverConfig) -> float:
    """Direct per-bag set-arithmetic evaluation of the covering objective."""
    value = 0.0
    for b in sorted(graph.u_nodes):
        covered = set()
        for v in S:
            for e in graph.edges.get(v, ()):
                if e.bag_id == b:
                    covered.add((e.bag_id, e.instance_id))
        value += cfg.g(min(cfg.t, len(covered)))
    return value


def kkt_simplex_projection(v: np.ndarray) -> np.ndarray:
    """Simplex projection through the KKT threshold equation
    sum_i max(v_i - theta, 0) = 1, solved by bisection on theta."""
    v = np.asarray(v, dtype=np.float64)

    def excess(theta: float) -> float:
        return float(np.maximum(v - theta, 0.0).sum()) - 1.0

    lo = float(v.min()) - 1.0 / v.size - 1.0
    hi = float(v.max())
    assert excess(lo) > 0.0 >= excess(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return np.maximum(v - theta, 0.0)
