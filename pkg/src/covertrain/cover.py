"""Covering objective over the neighbor graph, greedy cover selection,
brute-force verification, the greedy cardinality bound, positive-set
extraction, and the negative-mining baseline.

The objective credits each positive bag with g(min(t, covered boxes)),
where g is a nondecreasing concave function with g(0) = 0, and sums the
credit over positive bags. It is monotone and submodular, so greedy
selection with lazy re-evaluation carries the classical approximation
guarantee.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .data import Dataset
from .errors import DataError
from .graph import BipartiteGraph, NodeId


class ConcaveKind(str, Enum):
    identity = "identity"
    sqrt = "sqrt"
    log1p = "log1p"


@dataclass(frozen=True)
class ConcaveFn:
    """Scalar nondecreasing concave function with g(0) = 0, evaluated on
    nonnegative covered-box counts."""

    kind: ConcaveKind = ConcaveKind.identity

    def __call__(self, a: float) -> float:
        if a < 0:
            raise ValueError("argument must be nonnegative")
        if self.kind is ConcaveKind.identity:
            return float(a)
        if self.kind is ConcaveKind.sqrt:
            return math.sqrt(a)
        return math.log1p(a)


@dataclass(frozen=True)
class CoverConfig:
    """Covering threshold t, target fraction alpha, credit function g, and
    the graph's per-node neighbor cap k (used by the cardinality bound)."""

    t: int
    alpha: float
    g: ConcaveFn = ConcaveFn()
    k: int = 1

    def __post_init__(self) -> None:
        if self.t < 1:
            raise ValueError("t must be at least 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass(frozen=True)
class CoverResult:
    selected: tuple[NodeId, ...]
    gains: tuple[float, ...]
    f_final: float
    f_total: float
    covered: dict[int, frozenset[NodeId]]


def _targets_of(graph: BipartiteGraph, v: NodeId) -> tuple[NodeId, ...]:
    return tuple(e.node_id for e in graph.edges.get(v, ()))


def cover_score(
    S: Iterable[NodeId], graph: BipartiteGraph, bag_id: int, cfg: CoverConfig
) -> float:
    """Credit earned in one positive bag: g(min(t, boxes of the bag covered by S))."""
    if bag_id not in graph.u_nodes:
        raise ValueError(f"unknown positive bag id {bag_id}")
    covered: set[NodeId] = set()
    for v in S:
        for u in _targets_of(graph, v):
            if u[0] == bag_id:
                covered.add(u)
    return cfg.g(min(cfg.t, len(covered)))


def total_cover(S: Iterable[NodeId], graph: BipartiteGraph, cfg: CoverConfig) -> float:
    """Sum of per-bag covering credit over all positive bags."""
    counts: dict[int, set[NodeId]] = {b: set() for b in graph.positive_bag_ids}
    for v in S:
        for u in _targets_of(graph, v):
            counts[u[0]].add(u)
    return sum(cfg.g(min(cfg.t, len(counts[b]))) for b in graph.positive_bag_ids)


def greedy_cover(graph: BipartiteGraph, cfg: CoverConfig, lazy: bool = True) -> CoverResult:
    """Greedily add the node with the largest marginal gain until the
    covering value reaches alpha times the full-graph value.

    Ties resolve to the lowest node id. The lazy variant keeps stale gains
    in a max-heap and re-evaluates only the top; because gains only shrink
    as the selection grows, it selects exactly the same sequence as the
    naive variant.
    """
    g, t = cfg.g, cfg.t
    pos_bags = graph.positive_bag_ids
    targets = {v: _targets_of(graph, v) for v in graph.v_nodes}

    all_covered: dict[int, set[NodeId]] = {b: set() for b in pos_bags}
    for v in graph.v_nodes:
        for u in targets[v]:
            all_covered[u[0]].add(u)
    f_total = sum(g(min(t, len(all_covered[b]))) for b in pos_bags)
    target_value = cfg.alpha * f_total

    covered: dict[int, set[NodeId]] = {b: set() for b in pos_bags}

    def current_value() -> float:
        return sum(g(min(t, len(covered[b]))) for b in pos_bags)

    def gain(v: NodeId) -> float:
        fresh: dict[int, int] = {}
        for u in targets[v]:
            if u not in covered[u[0]]:
                fresh[u[0]] = fresh.get(u[0], 0) + 1
        total = 0.0
        for b, extra in fresh.items():
            c0 = len(covered[b])
            total += g(min(t, c0 + extra)) - g(min(t, c0))
        return total

    def apply(v: NodeId) -> None:
        for u in targets[v]:
            covered[u[0]].add(u)

    selected: list[NodeId] = []
    gains: list[float] = []
    f_cur = current_value()

    if lazy:
        heap = [(-gain(v), v, 0) for v in graph.v_nodes]
        heapq.heapify(heap)
        while f_cur < target_value and heap:
            neg_g, v, stamp = heapq.heappop(heap)
            if -neg_g <= 0.0:
                break
            if stamp == len(selected):
                apply(v)
                f_new = current_value()
                gains.append(f_new - f_cur)
                f_cur = f_new
                selected.append(v)
            else:
                heapq.heappush(heap, (-gain(v), v, len(selected)))
    else:
        chosen: set[NodeId] = set()
        while f_cur < target_value:
            best_v: NodeId | None = None
            best_gain = 0.0
            for v in graph.v_nodes:
                if v in chosen:
                    continue
                gv = gain(v)
                if gv > best_gain:
                    best_gain, best_v = gv, v
            if best_v is None:
                break
            apply(best_v)
            f_new = current_value()
            gains.append(f_new - f_cur)
            f_cur = f_new
            selected.append(best_v)
            chosen.add(best_v)

    return CoverResult(
        selected=tuple(selected),
        gains=tuple(gains),
        f_final=f_cur,
        f_total=f_total,
        covered={b: frozenset(s) for b, s in covered.items()},
    )


def brute_force_cover(graph: BipartiteGraph, cfg: CoverConfig) -> tuple[NodeId, ...]:
    """Minimum-cardinality selection meeting the coverage target, found by
    enumerating subsets in increasing size (lexicographic within a size).

    Guarded to 20 source nodes; intended as a verification oracle.
    """
    n = len(graph.v_nodes)
    if n > 20:
        raise ValueError(f"brute force limited to 20 nodes, got {n}")
    pos_bags = graph.positive_bag_ids
    bag_index = {b: i for i, b in enumerate(pos_bags)}
    u_index: dict[NodeId, int] = {}
    for b in pos_bags:
        for u in graph.u_nodes[b]:
            u_index[u] = len(u_index)

    node_masks = []
    for v in graph.v_nodes:
        mask = 0
        for u in _targets_of(graph, v):
            mask |= 1 << u_index[u]
        node_masks.append(mask)
    bag_masks = [0] * len(pos_bags)
    for u, i in u_index.items():
        bag_masks[bag_index[u[0]]] |= 1 << i

    g, t = cfg.g, cfg.t
    credit = [g(min(t, c)) for c in range(max(len(graph.u_nodes[b]) for b in pos_bags) + 1)] if pos_bags else []

    def value(mask: int) -> float:
        return sum(credit[min(t, (mask & bm).bit_count())] for bm in bag_masks)

    f_total = value(_union(node_masks))
    target = cfg.alpha * f_total
    indices = range(n)
    for size in range(n + 1):
        for combo in itertools.combinations(indices, size):
            mask = 0
            for i in combo:
                mask |= node_masks[i]
            if value(mask) >= target:
                return tuple(graph.v_nodes[i] for i in combo)
    return graph.v_nodes


def _union(masks: list[int]) -> int:
    out = 0
    for m in masks:
        out |= m
    return out


def approx_bound(cfg: CoverConfig) -> float:
    """Worst-case ratio of greedy selection size to the optimum:
    1 + ln(k * g(1) / (g(t) - g(t-1))), natural log."""
    g1 = cfg.g(1)
    dt = cfg.g(cfg.t) - cfg.g(cfg.t - 1)
    if dt <= 0.0:
        raise ValueError("credit function must strictly increase at t")
    return 1.0 + math.log(cfg.k * g1 / dt)


def extract_positives(
    result: CoverResult, graph: BipartiteGraph, n_clusters: int
) -> dict[int, frozenset[NodeId]]:
    """Positive training instances from the first ``n_clusters`` selections:
    cluster i is the i-th selected node together with its covered neighbors."""
    if n_clusters > len(result.selected):
        raise ValueError(
            f"n_clusters={n_clusters} exceeds the {len(result.selected)} selected nodes"
        )
    clusters: dict[int, frozenset[NodeId]] = {}
    for i in range(n_clusters):
        v = result.selected[i]
        clusters[i] = frozenset({v, *_targets_of(graph, v)})
    return clusters


def negative_mine(ds: Dataset) -> dict[int, int]:
    """Baseline positive-instance picker: for each positive bag, the instance
    farthest (in min-distance) from the pooled negative instances.

    Ties resolve to the lowest instance_id.
    """
    negatives = ds.negative_bags
    if not negatives:
        raise DataError("negative mining needs at least one negative bag")
    neg = np.vstack([b.feature_matrix for b in negatives])
    picks: dict[int, int] = {}
    for bag in ds.positive_bags:
        M = bag.feature_matrix
        # min distance from each instance to any pooled negative
        d2 = ((M[:, None, :] - neg[None, :, :]) ** 2).sum(axis=2)
        dmin = np.sqrt(d2.min(axis=1))
        best = np.lexsort((bag.instance_ids, -dmin))[0]
        picks[bag.bag_id] = int(bag.instance_ids[best])
    return picks
