"""Discriminative bipartite neighbor graph over instances of positive bags.

Every instance of a positive bag appears once as a source node and once as
a coverable target. A source is linked to the targets among its k overall
nearest per-bag neighbors that come from positive bags; sources whose close
neighbors are mostly negative end up with few or no edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError

NodeId = tuple[int, int]  # (bag_id, instance_id)


@dataclass(frozen=True)
class NeighborEntry:
    bag_id: int
    instance_id: int
    distance: float

    @property
    def node_id(self) -> NodeId:
        return (self.bag_id, self.instance_id)


@dataclass(frozen=True)
class NeighborList:
    """Per-bag nearest neighbors of one source instance, nearest first.

    Exactly one entry per bag other than the source's own; sorted by
    (distance, instance_id, bag_id) ascending.
    """

    source: NodeId
    neighbors: tuple[NeighborEntry, ...]


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Edges from positive-bag instances to their retained positive neighbors.

    ``u_nodes`` maps each positive bag id to its coverable instance node ids;
    ``edges`` maps each source node to at most ``k`` neighbor entries, all of
    which lie in positive bags.
    """

    v_nodes: tuple[NodeId, ...]
    u_nodes: dict[int, tuple[NodeId, ...]]
    edges: dict[NodeId, tuple[NeighborEntry, ...]]
    k: int

    @cached_property
    def positive_bag_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.u_nodes))

    def targets(self, v: NodeId) -> tuple[NodeId, ...]:
        return tuple(e.node_id for e in self.edges.get(v, ()))

    @property
    def n_edges(self) -> int:
        return sum(len(es) for es in self.edges.values())


def nearest_per_bag(source: NodeId, ds: Dataset) -> NeighborList:
    """For one positive-bag instance, find the single closest instance in
    every other bag (positive and negative) under Euclidean distance.

    Within a bag, equidistant candidates resolve to the lowest instance_id;
    the merged list is sorted by (distance, instance_id, bag_id).
    """
    src_bag_id, src_inst_id = source
    bag = ds.bag_by_id.get(src_bag_id)
    if bag is None or bag.label <= 0:
        raise ValueError(f"source {source} is not in a positive bag")
    x = bag.instance_by_id(src_inst_id).features

    entries = []
    for other in ds.bags:
        if other.bag_id == src_bag_id:
            continue
        diffs = other.feature_matrix - x
        dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
        best = np.lexsort((other.instance_ids, dists))[0]
        entries.append(
            NeighborEntry(other.bag_id, int(other.instance_ids[best]), float(dists[best]))
        )
    entries.sort(key=lambda e: (e.distance, e.instance_id, e.bag_id))
    return NeighborList(source, tuple(entries))


def build_graph(ds: Dataset, k: int) -> BipartiteGraph:
    """Build the neighbor graph: keep, per source, the positive-bag entries
    among its k nearest per-bag neighbors overall.

    Because negatives compete for the k slots, a source that is as close to
    negative bags as to positive ones loses edges.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    positives = ds.positive_bags
    if len(positives) < 2:
        raise DataError("graph construction needs at least 2 positive bags")
    positive_ids = {b.bag_id for b in positives}

    u_nodes = {
        b.bag_id: tuple((b.bag_id, int(i)) for i in b.instance_ids) for b in positives
    }
    v_nodes = tuple(sorted(n for nodes in u_nodes.values() for n in nodes))

    edges: dict[NodeId, tuple[NeighborEntry, ...]] = {}
    for v in v_nodes:
        top = nearest_per_bag(v, ds).neighbors[:k]
        edges[v] = tuple(e for e in top if e.bag_id in positive_ids)
    return BipartiteGraph(v_nodes=v_nodes, u_nodes=u_nodes, edges=edges, k=k)


def write_graph_text(graph: BipartiteGraph, path: str | Path, header_comments=()) -> None:
    lines = [f"# {c}" for c in header_comments]
    for v in graph.v_nodes:
        for e in graph.edges.get(v, ()):
            lines.append(f"{v[0]}:{v[1]} -> {e.bag_id}:{e.instance_id} {e.distance!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def graph_summary(graph: BipartiteGraph) -> dict:
    isolated = sum(1 for v in graph.v_nodes if not graph.edges.get(v))
    return {
        "n_sources": len(graph.v_nodes),
        "n_targets": sum(len(nodes) for nodes in graph.u_nodes.values()),
        "n_positive_bags": len(graph.u_nodes),
        "n_edges": graph.n_edges,
        "n_isolated_sources": isolated,
        "k": graph.k,
    }


def write_graph_summary(graph: BipartiteGraph, path: str | Path, manifest: dict | None = None) -> None:
    payload = graph_summary(graph)
    if manifest is not None:
        payload = {"manifest": manifest, **payload}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
