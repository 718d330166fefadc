"""Layered per-trip routing graphs that encode the leg budget structurally.

A route may use at most K arcs (K-1 transfers). Rather than constraining path
length, each trip gets a layered copy of the multigraph with K+1 layers:
layer 1 holds only the trip origin, layer K+1 only the destination, and every
other stop appears once per layer 2..K. The arcs are

* origin arcs: every arc leaving the origin enters layer 2, or jumps straight
  to the sink when it ends at the destination;
* middle arcs: every arc touching neither endpoint is copied from layer k to
  k+1 for k in 2..K-1;
* destination arcs: every arc into the destination (not from the origin) is
  copied from each layer 2..K to the sink.

Every arc strictly increases the layer, so paths have at most K arcs and the
graph is acyclic; shortest paths are computed in one sweep over the layers
and equal the arc-budget-constrained shortest path on the original graph.

`csp_oracle` is an independent dynamic program over (vertex, legs) states
used by the tests to cross-check the layered construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .instance import Trip
from .network import Arc, Mode


class InfeasibleRouteError(RuntimeError):
    """No route from origin to destination within the leg budget."""


@dataclass(frozen=True)
class ExpandedGraph:
    """Layered graph for one trip.

    Vertex indexing: 0 is (origin, layer 1), then middle copies (stop, layer)
    for layers 2..K in layer-major order, and the last index is
    (destination, layer K+1). Indices increase along every arc, so ascending
    vertex index is a topological order.

    Arc arrays are sorted by (tail layer, head index, original arc id); the
    slices in `layer_slices` group them by tail layer for the forward sweep.
    """
    trip_id: str
    origin: str
    destination: str
    max_arcs: int
    middle_stops: tuple[str, ...]
    n_vertices: int
    arc_tail: np.ndarray        # expanded-vertex index
    arc_head: np.ndarray
    arc_orig: np.ndarray        # original arc id
    arc_from_layer: np.ndarray
    layer_slices: tuple[tuple[int, int], ...]   # (start, end) per layer 1..K
    layer_heads: tuple[np.ndarray, ...]         # unique heads per layer group
    layer_seg_starts: tuple[np.ndarray, ...]    # reduceat offsets per group

    @property
    def n_arcs(self) -> int:
        return len(self.arc_orig)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.n_vertices - 1

    def vertex_label(self, idx: int) -> tuple[str, int]:
        """(stop id, layer) of an expanded vertex index."""
        if idx == 0:
            return (self.origin, 1)
        if idx == self.n_vertices - 1:
            return (self.destination, self.max_arcs + 1)
        n_mid = len(self.middle_stops)
        layer = 2 + (idx - 1) // n_mid
        return (self.middle_stops[(idx - 1) % n_mid], layer)


def _assemble(trip_id: str, origin: str, destination: str, k_max: int,
              middle: tuple[str, ...], n_vertices: int,
              from_layer: np.ndarray, head: np.ndarray, orig: np.ndarray,
              tail: np.ndarray) -> ExpandedGraph:
    """Sort arc arrays canonically and precompute the sweep indexes."""
    order = np.lexsort((orig, head, from_layer))
    from_layer = np.ascontiguousarray(from_layer[order], dtype=np.int32)
    head = np.ascontiguousarray(head[order], dtype=np.int32)
    orig = np.ascontiguousarray(orig[order], dtype=np.int64)
    tail = np.ascontiguousarray(tail[order], dtype=np.int32)

    starts = np.searchsorted(from_layer, np.arange(1, k_max + 2))
    slices = [(int(starts[k - 1]), int(starts[k])) for k in range(1, k_max + 1)]
    heads_per_layer: list[np.ndarray] = []
    segs_per_layer: list[np.ndarray] = []
    for s, e in slices:
        if e > s:
            h = head[s:e]
            seg = np.concatenate([[0], np.flatnonzero(np.diff(h)) + 1])
            heads_per_layer.append(h[seg])
            segs_per_layer.append(seg)
        else:
            heads_per_layer.append(np.empty(0, dtype=np.int32))
            segs_per_layer.append(np.empty(0, dtype=np.int64))

    return ExpandedGraph(
        trip_id=trip_id, origin=origin, destination=destination,
        max_arcs=k_max, middle_stops=middle, n_vertices=n_vertices,
        arc_tail=tail, arc_head=head, arc_orig=orig, arc_from_layer=from_layer,
        layer_slices=tuple(slices), layer_heads=tuple(heads_per_layer),
        layer_seg_starts=tuple(segs_per_layer))


def build_expanded_indexed(trip_id: str, stop_ids: Sequence[str], o_pos: int,
                           d_pos: int, tails: np.ndarray, heads: np.ndarray,
                           arc_ids: np.ndarray, k_max: int) -> ExpandedGraph:
    """Vectorized construction from positional arc arrays.

    `tails`/`heads` give each arc's endpoints as positions into `stop_ids`;
    `arc_ids` are the original arc ids carried into the expanded arcs.
    """
    if k_max < 2:
        raise ValueError("leg budget must be at least 2")
    if o_pos == d_pos:
        raise ValueError("origin equals destination")
    n_stops = len(stop_ids)
    n_mid = n_stops - 2
    mid_rank = np.full(n_stops, -1, dtype=np.int64)
    mid_mask = np.ones(n_stops, dtype=bool)
    mid_mask[[o_pos, d_pos]] = False
    mid_rank[mid_mask] = np.arange(n_mid)
    middle = tuple(stop_ids[p] for p in np.flatnonzero(mid_mask))
    n_vertices = 2 + (k_max - 1) * n_mid
    sink = n_vertices - 1

    def mid_vertex(stop_pos: np.ndarray, layer: int) -> np.ndarray:
        return 1 + (layer - 2) * n_mid + mid_rank[stop_pos]

    parts_layer, parts_head, parts_orig, parts_tail = [], [], [], []

    out_o = tails == o_pos
    if np.any(out_o):
        idx = np.flatnonzero(out_o)
        to_sink = heads[idx] == d_pos
        parts_layer.append(np.ones(len(idx), dtype=np.int64))
        parts_head.append(np.where(to_sink, sink, mid_vertex(heads[idx], 2)))
        parts_orig.append(arc_ids[idx])
        parts_tail.append(np.zeros(len(idx), dtype=np.int64))

    interior = (tails != o_pos) & (heads != o_pos) \
        & (tails != d_pos) & (heads != d_pos)
    idx = np.flatnonzero(interior)
    for k in range(2, k_max):
        parts_layer.append(np.full(len(idx), k, dtype=np.int64))
        parts_head.append(mid_vertex(heads[idx], k + 1))
        parts_orig.append(arc_ids[idx])
        parts_tail.append(mid_vertex(tails[idx], k))

    into_d = (heads == d_pos) & (tails != o_pos)
    idx = np.flatnonzero(into_d)
    for k in range(2, k_max + 1):
        parts_layer.append(np.full(len(idx), k, dtype=np.int64))
        parts_head.append(np.full(len(idx), sink, dtype=np.int64))
        parts_orig.append(arc_ids[idx])
        parts_tail.append(mid_vertex(tails[idx], k))

    if parts_layer:
        from_layer = np.concatenate(parts_layer)
        head_arr = np.concatenate(parts_head)
        orig_arr = np.concatenate(parts_orig)
        tail_arr = np.concatenate(parts_tail)
    else:
        from_layer = np.empty(0, dtype=np.int64)
        head_arr = np.empty(0, dtype=np.int64)
        orig_arr = np.empty(0, dtype=np.int64)
        tail_arr = np.empty(0, dtype=np.int64)

    return _assemble(trip_id, stop_ids[o_pos], stop_ids[d_pos], k_max, middle,
                     n_vertices, from_layer, head_arr, orig_arr, tail_arr)


def build_expanded(trip: Trip, arcs: Sequence[Arc], k_max: int,
                   vertices: Sequence[str] | None = None) -> ExpandedGraph:
    """Build the layered graph of a trip over the given arc set.

    `vertices` fixes the stop universe (defaults to every stop appearing as
    an arc endpoint plus the trip endpoints). Requires k_max >= 2; a budget
    of one leg leaves nothing to expand.
    """
    o, d = trip.origin_stop, trip.destination_stop
    if vertices is None:
        seen = {o, d}
        for a in arcs:
            seen.add(a.i)
            seen.add(a.j)
        vertices = sorted(seen)
    else:
        vertices = list(vertices)
    pos = {v: p for p, v in enumerate(vertices)}
    tails = np.array([pos[a.i] for a in arcs], dtype=np.int64)
    heads = np.array([pos[a.j] for a in arcs], dtype=np.int64)
    arc_ids = np.array([a.id for a in arcs], dtype=np.int64)
    return build_expanded_indexed(trip.id, vertices, pos[o], pos[d],
                                  tails, heads, arc_ids, k_max)


def _mask_arcs(graph: ExpandedGraph, keep: np.ndarray) -> ExpandedGraph:
    return _assemble(graph.trip_id, graph.origin, graph.destination,
                     graph.max_arcs, graph.middle_stops, graph.n_vertices,
                     graph.arc_from_layer[keep], graph.arc_head[keep],
                     graph.arc_orig[keep], graph.arc_tail[keep])


def apply_shuttle_dominance(graph: ExpandedGraph, is_shuttle: np.ndarray,
                            tail_stop_of: Callable[[int], str],
                            shuttle_from_origin: dict[str, int],
                            direct_arc_id: int,
                            gamma: np.ndarray) -> ExpandedGraph:
    """Core pruning step; see prune_dominated for the user-facing contract.

    Removes layer-2 shuttle arcs into the sink whose two-leg ride via the
    origin shuttle is at least as expensive as the direct shuttle, or whose
    layer-2 tail cannot be reached from the origin at all.
    """
    fl, hd, og = graph.arc_from_layer, graph.arc_head, graph.arc_orig
    cand = np.flatnonzero((fl == 2) & (hd == graph.sink) & is_shuttle[og])
    if cand.size == 0:
        return graph
    keep = np.ones(graph.n_arcs, dtype=bool)
    for idx in cand:
        orig = int(og[idx])
        first = shuttle_from_origin.get(tail_stop_of(orig))
        if first is None:
            keep[idx] = False
        elif gamma[first] + gamma[orig] >= gamma[direct_arc_id]:
            keep[idx] = False
    if keep.all():
        return graph
    return _mask_arcs(graph, keep)


def prune_dominated(graph: ExpandedGraph, arcs: Sequence[Arc],
                    gamma: np.ndarray) -> ExpandedGraph:
    """Drop layer-2 shuttle hops into the sink that a direct shuttle dominates.

    Applies only when the trip endpoints are served exclusively by shuttles
    and a direct shuttle arc exists; otherwise the graph is returned
    unchanged. With metric shuttle costs this removes every candidate and
    the optimal route value never changes; each removal is still guarded by
    an explicit cost comparison, so the operation is safe even on
    non-metric inputs.
    """
    o, d = graph.origin, graph.destination
    direct_id = None
    shuttle_from_o: dict[str, int] = {}
    for a in arcs:
        if (o in (a.i, a.j) or d in (a.i, a.j)) and a.mode is not Mode.SHUTTLE:
            return graph
        if a.mode is Mode.SHUTTLE and a.i == o:
            if a.j == d:
                direct_id = a.id
            else:
                shuttle_from_o[a.j] = a.id
    if direct_id is None:
        return graph

    is_shuttle = np.zeros(int(max((a.id for a in arcs), default=-1)) + 1, dtype=bool)
    tail_of = {}
    for a in arcs:
        is_shuttle[a.id] = a.mode is Mode.SHUTTLE
        tail_of[a.id] = a.i
    return apply_shuttle_dominance(graph, is_shuttle, tail_of.__getitem__,
                                   shuttle_from_o, direct_id, gamma)


def forward_distances(graph: ExpandedGraph, gamma_eff: np.ndarray) -> np.ndarray:
    """Vectorized single-pass shortest distances from the source.

    `gamma_eff` is indexed by original arc id; closed arcs must carry +inf.
    Unreachable vertices stay at +inf.
    """
    f = np.full(graph.n_vertices, np.inf)
    f[0] = 0.0
    for layer in range(graph.max_arcs):
        start, end = graph.layer_slices[layer]
        if start == end:
            continue
        cand = f[graph.arc_tail[start:end]] + gamma_eff[graph.arc_orig[start:end]]
        mins = np.minimum.reduceat(cand, graph.layer_seg_starts[layer])
        heads = graph.layer_heads[layer]   # unique within a layer group
        f[heads] = np.minimum(f[heads], mins)
    return f


def shortest_path(graph: ExpandedGraph, z: np.ndarray,
                  gamma: np.ndarray) -> tuple[float, list[int]]:
    """Minimum-cost source-to-sink path using only arcs with z = 1.

    Returns the value and the original arc ids along the path. Ties are
    broken deterministically: fewer legs first, then the lexicographically
    smallest arc-id sequence. Raises InfeasibleRouteError when the sink is
    unreachable, which cannot happen on designs that keep direct shuttles
    open.
    """
    labels: dict[int, tuple[float, int, tuple[int, ...]]] = {0: (0.0, 0, ())}
    tail, head, orig = graph.arc_tail, graph.arc_head, graph.arc_orig
    for idx in range(graph.n_arcs):
        a = int(orig[idx])
        if z[a] <= 0.5:
            continue
        lab = labels.get(int(tail[idx]))
        if lab is None:
            continue
        cand = (lab[0] + gamma[a], lab[1] + 1, lab[2] + (a,))
        v = int(head[idx])
        cur = labels.get(v)
        if cur is None or cand < cur:
            labels[v] = cand
    result = labels.get(graph.sink)
    if result is None:
        raise InfeasibleRouteError(
            f"trip {graph.trip_id}: sink unreachable under the given design")
    return result[0], list(result[2])


def csp_oracle(arcs: Sequence[Arc], z: np.ndarray, gamma: np.ndarray,
               origin: str, destination: str, k_max: int) -> float:
    """Arc-budget-constrained shortest path by (vertex, legs) dynamic program.

    Independent of the layered construction; intended as a test oracle on
    small graphs. Returns +inf when no path with at most k_max legs exists.
    """
    if origin == destination:
        return 0.0
    dist: dict[str, float] = {origin: 0.0}
    for _ in range(k_max):
        nxt = dict(dist)
        for a in arcs:
            if z[a.id] <= 0.5:
                continue
            du = dist.get(a.i)
            if du is None:
                continue
            cand = du + gamma[a.id]
            if cand < nxt.get(a.j, math.inf):
                nxt[a.j] = cand
        dist = nxt
    return dist.get(destination, math.inf)


def to_dot(graph: ExpandedGraph) -> str:
    """DOT-format dump of an expanded graph for inspection."""
    lines = [f'digraph "{graph.trip_id}" {{']
    for v in range(graph.n_vertices):
        stop, layer = graph.vertex_label(v)
        lines.append(f'  v{v} [label="{stop}@{layer}"];')
    for idx in range(graph.n_arcs):
        lines.append(
            f"  v{int(graph.arc_tail[idx])} -> v{int(graph.arc_head[idx])}"
            f' [label="a{int(graph.arc_orig[idx])}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
