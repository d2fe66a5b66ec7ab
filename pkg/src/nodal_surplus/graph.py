"""Metric graphs and their topology.

A :class:`MetricGraph` is the single source of topology for the rest of the
package: Betti number, loop edges, the spanning-tree cut set that indexes the
magnetic fluxes, and the decomposition into biconnected blocks.

Vertices and edges carry integer ids.  Internally both are stored in
ascending-id order and referred to by position (``0 .. V-1`` and
``0 .. E-1``).
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "GraphError",
    "MetricGraph",
    "TopologySummary",
    "CutSet",
    "Block",
    "BlockDecomposition",
    "build_graph",
    "parse_graph",
    "load_graph",
    "format_graph",
    "parse_length",
    "topology_summary",
    "spanning_cut",
    "block_decomposition",
]


class GraphError(ValueError):
    """Raised for an invalid graph description."""


_CONSTANTS = {
    "pi": math.pi,
    "e": math.e,
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "sqrt5": math.sqrt(5.0),
}

_LENGTH_RE = re.compile(
    r"""^\s*
    (?P<coef>[0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?)?   # rational/decimal prefix
    \s*\*?\s*
    (?P<const>pi|e|sqrt2|sqrt3|sqrt5)?
    \s*(?:/\s*(?P<den>[0-9]+(?:\.[0-9]*)?))?
    \s*$""",
    re.VERBOSE,
)


def parse_length(token: str) -> float:
    """Parse a length literal such as ``1.5``, ``pi``, ``2pi/3`` or ``sqrt2/2``."""
    m = _LENGTH_RE.match(token)
    if m is None or (m.group("coef") is None and m.group("const") is None):
        raise GraphError(f"cannot parse length {token!r}")
    coef = Fraction(m.group("coef")) if m.group("coef") else Fraction(1)
    if m.group("den") is not None:
        den = Fraction(m.group("den"))
        if den == 0:
            raise GraphError(f"zero denominator in length {token!r}")
        coef /= den
    value = float(coef)
    if m.group("const"):
        value *= _CONSTANTS[m.group("const")]
    return value


@dataclass(frozen=True)
class MetricGraph:
    """Compact metric graph with Neumann vertices (Dirichlet allowed at leaves).

    Edge ``j`` runs from ``endpoints[j][0]`` to ``endpoints[j][1]``; this fixes
    the forward direction of its two bonds.  Use :func:`build_graph` rather
    than the constructor so that the invariants are checked.
    """

    vertex_ids: tuple[int, ...]
    dirichlet: tuple[bool, ...]
    edge_ids: tuple[int, ...]
    endpoints: tuple[tuple[int, int], ...]
    lengths: tuple[float, ...]

    @property
    def V(self) -> int:
        return len(self.vertex_ids)

    @property
    def E(self) -> int:
        return len(self.edge_ids)

    @property
    def beta(self) -> int:
        return self.E - self.V + 1

    @property
    def length_array(self) -> np.ndarray:
        return np.asarray(self.lengths, dtype=float)

    @property
    def degrees(self) -> tuple[int, ...]:
        deg = [0] * self.V
        for u, v in self.endpoints:
            deg[u] += 1
            deg[v] += 1
        return tuple(deg)

    @property
    def loops(self) -> tuple[int, ...]:
        """Positions of loop edges (both ends at the same vertex)."""
        return tuple(j for j, (u, v) in enumerate(self.endpoints) if u == v)

    @property
    def has_dirichlet(self) -> bool:
        return any(self.dirichlet)

    @property
    def nontrivial(self) -> bool:
        """False iff the graph is a single cycle (circle or polygon)."""
        return not all(d == 2 for d in self.degrees)

    def vertex_index(self, vid: int) -> int:
        try:
            return self.vertex_ids.index(vid)
        except ValueError:
            raise GraphError(f"unknown vertex id {vid}") from None

    def edge_index(self, eid: int) -> int:
        try:
            return self.edge_ids.index(eid)
        except ValueError:
            raise GraphError(f"unknown edge id {eid}") from None

    def with_lengths(self, lengths: Sequence[float]) -> "MetricGraph":
        if len(lengths) != self.E:
            raise GraphError(f"expected {self.E} lengths, got {len(lengths)}")
        return build_graph(
            vertices=[(vid, d) for vid, d in zip(self.vertex_ids, self.dirichlet)],
            edges=[
                (eid, self.vertex_ids[u], self.vertex_ids[v], float(l))
                for eid, (u, v), l in zip(self.edge_ids, self.endpoints, lengths)
            ],
        )

    def incident(self) -> list[list[int]]:
        """Edge positions incident to each vertex, ascending; loops listed once."""
        inc: list[list[int]] = [[] for _ in range(self.V)]
        for j, (u, v) in enumerate(self.endpoints):
            inc[u].append(j)
            if v != u:
                inc[v].append(j)
        return inc


def build_graph(
    vertices: Iterable[int | tuple[int, bool]],
    edges: Iterable[tuple[int, int, int, float]],
) -> MetricGraph:
    """Validate a structured description and return a :class:`MetricGraph`.

    ``vertices`` holds ids, or ``(id, dirichlet)`` pairs.  ``edges`` holds
    ``(edge_id, u, v, length)`` tuples with vertex ids as endpoints.
    """
    vdict: dict[int, bool] = {}
    for item in vertices:
        vid, dir_flag = (item, False) if isinstance(item, (int, np.integer)) else item
        vid = int(vid)
        if vid in vdict:
            raise GraphError(f"duplicate vertex id {vid}")
        vdict[vid] = bool(dir_flag)
    edict: dict[int, tuple[int, int, float]] = {}
    for eid, u, v, length in edges:
        eid = int(eid)
        if eid in edict:
            raise GraphError(f"duplicate edge id {eid}")
        for w in (u, v):
            if int(w) not in vdict:
                raise GraphError(f"edge {eid} references unknown vertex {w}")
        length = float(length)
        if not math.isfinite(length) or length <= 0.0:
            raise GraphError(f"edge {eid} has non-positive length {length}")
        edict[eid] = (int(u), int(v), length)
    if not edict:
        raise GraphError("graph has no edges")

    vertex_ids = tuple(sorted(vdict))
    vpos = {vid: i for i, vid in enumerate(vertex_ids)}
    edge_ids = tuple(sorted(edict))
    endpoints = tuple((vpos[edict[e][0]], vpos[edict[e][1]]) for e in edge_ids)
    lengths = tuple(edict[e][2] for e in edge_ids)
    g = MetricGraph(
        vertex_ids=vertex_ids,
        dirichlet=tuple(vdict[v] for v in vertex_ids),
        edge_ids=edge_ids,
        endpoints=endpoints,
        lengths=lengths,
    )
    _validate(g)
    return g


def _validate(g: MetricGraph) -> None:
    deg = g.degrees
    for i, d in enumerate(deg):
        if d == 0:
            raise GraphError(f"vertex {g.vertex_ids[i]} is isolated; graph is disconnected")
        if g.dirichlet[i] and d != 1:
            raise GraphError(
                f"Dirichlet condition at vertex {g.vertex_ids[i]} of degree {d} (only degree 1 allowed)"
            )
    if len(_components(g.V, g.endpoints)) != 1:
        raise GraphError("graph is disconnected")


def _components(n: int, endpoints: Iterable[tuple[int, int]]) -> list[set[int]]:
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in endpoints:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups: dict[int, set[int]] = defaultdict(set)
    for a in range(n):
        groups[find(a)].add(a)
    return list(groups.values())


# --- text format -----------------------------------------------------------


def parse_graph(text: str) -> MetricGraph:
    """Parse the line-oriented graph format.

    ::

        # figure of eight
        vertex 0
        edge 0 0 0 pi
        edge 1 0 0 e
    """
    vertices: list[tuple[int, bool]] = []
    edges: list[tuple[int, int, int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vertex":
                if len(tok) not in (2, 3) or (len(tok) == 3 and tok[2].lower() != "dirichlet"):
                    raise GraphError("expected 'vertex <id> [dirichlet]'")
                vertices.append((int(tok[1]), len(tok) == 3))
            elif tok[0] == "edge":
                if len(tok) != 5:
                    raise GraphError("expected 'edge <id> <u> <v> <length>'")
                edges.append((int(tok[1]), int(tok[2]), int(tok[3]), parse_length(tok[4])))
            else:
                raise GraphError(f"unknown record {tok[0]!r}")
        except (GraphError, ValueError) as exc:
            raise GraphError(f"line {lineno}: {exc}") from None
    return build_graph(vertices, edges)


def load_graph(path: str | Path) -> MetricGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def format_graph(g: MetricGraph) -> str:
    lines = [f"vertex {vid}" + (" dirichlet" if d else "") for vid, d in zip(g.vertex_ids, g.dirichlet)]
    for eid, (u, v), l in zip(g.edge_ids, g.endpoints, g.lengths):
        lines.append(f"edge {eid} {g.vertex_ids[u]} {g.vertex_ids[v]} {l!r}")
    return "\n".join(lines) + "\n"


# --- topology ----------------------------------------------------------------


@dataclass(frozen=True)
class TopologySummary:
    beta: int
    total_length: float
    loop_length: float
    generic_fraction: float


def topology_summary(g: MetricGraph) -> TopologySummary:
    total = float(sum(g.lengths))
    loops = float(sum(g.lengths[j] for j in g.loops))
    return TopologySummary(
        beta=g.beta,
        total_length=total,
        loop_length=loops,
        generic_fraction=1.0 - loops / (2.0 * total),
    )


@dataclass(frozen=True)
class CutSet:
    """Edges carrying the magnetic fluxes, one per independent cycle.

    ``edges[j]`` is the edge position holding flux ``alpha[j]``;
    ``orientation[j]`` is ``+1`` when the flux runs along the edge's stored
    direction and ``-1`` otherwise.
    """

    edges: tuple[int, ...]
    orientation: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def flux_index(self) -> dict[int, int]:
        return {e: j for j, e in enumerate(self.edges)}

    def edge_phases(self, alpha: np.ndarray, E: int) -> np.ndarray:
        """Spread flux vectors ``(..., beta)`` to per-edge phases ``(..., E)``."""
        alpha = np.asarray(alpha, dtype=float)
        out = np.zeros(alpha.shape[:-1] + (E,))
        if self.edges:
            out[..., list(self.edges)] = alpha * np.asarray(self.orientation, dtype=float)
        return out


def spanning_cut(g: MetricGraph) -> CutSet:
    """Deterministic cut set: complement of a depth-first spanning tree.

    The search starts at the lowest-id vertex and explores incident edges in
    ascending id order.  Each non-tree edge is oriented away from its endpoint
    that was discovered first.
    """
    inc = g.incident()
    disc = [-1] * g.V
    tree: set[int] = set()
    clock = 0
    disc[0] = clock
    stack: list[tuple[int, int]] = [(0, 0)]  # (vertex, next incidence slot)
    while stack:
        v, slot = stack[-1]
        if slot == len(inc[v]):
            stack.pop()
            continue
        stack[-1] = (v, slot + 1)
        j = inc[v][slot]
        a, b = g.endpoints[j]
        w = b if a == v else a
        if disc[w] < 0:
            clock += 1
            disc[w] = clock
            tree.add(j)
            stack.append((w, 0))
    cut = [j for j in range(g.E) if j not in tree]
    orient = []
    for j in cut:
        u, v = g.endpoints[j]
        orient.append(1 if disc[u] <= disc[v] else -1)
    return CutSet(edges=tuple(cut), orientation=tuple(orient))


# --- blocks --------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    vertices: frozenset[int]
    edges: tuple[int, ...]
    beta: int
    bridge: int | None = None


@dataclass(frozen=True)
class BlockDecomposition:
    """Cyclic biconnected blocks of a graph and the flux partition they induce.

    Only blocks with at least one cycle are listed; acyclic parts (bridges
    and trees) carry no flux.  ``kind`` is ``"edge-separation"`` when no two
    cyclic blocks share a vertex, so every block attaches to the rest of the
    graph through a bridge; otherwise ``"vertex-separation"``.
    """

    blocks: tuple[Block, ...]
    kind: str
    flux_partition: tuple[int, ...]
    disjoint_cycles: bool
    components: tuple[Block, ...] = field(default=(), repr=False)

    @property
    def betas(self) -> tuple[int, ...]:
        return tuple(b.beta for b in self.blocks)

    def flux_slices(self) -> list[list[int]]:
        """For each block, the flux indices it owns."""
        out: list[list[int]] = [[] for _ in self.blocks]
        for j, b in enumerate(self.flux_partition):
            out[b].append(j)
        return out


def biconnected_components(g: MetricGraph) -> list[tuple[frozenset[int], tuple[int, ...]]]:
    """Edge partition into biconnected components (loops form their own).

    Iterative Hopcroft-Tarjan with an edge stack; parallel edges are handled
    by skipping only the specific tree edge used to enter a vertex.
    """
    inc = g.incident()
    disc = [-1] * g.V
    low = [0] * g.V
    comps: list[tuple[frozenset[int], tuple[int, ...]]] = []
    edge_stack: list[int] = []
    clock = 0
    for j in g.loops:
        comps.append((frozenset(g.endpoints[j]), (j,)))

    for root in range(g.V):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = clock
        clock += 1
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]  # vertex, parent edge, slot
        while stack:
            v, pe, slot = stack[-1]
            if slot < len(inc[v]):
                stack[-1] = (v, pe, slot + 1)
                j = inc[v][slot]
                a, b = g.endpoints[j]
                if a == b or j == pe:
                    continue
                w = b if a == v else a
                if disc[w] < 0:
                    edge_stack.append(j)
                    disc[w] = low[w] = clock
                    clock += 1
                    stack.append((w, j, 0))
                elif disc[w] < disc[v]:
                    edge_stack.append(j)
                    low[v] = min(low[v], disc[w])
                continue
            stack.pop()
            if not stack:
                continue
            u = stack[-1][0]
            low[u] = min(low[u], low[v])
            if low[v] >= disc[u]:
                comp_edges = []
                while True:
                    j = edge_stack.pop()
                    comp_edges.append(j)
                    if j == pe:
                        break
                verts = frozenset(x for j in comp_edges for x in g.endpoints[j])
                comps.append((verts, tuple(sorted(comp_edges))))
    comps.sort(key=lambda c: c[1][0])
    return comps


def block_decomposition(g: MetricGraph, cut: CutSet | None = None) -> BlockDecomposition:
    cut = spanning_cut(g) if cut is None else cut
    comps = [
        Block(vertices=vs, edges=es, beta=len(es) - len(vs) + 1)
        for vs, es in biconnected_components(g)
    ]
    cyclic = [b for b in comps if b.beta > 0]

    owner = {}
    for bi, b in enumerate(cyclic):
        for j in b.edges:
            owner[j] = bi
    flux_partition = tuple(owner[j] for j in cut.edges)

    seen: dict[int, int] = {}
    shared = False
    for bi, b in enumerate(cyclic):
        for v in b.vertices:
            if v in seen and seen[v] != bi:
                shared = True
            seen[v] = bi
    kind = "vertex-separation" if shared else "edge-separation"

    if kind == "edge-separation" and len(cyclic) > 1:
        cyclic = _attach_bridges(g, comps, cyclic)
    disjoint = kind == "edge-separation" and all(b.beta == 1 for b in cyclic)
    return BlockDecomposition(
        blocks=tuple(cyclic),
        kind=kind,
        flux_partition=flux_partition,
        disjoint_cycles=disjoint,
        components=tuple(comps),
    )


def _attach_bridges(g: MetricGraph, comps: list[Block], cyclic: list[Block]) -> list[Block]:
    """Give every non-root cyclic block the bridge leaving it towards block 0."""
    bridges = {b.edges[0] for b in comps if b.beta == 0}
    adj: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for j in bridges:
        u, v = g.endpoints[j]
        adj[u].append((j, v))
        adj[v].append((j, u))
    in_block = {v: bi for bi, b in enumerate(cyclic) for v in b.vertices}

    # BFS over bridge/tree edges from the root block; first edge reaching a block is its bridge
    out = list(cyclic)
    frontier = list(cyclic[0].vertices)
    seen_v = set(frontier)
    via: dict[int, int] = {}
    while frontier:
        nxt = []
        for v in sorted(frontier):
            for j, w in sorted(adj[v]):
                if w in seen_v:
                    continue
                seen_v.add(w)
                bi = in_block.get(w)
                if bi is not None and bi != 0 and bi not in via:
                    via[bi] = j
                    nxt.extend(sorted(cyclic[bi].vertices))
                    seen_v.update(cyclic[bi].vertices)
                else:
                    nxt.append(w)
        frontier = nxt
    for bi, j in via.items():
        b = out[bi]
        out[bi] = Block(vertices=b.vertices, edges=b.edges, beta=b.beta, bridge=j)
    return out


def side_of_bridge(g: MetricGraph, bridge: int, start: int) -> frozenset[int]:
    """Edges reachable from vertex position ``start`` without crossing ``bridge``."""
    inc = g.incident()
    seen_v = {start}
    edges: set[int] = set()
    todo = [start]
    while todo:
        v = todo.pop()
        for j in inc[v]:
            if j == bridge:
                continue
            edges.add(j)
            a, b = g.endpoints[j]
            for w in (a, b):
                if w not in seen_v:
                    seen_v.add(w)
                    todo.append(w)
    return frozenset(edges)


def graph_bridges(g: MetricGraph) -> tuple[int, ...]:
    """Edge positions whose removal disconnects the graph."""
    return tuple(es[0] for vs, es in biconnected_components(g) if len(es) == 1 and len(vs) == 2)


def relabel(
    g: MetricGraph,
    vertex_map: Mapping[int, int] | None = None,
) -> MetricGraph:
    """Copy of ``g`` with vertex ids renamed by ``vertex_map`` (ids, not positions)."""
    vm = dict(vertex_map or {})
    return build_graph(
        [(vm.get(v, v), d) for v, d in zip(g.vertex_ids, g.dirichlet)],
        [
            (eid, vm.get(g.vertex_ids[u], g.vertex_ids[u]), vm.get(g.vertex_ids[v], g.vertex_ids[v]), l)
            for eid, (u, v), l in zip(g.edge_ids, g.endpoints, g.lengths)
        ],
    )
