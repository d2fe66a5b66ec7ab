"""Lead scattering matrices, splittings of the secular function and edge contraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import GraphError, MetricGraph, build_graph, side_of_bridge, spanning_cut
from .secular import bond_endpoints, bond_scattering_matrix

__all__ = [
    "InWSet",
    "LoopContraction",
    "ScatteringConfig",
    "Splitting",
    "lead_config",
    "scattering_Z",
    "bridge_splitting",
    "vertex_splitting",
    "splitting_factorization",
    "contract_edge",
    "contraction_prefactor",
    "theta0",
    "det_edge_flux",
]

TWO_PI = 2.0 * np.pi


class InWSet(ArithmeticError):
    """``I - e^{i(x+alpha)} S~`` is singular: an eigenfunction vanishes at every lead vertex."""


class LoopContraction(GraphError):
    """Contracting a loop makes the secular function vanish identically."""


def _bond_phases(x, edge_flux=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ph = np.repeat(x, 2, axis=-1)
    if edge_flux is not None:
        fl = np.broadcast_to(np.asarray(edge_flux, dtype=float), x.shape)
        ph = ph.copy()
        ph[..., 0::2] += fl
        ph[..., 1::2] -= fl
    return ph


def det_edge_flux(S: np.ndarray, x, edge_flux=None) -> np.ndarray:
    """``det(I - e^{i(x + phi)} S)`` with an arbitrary flux ``phi`` per edge."""
    from . import kernels

    return kernels.secular_det(S, _bond_phases(x, edge_flux))


@dataclass(frozen=True)
class ScatteringConfig:
    """Blocks ``r, t, t', S~`` of a graph with leads.

    ``bonds`` selects the internal bonds from a parent bond frame, so the
    same class serves standalone graphs and the halves of a splitting.
    """

    r: np.ndarray
    t: np.ndarray
    tp: np.ndarray
    S_tilde: np.ndarray
    bonds: np.ndarray
    graph: MetricGraph | None = None

    @property
    def M(self) -> int:
        return self.r.shape[0]

    @property
    def extended(self) -> np.ndarray:
        return np.block([[self.r, self.tp], [self.t, self.S_tilde]])

    def J(self) -> np.ndarray:
        n = len(self.bonds)
        return np.eye(n)[np.arange(n) ^ 1]

    def Z_from_phases(self, ph, w_tol: float = 1e-10, raise_w: bool = True) -> np.ndarray:
        """``Z`` for internal bond phases ``ph`` of shape ``(..., n_bonds)``."""
        ph = np.asarray(ph, dtype=float)
        lead = ph.shape[:-1]
        ph = ph.reshape(-1, ph.shape[-1])
        U = np.exp(1j * ph)
        n = self.S_tilde.shape[0]
        A = np.eye(n) - U[:, :, None] * self.S_tilde
        if raise_w:
            smin = np.linalg.svd(A, compute_uv=False)[:, -1]
            if np.any(smin < w_tol):
                raise InWSet(f"smallest singular value {smin.min():.3e}")
        X = np.linalg.solve(A, U[:, :, None] * self.t)
        Z = self.r + self.tp @ X
        return Z.reshape(lead + (self.M, self.M))


def lead_config(g: MetricGraph, leads: Sequence[int]) -> ScatteringConfig:
    """Attach leads at the given vertex positions (repeats allowed)."""
    leads = [int(v) for v in leads]
    for v in leads:
        if g.dirichlet[v]:
            raise GraphError("leads cannot attach to Dirichlet vertices")
    deg = np.asarray(g.degrees, dtype=float)
    for v in leads:
        deg[v] += 1
    S = bond_scattering_matrix(g, degrees=deg)
    orig, term = bond_endpoints(g)
    M = len(leads)
    r = np.zeros((M, M))
    t = np.zeros((2 * g.E, M))
    for i, v in enumerate(leads):
        for j, w in enumerate(leads):
            if v == w:
                r[i, j] = 2.0 / deg[v] - (i == j)
        t[orig == v, i] = 2.0 / deg[v]
    tp = (t[np.arange(2 * g.E) ^ 1]).T.copy()
    return ScatteringConfig(r=r, t=t, tp=tp, S_tilde=S, bonds=np.arange(2 * g.E), graph=g)


def scattering_Z(cfg: ScatteringConfig, x, alpha=None) -> np.ndarray:
    """``Z(x, alpha) = r + t' (I - e^{i(x+alpha)} S~)^{-1} e^{i(x+alpha)} t``.

    ``alpha`` is indexed by the cut set of ``cfg.graph``.
    """
    flux = None
    if alpha is not None and cfg.graph is not None:
        cut = spanning_cut(cfg.graph)
        if len(cut):
            flux = cut.edge_phases(alpha, cfg.graph.E)
    return cfg.Z_from_phases(_bond_phases(x, flux))


# ---------------------------------------------------------------------------
# splittings


def contraction_prefactor(d1: int, d2: int) -> float:
    return 2.0 * (d1 + d2 - 2) / (d1 * d2)


@dataclass(frozen=True)
class Splitting:
    """``[Gamma_1, C, Gamma_2]`` written on an extended graph.

    ``ext`` is the original graph plus one zero-length edge for each split
    vertex; ``edge_map[j]`` gives the original edge position of extended
    edge ``j`` (``-1`` for zero-length connectors).  Connector ``c`` runs
    from ``Gamma_1`` to ``Gamma_2`` when ``orientation[c] = +1``.
    """

    graph: MetricGraph
    ext: MetricGraph
    edge_map: tuple[int, ...]
    edges1: tuple[int, ...]
    edges2: tuple[int, ...]
    connectors: tuple[int, ...]
    orientation: tuple[int, ...]
    zero_length: tuple[bool, ...]
    prefactors: tuple[float, ...]

    @property
    def c(self) -> float:
        """Constant with ``F = c D1 D2 det(...)``: inverse product of the contraction prefactors."""
        return float(1.0 / np.prod(self.prefactors)) if self.prefactors else 1.0

    def ext_coords(self, x, edge_flux=None):
        """Map original coordinates/edge fluxes to the extended graph (connectors at 0)."""
        x = np.asarray(x, dtype=float)
        emap = np.asarray(self.edge_map)
        src = np.where(emap >= 0, emap, 0)
        xe = np.where(emap >= 0, x[..., src], 0.0)
        fe = None
        if edge_flux is not None:
            fl = np.broadcast_to(np.asarray(edge_flux, dtype=float), x.shape)
            fe = np.where(emap >= 0, fl[..., src], 0.0)
        return xe, fe

    def half_configs(self) -> tuple[ScatteringConfig, ScatteringConfig]:
        S = bond_scattering_matrix(self.ext)
        out_b, in_b = [], []  # bond leaving Gamma_1 / entering Gamma_1, per connector
        for c, o in zip(self.connectors, self.orientation):
            fwd, rev = 2 * c, 2 * c + 1
            out_b.append(fwd if o > 0 else rev)
            in_b.append(rev if o > 0 else fwd)
        cfgs = []
        for edges, lead_in, lead_out in ((self.edges1, in_b, out_b), (self.edges2, out_b, in_b)):
            B = np.array(sorted(b for e in edges for b in (2 * e, 2 * e + 1)), dtype=int)
            cfgs.append(
                ScatteringConfig(
                    r=S[np.ix_(lead_out, lead_in)],
                    t=S[np.ix_(B, lead_in)],
                    tp=S[np.ix_(lead_out, B)],
                    S_tilde=S[np.ix_(B, B)],
                    bonds=B,
                )
            )
        return cfgs[0], cfgs[1]

    def Z1(self, x, edge_flux=None) -> np.ndarray:
        """Scattering matrix of ``Gamma_1`` at original coordinates ``x``."""
        xe, fe = self.ext_coords(x, edge_flux)
        c1, _ = self.half_configs()
        return c1.Z_from_phases(_bond_phases(xe, fe)[..., c1.bonds])

    def theta0(self, x) -> np.ndarray:
        """Bridge phase for a single-connector splitting (depends on ``Gamma_1`` only)."""
        if len(self.connectors) != 1:
            raise ValueError("theta0 needs a single connector")
        return _theta_from_Z(self.Z1(x)[..., 0, 0])


def _splitting(g, ext, edge_map, side1_vertices, connectors, zero_length, prefactors):
    edges1, edges2, orient = [], [], []
    conn = set(connectors)
    for j, (u, v) in enumerate(ext.endpoints):
        if j in conn:
            continue
        (edges1 if u in side1_vertices else edges2).append(j)
        if (u in side1_vertices) != (v in side1_vertices):
            raise GraphError("non-connector edge crosses the splitting")
    for c in connectors:
        u, v = ext.endpoints[c]
        if (u in side1_vertices) == (v in side1_vertices):
            raise GraphError("connector does not join the two sides")
        orient.append(1 if u in side1_vertices else -1)
    if not edges1 or not edges2:
        raise GraphError("both sides of a splitting need edges")
    return Splitting(
        graph=g,
        ext=ext,
        edge_map=tuple(edge_map),
        edges1=tuple(edges1),
        edges2=tuple(edges2),
        connectors=tuple(connectors),
        orientation=tuple(orient),
        zero_length=tuple(zero_length),
        prefactors=tuple(prefactors),
    )


def bridge_splitting(g: MetricGraph, bridge: int, side1_vertex: int | None = None) -> Splitting:
    """Split at a bridge edge (the single connector).

    ``Gamma_1`` is the side containing vertex position ``side1_vertex``
    (default: the bridge's first endpoint).
    """
    u, v = g.endpoints[bridge]
    if u == v:
        raise GraphError("a loop is not a bridge")
    start = u if side1_vertex is None else side1_vertex
    edges = side_of_bridge(g, bridge, start)
    if any(bridge == j for j in edges) or any(set(g.endpoints[j]) & {u, v} == {u, v} for j in edges):
        raise GraphError(f"edge {g.edge_ids[bridge]} is not a bridge")
    side1 = {start} | {w for j in edges for w in g.endpoints[j]}
    if u in side1 and v in side1:
        raise GraphError(f"edge {g.edge_ids[bridge]} is not a bridge")
    return _splitting(g, g, range(g.E), side1, [bridge], [False], [])


def vertex_splitting(g: MetricGraph, w: int, edges2: Sequence[int]) -> Splitting:
    """Split cut vertex ``w`` with a zero-length connector.

    Edges in ``edges2`` (positions) move their ``w`` endpoints to a new
    vertex ``w'``; everything reachable from them without passing ``w``
    forms ``Gamma_2``.
    """
    edges2 = set(int(j) for j in edges2)
    new_id = max(g.vertex_ids) + 1
    wid = g.vertex_ids[w]
    vlist = [(vid, d) for vid, d in zip(g.vertex_ids, g.dirichlet)] + [(new_id, False)]
    elist = []
    for j, (eid, (a, b), l) in enumerate(zip(g.edge_ids, g.endpoints, g.lengths)):
        ia, ib = g.vertex_ids[a], g.vertex_ids[b]
        if j in edges2:
            ia = new_id if a == w else ia
            ib = new_id if b == w else ib
        elist.append((eid, ia, ib, l))
    conn_id = max(g.edge_ids) + 1
    elist.append((conn_id, wid, new_id, 1.0))  # nominal length; coordinate pinned to 0
    ext = build_graph(vlist, elist)
    c = ext.edge_index(conn_id)
    edge_map = [g.edge_index(eid) if eid != conn_id else -1 for eid in ext.edge_ids]
    # side 1: vertices reachable from w without the connector
    side1 = set()
    todo = [ext.vertex_index(wid)]
    inc = ext.incident()
    while todo:
        a = todo.pop()
        if a in side1:
            continue
        side1.add(a)
        for j in inc[a]:
            if j != c:
                todo.extend(ext.endpoints[j])
    deg = ext.degrees
    d1, d2 = deg[ext.vertex_index(wid)], deg[ext.vertex_index(new_id)]
    return _splitting(g, ext, edge_map, side1, [c], [True], [contraction_prefactor(d1, d2)])


@dataclass
class FactorizationResult:
    F: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    inner: np.ndarray
    c: float
    residual: np.ndarray


def splitting_factorization(split: Splitting, x, edge_flux=None) -> FactorizationResult:
    """Evaluate ``F`` and ``c D1 D2 det(I - e^{i(x0+a0)} Z1 e^{i(x0-a0)} Z2)``.

    ``x`` and ``edge_flux`` live on the original graph; ``edge_flux`` is a
    per-edge flux (see :meth:`CutSet.edge_phases`).
    """
    g = split.graph
    x = np.atleast_2d(np.asarray(x, dtype=float))
    F = det_edge_flux(bond_scattering_matrix(g), x, edge_flux)
    xe, fe = split.ext_coords(x, edge_flux)
    ph = _bond_phases(xe, fe)
    c1, c2 = split.half_configs()
    D1 = np.linalg.det(np.eye(len(c1.bonds)) - np.exp(1j * ph[:, c1.bonds])[:, :, None] * c1.S_tilde)
    D2 = np.linalg.det(np.eye(len(c2.bonds)) - np.exp(1j * ph[:, c2.bonds])[:, :, None] * c2.S_tilde)
    Z1 = c1.Z_from_phases(ph[:, c1.bonds], raise_w=False)
    Z2 = c2.Z_from_phases(ph[:, c2.bonds], raise_w=False)
    out_b = np.array([2 * c if o > 0 else 2 * c + 1 for c, o in zip(split.connectors, split.orientation)])
    in_b = out_b ^ 1
    P_out = np.exp(1j * ph[:, out_b])  # e^{i(x0 + a0)}: Gamma_1 -> Gamma_2
    P_in = np.exp(1j * ph[:, in_b])
    M = len(out_b)
    inner = np.linalg.det(np.eye(M) - P_out[:, :, None] * Z1 @ (P_in[:, :, None] * Z2))
    rhs = split.c * D1 * D2 * inner
    resid = np.abs(F - rhs)
    return FactorizationResult(F=F, D1=D1, D2=D2, inner=inner, c=split.c, residual=resid)


def contract_edge(g: MetricGraph, e: int) -> tuple[MetricGraph, float]:
    """Merge the endpoints of edge position ``e``; returns the graph and ``2(d1+d2-2)/(d1 d2)``."""
    u, v = g.endpoints[e]
    if u == v:
        raise LoopContraction(f"edge {g.edge_ids[e]} is a loop; F(0, .) vanishes identically")
    if g.dirichlet[u] or g.dirichlet[v]:
        raise GraphError("contraction needs Neumann endpoints")
    d1, d2 = g.degrees[u], g.degrees[v]
    keep, drop = (u, v) if g.vertex_ids[u] < g.vertex_ids[v] else (v, u)
    kid = g.vertex_ids[keep]
    verts = [(vid, d) for i, (vid, d) in enumerate(zip(g.vertex_ids, g.dirichlet)) if i != drop]
    edges = []
    for j, (eid, (a, b), l) in enumerate(zip(g.edge_ids, g.endpoints, g.lengths)):
        if j == e:
            continue
        ia = kid if a == drop else g.vertex_ids[a]
        ib = kid if b == drop else g.vertex_ids[b]
        edges.append((eid, ia, ib, l))
    return build_graph(verts, edges), contraction_prefactor(d1, d2)


def theta0(cfg1: ScatteringConfig, x1, edge_flux=None) -> np.ndarray:
    """Bridge phase ``theta_0`` in ``[0, pi)`` from the one-lead matrix of ``Gamma_1``.

    With ``f = C cos(y - theta_0)`` on the bridge (``y`` from the
    ``Gamma_1`` end) the outgoing/incoming ratio is ``Z_1 = e^{-2 i theta_0}``.
    """
    if cfg1.M != 1:
        raise ValueError("theta0 needs exactly one lead")
    return _theta_from_Z(cfg1.Z_from_phases(_bond_phases(x1, edge_flux))[..., 0, 0])


def _theta_from_Z(Z: np.ndarray) -> np.ndarray:
    if np.any(np.abs(np.abs(Z) - 1.0) > 1e-10):
        raise ArithmeticError("one-lead scattering matrix is not unimodular")
    return np.mod(-0.5 * np.angle(Z), np.pi)
