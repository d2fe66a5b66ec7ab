"""Seeded suite of numerical identities used by ``nodal-surplus verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builtins import closed_form_FR
from .graph import GraphError, MetricGraph, block_decomposition, graph_bridges
from .scattering import (
    InWSet,
    bridge_splitting,
    contract_edge,
    det_edge_flux,
    lead_config,
    scattering_Z,
    splitting_factorization,
    vertex_splitting,
)
from .secular import SecularSystem, bond_scattering_matrix, fd_crosscheck
from .spectrum import SpectralScanConfig, scan_spectrum
from .stats import bridge_reflection, inversion_check, local_surplus, surplus_morse

__all__ = ["Check", "verify_suite", "cut_vertex_splittings"]

TWO_PI = 2.0 * np.pi


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}){' ' + self.note if self.note else ''}"


def _check(name, value, threshold, note="", strict=True) -> Check:
    value = float(value)
    ok = value < threshold if strict else value <= threshold
    return Check(name, value, threshold, bool(ok and np.isfinite(value)), note)


def cut_vertex_splittings(g: MetricGraph):
    """One zero-length splitting per cut vertex that separates cyclic blocks.

    ``Gamma_2`` takes the edges of every biconnected component at the vertex
    except the one with the smallest edge id.
    """
    bd = block_decomposition(g)
    comps = bd.components
    out = []
    for w in range(g.V):
        at_w = [c for c in comps if w in c.vertices]
        if len(at_w) < 2:
            continue
        first = min(at_w, key=lambda c: c.edges[0])
        moved = set()
        # move every component hanging off w (with everything behind it) except the first
        for c in at_w:
            if c is first:
                continue
            moved |= _behind(g, w, c.edges)
        touching = [j for j in moved if w in g.endpoints[j]]
        if touching and len(moved) < g.E:
            try:
                out.append((w, vertex_splitting(g, w, touching)))
            except GraphError:
                pass
    return out


def _behind(g: MetricGraph, w: int, start_edges) -> set[int]:
    inc = g.incident()
    edges = set(start_edges)
    verts = {v for j in start_edges for v in g.endpoints[j]} - {w}
    todo = list(verts)
    while todo:
        v = todo.pop()
        for j in inc[v]:
            if j in edges:
                continue
            edges.add(j)
            for u in g.endpoints[j]:
                if u != w and u not in verts:
                    verts.add(u)
                    todo.append(u)
    return edges


def verify_suite(g: MetricGraph, seed: int = 0, n_points: int = 1000, n_reflect: int = 100,
                 name: str | None = None, tamper: bool = False) -> list[Check]:
    rng = np.random.default_rng(seed)
    S = bond_scattering_matrix(g)
    if tamper:
        S = S.copy()
        S[0, 0] += 1e-3
    sysm = SecularSystem(g, S)
    E, beta = g.E, sysm.beta
    checks: list[Check] = []

    n = 2 * E
    checks.append(_check("S orthogonality", np.max(np.abs(S @ S.T - np.eye(n))), 1e-12))

    x = rng.uniform(0, TWO_PI, (n_points, E))
    a = rng.uniform(0, TWO_PI, (n_points, beta))
    z = sysm.FR_complex(x, a)
    checks.append(_check("F_R realness", np.max(np.abs(z.imag) / np.maximum(1.0, np.abs(z))), 1e-8))
    zm = sysm.FR(-x, -a)
    sym = min(np.max(np.abs(z.real - zm)), np.max(np.abs(z.real + zm))) / max(1.0, np.max(np.abs(z)))
    checks.append(_check("F_R(-x,-a) = +-F_R(x,a)", sym, 1e-10))

    fd = fd_crosscheck(g, S, x, system=sysm)
    checks.append(_check("derivatives vs finite differences", fd.max_residual, 1e-6))

    if name in ("figure8", "dumbbell"):
        ref = closed_form_FR(name, x, a)
        err = np.max(np.abs(z.real - ref) / np.maximum(1.0, np.abs(ref)))
        checks.append(_check(f"closed form {name}", err, 1e-10))

    # lead scattering matrices
    zu = zc = zt = ext = 0.0
    for leads in ([0], list(range(g.V)), [0, 0]):
        cfg = lead_config(g, leads)
        ext = max(ext, np.max(np.abs(cfg.extended @ cfg.extended.T - np.eye(cfg.extended.shape[0]))))
        m = min(200, n_points)
        xs, al = x[:m], rng.uniform(0, TWO_PI, (m, beta))
        try:
            Z = scattering_Z(cfg, xs, al)
            Zm = scattering_Z(cfg, -xs, -al)
            Zt = scattering_Z(cfg, xs, -al)
        except InWSet:
            continue
        I = np.eye(cfg.M)
        zu = max(zu, np.max(np.abs(Z @ np.conj(np.swapaxes(Z, 1, 2)) - I)))
        zc = max(zc, np.max(np.abs(Zm - np.conj(Z))))
        zt = max(zt, np.max(np.abs(Zt - np.swapaxes(Z, 1, 2))))
    checks.append(_check("extended scattering matrix orthogonality", ext, 1e-12))
    checks.append(_check("Z unitarity", zu, 1e-10))
    checks.append(_check("Z(-x,-a) = conj Z(x,a)", zc, 1e-10))
    checks.append(_check("Z(x,-a) = Z(x,a)^T", zt, 1e-10))

    # splittings: every bridge and every cut vertex
    fl = sysm.cut.edge_phases(a, E)
    res = 0.0
    nsplit = 0
    splits = []
    for b in graph_bridges(g):
        try:
            splits.append(bridge_splitting(g, b))
        except GraphError:  # pendant edge: one side is empty
            pass
    splits += [s for _, s in cut_vertex_splittings(g)]
    for sp in splits:
        r = splitting_factorization(sp, x, fl)
        res = max(res, float(np.max(r.residual / np.maximum(1.0, np.abs(r.F)))))
        nsplit += 1
    if nsplit:
        checks.append(_check("splitting factorization", res, 1e-9, f"{nsplit} splittings"))

    # edge contraction
    cres = 0.0
    ncon = 0
    for e in range(E):
        u, v = g.endpoints[e]
        if u == v or g.dirichlet[u] or g.dirichlet[v]:
            continue
        gc, p = contract_edge(g, e)
        xs = x[:100].copy()
        xs[:, e] = 0.0
        f = fl[:100].copy()
        f[:, e] = 0.0
        keep = [j for j in range(E) if j != e]
        F = det_edge_flux(S, xs, f)
        Fc = det_edge_flux(bond_scattering_matrix(gc), xs[:, keep], f[:, keep])
        cres = max(cres, float(np.max(np.abs(F - p * Fc) / np.maximum(1.0, np.abs(F)))))
        ncon += 1
    if ncon:
        checks.append(_check("contraction identity", cres, 1e-9, f"{ncon} edges"))
    if name == "dumbbell":
        _, p = contract_edge(g, 1)
        checks.append(_check("dumbbell contraction prefactor = 8/9", abs(p - 8.0 / 9.0), 0.0, strict=False))

    # spectral points: block structure, inversion, bridge reflection
    spec = scan_spectrum(g, SpectralScanConfig(N=max(200, int(2.5 * n_points))), system=SecularSystem(g))
    xg = spec.x[spec.generic][:n_points]
    blocks = block_decomposition(g, sysm.cut)
    if beta and xg.size:
        _, off, _ = local_surplus(sysm, xg, spec.lengths, blocks, raise_errors=False)
        checks.append(_check("Hessian off-block entries / |H|", np.max(off), 1e-8))
        sig, degen, zg = surplus_morse(sysm, xg, spec.lengths, raise_errors=False)
        use = ~degen & ~zg
        inv = inversion_check(sysm, xg[use], spec.lengths, sigma=sig[use])
        checks.append(_check("inversion sigma(-x) = beta - sigma(x) failures", np.sum(~inv.ok), 0.5,
                             f"{use.sum()} points"))
    if blocks.kind == "edge-separation" and len(blocks.blocks) >= 2 and xg.size:
        bad = 0
        npts = 0
        for bi in range(1, len(blocks.blocks)):
            br = blocks.blocks[bi].bridge
            u, v = g.endpoints[br]
            inside = blocks.blocks[bi].vertices
            side1 = v if u in _reach(g, br, inside) else u
            sp = bridge_splitting(g, br, side1_vertex=side1)
            xs = xg[:n_reflect]
            _, chk = bridge_reflection(sysm, sp, xs, spec.lengths, blocks)
            bad += int(np.sum(~chk.ok))
            npts += len(xs)
        checks.append(_check("bridge reflection failures", bad, 0.5, f"{npts} points"))
    return checks


def _reach(g: MetricGraph, bridge: int, block_vertices) -> set[int]:
    """Vertices on the block's side of ``bridge``."""
    from .graph import side_of_bridge

    start = next(iter(block_vertices))
    edges = side_of_bridge(g, bridge, start)
    return {start} | {w for j in edges for w in g.endpoints[j]}
