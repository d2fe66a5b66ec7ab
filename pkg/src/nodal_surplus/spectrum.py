"""Eigenvalues as zeros of F_R along the flow ``x = k l mod 2pi``.

The k-axis is sampled on the grid ``k_j = (j + 1/4) dk`` with
``dk = pi / (L * oversample)``.  Sign changes are refined by a safeguarded
Illinois iteration; local minima of ``|F_R|`` without a sign change are
searched by golden section for hidden root pairs or double roots.  The grid
is processed in fixed chunks addressed by global sample index, so the result
does not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .eigenfunction import _calibrated, null_space, vertex_values
from .graph import MetricGraph
from .secular import SecularSystem

__all__ = [
    "ScanTooCoarse",
    "SpectralScanConfig",
    "EigenvalueRecord",
    "Spectrum",
    "CLASSES",
    "loop_lattice",
    "scan_spectrum",
    "classify_point",
]

TWO_PI = 2.0 * np.pi
CLASSES = ("generic", "loop_state", "zero_mode", "degenerate", "vertex_vanishing")
GENERIC, LOOP, ZERO, DEGEN, VANISH = range(5)
EPS = np.finfo(float).eps


class ScanTooCoarse(RuntimeError):
    """Fewer eigenvalues than the Weyl law predicts; rerun with larger oversample."""


@dataclass(frozen=True)
class SpectralScanConfig:
    lengths: tuple[float, ...] | None = None
    N: int | None = None
    K: float | None = None
    oversample: int = 8
    tol: float = 1e-12
    dip_threshold: float = 1e-6
    chunk: int = 1 << 15
    workers: int = 1

    def __post_init__(self):
        if self.oversample < 4:
            raise ValueError("oversample must be at least 4")
        if (self.N is None) == (self.K is None):
            raise ValueError("give exactly one of N and K")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be >= 1")
        if self.K is not None and not self.K > 0:
            raise ValueError("K must be positive")


@dataclass(frozen=True)
class EigenvalueRecord:
    n: int
    k: float
    multiplicity: int
    cls: str
    x: tuple[float, ...]
    flagged: bool = False


@dataclass
class Spectrum:
    """Columnar eigenvalue table; ``records()`` gives row objects."""

    graph: MetricGraph
    lengths: np.ndarray
    k: np.ndarray
    n: np.ndarray
    multiplicity: np.ndarray
    cls: np.ndarray  # int codes into CLASSES
    flagged: np.ndarray
    amplitudes: np.ndarray  # (R, 2E) complex; zero rows where not simple
    vertex_min: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.k)

    @property
    def x(self) -> np.ndarray:
        return np.mod(self.k[:, None] * self.lengths, TWO_PI)

    @property
    def class_names(self) -> np.ndarray:
        return np.asarray(CLASSES, dtype=object)[self.cls]

    @property
    def generic(self) -> np.ndarray:
        return (self.cls == GENERIC) & ~self.flagged

    @property
    def count(self) -> int:
        """Number of eigenvalues counted with multiplicity."""
        return int(self.multiplicity.sum())

    def records(self) -> list[EigenvalueRecord]:
        xs = self.x
        return [
            EigenvalueRecord(
                n=int(self.n[i]),
                k=float(self.k[i]),
                multiplicity=int(self.multiplicity[i]),
                cls=CLASSES[self.cls[i]],
                x=tuple(float(v) for v in xs[i]),
                flagged=bool(self.flagged[i]),
            )
            for i in range(len(self))
        ]


def loop_lattice(g: MetricGraph, lengths: Sequence[float] | None, K: float) -> list[tuple[float, int]]:
    """All ``(2 pi m / l_e, edge id) <= K`` over loop edges, sorted by k."""
    ls = g.lengths if lengths is None else lengths
    out = []
    for j in g.loops:
        mmax = int(math.floor(K * ls[j] / TWO_PI)) + 1
        for m in range(1, mmax + 1):
            k = TWO_PI * m / ls[j]
            if k <= K:
                out.append((k, g.edge_ids[j]))
    out.sort()
    return out


# ---------------------------------------------------------------------------
# root finding


class _Flow:
    def __init__(self, system: SecularSystem, lengths: np.ndarray):
        self.sys = system
        self.l = lengths

    def __call__(self, k: np.ndarray) -> np.ndarray:
        return self.sys.FR(np.mod(np.asarray(k)[..., None] * self.l, TWO_PI))


def _illinois(f, a, b, fa, fb, max_iter: int = 200):
    """Vectorized safeguarded regula falsi on brackets with ``fa * fb < 0``."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    side = np.zeros(a.shape, dtype=int)
    width0 = b - a
    hit = np.full(a.shape, np.nan)
    active = np.ones(a.shape, dtype=bool)
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        A, B, FA, FB = a[idx], b[idx], fa[idx], fb[idx]
        C = (A * FB - B * FA) / (FB - FA)
        # every fourth step bisect if the bracket is not shrinking fast enough
        if it % 4 == 3:
            C = np.where((B - A) > 0.25 * width0[idx], 0.5 * (A + B), C)
            width0[idx] = B - A
        C = np.where((C > A) & (C < B), C, 0.5 * (A + B))
        FC = f(C)
        exact = FC == 0
        left = (FC * FA > 0) & ~exact  # root in [C, B]
        right = ~left & ~exact
        hit[idx[exact]] = C[exact]
        A = np.where(left, C, A)
        FA = np.where(left, FC, FA)
        B = np.where(right, C, B)
        FB = np.where(right, FC, FB)
        # Illinois: halve the stale endpoint value when the same side repeats
        s = side[idx]
        FB = np.where(left & (s == 1), 0.5 * FB, FB)
        FA = np.where(right & (s == -1), 0.5 * FA, FA)
        side[idx] = np.where(left, 1, np.where(right, -1, 0))
        a[idx], b[idx], fa[idx], fb[idx] = A, B, FA, FB
        done = exact | ((B - A) <= 4 * EPS * np.maximum(1.0, np.abs(B)))
        active[idx[done]] = False
    fa_t, fb_t = f(a), f(b)
    den = np.where(fb_t != fa_t, fb_t - fa_t, 1.0)
    r = np.where(fb_t != fa_t, (a * fb_t - b * fa_t) / den, 0.5 * (a + b))
    r = np.where((r >= a) & (r <= b), r, 0.5 * (a + b))
    r = np.where(np.isnan(hit), r, hit)
    return r, np.where(np.isnan(hit), b - a, 0.0)


def _golden_min(f, a, b, n_iter: int = 100):
    """Vectorized golden-section minimization of ``f`` on ``[a, b]``."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n_iter):
        lt = fc < fd
        a = np.where(lt, a, c)
        b = np.where(lt, d, b)
        nc = np.where(lt, b - gr * (b - a), d)
        nd = np.where(lt, c, a + gr * (b - a))
        fp = f(np.where(lt, nc, nd))
        fc, fd = np.where(lt, fp, fd), np.where(lt, fc, fp)
        c, d = nc, nd
        if np.all(b - a <= 8 * EPS * np.maximum(1.0, np.abs(b))):
            break
    return 0.5 * (a + b)


def _phase_sum(S: np.ndarray, lengths: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Sum of the eigenphases of ``e^{ikl} S``, each reduced to ``[0, 2pi)``."""
    ph = np.repeat(np.mod(k[:, None] * lengths, TWO_PI), 2, axis=1)
    ev = np.linalg.eigvals(np.exp(1j * ph)[:, :, None] * S)
    return np.mod(np.angle(ev), TWO_PI).sum(axis=1)


def _grid_roots(flow: _Flow, S: np.ndarray, k: np.ndarray, f: np.ndarray, dip_thr: float, first_dip: bool = True):
    """Roots detected from samples ``f = F_R(k)``; ``k[0]`` and ``k[-1]`` are padding.

    Returns ``(roots, n_near_miss)``.
    """
    ks, fs = k[1:-1], f[1:-1]
    kn, fn = k[2:], f[2:]
    kp, fp = k[:-2], f[:-2]
    roots = [ks[fs == 0]]

    sc = fs * fn < 0
    if sc.any():
        r, _ = _illinois(flow, ks[sc], kn[sc], fs[sc], fn[sc])
        roots.append(r)

    af = np.abs(f)
    dip = (af[1:-1] < af[:-2]) & (af[1:-1] < af[2:]) & (fs * fn > 0) & (fs * fp > 0)
    if not first_dip:
        dip[0] = False
    near = 0
    if dip.any():
        sgn = np.sign(fs[dip])
        lo, hi = kp[dip], kn[dip]
        kmin = _golden_min(lambda kk: sgn * flow(kk), lo, hi)
        fmin = flow(kmin)
        crossed = sgn * fmin < 0
        if crossed.any():
            r1, _ = _illinois(flow, lo[crossed], kmin[crossed], fp[dip][crossed], fmin[crossed])
            r2, _ = _illinois(flow, kmin[crossed], hi[crossed], fmin[crossed], fn[dip][crossed])
            roots += [r1, r2]
        scale = np.maximum(np.abs(fp[dip]), np.abs(fn[dip]))
        cand = ~crossed & (np.abs(fmin) < dip_thr * scale)
        if cand.any():
            smin = lambda kk: null_space(S, np.mod(kk[:, None] * flow.l, TWO_PI))[0][:, -1]
            w = 0.5 * (hi[cand] - lo[cand])
            kc = _golden_min(smin, np.maximum(kmin[cand] - w, lo[cand]), np.minimum(kmin[cand] + w, hi[cand]))
            _, mult, _ = null_space(S, np.mod(kc[:, None] * flow.l, TWO_PI))
            roots.append(kc[mult >= 1])
            near += int(np.sum(mult == 0))
        near += int(np.sum(~crossed & ~cand))
    return np.concatenate(roots), near


def _scan_chunk(flow: _Flow, S: np.ndarray, dk: float, j0: int, j1: int, dip_thr: float,
                block: int = 64, max_depth: int = 3):
    """Roots in ``(k_{j0}, k_{j1}]``; returns ``(roots, stats)``.

    Every ``block`` samples the exact root count from the eigenphase sum is
    compared with what the sampling found; short blocks are rescanned on a
    grid refined eightfold, up to ``max_depth`` times.
    """
    j = np.arange(j0 - 1, j1 + 1)
    k = (j + 0.25) * dk
    f = flow(k)
    roots, near = _grid_roots(flow, S, k, f, dip_thr, first_dip=j0 > 0)
    k_lo, k_hi = k[1], k[-1]
    roots = _dedupe(roots[(roots > k_lo) & (roots <= k_hi)])

    edges = k[1::block]
    if edges[-1] != k_hi:
        edges = np.append(edges, k_hi)
    theta = _phase_sum(S, flow.l, edges)
    L2 = 2.0 * float(flow.l.sum())
    expect = np.rint((L2 * np.diff(edges) + theta[:-1] - theta[1:]) / TWO_PI).astype(int)
    stats = {"near_misses": near, "refined_blocks": 0, "unresolved": 0}
    extra = []
    found = np.diff(np.searchsorted(roots, edges, side="right"))
    for b in np.flatnonzero(found < expect):
        a_, b_ = edges[b], edges[b + 1]
        have = roots[(roots > a_) & (roots <= b_)]
        for depth in range(1, max_depth + 1):
            m = int(round((b_ - a_) / dk)) * 8 ** depth
            h = (b_ - a_) / m
            kf = a_ + (np.arange(-1, m + 1) + 0.5) * h
            rf, nm = _grid_roots(flow, S, kf, flow(kf), dip_thr)
            rf = rf[(rf > a_) & (rf <= b_)]
            have = _dedupe(np.concatenate([have, rf]))
            stats["refined_blocks"] += 1
            if have.size >= expect[b]:
                break
        if have.size < expect[b]:
            # a degenerate eigenvalue accounts for several phase crossings
            _, mult, _ = null_space(S, np.mod(have[:, None] * flow.l, TWO_PI))
            if int(np.maximum(mult, 1).sum()) < expect[b]:
                stats["unresolved"] += int(expect[b] - np.maximum(mult, 1).sum())
        extra.append(have)
    if extra:
        roots = _dedupe(np.concatenate([roots] + extra))
    return roots, stats


def _dedupe(k: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    k = np.sort(k)
    if k.size == 0:
        return k
    keep = np.ones(k.size, dtype=bool)
    keep[1:] = np.diff(k) > tol
    return k[keep]


def _merge_lattice(k: np.ndarray, lattice: np.ndarray, tol: float = 1e-9):
    """Snap roots to loop-lattice values; insert lattice values that were missed."""
    if lattice.size == 0:
        return k, 0
    k = k.copy()
    pos = np.searchsorted(k, lattice)
    inserted = []
    for lat, p in zip(lattice, pos):
        best = None
        for q in (p - 1, p):
            if 0 <= q < k.size and abs(k[q] - lat) <= tol * max(1.0, lat):
                best = q if best is None or abs(k[q] - lat) < abs(k[best] - lat) else best
        if best is None:
            inserted.append(lat)
        else:
            k[best] = lat
    if inserted:
        k = np.sort(np.concatenate([k, inserted]))
    return k, len(inserted)


# ---------------------------------------------------------------------------
# classification


def classify_point(g: MetricGraph, S: np.ndarray, x, lengths=None):
    """Class codes, multiplicity, calibrated amplitudes and diagnostics for points on Sigma.

    Returns ``(cls, mult, amps, vmin, flagged)`` with ``amps`` zero where the
    null space is not one-dimensional.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B = x.shape[0]
    s, mult, a = null_space(S, x)
    mult = np.maximum(mult, 1)
    cls = np.full(B, GENERIC, dtype=np.int8)
    flagged = np.zeros(B, dtype=bool)
    amps = np.zeros((B, S.shape[0]), dtype=complex)
    vmin = np.full(B, np.nan)

    simple = mult == 1
    if simple.any():
        ba = _calibrated(g, S, x[simple], a[simple])
        amps[simple] = ba.a
        vals = vertex_values(g, x[simple], ba.a)
        neumann = ~np.asarray(g.dirichlet)
        vmin[simple] = np.min(np.abs(vals[:, neumann]), axis=1) if neumann.any() else np.inf

    loops = list(g.loops)
    on_loop = np.zeros(B, dtype=bool)
    if loops:
        xl = x[:, loops]
        on_loop = np.any(np.minimum(xl, TWO_PI - xl) < 1e-9, axis=1)

    cls[simple & (vmin < 1e-8)] = VANISH
    flagged |= simple & (vmin >= 1e-10) & (vmin <= 1e-8)
    cls[on_loop] = LOOP
    flagged[on_loop] = False
    cls[mult >= 2] = DEGEN
    flagged[mult >= 2] = False
    return cls, mult, amps, vmin, flagged


# ---------------------------------------------------------------------------
# driver


def scan_spectrum(g: MetricGraph, cfg: SpectralScanConfig, system: SecularSystem | None = None) -> Spectrum:
    """Locate, index and classify the eigenvalues requested by ``cfg``."""
    lengths = np.asarray(g.lengths if cfg.lengths is None else cfg.lengths, dtype=float)
    if lengths.shape != (g.E,) or np.any(lengths <= 0):
        raise ValueError("lengths must be a positive vector with one entry per edge")
    gl = g if cfg.lengths is None else g.with_lengths(lengths)
    sysm = system if system is not None else SecularSystem(gl)
    S = sysm.S
    flow = _Flow(sysm, lengths)
    L = float(lengths.sum())
    dk = np.pi / (L * cfg.oversample)
    zero_mode = not g.has_dirichlet

    found: list[np.ndarray] = []
    stats = {"near_misses": 0, "refined_blocks": 0, "unresolved": 0}
    n_have = 1 if zero_mode else 0
    chunk = cfg.chunk
    c = 0
    K = cfg.K
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        while True:
            if K is not None:
                jmax = int(math.ceil(K / dk))  # grid up to and beyond K
                starts = list(range(c * chunk, jmax, chunk))
                if not starts:
                    break
            else:
                starts = [(c + i) * chunk for i in range(max(1, cfg.workers))]
            res = list(pool.map(lambda j0: _scan_chunk(flow, S, dk, j0, j0 + chunk, cfg.dip_threshold), starts))
            for r, st in res:
                found.append(r)
                for key, v in st.items():
                    stats[key] += v
            c += len(starts)
            if K is not None:
                break
            # assume simple roots for the stopping test; multiplicity only helps
            n_have = (1 if zero_mode else 0) + sum(len(r) for r in found)
            if n_have >= cfg.N:
                break

    k = _dedupe(np.concatenate(found) if found else np.zeros(0))
    k_end = c * chunk * dk if K is None else K
    lattice = np.array([v for v, _ in loop_lattice(g, lengths, k_end)])
    k, inserted = _merge_lattice(k, lattice)
    if K is not None:
        k = k[k <= K]

    x = np.mod(k[:, None] * lengths, TWO_PI)
    cls, mult, amps, vmin, flagged = classify_point(g, S, x) if k.size else (
        np.zeros(0, np.int8), np.zeros(0, int), np.zeros((0, 2 * g.E), complex), np.zeros(0), np.zeros(0, bool))
    if zero_mode:
        k = np.concatenate([[0.0], k])
        cls = np.concatenate([[ZERO], cls]).astype(np.int8)
        mult = np.concatenate([[1], mult])
        amps = np.vstack([np.zeros((1, 2 * g.E), complex), amps])
        vmin = np.concatenate([[np.nan], vmin])
        flagged = np.concatenate([[False], flagged])
    n = 1 + np.concatenate([[0], np.cumsum(mult)[:-1]]) if k.size else np.zeros(0, int)

    if cfg.N is not None:
        keep = n <= cfg.N
        k, cls, mult, amps, vmin, flagged, n = (v[keep] for v in (k, cls, mult, amps, vmin, flagged, n))
        K_eff = float(k[-1]) if k.size else 0.0
    else:
        K_eff = float(K)

    expected = K_eff * L / np.pi
    counted = int(mult.sum())
    deficit = expected - counted - (g.E + 1)
    diag = {
        "K": K_eff,
        "dk": dk,
        "weyl_expected": expected,
        "weyl_ratio": counted / expected if expected > 0 else float("nan"),
        **stats,
        "inserted_loop_states": inserted,
        "flagged": int(flagged.sum()),
        "class_counts": {CLASSES[i]: int(np.sum(cls == i)) for i in range(len(CLASSES))},
    }
    if expected > 50 and deficit > 0.02 * expected:
        raise ScanTooCoarse(
            f"found {counted} eigenvalues below k={K_eff:.6g}, Weyl law expects {expected:.1f}; "
            f"rerun with oversample > {cfg.oversample}"
        )
    return Spectrum(
        graph=gl,
        lengths=lengths,
        k=k,
        n=n.astype(np.int64),
        multiplicity=mult.astype(np.int64),
        cls=cls.astype(np.int8),
        flagged=flagged,
        amplitudes=amps,
        vertex_min=vmin,
        diagnostics=diag,
    )
