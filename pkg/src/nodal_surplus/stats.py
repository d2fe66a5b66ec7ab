"""Surplus from the flux Hessian, local surpluses and empirical distributions."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .eigenfunction import count_zeros, edge_waves, vertex_values
from .graph import BlockDecomposition, MetricGraph, block_decomposition
from .secular import SecularSystem
from .spectrum import GENERIC, SpectralScanConfig, Spectrum, classify_point, scan_spectrum

__all__ = [
    "DegenerateHessian",
    "ZeroGradientProjection",
    "TooFewSamples",
    "morse_index",
    "surplus_morse",
    "local_surplus",
    "SurplusSamples",
    "surplus_samples",
    "SurplusDistribution",
    "estimate_distribution",
    "distribution_from_samples",
    "distribution_diagnostics",
    "conditional_tables",
    "inversion_check",
    "bridge_reflection",
]

TWO_PI = 2.0 * np.pi


class DegenerateHessian(ArithmeticError):
    """A Hessian eigenvalue is too close to zero to count reliably."""


class ZeroGradientProjection(ArithmeticError):
    """``grad F_R . l`` vanishes: the point is not a regular point of Sigma."""


class TooFewSamples(ValueError):
    pass


def morse_index(H, rel_tol: float = 1e-8, raise_degenerate: bool = True):
    """Number of negative eigenvalues of symmetric ``H`` (batched over leading axes).

    With ``raise_degenerate=False`` returns ``(index, degenerate_mask)``.
    """
    H = np.asarray(H, dtype=float)
    if H.shape[-1] == 0:
        idx = np.zeros(H.shape[:-2], dtype=np.int64)
        return idx if raise_degenerate else (idx, np.zeros(H.shape[:-2], dtype=bool))
    lam = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))
    eps = rel_tol * np.max(np.abs(lam), axis=-1, keepdims=True)
    degenerate = np.any(np.abs(lam) <= eps, axis=-1)
    idx = np.sum(lam < -eps, axis=-1)
    if raise_degenerate:
        if np.any(degenerate):
            raise DegenerateHessian("Hessian eigenvalue within tolerance of zero")
        return idx
    return idx, degenerate


def _quotient(system: SecularSystem, x, lengths, H=None, grad=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    H = system.hessian_alpha(x) if H is None else H
    grad = system.grad_x(x) if grad is None else grad
    q = grad @ np.asarray(lengths, dtype=float)
    return H, q, grad


def surplus_morse(system: SecularSystem, x, lengths, raise_errors: bool = True, H=None, grad=None):
    """``sigma(x)`` = Morse index of ``-H_alpha F_R / (grad_x F_R . l)``.

    Returns the index array, or ``(index, degenerate, zero_grad)`` when
    ``raise_errors`` is false.
    """
    H, q, grad = _quotient(system, x, lengths, H, grad)
    scale = np.maximum(1.0, np.max(np.abs(grad), axis=1)) if grad.size else 1.0
    zero_grad = np.abs(q) < 1e-12 * scale
    if raise_errors and np.any(zero_grad):
        raise ZeroGradientProjection("grad_x F_R . l vanishes")
    Q = -H / np.where(zero_grad, 1.0, q)[:, None, None]
    idx, degen = morse_index(Q, raise_degenerate=False)
    if raise_errors:
        if np.any(degen):
            raise DegenerateHessian("Hessian eigenvalue within tolerance of zero")
        return idx
    return idx, degen, zero_grad


def local_surplus(system: SecularSystem, x, lengths, blocks: BlockDecomposition, H=None, grad=None,
                  raise_errors: bool = True):
    """Per-block Morse indices of the diagonal Hessian blocks; also the off-block ratio.

    Returns ``(local (B, n_blocks), off_block (B,), degenerate (B,))``.
    """
    H, q, _ = _quotient(system, x, lengths, H, grad)
    Q = -H / np.where(q == 0, 1.0, q)[:, None, None]
    slices = blocks.flux_slices()
    B = Q.shape[0]
    mask = np.zeros(Q.shape[1:], dtype=bool)
    for sl in slices:
        mask[np.ix_(sl, sl)] = True
    norm = np.linalg.norm(H, ord=2, axis=(1, 2)) if H.shape[1] else np.zeros(B)
    off = np.max(np.abs(np.where(mask, 0.0, H)), axis=(1, 2)) if H.shape[1] else np.zeros(B)
    off = off / np.where(norm > 0, norm, 1.0)
    if raise_errors and np.any(off >= 1e-8):
        raise ArithmeticError(f"off-block Hessian entries up to {off.max():.3e} of the norm")
    out = np.zeros((B, len(slices)), dtype=np.int64)
    degen = np.zeros(B, dtype=bool)
    for b, sl in enumerate(slices):
        idx, d = morse_index(Q[:, sl][:, :, sl], raise_degenerate=False)
        out[:, b] = idx
        degen |= d
    return out, off, degen


# ---------------------------------------------------------------------------
# samples over a spectrum


@dataclass
class SurplusSamples:
    """Per-record nodal data for the generic records of a spectrum."""

    index: np.ndarray  # row into the spectrum
    n: np.ndarray
    k: np.ndarray
    phi: np.ndarray
    sigma_direct: np.ndarray
    sigma_morse: np.ndarray  # sum of block indices when blocks exist
    sigma_morse_global: np.ndarray  # index of the full Hessian quotient
    degenerate_global: np.ndarray
    local: np.ndarray  # (S, n_blocks)
    excluded: np.ndarray  # bool, ambiguous zero or degenerate Hessian
    off_block: np.ndarray
    reasons: dict = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return ~self.excluded


def surplus_samples(spec: Spectrum, system: SecularSystem | None = None,
                    blocks: BlockDecomposition | None = None, batch: int = 8192) -> SurplusSamples:
    """Zero counts and Morse-index surplus for every generic, unflagged record."""
    g = spec.graph
    sysm = system if system is not None else SecularSystem(g)
    blocks = block_decomposition(g, sysm.cut) if blocks is None else blocks
    rows = np.flatnonzero(spec.generic)
    x_all = spec.x
    out = {key: [] for key in ("phi", "sd", "sm", "smg", "dgg", "loc", "amb", "deg", "zg", "off")}
    for s in range(0, rows.size, batch):
        r = rows[s:s + batch]
        x = x_all[r]
        a = spec.amplitudes[r]
        waves = edge_waves(g, x, a)
        per_edge, graze = count_zeros(spec.k[r], spec.lengths, waves.theta)
        phi = per_edge.sum(axis=1)
        H = sysm.hessian_alpha(x)
        grad = sysm.grad_x(x)
        sm, degen, zg = surplus_morse(sysm, x, spec.lengths, raise_errors=False, H=H, grad=grad)
        if len(blocks.blocks):
            loc, off, dl = local_surplus(sysm, x, spec.lengths, blocks, H=H, grad=grad, raise_errors=False)
        else:
            loc, off, dl = np.zeros((len(r), 0), np.int64), np.zeros(len(r)), np.zeros(len(r), bool)
        out["phi"].append(phi)
        out["sd"].append(phi - (spec.n[r] - 1))
        out["smg"].append(sm)
        out["dgg"].append(degen)
        if len(blocks.blocks):
            # H is block-diagonal, so its Morse index is the sum of the block indices;
            # judging each block against its own norm keeps small blocks usable
            sm, degen = loc.sum(axis=1), dl
        out["sm"].append(sm)
        out["loc"].append(loc)
        out["amb"].append(np.any(graze, axis=1))
        out["deg"].append(degen)
        out["zg"].append(zg)
        out["off"].append(off)
    cat = {key: (np.concatenate(v) if v else np.zeros(0)) for key, v in out.items()}
    nb = len(blocks.blocks)
    loc = cat["loc"].reshape(-1, nb).astype(np.int64) if rows.size else np.zeros((0, nb), np.int64)
    excluded = cat["amb"].astype(bool) | cat["deg"].astype(bool) | cat["zg"].astype(bool)
    return SurplusSamples(
        index=rows,
        n=spec.n[rows],
        k=spec.k[rows],
        phi=cat["phi"].astype(np.int64),
        sigma_direct=cat["sd"].astype(np.int64),
        sigma_morse=cat["sm"].astype(np.int64),
        sigma_morse_global=cat["smg"].astype(np.int64),
        degenerate_global=cat["dgg"].astype(bool),
        local=loc,
        excluded=excluded,
        off_block=cat["off"].astype(float),
        reasons={
            "ambiguous_zero": int(cat["amb"].astype(bool).sum()),
            "degenerate_hessian": int(cat["deg"].astype(bool).sum()),
            "zero_gradient": int(cat["zg"].astype(bool).sum()),
        },
    )


# ---------------------------------------------------------------------------
# distributions


@dataclass
class SurplusDistribution:
    beta: int
    counts: np.ndarray
    block_betas: tuple[int, ...]
    joint: dict  # tuple of local surpluses -> count
    n_records: int
    exclusions: dict
    samples: SurplusSamples | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def P(self) -> np.ndarray:
        return self.counts / max(1, self.n_samples)

    def marginal(self, b: int) -> np.ndarray:
        m = np.zeros(self.block_betas[b] + 1)
        for key, c in self.joint.items():
            m[key[b]] += c
        return m / max(1, m.sum())


def distribution_from_samples(beta: int, samples: SurplusSamples, block_betas, n_records: int,
                              extra_exclusions: dict | None = None, min_samples: int = 0) -> SurplusDistribution:
    ok = samples.valid
    sig = samples.sigma_morse[ok]
    if np.any((sig < 0) | (sig > beta)):
        raise ArithmeticError("surplus outside [0, beta]")
    if sig.size < min_samples:
        raise TooFewSamples(f"only {sig.size} generic samples (need {min_samples})")
    counts = np.bincount(sig, minlength=beta + 1).astype(np.int64)
    joint = Counter(map(tuple, samples.local[ok].tolist()))
    excl = dict(samples.reasons)
    excl["mismatch_direct_morse"] = int(np.sum(samples.sigma_direct[ok] != sig))
    if extra_exclusions:
        excl.update(extra_exclusions)
    return SurplusDistribution(
        beta=beta,
        counts=counts,
        block_betas=tuple(block_betas),
        joint=dict(sorted(joint.items())),
        n_records=n_records,
        exclusions=excl,
        samples=samples,
    )


def estimate_distribution(g: MetricGraph, cfg: SpectralScanConfig | None = None, N: int | None = None,
                          n_generic: int | None = None, min_samples: int = 100) -> SurplusDistribution:
    """Surplus law over the generic records among the first ``N`` eigenvalues.

    With ``n_generic`` the scan is extended until that many generic records
    exist and the first ``n_generic`` of them are used.
    """
    cfg = cfg or SpectralScanConfig(N=N or 1000)
    if n_generic is not None:
        from .graph import topology_summary

        gf = topology_summary(g).generic_fraction
        cfg = SpectralScanConfig(
            lengths=cfg.lengths, N=int(math.ceil(n_generic / gf * 1.03)) + 200,
            oversample=cfg.oversample, tol=cfg.tol, dip_threshold=cfg.dip_threshold,
            chunk=cfg.chunk, workers=cfg.workers,
        )
    elif N is not None and cfg.N != N:
        cfg = SpectralScanConfig(lengths=cfg.lengths, N=N, oversample=cfg.oversample, tol=cfg.tol,
                                 dip_threshold=cfg.dip_threshold, chunk=cfg.chunk, workers=cfg.workers)
    spec = scan_spectrum(g, cfg)
    if n_generic is not None:
        gen = np.flatnonzero(spec.generic)
        if gen.size < n_generic:
            raise TooFewSamples(f"scan produced {gen.size} generic records, wanted {n_generic}")
        spec = _truncate(spec, gen[n_generic - 1] + 1)
    sysm = SecularSystem(spec.graph)
    blocks = block_decomposition(spec.graph, sysm.cut)
    samples = surplus_samples(spec, sysm, blocks)
    extra = {"flagged_records": int(spec.flagged.sum())}
    return distribution_from_samples(spec.graph.beta, samples, blocks.betas, len(spec), extra, min_samples)


def _truncate(spec: Spectrum, m: int) -> Spectrum:
    return Spectrum(
        graph=spec.graph, lengths=spec.lengths, k=spec.k[:m], n=spec.n[:m],
        multiplicity=spec.multiplicity[:m], cls=spec.cls[:m], flagged=spec.flagged[:m],
        amplitudes=spec.amplitudes[:m], vertex_min=spec.vertex_min[:m], diagnostics=spec.diagnostics,
    )


def binomial_pmf(n: int) -> np.ndarray:
    return np.array([math.comb(n, s) for s in range(n + 1)]) / 2.0 ** n


def distribution_diagnostics(d: SurplusDistribution) -> dict:
    P = d.P
    mean = float(np.dot(np.arange(d.beta + 1), P))
    return {
        "beta": d.beta,
        "n_samples": d.n_samples,
        "counts": d.counts.tolist(),
        "P": P.tolist(),
        "mean": mean,
        "beta_recovered": 2.0 * mean,
        "symmetry_residual": float(np.max(np.abs(P - P[::-1]))),
        "tv_binomial": float(0.5 * np.sum(np.abs(P - binomial_pmf(d.beta)))),
    }


def conditional_tables(d: SurplusDistribution) -> list[dict]:
    """For each block, ``P(sigma_b = s | other local surpluses)`` per conditioning cell.

    Each entry holds the table, gaps (empty cells) and the largest
    asymmetry ``|P(s | c) - P(beta_b - s | c)|`` over cells.
    """
    nb = len(d.block_betas)
    if nb < 2:
        return []
    out = []
    for b in range(nb):
        beta_b = d.block_betas[b]
        cells: dict[tuple, np.ndarray] = {}
        for key, c in d.joint.items():
            cond = key[:b] + key[b + 1:]
            cells.setdefault(cond, np.zeros(beta_b + 1))[key[b]] += c
        ranges = [range(d.block_betas[o] + 1) for o in range(nb) if o != b]
        table, gaps, asym = {}, [], 0.0
        for cond in itertools.product(*ranges):
            row = cells.get(cond)
            if row is None or row.sum() == 0:
                gaps.append(cond)
                continue
            p = row / row.sum()
            table[cond] = p.tolist()
            asym = max(asym, float(np.max(np.abs(p - p[::-1]))))
        out.append({"block": b, "beta": beta_b, "table": table, "gaps": gaps, "asymmetry": asym,
                    "counts": {k: v.tolist() for k, v in cells.items()}})
    return out


# ---------------------------------------------------------------------------
# symmetry maps


@dataclass
class MapCheck:
    on_sigma: np.ndarray
    generic: np.ndarray
    ok: np.ndarray
    detail: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.ok))


def _sigma_scale(system: SecularSystem, x) -> np.ndarray:
    return np.maximum(1.0, np.max(np.abs(system.grad_x(x)), axis=1))


def inversion_check(system: SecularSystem, x, lengths, sigma=None, tol: float = 1e-8) -> MapCheck:
    """Check that ``-x`` is a generic point of Sigma with ``sigma(-x) = beta - sigma(x)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = system.g
    sigma = surplus_morse(system, x, lengths) if sigma is None else np.asarray(sigma)
    xm = np.mod(-x, TWO_PI)
    fr = system.FR(xm)
    on = np.abs(fr) < tol * _sigma_scale(system, xm)
    cls, mult, amps, vmin, flagged = classify_point(g, system.S, xm)
    gen = (cls == GENERIC) & ~flagged
    sm, degen, zg = surplus_morse(system, xm, lengths, raise_errors=False)
    ok = on & gen & ~degen & ~zg & (sm == system.beta - sigma)
    return MapCheck(on_sigma=on, generic=gen, ok=ok, detail={"sigma": sigma, "sigma_inv": sm})


def bridge_reflection(system: SecularSystem, split, x, lengths, blocks: BlockDecomposition,
                      tol: float = 1e-8) -> tuple[np.ndarray, MapCheck]:
    """Apply ``R(x1, x0, x2) = (x1, -x0 + 2 theta0(x1), -x2)`` and check its post-conditions.

    ``split`` is the bridge splitting whose ``Gamma_2`` holds the bridge's
    block; block indices follow ``blocks``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    (e0,) = split.connectors
    th = split.theta0(x)
    xr = x.copy()
    xr[:, e0] = np.mod(-x[:, e0] + 2.0 * th, TWO_PI)
    two = list(split.edges2)
    xr[:, two] = np.mod(-x[:, two], TWO_PI)

    fr = system.FR(xr)
    on = np.abs(fr) < tol * _sigma_scale(system, xr)
    cls, mult, amps, vmin, flagged = classify_point(system.g, system.S, xr)
    gen = (cls == GENERIC) & ~flagged
    loc0, _, d0 = local_surplus(system, x, lengths, blocks, raise_errors=False)
    loc1, _, d1 = local_surplus(system, xr, lengths, blocks, raise_errors=False)

    in2 = np.array([any(j in blocks.blocks[b].edges for j in two) for b in range(len(blocks.blocks))])
    betas = np.array(blocks.betas)
    expect = np.where(in2, betas - loc0, loc0)
    ok = on & gen & ~d0 & ~d1 & np.all(loc1 == expect, axis=1)
    return xr, MapCheck(on_sigma=on, generic=gen, ok=ok, detail={"theta0": th, "local": loc0, "local_R": loc1})
