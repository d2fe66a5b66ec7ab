"""Eigenfunctions from bond amplitudes: vertex values, edge waves and zero counts.

On edge ``e`` with forward bond ``b`` (origin ``u``) and local coordinate
``t`` measured from ``u``::

    f_e(t) = e^{-i x_e} a_b e^{ikt} + a_{b^} e^{-ikt}

so ``f(u) = e^{-i x_e} a_b + a_{b^}`` and ``f'(u)/k = i(e^{-i x_e} a_b - a_{b^})``.
After the global phase is fixed, ``f_e(t) = C_e cos(kt - theta_e)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MetricGraph
from .secular import bond_endpoints

__all__ = [
    "NotSimple",
    "AmbiguousZero",
    "BondAmplitudes",
    "EdgeWave",
    "NodalData",
    "null_space",
    "amplitudes",
    "vertex_values",
    "edge_waves",
    "nodal_count",
    "count_zeros",
]

TWO_PI = 2.0 * np.pi


class NotSimple(ValueError):
    """The null space of I - e^{ix}S is not one-dimensional."""


class AmbiguousZero(ValueError):
    """An edge zero sits within tolerance of a vertex."""


@dataclass
class BondAmplitudes:
    a: np.ndarray  # (B, 2E) complex, unit norm
    residual: np.ndarray  # (B,)
    realness: np.ndarray  # (B,) max |Im| of vertex data after calibration


@dataclass
class EdgeWave:
    C: np.ndarray  # (B, E)
    theta: np.ndarray  # (B, E) in [0, 2pi)


@dataclass
class NodalData:
    per_edge: np.ndarray  # (B, E) integer
    phi: np.ndarray  # (B,)
    sigma: np.ndarray  # (B,)
    ambiguous: np.ndarray  # (B,) bool


def _matrix(S: np.ndarray, x: np.ndarray) -> np.ndarray:
    ph = np.repeat(np.asarray(x, dtype=float), 2, axis=-1)
    return np.eye(S.shape[0]) - np.exp(1j * ph)[..., :, None] * S


def null_space(S: np.ndarray, x, rel_tol: float = 1e-8):
    """Singular values, multiplicity and the least singular vector of ``I - e^{ix}S``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, s, vh = np.linalg.svd(_matrix(S, x))
    mult = np.sum(s < rel_tol * s[:, :1], axis=1)
    return s, mult, vh[:, -1, :].conj()


def _endpoint_data(g: MetricGraph, x: np.ndarray, a: np.ndarray):
    """``f`` and ``f'/k`` at the origin of every bond, shape (B, 2E)."""
    ph = np.repeat(x, 2, axis=-1)
    out_amp = np.exp(-1j * ph) * a
    rev = a[:, np.arange(a.shape[1]) ^ 1]
    return out_amp + rev, 1j * (out_amp - rev)


def amplitudes(g: MetricGraph, S: np.ndarray, x, require_simple: bool = True) -> BondAmplitudes:
    """Unit null vectors of ``I - e^{ix}S`` with the phase fixed by the largest vertex value."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s, mult, a = null_space(S, x)
    if require_simple and np.any(mult != 1):
        raise NotSimple(f"null-space dimensions {sorted(set(mult.tolist()))}")
    return _calibrated(g, S, x, a)


def _calibrated(g: MetricGraph, S: np.ndarray, x: np.ndarray, a: np.ndarray) -> BondAmplitudes:
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    f0, d0 = _endpoint_data(g, x, a)
    orig, _ = bond_endpoints(g)
    # per vertex, the value seen from its first outgoing bond
    first = np.array([np.flatnonzero(orig == v)[0] for v in range(g.V)])
    fv = f0[:, first]
    big = np.argmax(np.abs(fv), axis=1)
    ref = fv[np.arange(len(fv)), big]
    phase = np.where(np.abs(ref) > 0, np.conj(ref) / np.maximum(np.abs(ref), 1e-300), 1.0)
    a = a * phase[:, None]
    f0, d0 = f0 * phase[:, None], d0 * phase[:, None]
    resid = np.linalg.norm(np.einsum("bij,bj->bi", _matrix(S, x), a), axis=1)
    real = np.maximum(np.max(np.abs(f0.imag), axis=1), np.max(np.abs(d0.imag), axis=1))
    return BondAmplitudes(a=a, residual=resid, realness=real)


def vertex_values(g: MetricGraph, x, a, return_spread: bool = False):
    """Real vertex values ``(B, V)``; optionally the continuity spread across bonds."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = np.atleast_2d(a)
    f0, _ = _endpoint_data(g, x, a)
    orig, _ = bond_endpoints(g)
    vals = np.empty((x.shape[0], g.V))
    spread = np.zeros(x.shape[0])
    for v in range(g.V):
        bonds = np.flatnonzero(orig == v)
        fv = f0[:, bonds].real
        vals[:, v] = fv[:, 0]
        spread = np.maximum(spread, np.max(np.abs(f0[:, bonds] - f0[:, bonds[:1]]), axis=1))
    if return_spread:
        return vals, spread
    return vals


def current_residual(g: MetricGraph, x, a) -> np.ndarray:
    """Max over Neumann vertices of |sum of outward derivatives|/k."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, d0 = _endpoint_data(g, x, np.atleast_2d(a))
    orig, _ = bond_endpoints(g)
    res = np.zeros(x.shape[0])
    for v in range(g.V):
        if g.dirichlet[v]:
            continue
        res = np.maximum(res, np.abs(d0[:, orig == v].sum(axis=1)))
    return res


def edge_waves(g: MetricGraph, x, a) -> EdgeWave:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f0, d0 = _endpoint_data(g, x, np.atleast_2d(a))
    f, d = f0[:, 0::2].real, d0[:, 0::2].real
    return EdgeWave(C=np.hypot(f, d), theta=np.mod(np.arctan2(d, f), TWO_PI))


def count_zeros(k, lengths, theta, tol: float = 1e-8):
    """Zeros of ``cos(kt - theta)`` for ``t`` in ``(0, l)``; also a grazing flag.

    Zeros sit where ``kt - theta = pi/2 + m pi``.
    """
    k = np.asarray(k, dtype=float)[..., None]
    lo = -np.asarray(theta, dtype=float) - np.pi / 2  # phase at t=0, shifted so zeros are at m*pi
    hi = lo + k * np.asarray(lengths, dtype=float)
    m_lo = np.floor(lo / np.pi)
    m_hi = np.ceil(hi / np.pi)
    count = (m_hi - m_lo - 1).astype(np.int64)
    r_lo = np.abs(lo / np.pi - np.round(lo / np.pi)) * np.pi
    r_hi = np.abs(hi / np.pi - np.round(hi / np.pi)) * np.pi
    grazing = (r_lo < tol) | (r_hi < tol)
    return count, grazing


def nodal_count(g: MetricGraph, lengths, k, waves: EdgeWave, n) -> NodalData:
    """Zero counts per edge, totals and surplus ``phi - (n - 1)``."""
    per_edge, graze = count_zeros(k, lengths, waves.theta)
    phi = per_edge.sum(axis=-1)
    sigma = phi - (np.asarray(n) - 1)
    return NodalData(per_edge=per_edge, phi=phi, sigma=sigma, ambiguous=np.any(graze, axis=-1))
