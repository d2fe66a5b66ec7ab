"""Bond-scattering matrix and the (flux-dressed) secular functions F and F_R.

Bonds are ordered ``(e1, e1^, e2, e2^, ...)``: bond ``2j`` runs along the
stored direction of edge ``j`` and bond ``2j+1`` is its reversal.  A torus
point ``x`` has one coordinate per edge and both bonds of edge ``j`` pick up
``x_j``; the flux on cut edge ``j`` adds ``+alpha`` to the forward bond and
``-alpha`` to the reversed one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import CutSet, MetricGraph, spanning_cut

__all__ = [
    "RealnessError",
    "SecularSystem",
    "SecularEvaluation",
    "bond_scattering_matrix",
    "bond_endpoints",
    "eval_secular",
    "derivatives_FR",
    "fd_crosscheck",
]

TWO_PI = 2.0 * np.pi


class RealnessError(ArithmeticError):
    """F_R picked up an imaginary part; the assembly is inconsistent."""


def bond_endpoints(g: MetricGraph) -> tuple[np.ndarray, np.ndarray]:
    """Origin and terminus vertex (positions) of each of the 2E bonds."""
    ends = np.asarray(g.endpoints, dtype=int).reshape(g.E, 2)
    orig = np.empty(2 * g.E, dtype=int)
    term = np.empty(2 * g.E, dtype=int)
    orig[0::2], term[0::2] = ends[:, 0], ends[:, 1]
    orig[1::2], term[1::2] = ends[:, 1], ends[:, 0]
    return orig, term


def bond_scattering_matrix(g: MetricGraph, degrees=None) -> np.ndarray:
    """Real orthogonal ``2E x 2E`` matrix mapping incoming to outgoing bonds.

    ``S[b', b] = 2/d(v) - [b' = reversal of b]`` when ``b`` ends at ``v`` and
    ``b'`` starts there; Dirichlet leaves reflect with ``-1``.  ``degrees``
    may override vertex degrees (used when leads are attached).
    """
    orig, term = bond_endpoints(g)
    deg = np.asarray(g.degrees if degrees is None else degrees, dtype=float)
    n = 2 * g.E
    S = np.zeros((n, n))
    for b in range(n):
        w = term[b]
        out = orig == w
        S[out, b] = 2.0 / deg[w]
        S[b ^ 1, b] -= 1.0
        if g.dirichlet[w]:
            S[:, b] = 0.0
            S[b ^ 1, b] = -1.0
    return S


@dataclass
class SecularEvaluation:
    F: np.ndarray
    F_R: np.ndarray
    grad_x_FR: np.ndarray | None = None
    hessian_alpha_FR: np.ndarray | None = None
    sign_calibration: int = 1


class SecularSystem:
    """Secular functions of one graph, vectorized over batches of torus points.

    Arrays of torus points have shape ``(..., E)`` and flux vectors
    ``(..., beta)``; a missing flux means ``alpha = 0``.
    """

    def __init__(self, g: MetricGraph, S: np.ndarray | None = None, cut: CutSet | None = None):
        self.g = g
        self.cut = spanning_cut(g) if cut is None else cut
        self.S = bond_scattering_matrix(g) if S is None else np.array(S, dtype=float)
        self.E = g.E
        self.beta = len(self.cut)
        d = float(np.linalg.det(self.S))
        self.det_sign = 1 if d > 0 else -1
        self.sqrt_det = 1.0 + 0j if self.det_sign > 0 else 1j
        self.sign = 1
        self.sign = self._calibrate()

    # phases -------------------------------------------------------------

    def bond_phases(self, x, alpha=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ph = np.repeat(x, 2, axis=-1)
        if alpha is not None and self.beta:
            flux = self.cut.edge_phases(np.asarray(alpha, dtype=float), self.E)
            flux = np.broadcast_to(flux, x.shape)
            ph = ph.copy()
            ph[..., 0::2] += flux
            ph[..., 1::2] -= flux
        return ph

    # evaluation ---------------------------------------------------------

    def F(self, x, alpha=None) -> np.ndarray:
        """``det(I - e^{i alpha} e^{i x} S)``."""
        return kernels.secular_det(self.S, self.bond_phases(x, alpha))

    def FR_complex(self, x, alpha=None) -> np.ndarray:
        """Calibrated ``F_R`` before discarding the (round-off) imaginary part."""
        x = np.asarray(x, dtype=float)
        return self.sign * np.exp(-1j * x.sum(axis=-1)) * self.F(x, alpha) / self.sqrt_det

    def FR(self, x, alpha=None, check: bool = False) -> np.ndarray:
        z = self.FR_complex(x, alpha)
        if check:
            scale = np.maximum(1.0, np.abs(z))
            bad = np.abs(z.imag) > 1e-8 * scale
            if np.any(bad):
                raise RealnessError(f"Im F_R up to {np.max(np.abs(z.imag)):.3e}")
        return z.real

    def _calibrate(self) -> int:
        grid = (2 * np.arange(7) + 1) * np.pi / 7
        it = itertools.product(grid, repeat=self.E)
        while True:
            block = np.array(list(itertools.islice(it, 4096)))
            if block.size == 0:
                return 1
            v = self.FR(block)
            hit = np.flatnonzero(np.abs(v) > 1e-3)
            if hit.size:
                return 1 if v[hit[0]] > 0 else -1

    # exact derivatives ---------------------------------------------------

    def grad_x(self, x, alpha=None) -> np.ndarray:
        """Exact ``grad_x F_R`` from 5-point trigonometric interpolation per coordinate."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B, E = x.shape
        t = TWO_PI * np.arange(5) / 5
        pts = np.broadcast_to(x[:, None, None, :], (B, E, 5, E)).copy()
        idx = np.arange(E)
        pts[:, idx, :, idx] += t[None, :]
        vals = self.FR(pts, None if alpha is None else np.asarray(alpha)[..., None, None, :])
        p = np.array([0, 1, 2, -2, -1])
        c = np.fft.fft(vals, axis=-1) / 5  # c_p with f(x+t) = sum c_p e^{ipt}
        return np.real(c @ (1j * p))

    def hessian_alpha(self, x) -> np.ndarray:
        """Exact ``H_alpha F_R`` at ``alpha = 0`` (degree <= 1 in every flux)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._hessian(x, self.FR)

    def hessian_alpha_F(self, x) -> np.ndarray:
        """Complex ``H_alpha F`` at ``alpha = 0``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._hessian(x, self.F)

    def grad_x_F(self, x) -> np.ndarray:
        """Complex ``grad_x F`` (degree <= 2 per coordinate, 5-point exact)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B, E = x.shape
        t = TWO_PI * np.arange(5) / 5
        pts = np.broadcast_to(x[:, None, None, :], (B, E, 5, E)).copy()
        idx = np.arange(E)
        pts[:, idx, :, idx] += t[None, :]
        vals = self.F(pts)
        p = np.array([0, 1, 2, -2, -1])
        c = np.fft.fft(vals, axis=-1) / 5
        return c @ (1j * p)

    def _hessian(self, x, fn) -> np.ndarray:
        B = x.shape[0]
        nb = self.beta
        if nb == 0:
            return np.zeros((B, 0, 0))
        h = np.pi / 2
        probes = [np.zeros(nb)]
        for j in range(nb):
            for s in (h, -h):
                a = np.zeros(nb)
                a[j] = s
                probes.append(a)
        pairs = [(i, j) for i in range(nb) for j in range(i + 1, nb)]
        for i, j in pairs:
            for si, sj in ((h, h), (h, -h), (-h, h), (-h, -h)):
                a = np.zeros(nb)
                a[i], a[j] = si, sj
                probes.append(a)
        A = np.array(probes)  # (P, beta)
        vals = fn(np.broadcast_to(x[:, None, :], (B, len(A), self.E)), A[None, :, :])
        H = np.zeros((B, nb, nb), dtype=vals.dtype)
        f0 = vals[:, 0]
        for j in range(nb):
            H[:, j, j] = 0.5 * (vals[:, 1 + 2 * j] + vals[:, 2 + 2 * j]) - f0
        base = 1 + 2 * nb
        for q, (i, j) in enumerate(pairs):
            v = vals[:, base + 4 * q: base + 4 * q + 4]
            m = 0.25 * (v[:, 0] - v[:, 1] - v[:, 2] + v[:, 3])
            H[:, i, j] = H[:, j, i] = m
        return H


def eval_secular(g: MetricGraph, S, x, alpha=None, system: SecularSystem | None = None) -> SecularEvaluation:
    sysm = system if system is not None else SecularSystem(g, S)
    F = sysm.F(x, alpha)
    FR = sysm.FR(x, alpha, check=True)
    return SecularEvaluation(F=F, F_R=FR, sign_calibration=sysm.sign)


def derivatives_FR(g: MetricGraph, S, x, system: SecularSystem | None = None) -> SecularEvaluation:
    """Value, exact gradient in ``x`` and exact flux Hessian of F_R at ``alpha = 0``."""
    sysm = system if system is not None else SecularSystem(g, S)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return SecularEvaluation(
        F=sysm.F(x),
        F_R=sysm.FR(x, check=True),
        grad_x_FR=sysm.grad_x(x),
        hessian_alpha_FR=sysm.hessian_alpha(x),
        sign_calibration=sysm.sign,
    )


@dataclass
class FDReport:
    grad_residual: float
    hessian_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.grad_residual, self.hessian_residual)


def fd_crosscheck(g: MetricGraph, S, x, h: float = 1e-4, system: SecularSystem | None = None) -> FDReport:
    """Max deviation between exact and central-difference derivatives.

    Deviations are relative to ``max(1, max|exact|)`` at each point.
    """
    sysm = system if system is not None else SecularSystem(g, S)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, E = x.shape
    nb = sysm.beta
    g_ex = sysm.grad_x(x)
    H_ex = sysm.hessian_alpha(x)

    eye = np.eye(E) * h
    fp = sysm.FR(x[:, None, :] + eye)
    fm = sysm.FR(x[:, None, :] - eye)
    g_fd = (fp - fm) / (2 * h)
    gscale = np.maximum(1.0, np.max(np.abs(g_ex), axis=-1, keepdims=True))
    gres = float(np.max(np.abs(g_fd - g_ex) / gscale)) if E else 0.0

    hres = 0.0
    if nb:
        xb = x[:, None, :]
        f0 = sysm.FR(x)
        H_fd = np.zeros((B, nb, nb))
        I = np.eye(nb) * h
        for i in range(nb):
            H_fd[:, i, i] = (sysm.FR(xb[:, 0], I[i]) - 2 * f0 + sysm.FR(xb[:, 0], -I[i])) / h ** 2
            for j in range(i + 1, nb):
                v = (
                    sysm.FR(xb[:, 0], I[i] + I[j]) - sysm.FR(xb[:, 0], I[i] - I[j])
                    - sysm.FR(xb[:, 0], -I[i] + I[j]) + sysm.FR(xb[:, 0], -I[i] - I[j])
                ) / (4 * h ** 2)
                H_fd[:, i, j] = H_fd[:, j, i] = v
        hscale = np.maximum(1.0, np.max(np.abs(H_ex), axis=(-2, -1), keepdims=True))
        hres = float(np.max(np.abs(H_fd - H_ex) / hscale))
    return FDReport(grad_residual=gres, hessian_residual=hres)
