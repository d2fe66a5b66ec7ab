import math

import numpy as np
import pytest

from nodal_surplus.builtins import builtin
from nodal_surplus.eigenfunction import (
    NotSimple,
    amplitudes,
    count_zeros,
    current_residual,
    edge_waves,
    nodal_count,
    vertex_values,
)
from nodal_surplus.graph import build_graph
from nodal_surplus.secular import bond_scattering_matrix
from nodal_surplus.spectrum import SpectralScanConfig, scan_spectrum


def generic_records(g, N, limit=None):
    spec = scan_spectrum(g, SpectralScanConfig(N=N))
    idx = np.flatnonzero(spec.generic)[:limit]
    return spec, idx


def brute_zero_counts(g, k, x, a, samples=10_000):
    """Sign changes of the real edge function on a dense grid.

    The grid includes both endpoints; vertex values of generic states are
    nonzero, so every sign change marks an interior zero.
    """
    out = np.zeros(g.E, dtype=int)
    for e in range(g.E):
        l = g.lengths[e]
        t = np.linspace(0, l, samples)
        f = (np.exp(-1j * x[e]) * a[2 * e] * np.exp(1j * k * t) + a[2 * e + 1] * np.exp(-1j * k * t)).real
        out[e] = np.count_nonzero(np.signbit(f[1:]) != np.signbit(f[:-1]))
    return out


def test_single_edge_three_zeros():
    # cos(t) on (0, 3 pi): zeros at pi/2, 3pi/2, 5pi/2
    count, graze = count_zeros(1.0, [3 * math.pi], [0.0])
    assert count.tolist() == [3] and not graze.any()
    # shifted by pi the count is unchanged
    assert count_zeros(1.0, [3 * math.pi], [math.pi])[0].tolist() == [3]
    # sin(t) = cos(t - pi/2): zeros at pi, 2pi in the open interval, grazing at both ends
    count, graze = count_zeros(1.0, [3 * math.pi], [math.pi / 2])
    assert count.tolist() == [2] and graze.all()


@pytest.mark.parametrize("name", ["dumbbell", "chain321"])
def test_zero_count_vs_brute_force(name):
    g = builtin(name)
    spec, idx = generic_records(g, 2400, 1000)
    assert idx.size == 1000
    x = spec.x[idx]
    waves = edge_waves(g, x, spec.amplitudes[idx])
    counts, graze = count_zeros(spec.k[idx], spec.lengths, waves.theta)
    for i, r in enumerate(idx):
        if graze[i].any():
            continue
        ref = brute_zero_counts(g, spec.k[r], x[i], spec.amplitudes[r])
        assert np.array_equal(counts[i], ref), (r, counts[i], ref)


@pytest.mark.parametrize("name", ["figure8", "dumbbell", "chain1221", "chain321"])
def test_amplitude_properties(name):
    g = builtin(name)
    S = bond_scattering_matrix(g)
    spec, idx = generic_records(g, 1500, 1000)
    x = spec.x[idx]
    ba = amplitudes(g, S, x)
    assert np.max(ba.residual) < 1e-8
    assert np.allclose(np.linalg.norm(ba.a, axis=1), 1.0)
    assert np.max(ba.realness) < 1e-8
    vals, spread = vertex_values(g, x, ba.a, return_spread=True)
    scale = np.max(np.abs(vals), axis=1)
    assert np.max(spread / scale) < 1e-8
    assert np.all(np.min(np.abs(vals), axis=1) > 1e-8)
    # largest vertex value is real positive after calibration
    assert np.all(vals[np.arange(len(vals)), np.argmax(np.abs(vals), axis=1)] > 0)
    assert np.max(current_residual(g, x, ba.a) / scale) < 1e-6


def test_edge_wave_amplitude_matches_normal_components():
    g = builtin("chain321")
    spec, idx = generic_records(g, 500)
    a = spec.amplitudes[idx]
    w = edge_waves(g, spec.x[idx], a)
    # |f|^2 + |f'/k|^2 = 2(|a_e|^2 + |a_e^|^2) for f = A e^{ikt} + B e^{-ikt}
    ref = 2 * (np.abs(a[:, 0::2]) ** 2 + np.abs(a[:, 1::2]) ** 2)
    assert np.allclose(w.C ** 2, ref, atol=1e-12)


def test_not_simple_raises():
    g = builtin("figure8")
    S = bond_scattering_matrix(g)
    # x = (0, 0): the constant state plus loop states make the null space large
    with pytest.raises(NotSimple):
        amplitudes(g, S, [0.0, 0.0])


def test_figure8_vertex_vanishing_point():
    g = builtin("figure8")
    S = bond_scattering_matrix(g)
    ba = amplitudes(g, S, [math.pi, math.pi])
    assert abs(vertex_values(g, [math.pi, math.pi], ba.a)[0, 0]) < 1e-8


def test_dirichlet_vertex_value_zero():
    g = build_graph([0, 1, 2, (3, True)], [(0, 0, 1, 1.0), (1, 1, 2, math.sqrt(2)), (2, 1, 3, math.sqrt(3))])
    spec = scan_spectrum(g, SpectralScanConfig(N=300))
    vals = vertex_values(g, spec.x[spec.generic], spec.amplitudes[spec.generic])
    assert np.max(np.abs(vals[:, 3]) / np.max(np.abs(vals), axis=1)) < 1e-8
    # Neumann leaves are extrema and never vanish for generic states
    assert np.all(np.abs(vals[:, [0, 2]]) > 1e-8)


def test_tree_surplus_zero():
    g = build_graph(range(5), [(0, 0, 1, 1.0), (1, 1, 2, math.sqrt(2)), (2, 1, 3, math.sqrt(3)),
                               (3, 3, 4, math.sqrt(5))])
    spec = scan_spectrum(g, SpectralScanConfig(N=2000))
    gen = spec.generic
    w = edge_waves(g, spec.x[gen], spec.amplitudes[gen])
    nd = nodal_count(g, spec.lengths, spec.k[gen], w, spec.n[gen])
    ok = ~nd.ambiguous
    assert ok.mean() > 0.99
    assert np.all(nd.sigma[ok] == 0)


def test_figure8_nodal_count():
    g = builtin("figure8")
    spec = scan_spectrum(g, SpectralScanConfig(N=2000))
    gen = spec.generic
    w = edge_waves(g, spec.x[gen], spec.amplitudes[gen])
    nd = nodal_count(g, spec.lengths, spec.k[gen], w, spec.n[gen])
    ok = ~nd.ambiguous
    assert np.array_equal(nd.phi[ok], spec.n[gen][ok])
    assert np.all(nd.sigma[ok] == 1)
