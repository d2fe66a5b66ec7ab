import math

import numpy as np
import pytest

from nodal_surplus.builtins import builtin
from nodal_surplus.graph import build_graph, topology_summary
from nodal_surplus.secular import SecularSystem, bond_scattering_matrix
from nodal_surplus.spectrum import (
    CLASSES,
    ScanTooCoarse,
    SpectralScanConfig,
    classify_point,
    loop_lattice,
    scan_spectrum,
)


def path(ls, dirichlet_end=False):
    V = len(ls) + 1
    verts = [(v, dirichlet_end and v == V - 1) for v in range(V)]
    return build_graph(verts, [(j, j, j + 1, l) for j, l in enumerate(ls)])


def star(ls):
    return build_graph(range(len(ls) + 1), [(j, 0, j + 1, l) for j, l in enumerate(ls)])


def star_oracle(ls, K):
    """Roots of sum tan(k l_i) below K: one between consecutive poles, plus k = 0.

    Each tan is increasing between its poles, so the sum crosses zero once per gap.
    """
    poles = sorted((m + 0.5) * math.pi / l for l in ls for m in range(int(K * l / math.pi) + 2))
    h = lambda k: sum(math.tan(k * l) for l in ls)  # noqa: E731
    roots = [0.0]
    for a, b in zip(poles[:-1], poles[1:]):
        lo, hi = a + 1e-13 * b, b - 1e-13 * b
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if h(mid) < 0:
                lo = mid
            else:
                hi = mid
        r = 0.5 * (lo + hi)
        if r <= K:
            roots.append(r)
    return np.array(roots)


# --- loop lattice ---------------------------------------------------------------


def test_loop_lattice_figure8():
    lat = loop_lattice(builtin("figure8"), None, 5.0)
    ks = [k for k, _ in lat]
    brute = sorted(2 * math.pi * m / l for l in (math.pi, math.e) for m in range(1, 10) if 2 * math.pi * m / l <= 5)
    assert ks == pytest.approx(brute, abs=1e-15)
    assert ks[:3] == pytest.approx([2.0, 2 * math.pi / math.e, 4.0])
    assert dict((round(k, 6), e) for k, e in lat)[2.0] == 0


def test_loop_lattice_loopless_and_dumbbell():
    assert loop_lattice(star([1.0, 2.0]), None, 100.0) == []
    lat = loop_lattice(builtin("dumbbell"), None, 7.0)
    assert {e for _, e in lat} == {0, 2}
    assert [k for k, _ in lat] == pytest.approx(sorted([2.0, 4.0, 6.0, 2 * math.pi]))


# --- exact spectra ----------------------------------------------------------------


def test_path_is_interval():
    ls = [1.0, math.sqrt(2)]
    spec = scan_spectrum(path(ls), SpectralScanConfig(N=400))
    L = sum(ls)
    assert np.allclose(spec.k, np.arange(400) * math.pi / L, rtol=1e-12, atol=1e-12)
    assert spec.n.tolist() == list(range(1, 401))
    assert CLASSES[spec.cls[0]] == "zero_mode"


def test_dirichlet_end_removes_zero_mode():
    ls = [1.0, math.sqrt(3)]
    spec = scan_spectrum(path(ls, dirichlet_end=True), SpectralScanConfig(N=300))
    L = sum(ls)
    assert np.allclose(spec.k, (np.arange(300) + 0.5) * math.pi / L, rtol=1e-12)
    assert "zero_mode" not in spec.class_names


def test_star_matches_tangent_oracle():
    ls = [1.0, math.sqrt(2), math.sqrt(5)]
    K = 200.0
    spec = scan_spectrum(star(ls), SpectralScanConfig(K=K))
    ref = star_oracle(ls, K)
    assert len(spec) == len(ref)
    assert np.allclose(spec.k, ref, rtol=1e-11, atol=1e-12)


def test_circle_is_doubly_degenerate():
    ls = [1.0, math.sqrt(2)]
    g = build_graph([0, 1], [(0, 0, 1, ls[0]), (1, 1, 0, ls[1])])
    spec = scan_spectrum(g, SpectralScanConfig(N=201))
    L = sum(ls)
    assert np.allclose(spec.k[1:], np.arange(1, 101) * 2 * math.pi / L, rtol=1e-11)
    assert np.all(spec.multiplicity[1:] == 2)
    assert np.all(spec.class_names[1:] == "degenerate")
    assert spec.n[1:].tolist() == list(range(2, 202, 2))


def test_figure8_spectrum():
    l1, l2 = math.pi, math.e
    spec = scan_spectrum(builtin("figure8"), SpectralScanConfig(N=4000))
    assert spec.k[1] == pytest.approx(2 * math.pi / (l1 + l2), rel=1e-12)
    gen = spec.generic
    assert np.all(spec.n[gen] % 2 == 0)
    m = spec.n[gen] // 2
    assert np.allclose(spec.k[gen], m * 2 * math.pi / (l1 + l2), rtol=1e-9)
    # every even index is generic, every odd index > 1 is a loop state
    assert np.all(gen == ((spec.n % 2 == 0) & (spec.n > 0)))
    assert np.all(spec.class_names[(spec.n % 2 == 1) & (spec.n > 1)] == "loop_state")
    # loop lattice and generic sets interlace
    kind = np.where(gen, 1, 0)[1:]
    assert np.all(np.diff(kind) != 0)


def test_loop_lattice_values_present():
    g = builtin("dumbbell")
    spec = scan_spectrum(g, SpectralScanConfig(N=3000))
    lat = np.array([k for k, _ in loop_lattice(g, None, spec.k[-1])])
    assert lat.size > 100
    idx = np.searchsorted(spec.k, lat)
    assert np.all(spec.k[idx] == lat)
    assert np.all(spec.class_names[idx] == "loop_state")
    assert np.min(np.diff(spec.k)) > 1e-9


def test_dumbbell_generic_fraction():
    g = builtin("dumbbell")
    L = sum(g.lengths)
    K = 1e4 * math.pi / L
    spec = scan_spectrum(g, SpectralScanConfig(K=K))
    expect = 1 - (math.pi + 1) / (2 * (math.pi + math.e + 1))
    assert expect == pytest.approx(topology_summary(g).generic_fraction)
    assert abs(spec.generic.mean() - expect) < 0.02


@pytest.mark.parametrize("name", ["figure8", "dumbbell", "chain1221", "chain321"])
def test_roots_on_sigma_and_sorted(name):
    g = builtin(name)
    spec = scan_spectrum(g, SpectralScanConfig(N=2000))
    sysm = SecularSystem(g)
    fr = sysm.FR(spec.x)
    scale = np.maximum(1.0, np.max(np.abs(sysm.grad_x(spec.x)), axis=1))
    assert np.max(np.abs(fr) / scale) < 1e-9
    assert np.all(np.diff(spec.k) > 0)
    assert spec.count >= 2000 and spec.n[-1] <= 2000
    assert np.all(spec.multiplicity[spec.generic] == 1)


def test_workers_deterministic():
    g = builtin("chain321")
    a = scan_spectrum(g, SpectralScanConfig(N=3000, chunk=1 << 11, workers=1))
    b = scan_spectrum(g, SpectralScanConfig(N=3000, chunk=1 << 11, workers=4))
    assert np.array_equal(a.k, b.k) and np.array_equal(a.cls, b.cls)


def test_lengths_override():
    g = builtin("figure8")
    spec = scan_spectrum(g, SpectralScanConfig(N=10, lengths=(1.0, math.sqrt(2))))
    assert spec.k[1] == pytest.approx(2 * math.pi / (1 + math.sqrt(2)))


def test_config_validation():
    with pytest.raises(ValueError):
        SpectralScanConfig(N=10, K=3.0)
    with pytest.raises(ValueError):
        SpectralScanConfig()
    with pytest.raises(ValueError):
        SpectralScanConfig(N=10, oversample=2)
    assert issubclass(ScanTooCoarse, RuntimeError)


# --- classification -----------------------------------------------------------------


def test_classify_figure8_points():
    g = builtin("figure8")
    S = bond_scattering_matrix(g)
    pts = np.array([[0.0, 1.3], [math.pi, math.pi], [1.1, 2 * math.pi - 1.1]])
    cls, mult, amps, vmin, flagged = classify_point(g, S, pts)
    assert [CLASSES[c] for c in cls] == ["loop_state", "vertex_vanishing", "generic"]
    assert not flagged.any()
