import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodal_surplus.builtins import builtin
from nodal_surplus.graph import block_decomposition, graph_bridges
from nodal_surplus.scattering import bridge_splitting
from nodal_surplus.secular import SecularSystem
from nodal_surplus.spectrum import SpectralScanConfig, scan_spectrum
from nodal_surplus.stats import (
    DegenerateHessian,
    SurplusDistribution,
    TooFewSamples,
    binomial_pmf,
    bridge_reflection,
    conditional_tables,
    distribution_diagnostics,
    estimate_distribution,
    inversion_check,
    local_surplus,
    morse_index,
    surplus_morse,
    surplus_samples,
)

TWO_PI = 2 * np.pi


def generic_x(name, N=2500, limit=1000):
    g = builtin(name)
    spec = scan_spectrum(g, SpectralScanConfig(N=N))
    return g, spec, spec.x[spec.generic][:limit]


# --- Morse index ------------------------------------------------------------------


def test_morse_index_examples():
    assert morse_index(np.diag([-1.0, 2.0])) == 1
    assert morse_index(np.zeros((3, 0, 0))).tolist() == [0, 0, 0]
    with pytest.raises(DegenerateHessian):
        morse_index(np.diag([1.0, 0.0]))
    idx, deg = morse_index(np.diag([1.0, 1e-12]), raise_degenerate=False)
    assert deg


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31))
def test_morse_index_vs_eigenvalues(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = rng.choice([-1, 1], n) * rng.uniform(0.1, 10, n)
    H = Q @ np.diag(lam) @ Q.T
    assert morse_index(H) == np.sum(lam < 0)


# --- surplus on Sigma -----------------------------------------------------------------


def test_figure8_surplus_one_and_local():
    g, spec, x = generic_x("figure8")
    sysm = SecularSystem(g)
    assert np.all(surplus_morse(sysm, x, spec.lengths) == 1)
    loc, off, _ = local_surplus(sysm, x, spec.lengths, block_decomposition(g, sysm.cut))
    assert np.array_equal(loc[:, 0], (x[:, 0] > np.pi).astype(int))
    assert np.array_equal(loc[:, 1], (x[:, 1] > np.pi).astype(int))
    assert np.all(loc[:, 0] != loc[:, 1])  # anti-correlated


@pytest.mark.parametrize("name", ["dumbbell", "chain321"])
def test_surplus_independent_of_length_vector(name):
    g, spec, x = generic_x(name)
    sysm = SecularSystem(g)
    other = np.random.default_rng(0).uniform(0.1, 5.0, g.E)
    s1, d1, z1 = surplus_morse(sysm, x, spec.lengths, raise_errors=False)
    s2, d2, z2 = surplus_morse(sysm, x, other, raise_errors=False)
    ok = ~(d1 | d2 | z1 | z2)
    assert ok.mean() > 0.99
    assert np.array_equal(s1[ok], s2[ok])


@pytest.mark.parametrize("name", ["dumbbell", "chain1221", "chain321"])
def test_samples_consistency(name):
    g = builtin(name)
    spec = scan_spectrum(g, SpectralScanConfig(N=3000))
    sam = surplus_samples(spec)
    ok = sam.valid
    assert ok.mean() > 0.99
    assert np.all((sam.sigma_direct[ok] >= 0) & (sam.sigma_direct[ok] <= g.beta))
    assert np.array_equal(sam.sigma_direct[ok], sam.sigma_morse[ok])
    assert np.array_equal(sam.local[ok].sum(axis=1), sam.sigma_morse[ok])
    glob = ok & ~sam.degenerate_global
    assert np.array_equal(sam.sigma_morse_global[glob], sam.sigma_morse[glob])
    assert np.max(sam.off_block) < 1e-8


# --- symmetry maps ------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["figure8", "dumbbell", "pumpkin-chain:1,3"])
def test_inversion(name):
    g, spec, x = generic_x(name)
    sysm = SecularSystem(g)
    sig = surplus_morse(sysm, x, spec.lengths)
    chk = inversion_check(sysm, x, spec.lengths, sigma=sig)
    assert chk.all_pass
    assert np.array_equal(chk.detail["sigma_inv"], g.beta - sig)


def test_inversion_beta_one():
    g, spec, x = generic_x("pumpkin-chain:1,2")
    assert g.beta == 1
    sysm = SecularSystem(g)
    sig = surplus_morse(sysm, x, spec.lengths)
    assert set(np.unique(sig)) == {0, 1}
    assert inversion_check(sysm, x, spec.lengths, sigma=sig).all_pass


def _dumbbell_split(g):
    (br,) = graph_bridges(g)
    return bridge_splitting(g, br, side1_vertex=0)


def test_bridge_reflection_dumbbell():
    g, spec, x = generic_x("dumbbell", limit=100)
    sysm = SecularSystem(g)
    blocks = block_decomposition(g, sysm.cut)
    xr, chk = bridge_reflection(sysm, _dumbbell_split(g), x, spec.lengths, blocks)
    assert chk.all_pass and len(x) == 100
    loc, loc_r = chk.detail["local"], chk.detail["local_R"]
    assert np.array_equal(loc_r[:, 0], loc[:, 0])
    assert np.array_equal(loc_r[:, 1], 1 - loc[:, 1])
    # R is an involution: theta0 depends on Gamma_1 only, which R leaves fixed
    xrr, _ = bridge_reflection(sysm, _dumbbell_split(g), xr, spec.lengths, blocks)
    d = np.abs(np.mod(xrr - x + np.pi, TWO_PI) - np.pi)
    assert np.max(d) < 1e-12


# --- distributions -------------------------------------------------------------------------


def test_binomial_pmf():
    assert binomial_pmf(2).tolist() == [0.25, 0.5, 0.25]
    assert binomial_pmf(3).sum() == pytest.approx(1.0)


def test_diagnostics_synthetic():
    d = SurplusDistribution(beta=2, counts=np.array([30, 40, 30]), block_betas=(1, 1),
                            joint={(0, 0): 30, (0, 1): 20, (1, 0): 20, (1, 1): 30}, n_records=200, exclusions={})
    r = distribution_diagnostics(d)
    assert r["mean"] == pytest.approx(1.0) and r["beta_recovered"] == pytest.approx(2.0)
    assert r["symmetry_residual"] == pytest.approx(0.0)
    assert r["tv_binomial"] == pytest.approx(0.5 * (0.05 + 0.1 + 0.05))
    tabs = conditional_tables(d)
    assert tabs[0]["table"][(0,)] == pytest.approx([0.6, 0.4])
    assert tabs[0]["asymmetry"] == pytest.approx(0.2)
    assert d.marginal(1).tolist() == [0.5, 0.5]


def test_conditional_gaps_reported():
    d = SurplusDistribution(beta=2, counts=np.array([0, 10, 0]), block_betas=(1, 1),
                            joint={(0, 1): 5, (1, 0): 5}, n_records=20, exclusions={})
    tabs = conditional_tables(d)
    assert tabs[0]["table"][(0,)] == [0.0, 1.0]
    assert tabs[0]["gaps"] == []
    single = SurplusDistribution(beta=1, counts=np.array([1, 1]), block_betas=(1,), joint={(0,): 1, (1,): 1},
                                 n_records=2, exclusions={})
    assert conditional_tables(single) == []


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        estimate_distribution(builtin("dumbbell"), N=50)


def test_estimate_distribution_n_generic():
    d = estimate_distribution(builtin("dumbbell"), n_generic=3000)
    assert d.n_samples + sum(v for k, v in d.exclusions.items() if k in
                             ("ambiguous_zero", "degenerate_hessian", "zero_gradient")) == 3000
    assert d.exclusions["mismatch_direct_morse"] == 0
    assert d.P.sum() == pytest.approx(1.0)


def test_figure8_distribution():
    d = estimate_distribution(builtin("figure8"), N=4000)
    assert d.P.tolist() == [0.0, 1.0, 0.0]
    tabs = conditional_tables(d)
    for t in tabs:
        for cond, p in t["table"].items():
            assert p[cond[0]] == 0.0
