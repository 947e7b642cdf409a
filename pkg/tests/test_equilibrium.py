import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamwave.equilibrium import (EquilibriumParams, InadmissibleError,
                                  constrained_perturbation, csiszar_kullback_check,
                                  distance_report, entropy, features, invariants_of_params,
                                  solve_equilibrium, solve_for_invariants)
from beamwave.lattice import Grid
from beamwave.regions import decompose, local_invariants
from beamwave.resonance import BroadeningKernel, enumerate_triples


@pytest.fixture(scope="module")
def sym_setup():
    """theta=0.2 at D=6 gives one region that is symmetric under k -> -k."""
    g = Grid(6, 2.5)
    d = decompose(g, enumerate_triples(g, BroadeningKernel(0.2)))
    return g, d


def _random_params(rng, grid, nodes):
    a = rng.uniform(0.2, 3.0)
    b = rng.normal(size=3)
    X = features(grid, nodes)
    # shrink b until a omega + b.k keeps a comfortable margin
    while np.min(X @ np.concatenate([[a], b])) <= 0.2 * a * grid.omega0:
        b *= 0.7
    return np.concatenate([[a], b])


def test_symmetric_region_gives_zero_b(sym_setup):
    g, d = sym_setup
    nodes = d.nodes(1)
    # odd summand: sum over a mirror-symmetric set of k / (a omega) vanishes
    assert np.abs(g.coords[nodes].sum(axis=0)).max() < 1e-12
    f = np.full(g.size, 2.0)
    inv = local_invariants(g, d, 1, f)
    params, rep = solve_equilibrium(g, d, 1, inv)
    assert np.abs(params.b).max() < 1e-10
    assert params.a == pytest.approx(d.measure(1) / inv.E, rel=1e-10)
    assert rep.unique and rep.continuity_ok


def test_round_trip_recovers_parameters(ref_grid, ref_decomp, rng):
    g = ref_grid
    for r in (1, 4, 7):
        nodes = ref_decomp.nodes(r)
        for _ in range(5):
            p = _random_params(rng, g, nodes)
            E, *M = invariants_of_params(g, nodes, "classical", p)
            params, rep = solve_for_invariants(g, nodes, r, E, M, check_continuity=False)
            assert np.max(np.abs(params.vector - p)) <= 1e-8 * (1 + np.abs(p).max())
            assert rep.unique
            assert np.min(params.exponent(g, nodes)) > 0


def test_quantized_large_exponent_limit(sym_setup):
    g, d = sym_setup
    nodes = d.nodes(1)
    a = 9.0
    approx = np.exp(-a * g.omega[nodes])
    E = g.cell_volume * np.sum(g.omega[nodes] * approx)
    M = g.cell_volume * (approx @ g.coords[nodes])
    params, rep = solve_for_invariants(g, nodes, 1, E, M, "quantized")
    assert params.a == pytest.approx(a, abs=1e-6)
    assert np.abs(params.b).max() < 1e-6


def test_quantized_round_trip(ref_grid, ref_decomp, rng):
    g = ref_grid
    nodes = ref_decomp.nodes(2)
    p = _random_params(rng, g, nodes)
    E, *M = invariants_of_params(g, nodes, "quantized", p)
    params, _ = solve_for_invariants(g, nodes, 2, E, M, "quantized", check_continuity=False)
    assert np.max(np.abs(params.vector - p)) <= 1e-8 * (1 + np.abs(p).max())


def test_degenerate_region_is_inadmissible():
    g = Grid(4, 2.5)
    line = [g.flat((i, 0, 0)) for i in (1, 2, 3, 4)]
    with pytest.raises(InadmissibleError):
        solve_for_invariants(g, line, 1, 1.0, [0.1, 0, 0])


def test_nonpositive_energy_is_inadmissible(ref_grid, ref_decomp):
    with pytest.raises(InadmissibleError):
        solve_for_invariants(ref_grid, ref_decomp.nodes(1), 1, -1.0, [0, 0, 0])


def test_mismatched_region_id(ref_grid, ref_decomp):
    inv = local_invariants(ref_grid, ref_decomp, 2, np.ones(ref_grid.size))
    with pytest.raises(ValueError):
        solve_equilibrium(ref_grid, ref_decomp, 1, inv)


# -- entropy ---------------------------------------------------------------------

def test_entropy_trivial_values(ref_grid, ref_decomp):
    assert entropy(ref_grid, ref_decomp, 1, np.ones(ref_grid.size)) == 0.0
    assert entropy(ref_grid, ref_decomp, 1, np.full(ref_grid.size, np.e)) == pytest.approx(
        ref_decomp.measure(1), rel=1e-14)
    f = np.ones(ref_grid.size)
    f[ref_decomp.nodes(1)[0]] = 0.0
    with pytest.raises(ValueError):
        entropy(ref_grid, ref_decomp, 1, f)


def _equilibrium_on(grid, decomp, r, rng):
    nodes = decomp.nodes(r)
    p = _random_params(rng, grid, nodes)
    eq = EquilibriumParams(p[0], p[1:], r)
    return eq, eq.field(grid, decomp, base=np.ones(grid.size))


def test_equilibrium_maximizes_entropy(ref_grid, ref_decomp, rng):
    g, d = ref_grid, ref_decomp
    eq, F = _equilibrium_on(g, d, 3, rng)
    nodes = d.nodes(3)
    S_eq = entropy(g, d, 3, F)
    for _ in range(20):
        f = F.copy()
        f[nodes] = constrained_perturbation(g, nodes, F[nodes], rng.uniform(0.01, 0.5), rng)
        assert entropy(g, d, 3, f) <= S_eq + 1e-12


def test_csiszar_kullback_zero_at_equilibrium(ref_grid, ref_decomp, rng):
    eq, F = _equilibrium_on(ref_grid, ref_decomp, 1, rng)
    rep = csiszar_kullback_check(ref_grid, ref_decomp, 1, F, eq)
    assert rep["lhs"] == 0.0 and rep["rhs"] == 0.0 and rep["ratio"] == 0.0


def test_csiszar_kullback_ratio_bounded_across_sizes(ref_grid, ref_decomp, rng):
    g, d = ref_grid, ref_decomp
    eq, F = _equilibrium_on(g, d, 5, rng)
    nodes = d.nodes(5)
    ratios = []
    for size in (1e-1, 1e-2, 1e-3, 1e-4):
        for _ in range(20):
            f = F.copy()
            f[nodes] = constrained_perturbation(g, nodes, F[nodes], size, rng)
            rep = csiszar_kullback_check(g, d, 5, f, eq)
            assert rep["entropy_gap"] >= -1e-12
            ratios.append(rep["ratio"])
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    # near equilibrium the ratio tends to a finite limit, so the spread stays O(1)
    assert ratios.max() <= 5.0 * np.median(ratios)


def test_csiszar_kullback_rejects_mismatched_invariants(ref_grid, ref_decomp, rng):
    eq, F = _equilibrium_on(ref_grid, ref_decomp, 1, rng)
    with pytest.raises(ValueError):
        csiszar_kullback_check(ref_grid, ref_decomp, 1, 1.01 * F, eq)


def test_constrained_perturbation_matches_invariants(ref_grid, ref_decomp, rng):
    g = ref_grid
    nodes = ref_decomp.nodes(2)
    ref = rng.uniform(1, 2, len(nodes))
    f = constrained_perturbation(g, nodes, ref, 0.3, rng)
    X = features(g, nodes)
    assert np.allclose(X.T @ f, X.T @ ref, rtol=1e-12)
    assert np.min(f) > 0 and not np.allclose(f, ref)


# -- distances -------------------------------------------------------------------

def test_distance_zero_at_equilibrium(ref_grid, ref_decomp, rng):
    eq, F = _equilibrium_on(ref_grid, ref_decomp, 2, rng)
    for p in (1, 2, 3.5, np.inf):
        assert distance_report(ref_grid, ref_decomp, 2, F, eq, p) == 0.0


def test_l1_distance_is_csiszar_lhs(ref_grid, ref_decomp, rng):
    g, d = ref_grid, ref_decomp
    eq, F = _equilibrium_on(g, d, 2, rng)
    nodes = d.nodes(2)
    f = F.copy()
    f[nodes] = constrained_perturbation(g, nodes, F[nodes], 0.2, rng)
    assert distance_report(g, d, 2, f, eq, 1) == csiszar_kullback_check(g, d, 2, f, eq)["lhs"]


@settings(max_examples=30, deadline=None)
@given(p=st.floats(1.0, 20.0), seed=st.integers(0, 2**31))
def test_holder_between_l1_and_lp(p, seed, ref_grid, ref_decomp):
    rng = np.random.default_rng(seed)
    eq, F = _equilibrium_on(ref_grid, ref_decomp, 6, rng)
    f = F * rng.uniform(0.5, 1.5, ref_grid.size)
    m = ref_decomp.measure(6)
    l1 = distance_report(ref_grid, ref_decomp, 6, f, eq, 1)
    lp = distance_report(ref_grid, ref_decomp, 6, f, eq, p)
    assert l1 <= m ** (1 - 1 / p) * lp * (1 + 1e-12)
