import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from beamwave.operator import (ConservativeProjection, CutoffSpec, apply_Q, apply_Q_cutoff,
                               apply_weak, entropy_dissipation, entropy_dissipation_nodes,
                               gradient_magnitude, split_Q_g, stripped_operator)

from oracles import collision_operator


def _positive(rng, size, lo=0.2, hi=3.0):
    return rng.uniform(lo, hi, size)


def _region_sums(grid, decomp, q, weights):
    return np.array([grid.cell_volume * np.dot(q[n], weights[n]) for n in decomp.region_nodes])


def test_Q_vanishes_on_frozen_nodes(ref_grid, ref_table, ref_decomp, rng):
    q = apply_Q(ref_grid, ref_table, _positive(rng, ref_grid.size))
    assert np.all(q[ref_decomp.label == 0] == 0.0)


def test_Q_matches_two_integral_oracle(small_setup, rng):
    g, t, _ = small_setup
    f = _positive(rng, g.size)
    w = t.combined_weight(g.h)
    ref = collision_operator(g.size, list(zip(t.k, t.k1, t.k2)), w, f)
    assert np.allclose(apply_Q(g, t, f), ref, rtol=1e-13, atol=1e-18)


def test_Q_matches_oracle_with_diagonal_triples(ref_grid, ref_table, rng):
    assert ref_table.diagonal.any()
    f = _positive(rng, ref_grid.size)
    w = ref_table.combined_weight(ref_grid.h)
    ref = collision_operator(ref_grid.size, list(zip(ref_table.k, ref_table.k1, ref_table.k2)), w, f)
    assert np.allclose(apply_Q(ref_grid, ref_table, f), ref, rtol=1e-13, atol=1e-18)


def test_Q_of_zero_is_zero(ref_grid, ref_table):
    assert not apply_Q(ref_grid, ref_table, np.zeros(ref_grid.size)).any()


def test_momentum_conserved_per_region(ref_grid, ref_table, ref_decomp, rng):
    g = ref_grid
    for _ in range(5):
        q = apply_Q(g, ref_table, _positive(rng, g.size))
        for j in range(3):
            s = _region_sums(g, ref_decomp, q, g.coords[:, j])
            scale = _region_sums(g, ref_decomp, np.abs(q), np.abs(g.coords[:, j]))
            assert np.all(np.abs(s) <= 1e-12 * scale)


def test_energy_leak_bounded_by_broadening(ref_grid, ref_table, ref_decomp, rng):
    # raw assembly: d/dt of the region energy is sum 2wF dw, bounded by support * sum 2w|F|
    g, t = ref_grid, ref_table
    f = _positive(rng, g.size)
    q = apply_Q(g, t, f)
    leak = _region_sums(g, ref_decomp, q, g.omega)
    wF = t.combined_weight(g.h) * (f[t.k1] * f[t.k2] - f[t.k] * f[t.k1] - f[t.k] * f[t.k2])
    mult = np.where(t.diagonal, 1.0, 2.0)
    lab = ref_decomp.label[t.k]
    exact = np.bincount(lab, weights=g.cell_volume * mult * wF * t.delta_omega,
                        minlength=ref_decomp.n_regions + 1)[1:]
    bound = np.bincount(lab, weights=g.cell_volume * 2 * np.abs(wF),
                        minlength=ref_decomp.n_regions + 1)[1:] * t.kernel.support
    assert np.allclose(leak, exact, rtol=1e-10, atol=1e-20)
    assert np.all(np.abs(leak) <= bound)


def test_projection_conserves_energy_and_momentum(ref_grid, ref_table, ref_decomp, rng):
    g = ref_grid
    proj = ConservativeProjection(g, ref_decomp.region_nodes)
    q = apply_Q(g, ref_table, _positive(rng, g.size), proj)
    for weights in (g.omega, *g.coords.T):
        s = _region_sums(g, ref_decomp, q, weights)
        scale = _region_sums(g, ref_decomp, np.abs(q), np.abs(weights))
        assert np.all(np.abs(s) <= 1e-12 * scale)
    assert np.all(q[ref_decomp.label == 0] == 0.0)


def test_locality(ref_grid, ref_table, ref_decomp, rng):
    g = ref_grid
    f = _positive(rng, g.size)
    r = 3
    inside = ref_decomp.label == r
    f2 = f.copy()
    f2[~inside] = _positive(rng, (~inside).sum())
    q1, q2 = apply_Q(g, ref_table, f), apply_Q(g, ref_table, f2)
    assert np.array_equal(q1[inside], q2[inside])


# -- weak form ------------------------------------------------------------------

def test_weak_form_consistency(ref_grid, ref_table, rng):
    g = ref_grid
    for _ in range(10):
        f, phi = _positive(rng, g.size), rng.normal(size=g.size)
        lhs = apply_weak(g, ref_table, f, phi)
        rhs = g.cell_volume * np.dot(apply_Q(g, ref_table, f), phi)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-22)


def test_weak_form_momentum_test_function_vanishes(ref_grid, ref_table, rng):
    g = ref_grid
    f = _positive(rng, g.size)
    for j in range(3):
        phi = g.coords[:, j]
        scale = apply_weak(g, ref_table, f, np.abs(phi)) + 1e-30
        assert abs(apply_weak(g, ref_table, f, phi)) <= 1e-12 * abs(scale) + 1e-22


def test_weak_form_with_unit_test_function(ref_grid, ref_table, rng):
    g, t = ref_grid, ref_table
    f = _positive(rng, g.size)
    wF = t.combined_weight(g.h) * (f[t.k1] * f[t.k2] - f[t.k] * f[t.k1] - f[t.k] * f[t.k2])
    expect = -g.cell_volume * np.sum(np.where(t.diagonal, 1.0, 2.0) * wF)
    got = apply_weak(g, t, f, np.ones(g.size))
    assert got == pytest.approx(expect, rel=1e-13)
    assert got != 0.0


# -- dissipation -----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(f=arrays(np.float64, 9 ** 3, elements=st.floats(1e-3, 1e3)))
def test_dissipation_nonnegative_and_equals_weak_form(f, small_setup):
    g, t, _ = small_setup
    d = entropy_dissipation(g, t, f)
    assert d >= 0.0
    assert d == pytest.approx(apply_weak(g, t, f, 1.0 / f), rel=1e-9, abs=1e-25)


def test_dissipation_rejects_nonpositive(ref_grid, ref_table):
    f = np.ones(ref_grid.size)
    f[ref_table.k1[0]] = 0.0
    with pytest.raises(ValueError):
        entropy_dissipation(ref_grid, ref_table, f)


def test_dissipation_vanishes_for_additive_inverse(ref_grid, ref_table, ref_decomp):
    # 1/f = b.k is additive on every triad; pick b positive on one region
    g = ref_grid
    r = 1
    nodes = ref_decomp.nodes(r)
    b = np.sign(g.coords[nodes].mean(axis=0))
    z = g.coords @ b
    assert np.all(z[nodes] > 0)
    f = np.ones(g.size)
    f[nodes] = 1.0 / z[nodes]
    dens = entropy_dissipation_nodes(g, ref_table, f)
    on_r = ref_decomp.label[ref_table.k] == r
    assert dens[on_r].sum() <= 1e-28 * dens[~on_r].sum() + 1e-40


# -- cutoff ----------------------------------------------------------------------

@given(st.floats(1.01, 1e3), st.floats(0, 1e4))
def test_rho_range_and_plateaus(N, z):
    c = CutoffSpec(N)
    v = float(c.rho(z))
    assert 0.0 <= v <= 1.0
    if 1 / N <= z <= N:
        assert v == 1.0
    if z <= 1 / (2 * N) or z >= 2 * N:
        assert v == 0.0


@pytest.mark.parametrize("N", [1.5, 10.0, 200.0])
def test_rho_is_C1_at_the_joints(N):
    c = CutoffSpec(N)
    for z0 in (0.5 / N, 1 / N, N, 2 * N):
        e = 1e-7 * z0
        left = (c.rho(z0) - c.rho(z0 - e)) / e
        right = (c.rho(z0 + e) - c.rho(z0)) / e
        assert abs(float(c.rho(z0 + e) - c.rho(z0 - e))) < 1e-6
        assert abs(float(left - right)) < 1e-4 * max(1.0, 1 / z0)


def test_rho_infinite_is_one():
    assert np.all(CutoffSpec().rho(np.array([0.0, 1e-9, 1e9])) == 1.0)


def test_cutoff_spec_validation():
    with pytest.raises(ValueError):
        CutoffSpec(1.0)


def test_gradient_matches_loop():
    from beamwave.lattice import Grid
    g = Grid(2)
    rng = np.random.default_rng(0)
    f = rng.normal(size=g.size)
    got = gradient_magnitude(g, f)
    for u in range(g.size):
        i = g.indices[u]
        sq = 0.0
        for ax in range(3):
            e = np.zeros(3, int)
            e[ax] = 1
            d = (f[g.flat(i + e)] - f[g.flat(i - e)]) / (2 * g.h)
            sq += d * d
        assert got[u] == pytest.approx(math.sqrt(sq), rel=1e-13)


def test_cutoff_infinite_is_bitwise_Q(ref_grid, ref_table, rng):
    f = _positive(rng, ref_grid.size)
    a = apply_Q_cutoff(ref_grid, ref_table, f, CutoffSpec())
    assert a.tobytes() == apply_Q(ref_grid, ref_table, f).tobytes()


def test_cutoff_inactive_inside_window_is_bitwise_Q(ref_grid, ref_table, rng):
    g = ref_grid
    f = _positive(rng, g.size, 1.0, 2.0)
    N = 2.0 * max(f.max(), gradient_magnitude(g, f).max(),
                  1 / f.min(), 1 / gradient_magnitude(g, f).min())
    a = apply_Q_cutoff(g, ref_table, f, CutoffSpec(N))
    assert a.tobytes() == apply_Q(g, ref_table, f).tobytes()


def test_cutoff_kills_small_constant(ref_grid, ref_table):
    N = 10.0
    f = np.full(ref_grid.size, 0.4 / N)
    assert not apply_Q_cutoff(ref_grid, ref_table, f, CutoffSpec(N)).any()


# -- gain/loss split ---------------------------------------------------------------

@pytest.mark.parametrize("N", [math.inf, 50.0])
def test_split_identities(ref_grid, ref_table, rng, N):
    g = ref_grid
    gg = _positive(rng, g.size, 0.5, 2.0)
    cut = CutoffSpec(N)
    plus, minus, L = split_Q_g(g, ref_table, gg, cut)
    assert np.array_equal(plus, gg * L)
    assert np.all(L >= 0)
    diff = plus - minus
    ref = stripped_operator(g, ref_table, gg, cut)
    assert np.allclose(diff, ref, rtol=1e-12, atol=1e-12 * np.abs(plus).max())


def test_stripped_operator_kills_momentum_invariant(ref_grid, ref_table, ref_decomp):
    g = ref_grid
    gg = g.coords @ np.array([0.3, -0.7, 0.2])
    plus, minus, _ = split_Q_g(g, ref_table, gg, CutoffSpec())
    assert np.abs(plus - minus).max() <= 1e-12 * np.abs(plus).max()


def test_stripped_operator_for_energy_invariant_is_broadening_defect(ref_grid, ref_table):
    # g = a omega: each triad contributes v * a * dw, so the result is O(support) per weight
    g, t = ref_grid, ref_table
    a = 0.8
    plus, minus, L = split_Q_g(g, t, a * g.omega, CutoffSpec())
    v = t.combined_weight(g.h)
    mult = np.where(t.diagonal, 1.0, 2.0)
    expect = np.bincount(t.k, weights=mult * v * a * t.delta_omega, minlength=g.size)
    expect -= np.bincount(t.k1, weights=2 * v * a * t.delta_omega, minlength=g.size)
    expect -= np.bincount(t.k2, weights=np.where(t.diagonal, 0, 2 * v * a * t.delta_omega),
                          minlength=g.size)
    assert np.allclose(plus - minus, expect, rtol=1e-9, atol=1e-12 * np.abs(plus).max())
    assert np.all(np.abs(plus - minus) <= a * t.kernel.support * L * (1 + 1e-12))
