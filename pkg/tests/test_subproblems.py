import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codednet.curves import Cost, Utility
from codednet.model import BoxBounds, PrimalVector, Session, constraint_vector, make_model
from codednet.oracle import grid_argmax
from codednet.subproblems import (DualVector, broadcast_coefficient, linear_prices, network_lagrangian,
                                  rate_price, solve_broadcast_flow, solve_capacity, solve_network,
                                  solve_node_power, solve_rate, solve_virtual_flow, virtual_coefficient)
from codednet.validation import random_zeta


def small():
    # node 0 with N(0) = {1, 2}; node 1 relays to 2; session 0 -> {2}
    h = [(0, [1]), (0, [2]), (0, [1, 2]), (1, [2])]
    arcs = 3
    b = BoxBounds(np.full(1, 1e-4), np.full(1, 5.0), np.full(4, 3.0), np.full(arcs, 1.5),
                  np.full(4, 3.0), np.full(3, 5.0), np.full(1, 5.0))
    return make_model([1, 2, 3], h, [Session(0, (2,))], 1, b)


def zeta_with(model, **blocks):
    z = DualVector.zeros(model)
    for name, entries in blocks.items():
        for idx, val in entries.items():
            getattr(z, name)[idx] = val
    return z


# --- rate --------------------------------------------------------------------

def test_rate_examples():
    m = small()
    src_row = m.index.flow.index((0, 0))
    assert solve_rate(m, 0, zeta_with(m, nu={src_row: 0.5})) == pytest.approx(2.0)
    assert solve_rate(m, 0, DualVector.zeros(m)) == 5.0
    assert solve_rate(m, 0, zeta_with(m, nu={src_row: 1e6})) == 1e-4
    assert rate_price(m, 0, zeta_with(m, nu={src_row: 0.5})) == 0.5


def test_rate_matches_grid():
    m = small()
    src_row = m.index.flow.index((0, 0))
    z = zeta_with(m, nu={src_row: 0.5})
    a = solve_rate(m, 0, z)
    x, best = grid_argmax(lambda v: np.log(v) - 0.5 * v, (1e-4, 5.0), 1e-4)
    assert abs(best - (math.log(a) - 0.5 * a)) <= 1e-6


def test_alpha_fair_rate():
    u = Utility("alpha", alpha=2.0)
    # U'(a) = a^-2 = price
    assert u.argmax_linear(0.25, 1e-4, 5.0) == pytest.approx(2.0, abs=1e-8)


# --- broadcast flow -----------------------------------------------------------

def test_broadcast_examples():
    m = small()
    k = m.hyperarc_index(0, [1])
    assert solve_broadcast_flow(m, k, 0, zeta_with(m, xi={k: 1.0})) == 0.0
    # subset K = {2} (index 0 -> (1,), 1 -> (2,), 2 -> (1, 2) for N(0) = {1, 2})
    row = m.index.subset_rows.index((0, 0, 0))      # K = (1,) meets J = {1}
    z = zeta_with(m, eta={row: 2.0}, xi={k: 1.0})
    assert broadcast_coefficient(m, k, 0, z) == pytest.approx(1.0)
    assert solve_broadcast_flow(m, k, 0, z) == 3.0
    z = zeta_with(m, eta={row: 1.0}, xi={k: 1.0})
    assert solve_broadcast_flow(m, k, 0, z) == 0.0            # tie


def test_broadcast_coefficient_counts_intersecting_subsets():
    m = small()
    k = m.hyperarc_index(0, [1, 2])
    z = DualVector.zeros(m)
    z.eta[:] = 1.0
    # J = {1, 2} meets all three subsets of N(0)
    assert broadcast_coefficient(m, k, 0, z) == pytest.approx(3.0)
    k1 = m.hyperarc_index(0, [1])
    assert broadcast_coefficient(m, k1, 0, z) == pytest.approx(2.0)


# --- virtual flow ----------------------------------------------------------------

def test_virtual_examples():
    m = small()
    t = 2
    pair = 0
    e = m.arc_index(1, 2)                    # j = t
    nu_i = m.index.flow.index((pair, 1))
    assert solve_virtual_flow(m, e, pair, zeta_with(m, nu={nu_i: 1.0})) == 1.5
    e01 = m.arc_index(0, 1)
    r0, r1 = m.index.flow.index((pair, 0)), m.index.flow.index((pair, 1))
    assert solve_virtual_flow(m, e01, pair, zeta_with(m, nu={r0: 0.7, r1: 0.7})) == 0.0
    # nu_i = 2, nu_j = 0.5, sum of eta over K containing j = 1 (two subsets 0.5 each)
    rows = [m.index.subset_rows.index((pair, 0, kk)) for kk, K in enumerate(m.index.subsets[0]) if 1 in K]
    z = zeta_with(m, nu={r0: 2.0, r1: 0.5}, eta={rows[0]: 0.5, rows[1]: 0.5})
    assert virtual_coefficient(m, e01, pair, z) == pytest.approx(0.5)
    assert solve_virtual_flow(m, e01, pair, z) == 1.5
    assert t == m.pairs[pair][1]


# --- capacity and power -------------------------------------------------------------

def test_capacity_examples():
    m = small()
    assert solve_capacity(m, 0, zeta_with(m, xi={0: 2.0}, lam={0: 1.0})) == 3.0
    assert solve_capacity(m, 0, zeta_with(m, xi={0: 1.0}, lam={0: 1.0})) == 0.0
    assert solve_capacity(m, 0, zeta_with(m, lam={0: 1.0})) == 0.0


def test_node_power_examples():
    m = small()
    assert solve_node_power(m, 0, zeta_with(m, mu={0: 2.0})) == pytest.approx(0.1)
    assert solve_node_power(m, 0, DualVector.zeros(m)) == 0.0
    assert solve_node_power(m, 0, zeta_with(m, mu={0: 1e3})) == 5.0
    _, best = grid_argmax(lambda p: 2.0 * p - 10 * p * p, (0, 5), 1e-4)
    assert abs(best - (2.0 * 0.1 - 10 * 0.01)) <= 1e-6


def test_non_quadratic_cost_foc():
    c = Cost(coef=1.0, exponent=3.0)
    # 3 p^2 = price -> p = 1 for price 3
    assert c.argmax_linear(3.0, 5.0) == pytest.approx(1.0, abs=1e-9)


# --- vectorized route and invariants -----------------------------------------------------

def test_vectorized_matches_scalar_routes(fig1):
    m = fig1.model
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = random_zeta(m, rng)
        y = solve_network(m, z)
        assert y.a[0] == solve_rate(m, 0, z)
        for k in range(0, m.n_hyperarcs, 7):
            assert y.c[k] == solve_capacity(m, k, z)
            for mm in range(m.n_sessions):
                assert y.z[k, mm] == solve_broadcast_flow(m, k, mm, z)
        for e in range(0, m.n_arcs, 5):
            for pr in range(len(m.pairs)):
                assert y.x[e, pr] == solve_virtual_flow(m, e, pr, z)
        for i in range(m.n_nodes):
            assert y.p[i] == solve_node_power(m, i, z)


def test_zero_multipliers_first_iterate(fig1):
    m = fig1.model
    y = solve_network(m, DualVector.zeros(m))
    np.testing.assert_array_equal(y.a, 5.0)
    assert not (y.z.any() or y.x.any() or y.c.any() or y.p.any())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_outputs_in_box(fig1, seed):
    m = fig1.model
    y = solve_network(m, random_zeta(m, np.random.default_rng(seed)))
    assert y.in_box(m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lagrangian_separates(fig1, seed):
    """f(y*) - zeta^T q(y*, 0, 0) equals the sum of the per-variable optima."""
    m = fig1.model
    z = random_zeta(m, np.random.default_rng(seed))
    y = solve_network(m, z)
    q = constraint_vector(m, y, np.zeros(m.n_hyperarcs), np.zeros(m.n_nodes))
    lhs = m.objective(y.a, y.p) - float(z.flat() @ q)
    price = linear_prices(m, z)
    parts = (np.sum(np.log(y.a) + price.a * y.a)
             + np.sum(price.z * y.z) + np.sum(price.x * y.x) + np.sum(price.c * y.c)
             + np.sum(price.p * y.p - m.cost.value(y.p)))
    assert lhs == pytest.approx(parts, abs=1e-9)
    assert network_lagrangian(m, z, y) == pytest.approx(lhs, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_maximizer_beats_random_box_points(fig1, seed):
    m = fig1.model
    rng = np.random.default_rng(seed)
    z = random_zeta(m, rng)
    best = network_lagrangian(m, z, solve_network(m, z))
    b = m.bounds
    other = PrimalVector(rng.uniform(b.a_min, b.a_max), rng.uniform(0, 1, (m.n_hyperarcs, 2)) * b.z_max[:, None],
                         rng.uniform(0, 1, (m.n_arcs, 4)) * b.x_max[:, None],
                         rng.uniform(0, 1, m.n_hyperarcs) * b.c_max, rng.uniform(0, 1, m.n_nodes) * b.p_max)
    assert network_lagrangian(m, z, other) <= best + 1e-9


def test_dual_vector_checks(fig1):
    m = fig1.model
    z = DualVector.zeros(m)
    z.check(m)
    z.mu[0] = -1
    with pytest.raises(ValueError):
        z.check(m)
    with pytest.raises(ValueError):
        DualVector.from_flat(m, np.zeros(3))
    flat = np.arange(m.index.size, dtype=float)
    np.testing.assert_array_equal(DualVector.from_flat(m, flat).flat(), flat)
