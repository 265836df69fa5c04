import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codednet.channel import ChannelStream
from codednet.dual import (assemble_subgradient, dual_value_estimate, estimate_expectations,
                           expectation_bounds, subgradient_bounds, update_multipliers)
from codednet.model import PrimalVector, constraint_vector
from codednet.phy import PhyLayer
from codednet.solver import run_async, run_sync
from codednet.subproblems import DualVector, solve_network
from codednet.validation import random_zeta

from conftest import with_channel


@pytest.fixture(scope="module")
def fig1_gains(fig1):
    return ChannelStream(fig1.channel, 3, stream=1).batch(0, 64)


def test_subgradient_blocks(relay3):
    m = relay3.model
    K, n = m.n_hyperarcs, m.n_nodes
    sl = m.index.slices
    y = PrimalVector.zeros(m)
    y.a[:] = 2.0
    g = assemble_subgradient(m, y, np.zeros(K), np.zeros(n))
    src = m.sessions[0].source
    nu = g[sl["nu"]]
    for r, (p, i) in enumerate(m.index.flow):
        assert nu[r] == (2.0 if i == src else 0.0)
    assert not g[sl["eta"]].any() and not g[sl["mu"]].any()
    y.c[0] = 1.0
    cbar = np.zeros(K)
    cbar[0] = 2.0
    pbar = np.zeros(n)
    pbar[1] = 0.3
    y.p[1] = 0.1
    g = assemble_subgradient(m, y, cbar, pbar)
    assert g[sl["lam"]][0] == pytest.approx(-1.0)
    assert g[sl["mu"]][1] == pytest.approx(0.2)
    np.testing.assert_array_equal(g, constraint_vector(m, y, cbar, pbar))


def test_update_examples(relay3):
    m = relay3.model
    z = DualVector.zeros(m)
    out = update_multipliers(z, -np.ones(m.index.size), 0.15)
    assert not out.flat().any()
    ones = DualVector.from_flat(m, np.ones(m.index.size))
    out = update_multipliers(ones, np.full(m.index.size, 0.5), 0.15)
    np.testing.assert_allclose(out.flat(), 1.075)
    with pytest.raises(ValueError):
        update_multipliers(z, np.zeros(m.index.size), 0.0)
    with pytest.raises(ValueError):
        update_multipliers(z, np.zeros(3), 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10))
def test_update_projects(relay3, seed, step):
    m = relay3.model
    rng = np.random.default_rng(seed)
    z = DualVector.from_flat(m, rng.exponential(1.0, m.index.size))
    out = update_multipliers(z, rng.normal(0, 5, m.index.size), step)
    assert np.all(out.flat() >= 0)


def test_expectations_single_slot(fig1, fig1_layer, fig1_gains):
    z = random_zeta(fig1.model, np.random.default_rng(1), scale=0.5)
    c, p = estimate_expectations(fig1_layer, z, gains=fig1_gains[:1])
    one = fig1_layer.solve(z.lam, z.mu, fig1_gains[0])
    np.testing.assert_allclose(c, one.capacity.sum(axis=1))
    np.testing.assert_allclose(p, one.node_power(fig1.model))


def test_expectations_point_mass_independent_of_slots(relay3, relay3_layer):
    z = random_zeta(relay3.model, np.random.default_rng(2), scale=0.5)
    c1, p1 = estimate_expectations(relay3_layer, z, relay3.channel, 1, np.random.default_rng(0))
    c9, p9 = estimate_expectations(relay3_layer, z, relay3.channel, 9, np.random.default_rng(5))
    np.testing.assert_allclose(c1, c9)
    np.testing.assert_allclose(p1, p9)
    d1 = dual_value_estimate(relay3.model, relay3_layer, z, relay3.channel, 1, np.random.default_rng(0))
    d9 = dual_value_estimate(relay3.model, relay3_layer, z, relay3.channel, 9, np.random.default_rng(3))
    assert d1.value == pytest.approx(d9.value) and d9.stderr == pytest.approx(0.0, abs=1e-12)


def test_expectations_monte_carlo_self_consistent():
    sc = with_channel("relay3", distribution="exponential")
    layer = PhyLayer(sc.model, sc.channel.noise, sc.phy)
    z = DualVector.zeros(sc.model)
    z.lam[:] = 0.4
    z.mu[:] = 0.6
    out = []
    for count, seed in ((10_000, 1), (100_000, 2)):
        cap, pw, _ = layer.solve_batch(z.lam, z.mu, ChannelStream(sc.channel, seed).batch(0, count)
                                       if count <= 10_000 else _big_batch(sc.channel, seed, count))
        vals = np.hstack([cap, pw])
        out.append((vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(count)))
    (m1, s1), (m2, s2) = out
    se = np.sqrt(s1 ** 2 + s2 ** 2)
    live = se > 0
    assert np.all(np.abs(m1 - m2)[live] <= 3 * se[live])
    np.testing.assert_allclose(m1[~live], m2[~live])


def _big_batch(channel, seed, count):
    from codednet.channel import sample_batch
    return sample_batch(channel, np.random.default_rng(seed), count)


def test_dual_at_zero_fig1(fig1, fig1_layer, fig1_gains):
    d = dual_value_estimate(fig1.model, fig1_layer, DualVector.zeros(fig1.model), gains=fig1_gains)
    assert d.value == pytest.approx(2 * math.log(5))
    assert d.value == pytest.approx(3.2188758248682006, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weak_duality_at_sample_level(fig1, fig1_layer, fig1_gains, seed):
    """Any box point with any per-slot feasible powers has Lagrangian value <= the dual estimate."""
    m = fig1.model
    rng = np.random.default_rng(seed)
    z = random_zeta(m, rng, scale=0.3)
    b = m.bounds
    y = PrimalVector(rng.uniform(b.a_min, b.a_max), rng.uniform(0, 1, (m.n_hyperarcs, 2)) * b.z_max[:, None],
                     rng.uniform(0, 1, (m.n_arcs, 4)) * b.x_max[:, None],
                     rng.uniform(0, 1, m.n_hyperarcs) * b.c_max, rng.uniform(0, 1, m.n_nodes) * b.p_max)
    caps, pows = [], []
    for g in fig1_gains:
        mt = fig1_layer.matchings[rng.integers(len(fig1_layer.matchings))]
        alloc = np.zeros((m.n_hyperarcs, m.tones))
        alloc[list(mt)] = rng.uniform(0, 5, (len(mt), m.tones))
        caps.append(fig1_layer.capacities(g, alloc).sum(axis=1))
        pows.append(alloc.sum(axis=1) @ fig1_layer.geo.owner.T)
    q = constraint_vector(m, y, np.mean(caps, axis=0), np.mean(pows, axis=0))
    lag = m.objective(y.a, y.p) - float(z.flat() @ q)
    assert lag <= dual_value_estimate(m, fig1_layer, z, gains=fig1_gains).value + 1e-9


def _rho(m, layer, z, gains):
    return dual_value_estimate(m, layer, z, gains=gains).value


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_dual_convex_along_segments(fig1, fig1_layer, fig1_gains, seed, alpha):
    m = fig1.model
    rng = np.random.default_rng(seed)
    z1, z2 = random_zeta(m, rng, 0.5), random_zeta(m, rng, 0.5)
    mid = DualVector.from_flat(m, alpha * z1.flat() + (1 - alpha) * z2.flat())
    lhs = _rho(m, fig1_layer, mid, fig1_gains)
    rhs = alpha * _rho(m, fig1_layer, z1, fig1_gains) + (1 - alpha) * _rho(m, fig1_layer, z2, fig1_gains)
    assert lhs <= rhs + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_subgradient_inequality(fig1, fig1_layer, fig1_gains, seed):
    """With common random numbers, -q(zeta) is an exact subgradient of the dual estimate."""
    m = fig1.model
    rng = np.random.default_rng(seed)
    z, th = random_zeta(m, rng, 0.5), random_zeta(m, rng, 0.5)
    c, p = estimate_expectations(fig1_layer, z, gains=fig1_gains)
    g = assemble_subgradient(m, solve_network(m, z), c, p)
    lhs = _rho(m, fig1_layer, th, fig1_gains)
    rhs = _rho(m, fig1_layer, z, fig1_gains) - float(g @ (th.flat() - z.flat()))
    assert lhs >= rhs - 1e-8


def test_bounds_dominate_observed_subgradients(fig1, fig1_layer):
    G, G_bar = subgradient_bounds(fig1.model, fig1.channel, fig1_layer)
    assert G > 0 and G_bar > 0
    cfg = dataclasses.replace(fig1.solver, iterations=300, cadence=100, dual_slots=8)
    for tr in (run_async(fig1.model, fig1.channel, fig1_layer, cfg),
               run_sync(fig1.model, fig1.channel, fig1_layer, dataclasses.replace(cfg, mode="sync", mc_slots=5))):
        assert np.all(tr.grad_norm <= G)


def test_expectation_bounds_cover_samples(fig1, fig1_layer, fig1_gains):
    cap_b, pow_b = expectation_bounds(fig1.model, fig1.channel, fig1_layer)
    z = DualVector.zeros(fig1.model)
    z.lam[:] = 5.0
    c, p = estimate_expectations(fig1_layer, z, gains=fig1_gains)
    assert np.all(c <= cap_b + 1e-9) and np.all(p <= pow_b + 1e-9)
