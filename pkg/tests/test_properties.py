import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import (entropy_bound_excess, lp_value, random_cost, random_measure, transform_lipschitz_excess,
                      transport_lipschitz_excess)
from optjoin import (Alphabet, MarkovModel, adapted_cost, build_block_joining, dual_gap, hamming_cost,
                     k_step_cost_curve, l1_distance, solve_entropic_ot, solve_ot)
from optjoin.ot.exact import dual_feasibility_violation

seeds = st.integers(0, 2**32 - 1)
many = settings(max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
some = settings(max_examples=100, deadline=None)


def _rng(seed):
    return np.random.default_rng(seed)


@some
@given(seeds)
def test_l1_is_a_metric(seed):
    rng = _rng(seed)
    alph = Alphabet.range(3)
    a, b, c = (random_measure(rng, alph, 2, 6) for _ in range(3))
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, b) == l1_distance(b, a)
    assert 0.0 <= l1_distance(a, b) <= 2.0 + 1e-12
    assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-12


@some
@given(seeds)
def test_exact_plan_is_feasible_and_optimal(seed):
    rng = _rng(seed)
    xa, ya = Alphabet.range(int(rng.integers(2, 4))), Alphabet.range(int(rng.integers(2, 4)))
    k = int(rng.integers(1, 3))
    a, b = random_measure(rng, xa, k, 6), random_measure(rng, ya, k, 6)
    c = random_cost(rng, xa, ya, integer=bool(rng.integers(2)))
    plan = solve_ot(a, b, c)
    assert max(plan.marginal_errors()) <= 1e-12
    assert np.all(plan.masses > 0)
    assert abs(dual_gap(plan)) <= 1e-7
    assert dual_feasibility_violation(plan, c) <= 1e-9
    C = np.array([[c.matrix[u, v].sum() for v in b.blocks] for u in a.blocks])
    assert abs(plan.cost_value - lp_value(C, a.masses, b.masses)) <= 1e-9


@some
@given(seeds)
def test_transpose_symmetry(seed):
    rng = _rng(seed)
    xa, ya = Alphabet.range(2), Alphabet.range(3)
    a, b = random_measure(rng, xa, 2, 5), random_measure(rng, ya, 2, 5)
    c = random_cost(rng, xa, ya)
    assert abs(solve_ot(a, b, c).cost_value - solve_ot(b, a, c.transpose()).cost_value) <= 1e-12
    ent = solve_entropic_ot(a, b, c, 0.3, tol=1e-12).regularized_value
    ent_t = solve_entropic_ot(b, a, c.transpose(), 0.3, tol=1e-12).regularized_value
    assert abs(ent - ent_t) <= 1e-9


@some
@given(seeds, st.sampled_from([0.05, 0.2, 1.0, 5.0]))
def test_entropic_bracket(seed, eta):
    rng = _rng(seed)
    alph = Alphabet.range(2)
    a, b = random_measure(rng, alph, 2, 4), random_measure(rng, alph, 2, 4)
    c = random_cost(rng, alph)
    exact = solve_ot(a, b, c).cost_value
    res = solve_entropic_ot(a, b, c, eta, tol=1e-12, max_iter=10**6)
    assert res.converged and res.marginal_violation <= 1e-9
    m, mp = a.support_size, b.support_size
    assert -1e-9 <= exact - res.regularized_value <= eta * math.log(m * mp) + 1e-9


@some
@given(seeds)
def test_cost_lipschitz_in_adapted_costs(seed):
    rng = _rng(seed)
    xa, ya = Alphabet.range(int(rng.integers(1, 5))), Alphabet.range(int(rng.integers(1, 5)))
    c = random_cost(rng, xa, ya)
    cx, cy = adapted_cost(c, "x").matrix, adapted_cost(c, "y").matrix
    M = c.matrix
    lhs = np.abs(M[:, :, None, None] - M[None, None, :, :])
    rhs = cx[:, None, :, None] + cy[None, :, None, :]
    assert np.all(lhs <= rhs + 1e-12)
    # pseudometric
    assert np.all(np.diag(cx) == 0) and np.allclose(cx, cx.T)
    assert np.all(cx[:, None, :] <= cx[:, :, None] + cx[None, :, :] + 1e-12)


@many
@given(seeds)
def test_transport_lipschitz_unregularized(seed):
    assert transport_lipschitz_excess(_rng(seed), 0.0) <= 1e-8


@many
@given(seeds, st.sampled_from([0.05, 0.1, 0.5, 1.0]))
def test_transport_lipschitz_entropic(seed, eta):
    assert transport_lipschitz_excess(_rng(seed), eta) <= 1e-8


@many
@given(seeds)
def test_soft_transform_lipschitz(seed):
    assert transform_lipschitz_excess(_rng(seed)) <= 1e-8


@many
@given(seeds)
def test_entropy_continuity_bound(seed):
    excess = entropy_bound_excess(_rng(seed))
    assert excess is None or excess <= 1e-8


@some
@given(seeds)
def test_joining_stationarity_and_entropy(seed):
    rng = _rng(seed)
    alph = Alphabet.range(2)
    k = int(rng.integers(1, 4))
    plan = solve_ot(random_measure(rng, alph, k, 5), random_measure(rng, alph, k, 5), random_cost(rng, alph))
    j = build_block_joining(plan)
    lam, nxt = j.finite_marginal(2), j.finite_marginal(3)
    assert np.max(np.abs(nxt.marginal(0, 2).masses - lam.masses)) <= 1e-12
    assert np.max(np.abs(nxt.marginal(1, 3).masses - lam.masses)) <= 1e-12
    h = j.block_entropy_rate()
    assert 0.0 <= h <= 2 * math.log(2) + 1e-12
    assert abs(h - entropy_of_plan(plan) / k) <= 1e-12


def entropy_of_plan(plan):
    p = plan.masses
    return float(-(p * np.log(p)).sum())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([0.0, 0.1, 1.0]))
def test_superadditivity_random_chains(q1, q2, eta):
    mx, my = MarkovModel.symmetric(q1), MarkovModel.symmetric(q2)
    curve = dict(k_step_cost_curve(mx, my, hamming_cost(mx.alphabet), 6, eta=eta))
    for k in range(1, 7):
        for l in range(1, 7 - k):
            assert k * curve[k] + l * curve[l] <= (k + l) * curve[k + l] + 1e-9
