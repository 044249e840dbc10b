import math

import numpy as np
import pytest

from optjoin import (Alphabet, CostSpec, EstimatorConfig, InputError, MarkovModel, ScheduleRule, SymbolSequence,
                     admissibility_diagnostic, estimate_oj, hamming_cost, k_schedule, sample)


def _pair(n=3000, seed=0):
    return sample(MarkovModel.symmetric(0.3), n, seed), sample(MarkovModel.symmetric(0.45), n, seed + 1)


def test_identical_sequences_zero():
    x, _ = _pair()
    for k in (1, 3, 6):
        res = estimate_oj(x, x, hamming_cost(x.alphabet), EstimatorConfig(k=k))
        assert res.cost_estimate == 0.0 and res.k_used == k


def test_k_exceeds_length():
    x = SymbolSequence(Alphabet.range(2), np.array([0, 1, 1]))
    with pytest.raises(InputError, match="k exceeds sequence length"):
        estimate_oj(x, x, hamming_cost(x.alphabet), EstimatorConfig(k=4))


def test_config_invariants():
    assert EstimatorConfig(k=3, eta=0).solver == "exact"
    assert EstimatorConfig(k=3, eta=0.1).solver == "entropic"
    with pytest.raises(InputError):
        EstimatorConfig(k=0)
    with pytest.raises(InputError):
        EstimatorConfig(eta=-1.0)


def test_bernoulli_vs_alternating_k1():
    x = sample(MarkovModel.iid([0.5, 0.5]), 10**4, 1)
    y = SymbolSequence(Alphabet.range(2), np.arange(10**4) % 2)
    res = estimate_oj(x, y, hamming_cost(x.alphabet), EstimatorConfig(k=1))
    assert res.cost_estimate < 0.02


def test_identity_and_range():
    x, y = _pair()
    c = hamming_cost(x.alphabet)
    for k, eta in ((1, 0.0), (4, 0.0), (3, 0.2), (5, 0.05)):
        res = estimate_oj(x, y, c, EstimatorConfig(k=k, eta=eta))
        j = res.joining
        ident = j.expected_cost(c) - eta * j.block_entropy_rate()
        assert res.cost_estimate == pytest.approx(ident, abs=1e-9)
        lo = -eta * (math.log(2) + math.log(2)) - 1e-12
        assert lo <= res.cost_estimate <= c.sup_norm + 1e-12


def test_entropic_bracket():
    x, y = _pair(2000, 5)
    c = hamming_cost(x.alphabet)
    for k in (2, 4):
        exact = estimate_oj(x, y, c, EstimatorConfig(k=k))
        m, mp = exact.diagnostics["support_x"], exact.diagnostics["support_y"]
        for eta in (0.02, 0.2, 1.0):
            ent = estimate_oj(x, y, c, EstimatorConfig(k=k, eta=eta))
            assert ent.diagnostics["status"] == "converged"
            assert exact.cost_estimate + 1e-12 >= ent.cost_estimate
            assert ent.cost_estimate >= exact.cost_estimate - eta / k * math.log(m * mp) - 1e-12


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    alph = Alphabet.range(3)
    x = SymbolSequence(alph, rng.integers(0, 3, 2000))
    y = SymbolSequence(alph, rng.integers(0, 3, 1500))
    C = rng.random((3, 3))
    perm = np.array([2, 0, 1])
    inv = np.argsort(perm)
    base = estimate_oj(x, y, CostSpec(alph, alph, C), EstimatorConfig(k=3)).cost_estimate
    xp = SymbolSequence(alph, perm[x.data])
    yp = SymbolSequence(alph, perm[y.data])
    Cp = C[np.ix_(inv, inv)]
    perm_val = estimate_oj(xp, yp, CostSpec(alph, alph, Cp), EstimatorConfig(k=3)).cost_estimate
    assert perm_val == pytest.approx(base, abs=1e-12)


def test_ragged_lengths():
    x, y = _pair()
    y = SymbolSequence(y.alphabet, y.data[:1234])
    res = estimate_oj(x, y, hamming_cost(x.alphabet), EstimatorConfig(k=2))
    assert (res.n_x, res.n_y) == (3000, 1234)


def test_cost_alphabet_mismatch():
    x, y = _pair()
    with pytest.raises(InputError):
        estimate_oj(x, y, hamming_cost(Alphabet.range(3)))


def test_schedule_rule_in_estimator():
    x, y = _pair(10**4)
    res = estimate_oj(x, y, hamming_cost(x.alphabet), EstimatorConfig(k="markov:alpha=0.5"))
    assert res.k_used == 6


def test_result_json():
    x, y = _pair(500)
    obj = estimate_oj(x, y, hamming_cost(x.alphabet), EstimatorConfig(k=2)).to_json(include_joining=True)
    assert {"cost_estimate", "k_used", "n_x", "n_y", "eta", "diagnostics", "joining"} <= set(obj)
    assert abs(obj["diagnostics"]["dual_gap"]) <= 1e-7


# schedules ------------------------------------------------------------------


def test_markov_schedule_example():
    s = k_schedule(10**4, ScheduleRule("markov", alpha=0.5, x_size=2, y_size=2))
    assert s.k == 6 and s.g == 0


def test_markov_schedule_gap():
    s = k_schedule(10**6, "markov:alpha=0.5,rho=0.4,x_size=2,y_size=2")
    assert (s.k, s.g) == (9, 2)


def test_corollary_schedule_example():
    s = k_schedule(10**4, ScheduleRule("corollary", p=1.0, x_size=2, y_size=2))
    assert s.k == 13
    assert s.k < math.log(10**4) / math.log(2)


def test_entropy_schedule():
    s = k_schedule(10**4, ScheduleRule("entropy", eps=0.1, h_x=0.61, h_y=0.69))
    assert s.k == math.floor(math.log(10**4) / 0.79)


@pytest.mark.parametrize("rule", ["markov:alpha=0.5,x_size=2,y_size=2", "corollary:p=1,x_size=2,y_size=2",
                                  "entropy:eps=0.1,h_x=0.5,h_y=0.5", "markov:alpha=0.9,rho=0.9,x_size=2,y_size=2"])
def test_minimal_sample_clips(rule):
    s = k_schedule(2, rule)
    assert (s.k, s.g) == (1, 0)


def test_fixed_rule_clips_to_n():
    assert k_schedule(2, "3").k == 2
    assert k_schedule(100, "3").k == 3


def test_schedule_errors():
    with pytest.raises(InputError):
        k_schedule(100, "markov:alpha=1.5,x_size=2,y_size=2")
    with pytest.raises(InputError):
        k_schedule(100, "corollary:p=2,x_size=2,y_size=2")
    with pytest.raises(InputError):
        k_schedule(100, "magic:alpha=0.5")
    with pytest.raises(InputError):
        k_schedule(1, "3")
    with pytest.raises(InputError):
        ScheduleRule.parse("markov:beta=1")


def test_schedule_rule_roundtrip():
    r = ScheduleRule.parse("markov:alpha=0.5,rho=0.4")
    assert ScheduleRule.parse(str(r)) == r
    assert str(ScheduleRule.parse(7)) == "7"


# admissibility ----------------------------------------------------------------


def test_admissibility_constant_model():
    m = MarkovModel(Alphabet.range(2), [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
    rows = admissibility_diagnostic(m, hamming_cost(m.alphabet), "markov:alpha=0.5", [100, 1000], 2)
    assert all(r["mean"] == 0.0 for r in rows)


def test_admissibility_iid_decreasing():
    m = MarkovModel.iid([0.5, 0.5])
    rows = admissibility_diagnostic(m, hamming_cost(m.alphabet), "1", [100, 1000, 10000], 20, rng_seed=3)
    means = [r["mean"] for r in rows]
    assert means[0] > means[1] > means[2]
    # O(n^-1/2): two decades shrink the mean by about 10
    assert 5 < means[0] / means[2] < 20


def test_admissibility_markov_schedule_regression():
    m = MarkovModel.symmetric(0.3)
    rows = admissibility_diagnostic(m, hamming_cost(m.alphabet), "markov:alpha=0.5",
                                    [10**3, 10**4, 10**5], 5, rng_seed=0)
    means = [r["mean"] for r in rows]
    assert [r["k"] for r in rows] == [4, 6, 8]
    assert means[0] > means[1] > means[2]
    assert means[2] < 0.05
