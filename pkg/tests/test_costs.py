import itertools
import json

import numpy as np
import pytest

from optjoin import AdditiveCost, Alphabet, CostSpec, InputError, adapted_cost, hamming_cost, k_step_cost, load_cost


def test_hamming_three_symbols():
    c = hamming_cost(Alphabet.range(3))
    assert np.array_equal(c.matrix, 1 - np.eye(3))
    assert c.sup_norm == 1.0


def test_hamming_across_alphabets():
    c = hamming_cost(Alphabet(("1", "0")), Alphabet(("0", "1", "2")))
    assert c.matrix.tolist() == [[1, 0, 1], [0, 1, 1]]


def test_k_step_cost_is_hamming_distance():
    c = hamming_cost(Alphabet.range(2))
    assert k_step_cost(c, (0, 1, 1, 0), (1, 1, 0, 0)) == 2.0
    with pytest.raises(InputError):
        k_step_cost(c, (0, 1), (0,))


def test_costspec_validation():
    a = Alphabet.range(2)
    with pytest.raises(InputError):
        CostSpec(a, a, [[0, -1], [1, 0]])
    with pytest.raises(InputError):
        CostSpec(a, a, [[0, np.inf], [1, 0]])
    with pytest.raises(InputError):
        CostSpec(a, a, [[0, 1, 2], [1, 0, 2]])


def test_cost_json_reindexes(tmp_path):
    spec = {"x_tokens": ["a", "b", "c"], "y_tokens": ["u", "v"], "matrix": [[0, 1], [2, 3], [4, 5]]}
    f = tmp_path / "c.json"
    f.write_text(json.dumps(spec))
    c = load_cost(str(f), Alphabet(("c", "a")), Alphabet(("v", "u")))
    assert c.matrix.tolist() == [[5, 4], [1, 0]]
    with pytest.raises(InputError, match="does not cover"):
        load_cost(spec, Alphabet(("d",)), Alphabet(("u",)))


def test_cost_json_roundtrip():
    c = CostSpec(Alphabet.range(2), Alphabet.range(3), np.arange(6.0).reshape(2, 3))
    assert CostSpec.from_json(json.loads(json.dumps(c.to_json()))) == c


def test_additive_dense_matches_k_step():
    rng = np.random.default_rng(3)
    a = Alphabet.range(3)
    c = CostSpec(a, a, rng.random((3, 3)))
    xb = rng.integers(0, 3, (5, 4))
    yb = rng.integers(0, 3, (6, 4))
    D = AdditiveCost(c).dense(xb, yb)
    for i, j in itertools.product(range(5), range(6)):
        assert D[i, j] == pytest.approx(k_step_cost(c, xb[i], yb[j]))


def test_adapted_cost_hamming():
    c = hamming_cost(Alphabet.range(3))
    assert np.array_equal(adapted_cost(c).matrix, 1 - np.eye(3))


@pytest.mark.parametrize("size", [2, 3, 4, 5, 6])
def test_adapted_cost_pseudometric_exhaustive(size):
    rng = np.random.default_rng(size)
    for _ in range(20):
        a = Alphabet.range(size)
        c = CostSpec(a, Alphabet.range(size + 1), rng.random((size, size + 1)))
        for side in ("x", "y"):
            d = adapted_cost(c, side).matrix
            n = d.shape[0]
            assert np.allclose(d, d.T)
            assert np.all(np.diag(d) == 0)
            for i, j, l in itertools.product(range(n), repeat=3):
                assert d[i, l] <= d[i, j] + d[j, l] + 1e-12


@pytest.mark.parametrize("size", [2, 3, 4])
def test_cost_lipschitz_in_adapted_costs(size):
    rng = np.random.default_rng(10 + size)
    a = Alphabet.range(size)
    c = CostSpec(a, a, rng.random((size, size)))
    cx, cy = adapted_cost(c, "x").matrix, adapted_cost(c, "y").matrix
    M = c.matrix
    for u, v, u2, v2 in itertools.product(range(size), repeat=4):
        assert abs(M[u, v] - M[u2, v2]) <= cx[u, u2] + cy[v, v2] + 1e-12
