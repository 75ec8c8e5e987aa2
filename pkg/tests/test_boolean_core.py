"""Boolean-cube primitives.  Coordinates x_1..x_n of the worked examples map to bits 0..n-1."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlqsim.boolean_core import (
    BitVector,
    Explicit,
    ExplicitPermutation,
    LazyBiasedFunction,
    PointMass,
    Restriction,
    SubcubeUniform,
    TruthTable,
    Uniform,
    XorShift,
    chi,
    deposit,
    dist,
    err,
    fwht,
    influence_exact,
    mean,
    prefix_randomize,
    prefix_randomized_eval,
    project,
    walsh_hadamard,
)
from tlqsim.oracles import ConstantBernoulli, Deterministic, LabeledDistribution


def AND12(n=2):
    return TruthTable.conjunction(n, [0, 1])


def brute_coeff(table, S):
    n = table.size.bit_length() - 1
    x = np.arange(1 << n)
    return float(np.mean((1 - 2.0 * table) * chi(S, x)))


tables = st.integers(1, 8).flatmap(lambda n: st.lists(st.integers(0, 1), min_size=1 << n, max_size=1 << n))


# --------------------------------------------------------------- evaluation

def test_constant_zero_everywhere():
    f = TruthTable.constant(5, 0)
    assert f.table.sum() == 0
    assert f(17) == 0


def test_parity_of_equal_bits_is_zero():
    n = 6
    x = 0b000011  # x_1 = x_2 = 1, rest 0
    assert TruthTable.parity(n, [0, 1])(x) == 0


def test_lazy_biased_memo_consistency():
    f = LazyBiasedFunction(4, 0.3, rng=1)
    x = BitVector.from_bits([0, 1, 0, 1])
    first = f(x)
    assert f(x) == first
    assert f.realized_count == 1


def test_bitvector_roundtrip():
    v = BitVector.from_bits([1, 0, 1, 1])
    assert v.to_bits() == [1, 0, 1, 1]
    assert v[0] == 1 and v[1] == 0
    with pytest.raises(ValueError):
        BitVector(2, 4)


def test_truth_table_validation():
    with pytest.raises(ValueError):
        TruthTable(2, [0, 1, 0])
    with pytest.raises(ValueError):
        TruthTable(1, [0, 2])


def test_hex_and_json_roundtrip():
    f = TruthTable.random(6, np.random.default_rng(0))
    assert np.array_equal(TruthTable.from_hex(6, f.to_hex()).table, f.table)
    assert np.array_equal(TruthTable.from_json(f.to_json()).table, f.table)


# -------------------------------------------------------------------- means

def test_parity_mean_half():
    assert mean(TruthTable.parity(7, [1, 3, 4]), Uniform(7)) == 0.5


def test_constant_one_mean_any_distribution():
    D = Explicit(3, np.arange(1, 9) / 36)
    assert mean(TruthTable.constant(3, 1), D) == pytest.approx(1.0)


def test_and_mean_quarter():
    assert mean(AND12(), Uniform(2)) == 0.25


def test_dist_examples():
    rng = np.random.default_rng(2)
    f = TruthTable.random(5, rng)
    notf = TruthTable(5, 1 - f.table)
    w = rng.random(32)
    D = Explicit(5, w / w.sum())
    assert dist(f, f, D) == 0
    assert dist(f, notf, D) == pytest.approx(1.0)
    assert dist(TruthTable.parity(5, [0]), TruthTable.parity(5, [0, 2]), Uniform(5)) == 0.5


def test_err_examples():
    rng = np.random.default_rng(3)
    g = TruthTable.random(4, rng)
    assert err(g, LabeledDistribution(Uniform(4), Deterministic(g))) == 0
    assert err(TruthTable(4, 1 - g.table), LabeledDistribution(Uniform(4), Deterministic(g))) == 1


@pytest.mark.parametrize("p", [0.0, 0.2, 0.5, 0.9])
def test_err_constant_label_expansion(p):
    rng = np.random.default_rng(4)
    f = TruthTable.random(5, rng, 0.3)
    w = rng.random(32)
    D = Explicit(5, w / w.sum())
    mu = mean(f, D)
    assert err(f, LabeledDistribution(D, ConstantBernoulli(5, p))) == pytest.approx(mu * (1 - p) + (1 - mu) * p)


# ------------------------------------------------------------------ Fourier

def test_character_spectrum():
    spec = walsh_hadamard(1 - 2.0 * TruthTable.parity(5, [1, 3]).table)
    assert spec.support() == {(1, 3): 1.0}


def test_constant_spectrum():
    assert walsh_hadamard(np.ones(16)).support() == {(): 1.0}


def test_and_spectrum_frozen():
    spec = walsh_hadamard(AND12())
    assert spec.support() == {(): 0.5, (0,): 0.5, (1,): 0.5, (0, 1): -0.5}
    for S, v in spec.support().items():
        assert brute_coeff(AND12().table, S) == v


@given(tables)
def test_fwht_matches_definition_and_roundtrip(bits):
    t = np.array(bits, dtype=np.uint8)
    n = t.size.bit_length() - 1
    F = 1 - 2.0 * t
    c = fwht(F)
    for S in range(1 << n):
        assert c[S] == pytest.approx(brute_coeff(t, S), abs=1e-12)
    assert np.max(np.abs(fwht(c, inverse=True) - F)) <= 1e-12
    assert abs(np.sum(c * c) - 1.0) <= 1e-9


@given(tables)
def test_influence_equals_fourier_weight(bits):
    f = TruthTable(len(bits).bit_length() - 1, bits)
    c = walsh_hadamard(f).coeffs
    for i in range(f.n):
        w = sum(c[S] ** 2 for S in range(1 << f.n) if (S >> i) & 1)
        assert influence_exact(f, i) == pytest.approx(w, abs=1e-12)


# ---------------------------------------------------------------- influence

def test_influence_examples():
    assert influence_exact(TruthTable.parity(6, [0, 2, 5]), 2) == 1
    assert influence_exact(TruthTable.junta(6, [0, 1], [0, 1, 1, 0]), 4) == 0
    assert influence_exact(AND12(), 0) == 0.5


def test_influence_restricted():
    f = AND12(3)
    assert influence_exact(f, 0, Restriction.of({1: 1})) == 1.0
    assert influence_exact(f, 0, Restriction.of({1: 0})) == 0.0
    with pytest.raises(ValueError):
        influence_exact(f, 1, Restriction.of({1: 0}))


# ------------------------------------------------------- prefix randomization

def test_prefix_zero_is_identity():
    rng = np.random.default_rng(5)
    f = TruthTable.random(6, rng)
    x = np.arange(64)
    assert np.array_equal(prefix_randomized_eval(f, 0, x, rng), f.table)


def test_full_prefix_on_parity_is_fair_coin():
    rng = np.random.default_rng(6)
    f = TruthTable.parity(8, [0, 4])
    out = prefix_randomized_eval(f, 8, np.zeros(20000, dtype=np.int64), rng)
    assert abs(out.mean() - 0.5) < 0.02


def _randomized_output_prob(f: TruthTable, ell: int) -> np.ndarray:
    """Exact Pr[f(prefix-randomized x) = 1] for every x."""
    x = np.arange(1 << f.n)
    high = x & ~((1 << ell) - 1)
    low = np.arange(1 << ell)
    return f.table[high[:, None] | low[None, :]].mean(axis=1)


@settings(max_examples=50)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1),
                                                      st.lists(st.integers(0, 1), min_size=1 << (n - 1),
                                                               max_size=1 << (n - 1)))))
def test_crossing_irrelevant_coordinate_keeps_distribution(args):
    n, i, base = args
    coords = [c for c in range(n) if c != i]
    f = TruthTable.junta(n, coords, base)  # coordinate i is irrelevant
    assert np.allclose(_randomized_output_prob(f, i + 1), _randomized_output_prob(f, i))


def test_prefix_randomize_only_touches_prefix():
    rng = np.random.default_rng(7)
    x = rng.integers(0, 1 << 10, 500)
    y = prefix_randomize(x, 4, rng)
    assert np.array_equal(x >> 4, y >> 4)


# -------------------------------------------------- restrictions and coords

@given(st.integers(1, 10).flatmap(lambda n: st.tuples(st.just(n), st.permutations(range(n)))), st.data())
def test_project_deposit_inverse(args, data):
    n, perm = args
    k = data.draw(st.integers(0, n))
    coords = list(perm[:k])
    local = np.arange(1 << k)
    assert np.array_equal(project(deposit(local, coords), coords), local)


def test_restriction_subcube():
    R = Restriction.of({0: 1, 3: 0})
    D = SubcubeUniform(5, R)
    idx, w = D.support()
    assert idx.size == 8 and np.allclose(w, 1 / 8)
    assert R.contains(idx).all()
    assert D.l2_norm_sq() == pytest.approx(1 / 8)
    assert R.free_coords(5) == [1, 2, 4]
    assert len(R.extend(2, 1)) == 3


def test_distribution_samples_and_json():
    rng = np.random.default_rng(8)
    assert (PointMass(4, 9).sample(rng, 50) == 9).all()
    D = Explicit(3, [0.5, 0.5, 0, 0, 0, 0, 0, 0])
    assert set(D.sample(rng, 100).tolist()) <= {0, 1}
    for d in (Uniform(3), PointMass(3, 2), D, SubcubeUniform(3, Restriction.of({1: 1}))):
        back = type(d).from_json(d.to_json())
        assert np.allclose(back.pmf(), d.pmf())


def test_permutations():
    assert XorShift(4, 3).is_fixed_point_free()
    assert not XorShift(4, 0).is_fixed_point_free()
    p = ExplicitPermutation(2, [1, 0, 3, 2])
    assert sorted(map(sorted, p.cycles())) == [[0, 1], [2, 3]]
    with pytest.raises(ValueError):
        ExplicitPermutation(2, [0, 0, 1, 2])
