import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlqsim.boolean_core import (
    Explicit,
    LazyBiasedFunction,
    PointMass,
    Restriction,
    SubcubeUniform,
    TruthTable,
    Uniform,
    XorShift,
)
from tlqsim.oracles import (
    AdversarialSign,
    BudgetExhausted,
    ConstantBernoulli,
    Deterministic,
    Exact,
    ExampleOracle,
    General,
    LabeledDistribution,
    MembershipOracle,
    MQSQOracle,
    Phi,
    QueryBudget,
    RefutationSQOracle,
    RoundToGrid,
    Sampling,
    TargetSQOracle,
    TypeI,
    TypeII,
    TypeIII,
    TypeIV,
    TypeV,
    exact_mqsq,
    refutation_sq,
)

AND12 = TruthTable.conjunction(2, [0, 1])


# ---------------------------------------------------------------- examples

def test_deterministic_labels_match():
    rng = np.random.default_rng(0)
    g = TruthTable.random(6, rng)
    X, y = ExampleOracle(LabeledDistribution(Uniform(6), Deterministic(g)), rng).draw(500)
    assert np.array_equal(y, g(X))


def test_bernoulli_half_label_mean():
    X, y = ExampleOracle(LabeledDistribution(Uniform(8), ConstantBernoulli(8, 0.5)), 1).draw(10**5)
    assert abs(y.mean() - 0.5) <= 0.01


def test_point_mass_marginal():
    X, _ = ExampleOracle(LabeledDistribution(PointMass(5, 21), ConstantBernoulli(5, 0.3)), 2).draw(100)
    assert (X == 21).all()


def test_sample_budget():
    o = ExampleOracle(LabeledDistribution(Uniform(3), ConstantBernoulli(3, 0.5)), 0, QueryBudget(max_samples=10))
    o.draw(10)
    with pytest.raises(BudgetExhausted):
        o.draw(1)


def test_general_labels_validation():
    with pytest.raises(ValueError):
        General(2, [0.1, 0.2, 1.5, 0.0])


# -------------------------------------------------------------- membership

def test_membership_determinism_and_counter():
    rng = np.random.default_rng(3)
    o = MembershipOracle(TruthTable.random(5, rng))
    assert o.query(7) == o.query(7)
    assert o.queries_made == 2
    o.query_many(np.arange(5))
    assert o.queries_made == 7
    assert o.query_log[:2] == [7, 7]


def test_membership_lazy_target_memoizes():
    f = LazyBiasedFunction(30, 0.5, rng=4)
    o = MembershipOracle(f)
    x = 123456789
    b = o.query(x)
    assert f.realized_count == 1
    assert o.query(x) == b


def test_membership_budget():
    o = MembershipOracle(TruthTable.constant(3, 1), QueryBudget(max_mq=3))
    o.query_many([0, 1, 2])
    with pytest.raises(BudgetExhausted):
        o.query(0)


# ------------------------------------------------------------------ MQ-SQ

def test_type3_total_mass():
    D = Explicit(3, np.arange(1, 9) / 36)
    assert exact_mqsq(TruthTable.random(3, np.random.default_rng(1)), TypeIII(1.0), D) == pytest.approx(1.0)


def test_type1_parity_half():
    assert exact_mqsq(TruthTable.parity(6, [2, 3]), TypeI(1.0, Uniform(6)), None) == 0.5


def test_type2_and_shift_frozen():
    # f(x) f(x ^ e_1) = 1 needs both 11 and 01 mapped to 1
    assert exact_mqsq(AND12, TypeII(1.0, Uniform(2), XorShift(2, 1)), None) == 0.0


def test_type2_rejects_fixed_points():
    with pytest.raises(ValueError):
        TypeII(1.0, Uniform(3), XorShift(3, 0))
    with pytest.raises(ValueError):
        TypeV(1.0, XorShift(3, 0))


def test_phi_range_checked():
    with pytest.raises(ValueError):
        Phi(const=1.5)
    with pytest.raises(ValueError):
        Phi(table=[0.0, 2.0])
    with pytest.raises(ValueError):
        Phi(fn=lambda x: -np.ones(x.shape))(np.arange(3))


@pytest.mark.parametrize("policy,sign", [("plus", 1), ("minus", -1)])
def test_adversarial_sign_exact_offset(policy, sign):
    o = MQSQOracle(AND12, mode=AdversarialSign(0.03, policy))
    assert o.query(TypeI(1.0, Uniform(2))) == pytest.approx(0.25 + sign * 0.03)


def test_named_statistic_policy():
    mode = AdversarialSign(0.01, {"I": 1, "II": -1})
    o = MQSQOracle(AND12, mode=mode)
    assert o.query(TypeI(1.0, Uniform(2))) == pytest.approx(0.26)
    assert o.query(TypeII(1.0, Uniform(2), XorShift(2, 1))) == pytest.approx(-0.01)


def test_round_to_grid_within_half_tau():
    rng = np.random.default_rng(5)
    f = TruthTable.random(7, rng)
    o = MQSQOracle(f, mode=RoundToGrid(0.1))
    for i in range(7):
        q = TypeII(1.0, Uniform(7), XorShift(7, 1 << i))
        assert abs(o.query(q) - exact_mqsq(f, q, None)) <= 0.05 + 1e-12


def test_sampling_mode_tolerance():
    f = TruthTable.parity(6, [0])
    o = MQSQOracle(f, mode=Sampling(20000, rng=6))
    assert abs(o.query(TypeI(1.0, Uniform(6))) - 0.5) <= o.tau


def test_oracle_log_and_norms():
    o = MQSQOracle(AND12)
    o.query(TypeI(1.0, SubcubeUniform(2, Restriction.of({0: 1}))))
    o.query(TypeIII(1.0))
    assert o.counts["I"] == 1 and o.counts["III"] == 1
    assert o.max_dstar_norm_sq == 0.5
    assert o.log[0] == {"type": "I", "dstar_norm_sq": 0.5}


def test_sq_budget():
    o = MQSQOracle(AND12, budget=QueryBudget(max_sq=1))
    o.query(TypeIII(1.0))
    with pytest.raises(BudgetExhausted):
        o.query(TypeIII(1.0))


@settings(max_examples=40)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_xor_batch_matches_exact(n, seed):
    rng = np.random.default_rng(seed)
    f = TruthTable.random(n, rng)
    o = MQSQOracle(f)
    deltas = np.arange(1, 1 << n)
    batch = o.type2_xor_batch(deltas, 0.5)
    for d, v in zip(deltas, batch):
        assert v == pytest.approx(exact_mqsq(f, TypeII(0.5, Uniform(n), XorShift(n, int(d))), None), abs=1e-12)
    assert o.counts["II"] == deltas.size


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_query_types_against_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    f = TruthTable.random(n, rng)
    w = rng.random(1 << n)
    D = Explicit(n, w / w.sum())
    phi = rng.random(1 << n)
    perm = XorShift(n, int(rng.integers(1, 1 << n))) if n else None
    x = np.arange(1 << n)
    pm, ft = D.pmf(), f.table.astype(float)
    assert exact_mqsq(f, TypeIII(Phi(table=phi)), D) == pytest.approx(np.dot(pm, phi))
    assert exact_mqsq(f, TypeIV(Phi(table=phi)), D) == pytest.approx(np.dot(pm, phi * ft))
    assert exact_mqsq(f, TypeV(Phi(table=phi), perm), D) == pytest.approx(np.dot(pm, phi * ft * ft[perm(x)]))


# ------------------------------------------------------------ refutation SQ

@pytest.mark.parametrize("p", [0.1, 0.5, 0.8])
def test_refutation_sq_label_mean(p):
    Dref = LabeledDistribution(Uniform(5), ConstantBernoulli(5, p))
    assert refutation_sq(Dref, lambda x, y: y) == pytest.approx(p)
    assert refutation_sq(Dref, lambda x, y: np.ones_like(y)) == pytest.approx(1.0)


def test_refutation_sq_frozen():
    Dref = LabeledDistribution(Uniform(4), Deterministic(TruthTable.dictator(4, 0)))
    assert refutation_sq(Dref, lambda x, y: y * ((x & 1) == 1)) == pytest.approx(0.5)


def test_refutation_sq_oracle_counts():
    sq = RefutationSQOracle(LabeledDistribution(Uniform(3), ConstantBernoulli(3, 0.5)), AdversarialSign(0.1))
    assert sq(lambda x, y: y) == pytest.approx(0.6)
    assert sq.queries_made == 1 and sq.tau == 0.1


def test_target_sq_oracle():
    f = TruthTable.dictator(4, 2)
    o = TargetSQOracle(f, Uniform(4), Exact())
    assert o(Phi(const=1.0)) == 0.5
    assert o.exact(Phi(table=f.table.astype(float))) == 0.5
