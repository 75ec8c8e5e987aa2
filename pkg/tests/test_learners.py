import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from tlqsim.boolean_core import PointMass, TruthTable, Uniform, bits_of, dist, walsh_hadamard
from tlqsim.learners import (
    Dictators,
    ERMClassifier,
    ExplicitClass,
    InfluenceJuntaLearner,
    Juntas,
    KMLearner,
    Parities,
    ReferenceTLQ,
    TestableJuntaLearner,
    TooManyRelevant,
    erm_agnostic,
    influence_mqsq,
    km_coeff_mqsq,
    km_learn,
    km_weight_mqsq,
    learn_junta_mqsq,
)
from tlqsim.oracles import AdversarialSign, Exact, MembershipOracle, MQSQOracle

AND12 = TruthTable.conjunction(2, [0, 1])


def brute_erm(C, idx, y):
    best, best_err = None, math.inf
    for h in C.members():
        e = float(np.mean(h(idx) != y))
        if e < best_err:
            best, best_err = h, e
    return best, best_err


# ---------------------------------------------------------------------- ERM

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["parities", "dictators", "juntas"]))
def test_vectorized_erm_matches_enumeration(seed, kind):
    rng = np.random.default_rng(seed)
    n = 5
    C = {"parities": Parities(n, 2), "dictators": Dictators(n), "juntas": Juntas(n, 2)}[kind]
    idx = rng.integers(0, 1 << n, 25)
    y = rng.integers(0, 2, 25).astype(np.uint8)
    h, e = erm_agnostic(idx, y, C)
    hb, eb = brute_erm(C, idx, y)
    assert e == pytest.approx(eb)
    assert float(np.mean(h(idx) != y)) == pytest.approx(e)
    if kind != "juntas":  # juntas break ties inside a cell differently but reach the same error
        assert np.array_equal(h.table, hb.table)


def test_erm_realizable_zero_error():
    rng = np.random.default_rng(0)
    g = TruthTable.parity(8, [1, 5])
    idx = rng.integers(0, 256, 60)
    h, e = erm_agnostic(idx, g(idx), Parities(8, 2))
    assert e == 0 and np.array_equal(h(idx), g(idx))


def test_single_member_class():
    g = TruthTable.random(4, np.random.default_rng(1))
    h, _ = erm_agnostic(np.arange(16), np.zeros(16, dtype=np.uint8), ExplicitClass([g]))
    assert np.array_equal(h.table, g.table)


def test_dictator_erm_finds_third_coordinate():
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 256, 100)
    h, _ = erm_agnostic(idx, (idx >> 2) & 1, Dictators(8))
    assert np.array_equal(h.table, TruthTable.dictator(8, 2).table)


def test_juntas_explicit_base():
    C = Juntas(4, 2, base=[[0, 0, 0, 1]])
    assert len(C) == 6
    idx = np.arange(16)
    h, e = erm_agnostic(idx, TruthTable.conjunction(4, [1, 3])(idx), C)
    assert e == 0


def test_erm_classifier_sklearn_api():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, (80, 6))
    y = X[:, 4]
    clf = ERMClassifier(Dictators(6)).fit(X, y)
    assert (clf.predict(X) == y).all()
    assert clf.score(X, y) == 1.0
    assert clone(clf).get_params()["concept_class"].n == 6
    with pytest.raises(ValueError):
        clf.fit(X, np.full(80, 2))


# ---------------------------------------------------------- reference TL-Q

def test_reference_tlq_completeness_rate():
    n, eps = 12, 0.05
    C = Parities(n, 3)
    good = 0
    for t in range(200):
        rng = np.random.default_rng([7, t])
        g = TruthTable.parity(n, rng.choice(n, 3, replace=False))
        idx = rng.integers(0, 1 << n, 30)
        h = ReferenceTLQ(C, eps=eps).run(idx, g(idx), MembershipOracle(g), rng)
        good += h is not None and dist(h, g, Uniform(n)) <= eps
    assert good >= 180


def test_reference_tlq_rejects_point_mass():
    g = TruthTable.parity(10, [0])
    X = PointMass(10, 5).sample(np.random.default_rng(0), 30)
    L = ReferenceTLQ(Parities(10, 1))
    assert L.run(X, g(X), MembershipOracle(g), 0) is None
    assert L.last_run_["reject"] == "uniformity test"


def test_reference_tlq_noise_returns_hypothesis():
    rng = np.random.default_rng(4)
    n = 12
    f = TruthTable.random(n, rng)
    idx = rng.integers(0, 1 << n, 30)
    h = ReferenceTLQ(Parities(n, 3)).run(idx, f(idx), MembershipOracle(f), rng)
    # soundness is vacuous here (opt is about 1/2); the learner still commits to a hypothesis
    assert isinstance(h, TruthTable)


def test_reference_tlq_estimator_api():
    rng = np.random.default_rng(5)
    g = TruthTable.dictator(8, 3)
    X = bits_of(rng.integers(0, 256, 30), 8)
    L = ReferenceTLQ(Dictators(8), random_state=0).fit(X, X[:, 3], MembershipOracle(g))
    assert not L.rejected_
    assert (L.predict(X) == X[:, 3]).all()
    assert set(L.get_params()) == {"concept_class", "eps", "m", "q", "delta", "random_state"}


# ---------------------------------------------------------------- influence

def test_influence_mqsq_examples():
    n = 9
    assert influence_mqsq(MQSQOracle(TruthTable.parity(n, [0, 4, 7])), 4) == 1.0
    f = TruthTable.junta(n, [0, 1], [0, 1, 1, 1])
    o = MQSQOracle(f, mode=AdversarialSign(0.01, "random", rng=0))
    assert abs(influence_mqsq(o, 6)) <= 0.04 + 1e-12
    assert influence_mqsq(MQSQOracle(AND12), 0) == pytest.approx(2 * 0.25 - 2 * 0)


@settings(max_examples=40)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1), st.sampled_from(["plus", "minus", "random"]))
def test_influence_within_four_tau(n, seed, policy):
    from tlqsim.boolean_core import Restriction, influence_exact

    rng = np.random.default_rng(seed)
    f = TruthTable.random(n, rng)
    i = int(rng.integers(n))
    R = Restriction.of({c: int(rng.integers(2)) for c in range(n) if c != i and rng.random() < 0.4})
    tau = 0.01
    o = MQSQOracle(f, mode=AdversarialSign(tau, policy, rng=rng))
    assert abs(influence_mqsq(o, i, R) - influence_exact(f, i, R)) <= 4 * tau + 1e-12


# -------------------------------------------------------------- MQ-SQ juntas

def test_junta_mqsq_parity():
    f = TruthTable.parity(10, [0, 1, 2])
    assert np.array_equal(learn_junta_mqsq(MQSQOracle(f), 3).table, f.table)


def test_junta_mqsq_constant():
    L = InfluenceJuntaLearner(2).fit(MQSQOracle(TruthTable.constant(6, 1)))
    assert L.relevant_ == [] and L.hypothesis_.table.min() == 1


def test_junta_mqsq_random_three_junta_adversarial():
    rng = np.random.default_rng(6)
    for _ in range(10):
        S = sorted(rng.choice(10, 3, replace=False))
        f = TruthTable.junta(10, S, rng.integers(0, 2, 8))
        o = MQSQOracle(f, mode=AdversarialSign(2**-6, "random", rng=rng))
        assert dist(learn_junta_mqsq(o, 3), f, Uniform(10)) == 0


def test_junta_mqsq_too_many_relevant():
    with pytest.raises(TooManyRelevant):
        learn_junta_mqsq(MQSQOracle(TruthTable.parity(6, [0, 1, 2])), 2)


def test_junta_learner_declared_norm_audited():
    L = InfluenceJuntaLearner(2)
    o = MQSQOracle(TruthTable.conjunction(8, [1, 6]))
    L.fit(o)
    assert o.max_dstar_norm_sq <= L.declared_max_dstar_norm_sq(8)
    assert L.max_dstar_norm_sq_ == o.max_dstar_norm_sq


def test_testable_junta_accepts_uniform_and_is_sound_when_skewed():
    from tlqsim.boolean_core import Explicit

    n = 6
    f = TruthTable.conjunction(n, [0, 3])
    L = TestableJuntaLearner(2, 0.1)
    assert L.fit(MQSQOracle(f)).hypothesis_ is not None
    assert L.queries_issued_ <= L.declared_queries(n)
    # marginal concentrated where the uniform-learned hypothesis is wrong for a 3-junta
    g = TruthTable.junta(n, [0, 1, 2], [0, 1, 1, 0, 1, 0, 0, 1])
    w = np.where(g.table == 1, 1.0, 0.05)
    D = Explicit(n, w / w.sum())
    out = TestableJuntaLearner(2, 0.1).fit(MQSQOracle(g, D))
    if out.hypothesis_ is not None:
        best = min(float(np.dot(D.pmf(), h.table != g.table)) for h in Juntas(n, 2).members())
        assert float(np.dot(D.pmf(), out.hypothesis_.table != g.table)) <= best + 0.1 + 1e-9


# ---------------------------------------------------------------------- KM

def test_km_coefficient_frozen():
    assert km_coeff_mqsq(MQSQOracle(AND12), [0, 1]) == pytest.approx(-0.5)


def test_km_coefficient_character():
    f = TruthTable.parity(6, [1, 4])
    o = MQSQOracle(f)
    assert km_coeff_mqsq(o, [1, 4]) == pytest.approx(1.0)
    assert km_coeff_mqsq(o, [2]) == pytest.approx(0.0)


def test_km_bucket_weight_frozen():
    # S = {}, J = {x_1}: bucket weight = fhat({})^2 + fhat({x_2})^2 = 1/2
    est = km_weight_mqsq(MQSQOracle(AND12, mode=Exact()), 0, 0b01, samples=10**4, rng=0)
    assert abs(est - 0.5) <= 0.05
    assert km_weight_mqsq(MQSQOracle(AND12), 0, 0b01) == pytest.approx(0.5)


def test_km_bucket_weight_character_and_empty():
    f = TruthTable.parity(8, [2, 5])
    o = MQSQOracle(f)
    assert km_weight_mqsq(o, 0b100, 0b111, samples=4000, rng=1) == pytest.approx(1.0)
    assert km_weight_mqsq(o, 0b010, 0b111) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1), st.data())
def test_km_exact_bucket_weight_matches_spectrum(n, seed, data):
    f = TruthTable.random(n, np.random.default_rng(seed))
    c = walsh_hadamard(f).coeffs
    j = data.draw(st.integers(0, n))
    J = (1 << j) - 1
    S = data.draw(st.integers(0, J))
    truth = sum(c[T] ** 2 for T in range(1 << n) if T & J == S)
    assert km_weight_mqsq(MQSQOracle(f), S, J) == pytest.approx(truth, abs=1e-12)


def test_km_single_parity():
    f = TruthTable.parity(10, [3, 7, 8])
    h = km_learn(MQSQOracle(f, mode=AdversarialSign(0.1**2 / 4 / 8, "random", rng=0)), 1, 0.1, rng=0)
    assert dist(h, f, Uniform(10)) == 0


def test_km_constant():
    h = km_learn(MQSQOracle(TruthTable.constant(8, 1)), 1, 0.1, rng=0)
    assert h.table.min() == 1


def test_km_majority_of_three():
    n = 10
    x = np.arange(1 << n)
    f = TruthTable(n, (((x & 1) + ((x >> 1) & 1) + ((x >> 2) & 1)) >= 2).astype(np.uint8))
    assert len(walsh_hadamard(f).support()) == 4
    L = KMLearner(4, 0.1, random_state=0)
    h = L.fit(MQSQOracle(f, mode=AdversarialSign(L.theta / 8, "random", rng=1))).hypothesis_
    assert dist(h, f, Uniform(n)) == 0


def test_km_tolerance_precondition():
    L = KMLearner(4, 0.1)
    with pytest.raises(ValueError):
        L.fit(MQSQOracle(AND12, mode=AdversarialSign(0.1)))
