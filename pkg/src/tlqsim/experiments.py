"""Calibrated suite runners shared by the CLI, ``selftest`` and the acceptance tests.

Every runner takes a flat parameter dict (defaults merged with overrides), a
master seed and a thread count, and returns a :class:`SuiteResult` whose rows
are read straight from run records.  All randomness comes from
:func:`tlqsim.verify.trial_rng` keyed by (seed, suite/regime id, trial index).
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .boolean_core import (
    Explicit,
    Restriction,
    TruthTable,
    Uniform,
    XorShift,
    dist,
    fwht,
    influence_exact,
)
from .learners import (
    Dictators,
    Juntas,
    KMLearner,
    Parities,
    ReferenceTLQ,
    TestableJuntaLearner,
    influence_mqsq,
)
from .oracles import (
    AdversarialSign,
    ConstantBernoulli,
    Deterministic,
    ExampleOracle,
    LabeledDistribution,
    MQSQOracle,
    RefutationSQOracle,
    TargetSQOracle,
)
from .reductions import (
    BiasedRefuter,
    CoordinateCorrelationRefuter,
    InvalidParams,
    MQSQRefutationParams,
    RefutationParams,
    Verdict,
    WeakLearnParams,
    feature_select,
    filtered_distribution,
    learn_junta_via_refutation,
    mqsq_to_sq_refuter,
    sq_refuter_to_weak_learner,
)
from .verify import (
    check_error_blowup,
    check_type12,
    check_type345,
    check_z,
    estimate_verdict_prob,
    sq_dimension,
    sq_dimension_bruteforce,
    trial_rng,
)


@dataclass
class Assertion:
    name: str
    passed: bool
    value: float
    threshold: float

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "threshold": float(self.threshold)}


@dataclass
class SuiteResult:
    suite: str
    params: dict
    rows: list[dict] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def check(self, name: str, value: float, threshold: float, at_least: bool = True) -> None:
        ok = value >= threshold if at_least else value <= threshold
        self.assertions.append(Assertion(name, bool(ok), float(value), float(threshold)))

    def check_equal(self, name: str, value: float, target: float) -> None:
        self.assertions.append(Assertion(name, bool(value == target), float(value), float(target)))

    def to_json(self) -> dict:
        return {"suite": self.suite, "params": self.params, "passed": self.passed,
                "assertions": [a.to_json() for a in self.assertions], "rows": self.rows}


def _planted_junta(rng, n: int, k: int, min_mean: float = 0.0) -> TruthTable:
    """Random k-junta on a random k-subset whose every coordinate is relevant
    and whose mean lies in ``[min_mean, 1 - min_mean]``."""
    S = sorted(int(s) for s in rng.choice(n, k, replace=False))
    while True:
        base = rng.integers(0, 2, 1 << k)
        g = TruthTable.junta(n, S, base)
        if min_mean <= base.mean() <= 1 - min_mean and all(_relevant(g, i) for i in S):
            return g


def _relevant(f: TruthTable, i: int) -> bool:
    x = np.arange(1 << f.n)
    return bool(np.any(f.table != f.table[x ^ (1 << i)]))


def _sparse_target(rng, n: int, r: int) -> TruthTable:
    """Random Boolean function of r independent parities (Fourier sparsity <= 2^r)."""
    while True:
        A = rng.integers(0, 2, (r, n))
        if np.linalg.matrix_rank(A) == r:
            break
    base = rng.integers(0, 2, 1 << r)
    x = np.arange(1 << n)
    bits = (x[:, None] >> np.arange(n)) & 1
    cell = (((bits @ A.T) % 2) << np.arange(r)).sum(axis=1)
    return TruthTable(n, base[cell].astype(np.uint8))


def _concept_class(name: str, n: int, k: int):
    if name == "parities":
        return Parities(n, k)
    if name == "dictators":
        return Dictators(n)
    if name == "juntas":
        return Juntas(n, k)
    raise InvalidParams("class in {parities, dictators, juntas}", f"got {name!r}")


# ------------------------------------------------------------------- suites


def run_fourier(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("fourier", p)
    worst_rt = worst_pv = 0.0
    for n in range(p["n_min"], p["n_max"] + 1):
        rt = pv = 0.0
        for t in range(p["trials"]):
            rng = trial_rng(seed, f"fourier/n={n}", t)
            F = 1.0 - 2.0 * (rng.random(1 << n) < 0.5)
            c = fwht(F)
            rt = max(rt, float(np.max(np.abs(fwht(c, inverse=True) - F))))
            pv = max(pv, abs(float(np.sum(c * c)) - float(np.mean(F * F))))
        res.rows.append({"regime": f"n={n}", "roundtrip_max_err": rt, "parseval_max_err": pv})
        worst_rt, worst_pv = max(worst_rt, rt), max(worst_pv, pv)
    res.check("roundtrip_max_err", worst_rt, p["roundtrip_tol"], at_least=False)
    res.check("parseval_max_err", worst_pv, p["parseval_tol"], at_least=False)
    return res


def run_influence(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("influence", p)
    tau = p["tau"]
    violations = 0
    worst = 0.0
    for t in range(p["trials"]):
        rng = trial_rng(seed, "influence", t)
        n = int(rng.integers(p["n_min"], p["n_max"] + 1))
        f = TruthTable.random(n, rng, float(rng.uniform(0.1, 0.9)))
        i = int(rng.integers(n))
        others = [c for c in range(n) if c != i]
        fixed = rng.choice(others, int(rng.integers(0, len(others))), replace=False)
        R = Restriction.of({int(c): int(rng.integers(2)) for c in sorted(fixed)})
        oracle = MQSQOracle(f, Uniform(n), AdversarialSign(tau, "random", rng=rng))
        est = influence_mqsq(oracle, i, R)
        exact = influence_exact(f, i, R)
        gap = abs(est - exact)
        worst = max(worst, gap)
        violations += gap > 4 * tau + 1e-12
    res.rows.append({"regime": f"tau={tau}", "trials": p["trials"], "violations": violations, "max_abs_err": worst})
    res.check("violations", violations, 0, at_least=False)
    return res


def run_km(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("km", p)
    s, eps = p["sparsity"], p["eps"]
    exact = 0
    r = int(math.log2(s))
    for t in range(p["trials"]):
        rng = trial_rng(seed, "km", t)
        n = int(rng.integers(p["n_min"], p["n_max"] + 1))
        f = _sparse_target(rng, n, int(rng.integers(1, r + 1)))
        learner = KMLearner(s, eps, random_state=rng)
        oracle = MQSQOracle(f, Uniform(n), AdversarialSign(learner.theta / 8, "random", rng=rng))
        h = learner.fit(oracle).hypothesis_
        d = dist(h, f, Uniform(n))
        exact += d == 0
        res.rows.append({"regime": f"trial={t}", "n": n, "sparsity": int(np.count_nonzero(np.abs(fwht(f.pm())) > 1e-9)),
                         "buckets": len(learner.coefficients_), "dist": d})
    res.check("exact_recovery_rate", exact / p["trials"], 1.0)
    return res


def refutation_params(p: dict) -> RefutationParams:
    return RefutationParams(eta=p["eta"], eps=p["eps"], m=p["m"], q=p["q"], c=p["c"], C1=p["C1"], C2=p["C2"],
                            C3=p["C3"], ratio=p["ratio"], k=p["norm_k"], oversample=p["oversample"],
                            strict=p["strict"])


def run_refute(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("refute", p)
    n = p["n"]
    params = refutation_params(p)
    C = _concept_class(p["class"], n, p["k"])
    refuter = BiasedRefuter(ReferenceTLQ(C, eps=p["eps"], m=p["m"], q=p["q"]), params, n)
    members = list(C.members()) if "structure" in p["cases"] else []
    for case in p["cases"]:
        structure = case == "structure"

        def trial(rng, i, case=case):
            if structure:
                g = members[int(rng.integers(len(members)))]
                D = LabeledDistribution(Uniform(n), Deterministic(g))
            else:
                D = LabeledDistribution(Uniform(n), ConstantBernoulli(n, float(case)))
            return refuter.run_oracle(ExampleOracle(D, rng), rng)

        target = Verdict.STRUCTURE if structure else Verdict.NOISE
        rep = estimate_verdict_prob(trial, p["trials"], seed, suite=f"refute/{case}", target=target, threads=threads)
        regime = "structure" if structure else f"noise p={case}"
        row = {"regime": regime}
        row.update(rep.to_json())
        row.pop("suite")
        row["outcomes"] = ";".join(f"{k}={v}" for k, v in row["outcomes"].items())
        res.rows.append(row)
        res.check(f"{regime} wilson_low", rep.ci_low, p["min_ci_low"])
    return res


JUNTA_SIZES = {3: (120, 8, 16), 2: (60, 4, 8), 1: (24, 4, 8)}


def junta_refuter_factory(p: dict) -> Callable[[int, int], BiasedRefuter]:
    sizes = {int(k): tuple(v) for k, v in p["sizes"].items()}

    def factory(n_free: int, k_free: int) -> BiasedRefuter:
        m, q, t = sizes[min(k_free, max(sizes))]
        params = RefutationParams(eps=p["eps"], m=m, q=q, C1=p["C1"], C2=p["C2"], C3=t * p["eps"] ** 2)
        return BiasedRefuter(ReferenceTLQ(Juntas(n_free, k_free), eps=p["eps"], m=m, q=q), params, n_free)

    return factory


def run_junta(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("junta", p)
    n, k = p["n"], p["k"]
    factory = junta_refuter_factory(p)
    hits = 0
    for t in range(p["select_trials"]):
        rng = trial_rng(seed, "junta/select", t)
        g = _planted_junta(rng, n, k, 4 * p["eps"])
        oracle = ExampleOracle(LabeledDistribution(Uniform(n), Deterministic(g)), rng)
        coord, rec = feature_select(factory(n, k), oracle, k, p["delta"], rng)
        ok = _relevant(g, coord)
        hits += ok
        res.rows.append({"regime": f"select trial={t}", "coord": coord, "relevant": int(ok), "ell": rec["ell"]})
    exact = 0
    for t in range(p["tree_trials"]):
        rng = trial_rng(seed, "junta/tree", t)
        g = _planted_junta(rng, n, k, 4 * p["eps"])
        oracle = ExampleOracle(LabeledDistribution(Uniform(n), Deterministic(g)), rng)
        tree, h = learn_junta_via_refutation(factory, oracle, k, p["node_eps"], p["delta"], rng)
        d = dist(h, g, Uniform(n))
        exact += d == 0
        res.rows.append({"regime": f"tree trial={t}", "depth": tree.depth(), "dist": d})
    if p["select_trials"]:
        res.check("select_relevant_rate", hits / p["select_trials"], p["min_select_rate"])
    if p["tree_trials"]:
        res.check("tree_exact_rate", exact / p["tree_trials"], p["min_tree_rate"])
    return res


def run_mqsq2sq(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("mqsq2sq", p)
    n = p["n"]
    mp = MQSQRefutationParams(c=p["c"], eta=p["eta"], eps=p["eps"], tau=p["tau"], tau_prime=p["tau_prime"],
                              alpha=p["alpha"], B=p["B"])
    learner = TestableJuntaLearner(k=p["k"], eps=p["eps"])
    refuter = mqsq_to_sq_refuter(learner, mp, n, Uniform(n).l2_norm_sq())
    q = learner.declared_queries(n)
    for case in ("structure", "noise"):
        counts: list[int] = []

        def trial(rng, i, case=case):
            if case == "structure":
                D = LabeledDistribution(Uniform(n), Deterministic(_planted_junta(rng, n, p["k"])))
            else:
                D = LabeledDistribution(Uniform(n), ConstantBernoulli(n, 0.5))
            sq = RefutationSQOracle(D, AdversarialSign(p["tau_prime"], "random", rng=rng))
            out = refuter.run(sq)
            counts.append(sq.queries_made)
            return out

        rep = estimate_verdict_prob(trial, p["trials"], seed, suite=f"mqsq2sq/{case}", target=case, threads=1)
        row = {"regime": case, "declared_queries": q, "max_sq_count": max(counts)}
        row.update(rep.to_json())
        row.pop("suite")
        row["outcomes"] = ";".join(f"{k}={v}" for k, v in row["outcomes"].items())
        res.rows.append(row)
        res.check(f"{case} wilson_low", rep.ci_low, p["min_ci_low"])
        res.check(f"{case} max_sq_count", max(counts), q + 4, at_least=False)
    return res


def run_weaklearn(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("weaklearn", p)
    n = p["n"]
    wp = WeakLearnParams(eps=p["eps"], tau=p["tau"], tau_prime=p["tau_prime"], alpha=p["alpha"])
    wp.validate()
    refuter = CoordinateCorrelationRefuter(n)
    good = replayed = within = 0
    bound = 0.5 - p["tau"] / 8
    for t in range(p["trials"]):
        rng = trial_rng(seed, "weaklearn", t)
        f = TruthTable.dictator(n, int(rng.integers(n)))
        D = Uniform(n)
        out = sq_refuter_to_weak_learner(refuter, TargetSQOracle(f, D, AdversarialSign(p["tau_prime"], "random", rng=rng)),
                                         D, wp, rng)
        e = dist(out.hypothesis, f, D)
        good += e <= bound + 1e-12
        diffs = out.record["replay_diffs"]
        replayed += len(diffs)
        within += sum(d <= p["tau"] for d in diffs)
        res.rows.append({"regime": f"trial={t}", "kind": out.kind, "error": e, "replayed": len(diffs),
                         "max_replay_diff": max(diffs, default=0.0)})
    res.check("weak_rate", good / p["trials"], 2 / 3)
    res.check("replay_within_tau_rate", within / replayed if replayed else 1.0, 1.0)
    return res


def run_filtered(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("filtered", p)
    worst = 0.0
    for t in range(p["pairs"]):
        rng = trial_rng(seed, "filtered/identity", t)
        n = int(rng.integers(2, p["n_max"] + 1))
        w = rng.random(1 << n) ** 3
        Dx = Explicit(n, w / w.sum())
        prob = float(rng.uniform(0.05, 0.95))
        f = TruthTable.random(n, rng, prob)
        D, _ = filtered_distribution(LabeledDistribution(Dx, ConstantBernoulli(n, prob)), f, prob)
        worst = max(worst, float(np.max(np.abs(D.pmf() - Dx.pmf()))))
    res.rows.append({"regime": "noise identity", "pairs": p["pairs"], "max_pmf_err": worst})
    res.check("max_pmf_err", worst, p["pmf_tol"], at_least=False)
    n = p["z_n"]
    prob = p["z_p"]
    rng = trial_rng(seed, "filtered/z", 0)
    Dref = LabeledDistribution(Uniform(n), Deterministic(TruthTable.random(n, rng, prob)))
    _, zmean = check_z(Dref, p["z_trials"], 1.0, rng)
    target = Dref.p_overall() * (1 - Dref.p_overall())
    res.rows.append({"regime": f"E[Z] n={n}", "trials": p["z_trials"], "mean_z": zmean, "target": target})
    res.check("mean_z_abs_err", abs(zmean - target), p["z_tol"], at_least=False)
    return res


def run_concentration(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("concentration", p)
    n, prob, dev, trials = p["n"], p["p"], p["deviation"], p["trials"]
    rng = trial_rng(seed, "concentration", 0)
    g = TruthTable.random(n, rng)
    Dref = LabeledDistribution(Uniform(n), Deterministic(g))
    phi_table = rng.random(1 << n)
    perm = XorShift(n, p["shift"])
    reports = dict(check_type12(Uniform(n), prob, perm, lambda x: phi_table[x], trials, dev, rng))
    reports.update(check_type345(Dref, lambda x: phi_table[x], perm, trials, dev, rng, p=prob))
    reports["Z"], _ = check_z(Dref, trials, dev, rng)
    reports["error_blowup"] = check_error_blowup(Dref, trials, dev, rng)
    for name, rep in reports.items():
        res.rows.append({"regime": rep.suite, "trials": rep.trials, "violations": rep.violations,
                         "rate": rep.rate, "max_deviation": rep.max_deviation})
        res.check(f"{rep.suite} violation_rate", rep.rate, p["max_rate"], at_least=False)
    return res


def run_sqdim(p: dict, seed: int, threads: int = 1) -> SuiteResult:
    res = SuiteResult("sqdim", p)
    for n in p["parity_n"]:
        C = [TruthTable.parity(n, S) for r in range(n + 1) for S in combinations(range(n), r)]
        d = sq_dimension(C, Uniform(n))["d"]
        res.rows.append({"regime": f"parities n={n}", "class_size": len(C), "d": d})
        res.check_equal(f"parities n={n} d", d, 2**n)
    agree = 0
    for t in range(p["random_classes"]):
        rng = trial_rng(seed, "sqdim/random", t)
        n = p["random_n"]
        size = int(rng.integers(2, p["max_class_size"] + 1))
        pool = [TruthTable.parity(n, S) for r in range(n + 1) for S in combinations(range(n), r)]
        C = []
        for _ in range(size):
            C.append(pool[int(rng.integers(len(pool)))] if rng.random() < 0.5 else TruthTable.random(n, rng))
        d = sq_dimension(C, Uniform(n))["d"]
        b = sq_dimension_bruteforce(C, Uniform(n))
        agree += d == b
        res.rows.append({"regime": f"random trial={t}", "class_size": size, "d": d, "d_bruteforce": b})
    if p["random_classes"]:
        res.check("bruteforce_agreement_rate", agree / p["random_classes"], 1.0)
    return res


DEFAULTS: dict[str, dict] = {
    "fourier": {"n_min": 4, "n_max": 14, "trials": 100, "roundtrip_tol": 1e-12, "parseval_tol": 1e-9},
    "influence": {"n_min": 3, "n_max": 10, "tau": 0.01, "trials": 500},
    "km": {"n_min": 6, "n_max": 12, "sparsity": 8, "eps": 0.1, "trials": 50},
    "refute": {"n": 12, "class": "parities", "k": 3, "eta": 0.0, "eps": 0.05, "c": 1.0, "m": 36, "q": 8,
               "C1": 50.0, "C2": 8.0, "C3": 0.04, "ratio": 100.0, "norm_k": 10.0, "oversample": 2.0,
               "strict": False, "cases": ["structure", 0.5, 0.3, 0.7], "trials": 400, "min_ci_low": 0.66},
    "filtered": {"pairs": 20, "n_max": 10, "pmf_tol": 1e-12, "z_n": 12, "z_p": 0.5, "z_trials": 10000,
                 "z_tol": 0.01},
    "concentration": {"n": 14, "p": 0.5, "deviation": 0.05, "trials": 1000, "shift": 11, "max_rate": 0.02},
    "junta": {"n": 10, "k": 3, "eps": 0.05, "C1": 10.0, "C2": 0.3,
              "sizes": {str(k): list(v) for k, v in JUNTA_SIZES.items()}, "node_eps": 0.025, "delta": 0.05,
              "select_trials": 100, "tree_trials": 50, "min_select_rate": 0.95, "min_tree_rate": 0.9},
    "mqsq2sq": {"n": 12, "k": 2, "c": 1.0, "eta": 0.0, "eps": 0.1, "tau": 0.02, "tau_prime": 0.005,
                "alpha": 0.25, "B": 144.0, "trials": 200, "min_ci_low": 0.66},
    "weaklearn": {"n": 8, "tau": 0.1, "eps": 0.0125, "tau_prime": 0.002, "alpha": 0.25, "trials": 100},
    "sqdim": {"parity_n": [2, 3, 4], "random_classes": 50, "random_n": 3, "max_class_size": 12},
}

RUNNERS: dict[str, Callable[[dict, int, int], SuiteResult]] = {
    "fourier": run_fourier,
    "influence": run_influence,
    "km": run_km,
    "refute": run_refute,
    "filtered": run_filtered,
    "concentration": run_concentration,
    "junta": run_junta,
    "mqsq2sq": run_mqsq2sq,
    "weaklearn": run_weaklearn,
    "sqdim": run_sqdim,
}

SELFTEST_ORDER = list(RUNNERS)


def trial_keys(suite: str) -> list[str]:
    return [k for k in DEFAULTS[suite] if k == "trials" or k.endswith("_trials") or k in ("pairs", "random_classes")]


def resolve_params(suite: str, overrides: dict | None = None, trials: int | None = None) -> dict:
    """Suite defaults, then a global trial count, then explicit overrides; unknown keys are rejected."""
    if suite not in DEFAULTS:
        raise InvalidParams(f"suite in {sorted(DEFAULTS)}", f"got {suite!r}")
    p = copy.deepcopy(DEFAULTS[suite])
    if trials is not None:
        for k in trial_keys(suite):
            p[k] = int(trials)
    for k, v in (overrides or {}).items():
        if k not in p:
            raise InvalidParams(f"known {suite} parameter", f"unknown field {k!r}")
        p[k] = v
    validate_params(suite, p)
    return p


def validate_params(suite: str, p: dict) -> None:
    """Check reduction predicates before any run."""
    if suite == "refute":
        rp = refutation_params(p)
        rp.validate()
        _concept_class(p["class"], p["n"], p["k"])
    elif suite == "weaklearn":
        WeakLearnParams(eps=p["eps"], tau=p["tau"], tau_prime=p["tau_prime"], alpha=p["alpha"]).validate()
    elif suite == "mqsq2sq":
        mp = MQSQRefutationParams(c=p["c"], eta=p["eta"], eps=p["eps"], tau=p["tau"], tau_prime=p["tau_prime"],
                                  alpha=p["alpha"], B=p["B"])
        learner = TestableJuntaLearner(k=p["k"], eps=p["eps"])
        bad = mp.violations(Uniform(p["n"]).l2_norm_sq(), learner.declared_max_dstar_norm_sq(p["n"]))
        if bad:
            raise InvalidParams(bad[0])


def run_suite(suite: str, params: dict, seed: int, threads: int = 1) -> SuiteResult:
    t0 = time.perf_counter()
    out = RUNNERS[suite](params, seed, threads)
    out.elapsed = time.perf_counter() - t0
    return out
