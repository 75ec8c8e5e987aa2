"""Monte-Carlo and brute-force verification: verdict frequencies, concentration suites, SQ dimension."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import networkx as nx
import numpy as np
from scipy.stats import binomtest

from .boolean_core import Distribution, Permutation, TruthTable, Uniform, dist
from .learners import ConceptClass
from .oracles import LabeledDistribution, as_phi
from .reductions import Verdict, filtered_distribution

# ------------------------------------------------------------ trial harness


def trial_rng(seed: int, suite: str, trial: int) -> np.random.Generator:
    """Per-trial generator derived from (master seed, suite id, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(suite.encode()), int(trial)]))


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TrialReport:
    suite: str
    trials: int
    seed: int
    target: str
    outcomes: dict[str, int]
    estimate: float = 0.0
    ci_low: float = 0.0
    ci_high: float = 1.0
    decided: int = 0
    decided_estimate: float = 0.0
    decided_ci_low: float = 0.0
    decided_ci_high: float = 1.0
    records: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if sum(self.outcomes.values()) != self.trials:
            raise ValueError("outcome counts must sum to the number of trials")
        hits = self.outcomes.get(self.target, 0)
        self.estimate = hits / self.trials if self.trials else 0.0
        self.ci_low, self.ci_high = wilson_interval(hits, self.trials)
        self.decided = self.trials - self.outcomes.get(Verdict.ERROR.value, 0)
        self.decided_estimate = hits / self.decided if self.decided else 0.0
        self.decided_ci_low, self.decided_ci_high = wilson_interval(hits, self.decided)

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "records"}
        out["outcomes"] = dict(sorted(self.outcomes.items()))
        return out


def _label(v) -> str:
    if isinstance(v, Verdict):
        return v.value
    return getattr(getattr(v, "verdict", None), "value", None) or str(v)


def estimate_verdict_prob(run_trial: Callable[[np.random.Generator, int], object], trials: int, seed: int,
                          suite: str = "trials", target: str | Verdict = Verdict.STRUCTURE, threads: int = 1,
                          keep_records: bool = False) -> TrialReport:
    """Run ``run_trial(rng, i)`` for i < trials and tabulate the verdicts.

    Each trial draws from its own generator (see :func:`trial_rng`), so the
    report does not depend on ``threads``.  ``run_trial`` returns a
    :class:`Verdict`, a result carrying ``.verdict``, or a plain label.
    """
    if trials < 30:
        raise ValueError("at least 30 trials are required")
    target = _label(target)

    def one(i):
        return run_trial(trial_rng(seed, suite, i), i)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]
    counts: dict[str, int] = {}
    for r in results:
        lab = _label(r)
        counts[lab] = counts.get(lab, 0) + 1
    rep = TrialReport(suite, trials, seed, target, counts)
    if keep_records:
        rep.records = [getattr(r, "record", None) for r in results]
    return rep


# ------------------------------------------------------- concentration suites


@dataclass
class ConcentrationReport:
    suite: str
    params: dict
    trials: int
    violations: int
    nominal_bound: str
    max_deviation: float

    @property
    def rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    def to_json(self) -> dict:
        return {"suite": self.suite, "params": self.params, "trials": self.trials, "violations": self.violations,
                "rate": self.rate, "nominal_bound": self.nominal_bound, "max_deviation": self.max_deviation}


def three_color_edges(perm: Permutation) -> np.ndarray:
    """Color edges x -> perm(x) with 3 colors so that each class is a matching."""
    color = np.full(1 << perm.n, -1, dtype=np.int8)
    for cyc in perm.cycles():
        L = len(cyc)
        if L < 2:
            raise ValueError("permutation has a fixed point")
        cols = np.arange(L) % 2
        if L % 2:
            cols[-1] = 2
        color[np.asarray(cyc)] = cols
    return color


def check_coloring(perm: Permutation, color: np.ndarray) -> None:
    """Raise if some color class reuses a vertex."""
    src = np.arange(1 << perm.n, dtype=np.int64)
    dst = perm(src)
    for c in range(3):
        sel = color == c
        verts = np.concatenate([src[sel], dst[sel]])
        if np.unique(verts).size != verts.size:
            raise ValueError(f"color class {c} repeats a vertex")


def _random_f(rng, n: int, p: float) -> np.ndarray:
    return (rng.random(1 << n) < p).astype(np.float64)


def check_type12(dstar: Distribution, p: float, perm: Permutation, phi, trials: int, eps: float, rng=None) -> dict:
    """Deviation of Type I / Type II expectations under a random p-biased f from p E[phi], p^2 E[phi]."""
    rng = np.random.default_rng(rng)
    phi = as_phi(phi)
    check_coloring(perm, three_color_edges(perm))
    idx, w = dstar.support()
    ph = phi(idx)
    base = float(np.dot(w, ph))
    pidx = perm(idx)
    dev1, dev2 = np.empty(trials), np.empty(trials)
    for t in range(trials):
        f = _random_f(rng, dstar.n, p)
        dev1[t] = abs(float(np.dot(w, ph * f[idx])) - p * base)
        dev2[t] = abs(float(np.dot(w, ph * f[idx] * f[pidx])) - p * p * base)
    prm = {"n": dstar.n, "p": p, "eps": eps, "dstar_norm_sq": dstar.l2_norm_sq()}
    return {
        "I": ConcentrationReport("type1", prm, trials, int((dev1 > eps).sum()),
                                 "2 exp(-Omega(eps^2 / ||D*||_2^2))", float(dev1.max(initial=0))),
        "II": ConcentrationReport("type2", prm, trials, int((dev2 > eps).sum()),
                                  "6 exp(-Omega(eps^2 / ||D*||_2^2))", float(dev2.max(initial=0))),
    }


def check_type345(Dref: LabeledDistribution, phi, perm: Permutation, trials: int, eps: float, rng=None,
                  p: float | None = None) -> dict:
    """Deviation of Types III-V under the filtered distribution from their reference targets."""
    rng = np.random.default_rng(rng)
    phi = as_phi(phi)
    check_coloring(perm, three_color_edges(perm))
    n = Dref.n
    p = Dref.p_overall() if p is None else p
    allx = np.arange(1 << n, dtype=np.int64)
    ph = phi(allx)
    ppi = perm(allx)
    idx, w = Dref.marginal.support()
    y = Dref.y(idx)
    t3 = float(np.dot(w, ph[idx]))
    t4 = float(np.dot(w, ph[idx] * y))
    t5 = p * t4
    devs = np.empty((3, trials))
    for t in range(trials):
        f = TruthTable(n, rng.random(1 << n) < p)
        D, _ = filtered_distribution(Dref, f, p)
        dw = D.pmf()
        fv = f.table.astype(float)
        devs[0, t] = abs(float(np.dot(dw, ph)) - t3)
        devs[1, t] = abs(float(np.dot(dw, ph * fv)) - t4)
        devs[2, t] = abs(float(np.dot(dw, ph * fv * fv[ppi])) - t5)
    prm = {"n": n, "p": p, "eps": eps, "dx_norm_sq": Dref.marginal.l2_norm_sq()}
    tail = "exp(-Omega(eps^2 p^2 (1-p)^2 / ||D_x||_2^2))"
    return {
        name: ConcentrationReport(name, prm, trials, int((devs[j] > eps).sum()), f"{c} {tail}", float(devs[j].max(initial=0)))
        for j, (name, c) in enumerate((("type3", 4), ("type4", 4), ("type5", 8)))
    }


def check_z(Dref: LabeledDistribution, trials: int, delta: float, rng=None) -> tuple[ConcentrationReport, float]:
    """Violation rate of |Z - p(1-p)| <= delta p(1-p); also returns the mean of Z."""
    rng = np.random.default_rng(rng)
    n, p = Dref.n, Dref.p_overall()
    idx, w = Dref.marginal.support()
    y = Dref.y(idx)
    zs = np.empty(trials)
    for t in range(trials):
        f = rng.random(idx.size) < p
        zs[t] = float(np.dot(w, (1 - p) * y * f + p * (1 - y) * (~f)))
    target = p * (1 - p)
    dev = np.abs(zs - target)
    rep = ConcentrationReport("Z", {"n": n, "p": p, "delta": delta}, trials, int((dev > delta * target).sum()),
                              "2 exp(-Omega(delta^2 p^2 (1-p)^2 / ||D_x||_2^2))", float(dev.max(initial=0)))
    return rep, float(zs.mean())


def check_error_blowup(Dref: LabeledDistribution, trials: int, delta: float, rng=None) -> ConcentrationReport:
    """Violation rate of Pr_D[g != f] <= Pr_Dref[g != y] + delta over random (f, g) pairs."""
    rng = np.random.default_rng(rng)
    n, p = Dref.n, Dref.p_overall()
    idx, w = Dref.marginal.support()
    y = Dref.y(idx)
    viol, worst = 0, -math.inf
    for _ in range(trials):
        f = (rng.random(idx.size) < p).astype(float)
        g = (rng.random(idx.size) < 0.5).astype(float)
        mass = w * (p * (1 - y) * (1 - f) + (1 - p) * y * f)
        lhs = float(np.dot(mass, g != f) / mass.sum())
        rhs = float(np.dot(w, g * (1 - y) + (1 - g) * y))
        worst = max(worst, lhs - rhs)
        viol += lhs > rhs + delta
    return ConcentrationReport("error_blowup", {"n": n, "p": p, "delta": delta}, trials, viol,
                               "exp(-Omega(delta^2 p^2 (1-p)^2 / ||D_x||_2^2))", float(worst))


# ----------------------------------------------------------- SQ dimension

SQDIM_EXACT_MAX = 24
BAND_TOL = 1e-12


def _in_band(d_ij: float, d: int) -> bool:
    half = 1 / (2 * d**3)
    return 0.5 - half - BAND_TOL <= d_ij <= 0.5 + half + BAND_TOL


def _tables(C) -> list[TruthTable]:
    return list(C.members()) if isinstance(C, ConceptClass) else list(C)


def pairwise_distances(fs: Sequence[TruthTable], D: Distribution) -> np.ndarray:
    w = D.pmf()
    T = np.array([f.table for f in fs], dtype=float)
    # dist(f, g) = E[f] + E[g] - 2 E[fg] under D
    m = T @ w
    M = (T * w) @ T.T
    return m[:, None] + m[None, :] - 2 * M


def sq_dimension(C, D: Distribution, mode: str = "exact") -> dict:
    """Largest d with d members whose pairwise distances all lie within 1/(2 d^3) of 1/2.

    Exact mode checks candidate d downward with a maximum-clique search on the
    graph of pairs inside the band for d; greedy mode returns a lower bound.
    """
    fs = _tables(C)
    N = len(fs)
    if N == 0:
        return {"d": 0, "mode": mode, "lower_bound_only": mode != "exact"}
    if mode == "exact" and N > SQDIM_EXACT_MAX:
        raise ValueError(f"exact mode supports at most {SQDIM_EXACT_MAX} members, got {N}")
    dev = np.abs(pairwise_distances(fs, D) - 0.5)
    np.fill_diagonal(dev, np.inf)

    def adjacency(d):
        return dev <= 1 / (2 * d**3) + BAND_TOL

    if mode == "exact":
        for d in range(N, 1, -1):
            G = nx.from_numpy_array(adjacency(d).astype(np.uint8))
            clique, size = nx.max_weight_clique(G, weight=None)
            if size >= d:
                return {"d": d, "mode": mode, "lower_bound_only": False, "witness": sorted(clique)[:d]}
        return {"d": 1, "mode": mode, "lower_bound_only": False, "witness": [0]}
    if mode != "greedy":
        raise ValueError(f"unknown mode {mode!r}")
    best = 1
    for d in range(2, N + 1):
        A = adjacency(d)
        chosen: list[int] = []
        for v in np.argsort(-A.sum(axis=1), kind="stable").tolist():
            if A[v, chosen].all():
                chosen.append(v)
        if len(chosen) < d:
            break
        best = d
    return {"d": best, "mode": mode, "lower_bound_only": True}


def sq_dimension_bruteforce(C, D: Distribution) -> int:
    """Independent oracle: enumerate all subsets, recomputing distances directly."""
    fs = _tables(C)
    N = len(fs)
    best = 1 if N else 0
    for r in range(2, N + 1):
        for S in combinations(range(N), r):
            if all(_in_band(dist(fs[i], fs[j], D), r) for i, j in combinations(S, 2)):
                best = r
                break
    return best


def lower_bound_check(q: int, tau: float, dstar_norm_sq: float | None = None, d: int | None = None,
                      C=None, D: Distribution | None = None, dx_norm_sq: float | None = None) -> dict:
    """Compare a learner declaration against the SQ-dimension lower bound.

    Instantiation: "few queries" is q < 10 d^(1/3), "coarse tolerance" is
    tau > d^(-1/3) / 10, and "small norm" is ||.||_2^2 <= d^(-1/3).  The
    declaration is in the forbidden region when every supplied precondition
    holds; norms that are not supplied are reported as such.
    """
    if d is None:
        if C is None or D is None:
            raise ValueError("supply d or a concept class and distribution")
        d = sq_dimension(C, D, "exact" if len(_tables(C)) <= SQDIM_EXACT_MAX else "greedy")["d"]
    if dx_norm_sq is None and D is not None:
        dx_norm_sq = D.l2_norm_sq()
    if d < 2:
        return {"d": d, "forbidden": False, "conditions": {}, "note": "no constraint for d < 2"}
    root = d ** (1 / 3)
    conds = {
        "q < 10 d^(1/3)": q < 10 * root,
        "tau > d^(-1/3)/10": tau > 1 / (10 * root),
    }
    for name, val in (("||D*||_2^2 <= d^(-1/3)", dstar_norm_sq), ("||D||_2^2 <= d^(-1/3)", dx_norm_sq)):
        conds[name] = "not supplied" if val is None else bool(val <= 1 / root)
    forbidden = all(v is True or v == "not supplied" for v in conds.values())
    return {"d": d, "forbidden": forbidden, "conditions": conds,
            "thresholds": {"q_max": 10 * root, "tau_min": 1 / (10 * root), "norm_max": 1 / root}}
