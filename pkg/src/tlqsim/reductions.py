"""Executable reductions between refutation, testable learning and weak learning.

* :func:`biased_refutation` turns a testable learner with queries into a
  biased refuter by filtering examples against a lazily drawn random function.
* :func:`feature_select` and :func:`learn_junta_via_refutation` turn an exact
  refuter for juntas into a junta learner through prefix randomization.
* :class:`MQSQRefuter` turns an MQ-SQ testable learner into an SQ refuter.
* :func:`sq_refuter_to_weak_learner` turns an SQ refuter into an SQ weak learner.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .boolean_core import (
    MAX_LAZY_DENSE_MEMO_N,
    BooleanFunction,
    Distribution,
    Explicit,
    LazyBiasedFunction,
    Restriction,
    TruthTable,
    _check_n,
    prefix_randomize,
    project,
)
from .oracles import (
    LabeledDistribution,
    MembershipOracle,
    Phi,
    TypeI,
    TypeII,
    TypeIII,
    TypeIV,
    TypeV,
    as_phi,
)


class InvalidParams(ValueError):
    """A validity predicate failed; ``predicate`` names it."""

    def __init__(self, predicate: str, detail: str = ""):
        self.predicate = predicate
        super().__init__(f"violated predicate: {predicate}" + (f" ({detail})" if detail else ""))


class ParamWarning(UserWarning):
    pass


class ContractViolation(RuntimeError):
    pass


class StarvationError(RuntimeError):
    pass


class DepthExceeded(ContractViolation):
    pass


class NoGapFound(ContractViolation):
    pass


class PreconditionError(ValueError):
    pass


def _ceil(x: float) -> int:
    # guards against float noise such as 50 / 0.05**2 = 20000.000000000004
    return math.ceil(x - 1e-9)


# ------------------------------------------------------------------ verdicts


class Verdict(str, Enum):
    NOISE = "noise"
    STRUCTURE = "structure"
    ERROR = "error"


class ErrorReason(str, Enum):
    INSUFFICIENT_SAMPLES = "insufficient samples"
    DUPLICATE_IN_TEST = "duplicate in test set"
    TEST_QUERY_OVERLAP = "test/query overlap"


@dataclass
class RefutationResult:
    verdict: Verdict
    reason: ErrorReason | None = None
    record: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.verdict is Verdict.ERROR) != (self.reason is not None):
            raise ValueError("an error verdict carries exactly one reason")

    def to_json(self) -> dict:
        out = {"verdict": self.verdict.value, "record": self.record}
        if self.reason is not None:
            out["reason"] = self.reason.value
        return out


# ---------------------------------------------------- filtered distribution


def filtered_distribution(Dref: LabeledDistribution, f: BooleanFunction, p: float | None = None):
    """Exact PMF of the examples kept by the rejection filter, and its normalizer Z."""
    if f.n != Dref.n:
        raise ValueError("dimension mismatch")
    p = Dref.p_overall() if p is None else float(p)
    idx, w = Dref.marginal.support()
    y = Dref.y(idx)
    fx = f(idx).astype(float)
    mass = w * (p * (1 - y) * (1 - fx) + (1 - p) * y * fx)
    Z = float(mass.sum())
    if Z <= 0:
        raise ValueError("Z = 0: the function disagrees with every label on the support")
    weights = np.zeros(1 << _check_n(Dref.n))
    weights[idx] = mass / Z
    return Explicit(Dref.n, weights), Z


# -------------------------------------------------------- biased refuter


@dataclass
class RefutationParams:
    """Parameters of the biased refuter built from a testable learner.

    ``C1``, ``C2``, ``C3``, ``ratio`` and ``k`` are unspecified constants and
    act as tunables.  ``oversample`` sizes the filter stage:
    ``n_filter = oversample * (m + n_test) / (alpha (1 - alpha))`` so that the
    filtered set is large enough whenever the label bias lies in
    ``[alpha, 1 - alpha]``.
    """

    eta: float = 0.0
    eps: float = 0.05
    m: int = 30
    q: int = 20
    c: float = 1.0
    C1: float = 50.0
    C2: float = 8.0
    C3: float = 50.0
    ratio: float = 100.0
    k: float = 10.0
    oversample: float = 2.0
    strict: bool = False

    HARD = "eta < (1/2 - 4*eps)/c"
    NORM = "eps^2 >= c*k*sup||D_x||_2"
    SCALE = "m + q/eps^2 <= (1/sup||D_x||_2)/ratio"

    @property
    def alpha(self) -> float:
        return self.c * self.eta + 4 * self.eps

    @property
    def n_phat(self) -> int:
        return _ceil(self.C1 / self.eps**2)

    @property
    def n_pool(self) -> int:
        return _ceil(self.C2 * ((self.m + 1 / self.eps**2) / self.eps + self.q))

    @property
    def n_test(self) -> int:
        return _ceil(self.C3 / self.eps**2)

    @property
    def n_filter(self) -> int:
        a = self.alpha
        return _ceil(self.oversample * (self.m + self.n_test) / (a * (1 - a)))

    @property
    def m_prime(self) -> int:
        return self.n_phat + self.n_pool + self.n_filter

    def violations(self, sup_l2: float | None = None) -> list[str]:
        out = []
        if not self.eta < (0.5 - 4 * self.eps) / self.c:
            out.append(self.HARD)
        if sup_l2 is not None:
            if not self.eps**2 >= self.c * self.k * sup_l2:
                out.append(self.NORM)
            if not self.m + self.q / self.eps**2 <= 1 / sup_l2 / self.ratio:
                out.append(self.SCALE)
        return out

    def validate(self, sup_l2: float | None = None) -> list[str]:
        """Raise on the hard predicate; warn (or raise if ``strict``) on the asymptotic ones."""
        if not 0 < self.eps < 0.125:
            raise InvalidParams("0 < eps < 1/8", f"eps = {self.eps}")
        if self.c < 1:
            raise InvalidParams("c >= 1", f"c = {self.c}")
        if self.m < 1 or self.q < 0 or self.eta < 0:
            raise InvalidParams("m >= 1, q >= 0, eta >= 0")
        bad = self.violations(sup_l2)
        if self.HARD in bad:
            raise InvalidParams(self.HARD, f"eta = {self.eta}, bound = {(0.5 - 4 * self.eps) / self.c}")
        for name in bad:
            if self.strict:
                raise InvalidParams(name)
            warnings.warn(f"asymptotic hypothesis not met at this scale: {name}", ParamWarning, stacklevel=2)
        return bad

    def accounting(self) -> dict:
        return {"n_phat": self.n_phat, "n_pool": self.n_pool, "n_test": self.n_test,
                "n_filter": self.n_filter, "m_prime": self.m_prime, "alpha": self.alpha}

    def to_json(self) -> dict:
        return asdict(self)


class PoolExhausted(RuntimeError):
    pass


class PoolFunction(BooleanFunction):
    """Lazily drawn random function whose coins come from a fixed list of labels."""

    def __init__(self, n: int, coins: np.ndarray):
        self.n = n
        self.coins = np.asarray(coins, dtype=np.uint8)
        self.used = 0
        self._memo = np.full(1 << n, -1, dtype=np.int8) if n <= MAX_LAZY_DENSE_MEMO_N else None
        self._dict: dict[int, int] = {}

    def take(self, k: int) -> np.ndarray:
        if self.used + k > self.coins.size:
            raise PoolExhausted(f"reserved label pool exhausted ({self.coins.size} coins)")
        out = self.coins[self.used: self.used + k]
        self.used += k
        return out

    def _eval(self, idx):
        if self._memo is not None:
            fresh = idx[self._memo[idx] < 0]
            if fresh.size:
                # coins are assigned in order of first appearance
                _, first = np.unique(fresh, return_index=True)
                order = fresh[np.sort(first)]
                self._memo[order] = self.take(order.size)
            return self._memo[idx].astype(np.uint8)
        out = np.empty(idx.shape, dtype=np.uint8)
        for j, x in enumerate(idx.tolist()):
            if x not in self._dict:
                self._dict[x] = int(self.take(1)[0])
            out[j] = self._dict[x]
        return out


def biased_refutation(X, y, params: RefutationParams, learner, n: int, rng=None) -> RefutationResult:
    """Run the biased refuter on ``m_prime`` examples ``(X, y)`` (point indices and labels).

    ``learner.run(idx, labels, membership_oracle, rng)`` returns a hypothesis
    or ``None`` for a rejection.  Coins for the random function come from the
    reserved label pool: f-values at the filter examples in first-appearance
    order, then acceptance coins, then coins for fresh membership queries.
    """
    X = np.asarray(X, dtype=np.int64)
    y = np.asarray(y, dtype=np.uint8)
    rng = np.random.default_rng(rng)
    P = params
    rec: dict = {"accounting": P.accounting(), "samples_given": int(X.size)}
    if X.size < P.n_phat + P.n_pool:
        return RefutationResult(Verdict.ERROR, ErrorReason.INSUFFICIENT_SAMPLES, rec)

    p_hat = float(y[: P.n_phat].mean())
    rec["p_hat"] = p_hat
    if p_hat < 2 * P.eps or p_hat > 1 - 2 * P.eps:
        rec["exit"] = "label bias"
        return RefutationResult(Verdict.STRUCTURE, record=rec)

    pool = y[P.n_phat: P.n_phat + P.n_pool]
    f = PoolFunction(n, pool)
    Xr, yr = X[P.n_phat + P.n_pool:], y[P.n_phat + P.n_pool:]
    try:
        fx = f(Xr)
        match = np.flatnonzero(fx == yr)
        coins = f.take(match.size)
        # keep w.p. p when y = f = 0, w.p. 1 - p when y = f = 1
        keep = np.where(yr[match] == 0, coins == 1, coins == 0)
        S = Xr[match[keep]]
        rec["filtered"] = int(S.size)
        if S.size < P.m + P.n_test:
            return RefutationResult(Verdict.ERROR, ErrorReason.INSUFFICIENT_SAMPLES, rec)
        train, test = S[: P.m], S[P.m: P.m + P.n_test]
        mq_oracle = MembershipOracle(f)
        h = learner.run(train, f(train), mq_oracle, rng)
    except PoolExhausted:
        rec["pool_used"] = f.used
        return RefutationResult(Verdict.ERROR, ErrorReason.INSUFFICIENT_SAMPLES, rec)
    rec["pool_used"] = f.used
    rec["queries"] = mq_oracle.queries_made
    if h is None:
        rec["learner"] = "reject"
        return RefutationResult(Verdict.STRUCTURE, record=rec)
    if np.unique(test).size < test.size:
        return RefutationResult(Verdict.ERROR, ErrorReason.DUPLICATE_IN_TEST, rec)
    if np.isin(test, train).any() or np.isin(test, np.asarray(mq_oracle.query_log, dtype=np.int64)).any():
        return RefutationResult(Verdict.ERROR, ErrorReason.TEST_QUERY_OVERLAP, rec)
    test_err = float(np.mean(h(test) != f(test)))
    rec["test_error"] = test_err
    verdict = Verdict.NOISE if test_err > P.c * P.eta + 3 * P.eps else Verdict.STRUCTURE
    return RefutationResult(verdict, record=rec)


class BiasedRefuter:
    """Biased refuter bound to a learner and parameters on ``{0,1}^n``."""

    def __init__(self, learner, params: RefutationParams, n: int, sup_l2: float | None = None):
        self.learner = learner
        self.params = params
        self.n = n
        self.warnings = params.validate(sup_l2)

    @property
    def sample_count(self) -> int:
        return self.params.m_prime

    @property
    def alpha(self) -> float:
        return self.params.alpha

    def run(self, X, y, rng=None) -> RefutationResult:
        return biased_refutation(X, y, self.params, self.learner, self.n, rng)

    def run_oracle(self, oracle, rng=None) -> RefutationResult:
        X, y = oracle.draw(self.sample_count)
        return self.run(X, y, rng)


def tlq_to_agnostic_params(c: float, eps: float, m: int, q: int, t: float = 0.0, sup_l2: float | None = None,
                           params: RefutationParams | None = None) -> dict:
    """Parameter accounting for the agnostic learner obtained from a testable learner.

    Pure arithmetic: refutation sample size m', the cubic agnostic sample
    bound, the time bound and the excess error ``1 - 2 eta* + eps`` with
    ``eta* = (1/2 - 4 eps)/c``.
    """
    if c < 1 or not 0 < eps < 0.125:
        raise InvalidParams("c >= 1 and 0 < eps < 1/8")
    params = params or RefutationParams(eps=eps, m=m, q=q, c=c)
    if sup_l2 is not None:
        bad = [v for v in params.violations(sup_l2) if v != RefutationParams.HARD]
        if bad:
            raise InvalidParams(bad[0])
    m_order = (m + 1 / eps**2) / eps + q
    eta_max = (0.5 - 4 * eps) / c
    excess = 1 - 2 * eta_max + eps
    return {
        "m_prime_order": m_order,
        "m_prime": params.m_prime,
        "agnostic_samples_order": params.m_prime**3 / eps**2,
        "agnostic_time_order": params.m_prime**2 * (params.m_prime + t) / eps**2,
        "eta_max": eta_max,
        "excess_error": excess,
        "excess_error_leading": 1 - 1 / c,
        "vacuous": excess >= 0.5,
    }


# -------------------------------------------------------- junta pipeline


class RestrictedExampleOracle:
    """Examples conditioned on a restriction, by rejection from a base oracle."""

    def __init__(self, base, restriction: Restriction, max_factor: float = 16.0):
        self.base = base
        self.n = base.n
        self.restriction = restriction.validate(base.n)
        self.max_factor = max_factor
        self.samples_drawn = 0

    def draw(self, m: int):
        need_rate = 2.0 ** -len(self.restriction)
        cap = int(self.max_factor * m / need_rate) + 1024
        xs, ys, got, spent = [], [], 0, 0
        while got < m:
            batch = max(64, int(1.2 * (m - got) / need_rate))
            if spent + batch > cap:
                raise StarvationError(f"restriction {dict(self.restriction.fixed)} starved after {spent} draws")
            X, y = self.base.draw(batch)
            spent += batch
            ok = self.restriction.contains(X)
            xs.append(X[ok])
            ys.append(y[ok])
            got += int(ok.sum())
        self.samples_drawn += m
        return np.concatenate(xs)[:m], np.concatenate(ys)[:m]


def feature_select(refuter, oracle, k: int, delta: float, rng=None, coords=None, runs: int | None = None,
                   runs_scale: float = 2.0, gap: float | None = None, mean_samples: int = 2000,
                   max_runs_factor: float = 10.0) -> tuple[int, dict]:
    """Find a relevant coordinate from the refuter's behavior under prefix randomization.

    ``coords`` lists the coordinates the refuter sees (its local coordinate j
    is ``coords[j]``); prefixes are taken in that order.  For each prefix
    length ell the structure probability P(ell) is estimated from ``runs``
    refuter runs that did not end in an error (drawing at most
    ``max_runs_factor * runs`` in total); the first ell with
    ``P(ell-1) - P(ell) >= gap`` identifies ``coords[ell-1]``.  Ties resolve
    to the smallest index by construction.
    """
    rng = np.random.default_rng(rng)
    coords = list(range(oracle.n)) if coords is None else list(coords)
    nl = len(coords)
    if runs is None:
        runs = _ceil(runs_scale * k * k * math.log(max(nl, 2) / delta))
    max_runs = int(max_runs_factor * runs)
    gap = 1 / (4 * k) if gap is None else gap
    alpha = getattr(refuter, "alpha", 0.0)
    _, ymean = oracle.draw(mean_samples)
    mu = float(ymean.mean())
    slack = 3 * math.sqrt(0.25 / mean_samples)
    if not alpha - slack <= mu <= 1 - alpha + slack:
        raise PreconditionError(f"target mean {mu:.3f} outside [{alpha}, {1 - alpha}]")
    probs: list[float] = []
    record = {"runs": runs, "gap": gap, "mean": mu, "probs": probs, "error_rate": []}
    for ell in range(nl + 1):
        hits = decided = total = 0
        # error exits are excluded: the refuter's guarantees hold conditioned on no error
        while decided < runs and total < max_runs:
            X, y = oracle.draw(refuter.sample_count)
            local = prefix_randomize(project(X, coords), ell, rng)
            res = refuter.run(local, y, rng)
            total += 1
            if res.verdict is not Verdict.ERROR:
                decided += 1
                hits += res.verdict is Verdict.STRUCTURE
        probs.append(hits / decided if decided else math.nan)
        record["error_rate"].append(1 - decided / total)
        if ell >= 1 and probs[ell - 1] - probs[ell] >= gap:
            record["ell"] = ell
            return coords[ell - 1], record
    raise NoGapFound(f"no consecutive drop >= {gap:.4f} in structure frequencies {probs}")


@dataclass
class TreeNode:
    leaf: int | None = None
    coord: int | None = None
    children: tuple["TreeNode", "TreeNode"] | None = None

    def depth(self) -> int:
        return 0 if self.leaf is not None else 1 + max(c.depth() for c in self.children)

    def evaluate(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.leaf is not None:
            return np.full(idx.shape, self.leaf, dtype=np.uint8)
        bit = (idx >> self.coord) & 1
        out = np.empty(idx.shape, dtype=np.uint8)
        for b in (0, 1):
            sel = bit == b
            out[sel] = self.children[b].evaluate(idx[sel])
        return out

    def to_table(self, n: int) -> TruthTable:
        return TruthTable(n, self.evaluate(np.arange(1 << n, dtype=np.int64)))

    def to_json(self) -> dict:
        if self.leaf is not None:
            return {"leaf": self.leaf}
        return {"coord": self.coord, "children": [c.to_json() for c in self.children]}


def learn_junta_via_refutation(refuter_factory: Callable[[int, int], object], oracle, k: int, eps: float,
                               delta: float, rng=None, mean_samples: int | None = None, **select_kwargs):
    """Grow a decision tree of depth at most k using feature selection at each node.

    ``refuter_factory(n_free, k_free)`` builds a refuter for k_free-juntas on
    n_free coordinates.  A node becomes a leaf (majority label) once its
    estimated mean is within 2 eps of a constant.  Returns ``(tree, table)``.
    """
    rng = np.random.default_rng(rng)
    n = oracle.n
    node_delta = delta * 2.0 ** -(k + 2)
    if mean_samples is None:
        mean_samples = _ceil(math.log(4 / node_delta) / (2 * eps**2))

    def grow(R: Restriction) -> TreeNode:
        node_oracle = oracle if len(R) == 0 else RestrictedExampleOracle(oracle, R)
        _, y = node_oracle.draw(mean_samples)
        mu = float(y.mean())
        if min(mu, 1 - mu) <= 2 * eps:
            return TreeNode(leaf=int(mu > 0.5))
        depth = len(R)
        if depth >= k:
            raise DepthExceeded(f"node at depth {depth} is still far from constant (mean {mu:.3f})")
        free = R.free_coords(n)
        refuter = refuter_factory(len(free), k - depth)
        i, _ = feature_select(refuter, node_oracle, k - depth, node_delta, rng, coords=free, **select_kwargs)
        return TreeNode(coord=i, children=(grow(R.extend(i, 0)), grow(R.extend(i, 1))))

    tree = grow(Restriction())
    return tree, tree.to_table(n)


# -------------------------------------------------- MQ-SQ to SQ refutation


@dataclass
class MQSQRefutationParams:
    c: float = 1.0
    eta: float = 0.0
    eps: float = 0.1
    tau: float = 0.02
    tau_prime: float = 0.005
    alpha: float = 0.25
    B: float = 144.0

    COND1 = "alpha > c*eta + eps + (c+4)*tau + 6*tau'"
    COND2 = "B <= alpha^2 (1-alpha)^2 / ||D_x||_2^2"
    COND3 = "B <= 1/||D*||_2^2"

    def violations(self, dx_norm_sq: float, dstar_norm_sq: float) -> list[str]:
        out = []
        if not self.alpha > self.c * self.eta + self.eps + (self.c + 4) * self.tau + 6 * self.tau_prime:
            out.append(self.COND1)
        if not self.B <= self.alpha**2 * (1 - self.alpha) ** 2 / dx_norm_sq * (1 + 1e-12):
            out.append(self.COND2)
        if not self.B <= 1 / dstar_norm_sq * (1 + 1e-12):
            out.append(self.COND3)
        return out

    def to_json(self) -> dict:
        return asdict(self)


class NormViolation(ContractViolation):
    pass


class SimulatedMQSQOracle:
    """MQ-SQ answers simulated from a refutation SQ oracle and the estimate p_hat."""

    def __init__(self, sq, n: int, p_hat: float, max_norm_sq: float | None = None):
        self.sq, self.n, self.p_hat = sq, n, p_hat
        self.max_norm_sq = max_norm_sq
        self.tau = getattr(sq, "tau", 0.0)
        self.counts = {k: 0 for k in ("I", "II", "III", "IV", "V")}
        self.max_dstar_norm_sq = 0.0
        self.sq_issued = 0

    def _forward(self, fn) -> float:
        self.sq_issued += 1
        return self.sq(fn)

    def query(self, q) -> float:
        self.counts[q.kind] += 1
        if isinstance(q, (TypeI, TypeII)):
            norm = q.dstar.l2_norm_sq()
            self.max_dstar_norm_sq = max(self.max_dstar_norm_sq, norm)
            if self.max_norm_sq is not None and norm > self.max_norm_sq * (1 + 1e-12):
                raise NormViolation(f"query with ||D*||^2 = {norm} exceeds declared {self.max_norm_sq}")
            base = q.dstar.expect(q.phi)
            return self.p_hat * base if isinstance(q, TypeI) else self.p_hat**2 * base
        phi = q.phi
        if isinstance(q, TypeIII):
            return self._forward(lambda x, y: phi(x))
        val = self._forward(lambda x, y: phi(x) * y)
        return val if isinstance(q, TypeIV) else self.p_hat * val


class MQSQRefuter:
    """SQ refuter obtained from an MQ-SQ testable learner.

    ``learner.run(oracle)`` returns a hypothesis or ``None``.  The learner
    must expose ``declared_max_dstar_norm_sq(n)``; conditions are checked at
    construction against it and the marginal's squared l2 norm.
    """

    def __init__(self, learner, params: MQSQRefutationParams, n: int, dx_norm_sq: float):
        self.learner, self.params, self.n = learner, params, n
        self.declared_norm_sq = learner.declared_max_dstar_norm_sq(n)
        bad = params.violations(dx_norm_sq, self.declared_norm_sq)
        if bad:
            raise InvalidParams(bad[0])

    @property
    def alpha(self) -> float:
        return self.params.alpha

    def run(self, sq) -> RefutationResult:
        tp = self.params.tau_prime
        p_hat = sq(lambda x, y: y)
        sim = SimulatedMQSQOracle(sq, self.n, p_hat, self.declared_norm_sq)
        h = self.learner.run(sim)
        rec = {"p_hat": p_hat, "learner_counts": dict(sim.counts), "max_dstar_norm_sq": sim.max_dstar_norm_sq}
        if h is None:
            rec["sq_count"] = 1 + sim.sq_issued
            return RefutationResult(Verdict.STRUCTURE, record=rec)
        hv = h.to_table().table.astype(float)
        m1 = sq(lambda x, y: hv[x])
        m2 = sq(lambda x, y: y)
        m3 = sq(lambda x, y: hv[x] * y)
        mu_hat = m1 + m2 - 2 * m3
        rec.update(mu_hat=mu_hat, sq_count=1 + sim.sq_issued + 3)
        noise = mu_hat >= min(p_hat, 1 - p_hat) - 5 * tp
        return RefutationResult(Verdict.NOISE if noise else Verdict.STRUCTURE, record=rec)


def mqsq_to_sq_refuter(learner, params: MQSQRefutationParams, n: int, dx_norm_sq: float) -> MQSQRefuter:
    return MQSQRefuter(learner, params, n, dx_norm_sq)


# ------------------------------------------- SQ refutation to weak learning


class CoordinateCorrelationRefuter:
    """Refuter for dictators: Structure iff some coordinate agrees with the label w.p. >= 3/4."""

    def __init__(self, n: int, threshold: float = 0.75, alpha: float = 0.25):
        self.n, self.threshold, self.alpha = n, threshold, alpha

    def run(self, sq) -> RefutationResult:
        agree = [sq(lambda x, y, i=i: (y == ((x >> i) & 1)).astype(float)) for i in range(self.n)]
        best = max(agree)
        verdict = Verdict.STRUCTURE if best >= self.threshold else Verdict.NOISE
        return RefutationResult(verdict, record={"max_agreement": best, "sq_count": self.n})


@dataclass
class WeakLearnParams:
    eps: float = 0.0125
    tau: float = 0.1
    tau_prime: float = 0.002
    alpha: float = 0.25

    COND1 = "alpha <= 1/2 - (eps + 2*tau')"
    COND2 = "tau >= 4*eps + 22*tau'"

    @property
    def gamma(self) -> float:
        return self.eps + 2 * self.tau_prime

    @property
    def delta_round(self) -> float:
        return 2 * self.eps + 7 * self.tau_prime

    def validate(self) -> None:
        if not self.alpha <= 0.5 - self.gamma:
            raise InvalidParams(self.COND1)
        if not self.tau >= 4 * self.eps + 22 * self.tau_prime - 1e-12:
            raise InvalidParams(self.COND2)

    def to_json(self) -> dict:
        return asdict(self)


def round_classifier(phi, sign: int, rng=None, n: int | None = None) -> BooleanFunction:
    """Per-point Bernoulli rounding of a [0,1]-valued phi; complemented for negative sign."""
    phi = as_phi(phi)
    if n is None:
        if phi.table is None:
            raise ValueError("n is required unless phi is a dense table")
        n = phi.table.size.bit_length() - 1
    fn = phi if sign >= 0 else (lambda idx: 1.0 - phi(idx))
    return LazyBiasedFunction(n, fn, rng)


@dataclass
class WeakLearnResult:
    hypothesis: BooleanFunction
    kind: str
    record: dict


class _Diverged(Exception):
    def __init__(self, dprime: np.ndarray, corr: float):
        self.dprime, self.corr = dprime, corr


def sq_refuter_to_weak_learner(refuter, target_sq, D: Distribution, params: WeakLearnParams, rng=None,
                               rounds: int = 3, max_repeats: int | None = None) -> WeakLearnResult:
    """Weak learner from an SQ refuter, by simulating the refuter on (x, f*(x)).

    ``target_sq(phi)`` answers ``E_D[phi f*]`` within ``tau'``.  If it also
    exposes ``exact(phi)``, every low-correlation answer is replayed against
    the exact value ``E_D[phi(x, f*(x))]`` and the differences are recorded.
    """
    params.validate()
    rng = np.random.default_rng(rng)
    n = D.n
    eps, tau, tp = params.eps, params.tau, params.tau_prime
    max_repeats = max_repeats or _ceil(40 / tau)
    idx, w = D.support()
    all_idx = np.arange(1 << n, dtype=np.int64)
    f_exact = getattr(target_sq, "f", None)
    rec: dict = {"replay_diffs": [], "rounds": []}

    p_hat = target_sq(Phi(const=1.0))
    rec["p_hat"] = p_hat
    if p_hat + tp <= 0.5 - eps:
        return WeakLearnResult(TruthTable.constant(n, 0), "constant", rec)
    if p_hat - tp >= 0.5 + eps:
        return WeakLearnResult(TruthTable.constant(n, 1), "constant", rec)

    ones = np.ones(all_idx.shape, dtype=np.uint8)
    zeros = np.zeros(all_idx.shape, dtype=np.uint8)

    def simulated_sq(phi) -> float:
        v1 = np.asarray(phi(all_idx, ones), dtype=float)
        v0 = np.asarray(phi(all_idx, zeros), dtype=float)
        delta = v1 - v0
        dprime = np.clip((delta + 1) / 2, 0.0, 1.0)
        mu_hat = target_sq(Phi(table=dprime))
        corr = mu_hat - p_hat * float(np.dot(w, dprime[idx]))
        if abs(corr) > tau / 2 - 2 * tp:
            raise _Diverged(dprime, corr)
        answer = float(np.dot(w, v0[idx] + p_hat * delta[idx]))
        if f_exact is not None:
            fx = f_exact(idx)
            exact = float(np.dot(w, np.where(fx == 1, v1[idx], v0[idx])))
            rec["replay_diffs"].append(abs(answer - exact))
        return answer

    for r in range(rounds):
        try:
            res = refuter.run(simulated_sq)
            rec["rounds"].append({"verdict": res.verdict.value})
            continue
        except _Diverged as div:
            sign = 1 if div.corr > 0 else -1
            round_rec = {"corr": div.corr, "sign": sign, "repeats": 0}
            rec["rounds"].append(round_rec)
            for _ in range(max_repeats):
                round_rec["repeats"] += 1
                h = round_classifier(Phi(table=div.dprime), sign, rng, n)
                ht = h.to_table()
                eps_hat = float(np.dot(w, ht.table[idx])) + p_hat - 2 * target_sq(Phi(table=ht.table))
                if eps_hat <= 0.5 - eps - 3 * tp:
                    round_rec["eps_hat"] = eps_hat
                    return WeakLearnResult(ht, "rounded", rec)
    raise ContractViolation(f"no high-correlation query in {rounds} simulated runs: {rec['rounds']}")
