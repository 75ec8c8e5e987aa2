"""Example, membership, SQ and MQ-SQ oracles with tolerance modes and budgets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .boolean_core import (
    BooleanFunction,
    Distribution,
    Permutation,
    TruthTable,
    Uniform,
    XorShift,
    as_indices,
    fwht,
)

LOG_CAP = 10**6
RANGE_TOL = 1e-12


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class QueryBudget:
    """Upper limits on membership queries, statistical queries and samples (None = unlimited)."""

    max_mq: int | None = None
    max_sq: int | None = None
    max_samples: int | None = None
    mq: int = 0
    sq: int = 0
    samples: int = 0

    def charge(self, kind: str, k: int = 1) -> None:
        limit = getattr(self, f"max_{kind}")
        used = getattr(self, kind)
        if limit is not None and used + k > limit:
            raise BudgetExhausted(f"{kind} budget exhausted ({used} + {k} > {limit})")
        setattr(self, kind, used + k)


# ------------------------------------------------------------------ labels


class LabelRule:
    n: int

    def y(self, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(idx.shape) < self.y(idx)).astype(np.uint8)


class Deterministic(LabelRule):
    def __init__(self, g: BooleanFunction):
        self.g = g
        self.n = g.n

    def y(self, idx):
        return self.g(idx).astype(float)

    def sample(self, idx, rng):
        return self.g(idx)

    def to_json(self):
        return {"type": "deterministic", "g": self.g.to_table().to_json()}


class ConstantBernoulli(LabelRule):
    def __init__(self, n: int, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError("label bias must lie in [0, 1]")
        self.n, self.p = n, float(p)

    def y(self, idx):
        return np.full(np.shape(idx), self.p)

    def to_json(self):
        return {"type": "constant_bernoulli", "p": self.p}


class General(LabelRule):
    """Arbitrary conditional label mean y(x), given as a table or vectorized callable."""

    def __init__(self, n: int, y):
        self.n = n
        if callable(y):
            self._fn = y
        else:
            table = np.asarray(y, dtype=float)
            if table.shape != (1 << n,) or table.min() < 0 or table.max() > 1:
                raise ValueError("label table must have length 2^n with values in [0, 1]")
            self._fn = lambda idx: table[idx]

    def y(self, idx):
        return np.asarray(self._fn(idx), dtype=float)

    def to_json(self):
        return {"type": "general", "y": self.y(np.arange(1 << self.n)).tolist()}


class LabeledDistribution:
    """Refutation-instance distribution: marginal D_x plus label rule y(x)."""

    def __init__(self, marginal: Distribution, labels: LabelRule):
        if marginal.n != labels.n:
            raise ValueError("dimension mismatch between marginal and labels")
        self.marginal = marginal
        self.labels = labels
        self.n = marginal.n

    def y(self, idx) -> np.ndarray:
        return self.labels.y(np.asarray(idx, dtype=np.int64))

    def p_overall(self) -> float:
        return self.marginal.expect(self.y)

    def sample(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        X = self.marginal.sample(rng, m)
        return X, self.labels.sample(X, rng)

    def to_json(self) -> dict:
        return {"marginal": self.marginal.to_json(), "labels": self.labels.to_json()}


# ---------------------------------------------------------------- examples


class ExampleOracle:
    """I.i.d. labeled examples from a labeled distribution."""

    def __init__(self, source: LabeledDistribution, rng=None, budget: QueryBudget | None = None):
        self.source = source
        self.n = source.n
        self.rng = np.random.default_rng(rng)
        self.budget = budget
        self.samples_drawn = 0

    def draw(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, y)``: an index array of points and their 0/1 labels."""
        if self.budget is not None:
            self.budget.charge("samples", m)
        self.samples_drawn += m
        return self.source.sample(self.rng, m)

    def clone(self, rng) -> "ExampleOracle":
        return ExampleOracle(self.source, rng)


def draw_examples(oracle: ExampleOracle, m: int) -> tuple[np.ndarray, np.ndarray]:
    return oracle.draw(m)


class MembershipOracle:
    """Answers f(x); keeps a counter and an ordered (capped) log of queried points."""

    def __init__(self, target: BooleanFunction, budget: QueryBudget | None = None, log_cap: int = LOG_CAP):
        self.target = target
        self.n = target.n
        self.budget = budget
        self.log_cap = log_cap
        self.queries_made = 0
        self.query_log: list[int] = []

    def query(self, x) -> int:
        return int(self.query_many(as_indices(x, self.n))[0])

    def query_many(self, idx) -> np.ndarray:
        idx = as_indices(idx, self.n)
        if self.budget is not None:
            self.budget.charge("mq", idx.size)
        self.queries_made += idx.size
        room = self.log_cap - len(self.query_log)
        if room > 0:
            self.query_log.extend(idx[:room].tolist())
        return self.target(idx)


def mq(oracle: MembershipOracle, x) -> int:
    return oracle.query(x)


# --------------------------------------------------------- tolerance modes


class ToleranceMode:
    tau: float = 0.0

    def adjust(self, exact: np.ndarray, kinds: list[str], rng: np.random.Generator | None = None) -> np.ndarray:
        """Map exact values to oracle answers (not used by Sampling)."""
        raise NotImplementedError


class Exact(ToleranceMode):
    def adjust(self, exact, kinds, rng=None):
        return exact

    def __repr__(self):
        return "Exact()"


class RoundToGrid(ToleranceMode):
    """Round to the nearest multiple of tau (error at most tau/2)."""

    def __init__(self, tau: float):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)

    def adjust(self, exact, kinds, rng=None):
        return np.round(exact / self.tau) * self.tau

    def __repr__(self):
        return f"RoundToGrid({self.tau})"


class AdversarialSign(ToleranceMode):
    """Answer exactly ``truth + s * tau`` with s = +-1 chosen by ``policy``.

    ``policy`` is ``"plus"``, ``"minus"``, ``"random"`` or a mapping from query
    kind (``"I"`` ... ``"V"``, ``"SQ"``) to a sign, which lets a caller bias a
    named statistic: e.g. ``{"I": +1, "II": -1}`` pushes influence estimates up.
    """

    def __init__(self, tau: float, policy="plus", rng=None):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)
        if isinstance(policy, str) and policy not in ("plus", "minus", "random"):
            raise ValueError(f"unknown direction policy {policy!r}")
        self.policy = policy
        self.rng = np.random.default_rng(rng)

    def signs(self, kinds: list[str]) -> np.ndarray:
        if self.policy == "plus":
            return np.ones(len(kinds))
        if self.policy == "minus":
            return -np.ones(len(kinds))
        if self.policy == "random":
            return self.rng.choice([-1.0, 1.0], size=len(kinds))
        return np.array([float(self.policy.get(k, 1)) for k in kinds])

    def adjust(self, exact, kinds, rng=None):
        return exact + self.signs(kinds) * self.tau

    def __repr__(self):
        return f"AdversarialSign({self.tau}, {self.policy!r})"


class Sampling(ToleranceMode):
    """Empirical mean of ``num_samples`` draws; tau from Hoeffding at ``failure_prob``."""

    def __init__(self, num_samples: int, rng=None, failure_prob: float = 0.01):
        self.num_samples = int(num_samples)
        self.rng = np.random.default_rng(rng)
        self.failure_prob = failure_prob
        self.tau = math.sqrt(math.log(2 / failure_prob) / (2 * self.num_samples))

    def __repr__(self):
        return f"Sampling({self.num_samples})"


# ------------------------------------------------------------ MQ-SQ queries


class Phi:
    """A [0,1]-valued test function, evaluable on index arrays."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray] | None = None, table=None, const: float | None = None):
        if const is not None:
            if not -RANGE_TOL <= const <= 1 + RANGE_TOL:
                raise ValueError("phi out of range [0, 1]")
            self.const = float(const)
        else:
            self.const = None
        self.table = None if table is None else np.asarray(table, dtype=float)
        if self.table is not None and self.table.size and (self.table.min() < -RANGE_TOL or self.table.max() > 1 + RANGE_TOL):
            raise ValueError("phi out of range [0, 1]")
        self.fn = fn

    def __call__(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.const is not None:
            return np.full(idx.shape, self.const)
        if self.table is not None:
            return self.table[idx]
        v = np.asarray(self.fn(idx), dtype=float)
        if v.size and (v.min() < -RANGE_TOL or v.max() > 1 + RANGE_TOL):
            raise ValueError("phi out of range [0, 1]")
        return v


def as_phi(obj) -> Phi:
    if isinstance(obj, Phi):
        return obj
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return Phi(const=float(obj))
    if isinstance(obj, TruthTable):
        return Phi(table=obj.table)
    if isinstance(obj, np.ndarray):
        return Phi(table=obj)
    if callable(obj):
        return Phi(fn=obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a test function")


def _check_perm(perm: Permutation):
    if not perm.is_fixed_point_free():
        raise ValueError("permutation has a fixed point")


@dataclass
class TypeI:
    phi: Phi
    dstar: Distribution
    kind = "I"

    def __post_init__(self):
        self.phi = as_phi(self.phi)


@dataclass
class TypeII:
    phi: Phi
    dstar: Distribution
    perm: Permutation
    kind = "II"

    def __post_init__(self):
        self.phi = as_phi(self.phi)
        _check_perm(self.perm)


@dataclass
class TypeIII:
    phi: Phi
    kind = "III"

    def __post_init__(self):
        self.phi = as_phi(self.phi)


@dataclass
class TypeIV:
    phi: Phi
    kind = "IV"

    def __post_init__(self):
        self.phi = as_phi(self.phi)


@dataclass
class TypeV:
    phi: Phi
    perm: Permutation
    kind = "V"

    def __post_init__(self):
        self.phi = as_phi(self.phi)
        _check_perm(self.perm)


MQSQQuery = TypeI | TypeII | TypeIII | TypeIV | TypeV


def exact_mqsq(f: BooleanFunction, q, D: Distribution | None) -> float:
    """Exact expectation targeted by an MQ-SQ query, by summation over the support."""
    if isinstance(q, (TypeI, TypeII)):
        dist_ = q.dstar
    else:
        if D is None:
            raise ValueError("Types III-V need the marginal D")
        dist_ = D
    if dist_.n != f.n:
        raise ValueError("dimension mismatch")
    idx, w = dist_.support()
    vals = q.phi(idx)
    if not isinstance(q, TypeIII):
        vals = vals * f(idx)
    if isinstance(q, (TypeII, TypeV)):
        vals = vals * f(q.perm(idx))
    return float(np.dot(w, vals))


def _sample_mqsq(f, q, D, mode: Sampling) -> float:
    dist_ = q.dstar if isinstance(q, (TypeI, TypeII)) else D
    x = dist_.sample(mode.rng, mode.num_samples)
    vals = q.phi(x)
    if not isinstance(q, TypeIII):
        vals = vals * f(x)
    if isinstance(q, (TypeII, TypeV)):
        vals = vals * f(q.perm(x))
    return float(vals.mean())


def mqsq(f: BooleanFunction, q, mode: ToleranceMode, D: Distribution | None = None) -> float:
    """One-shot MQ-SQ answer (no budget or log)."""
    if isinstance(mode, Sampling):
        return _sample_mqsq(f, q, D, mode)
    return float(mode.adjust(np.array([exact_mqsq(f, q, D)]), [q.kind])[0])


class MQSQOracle:
    """Stateful MQ-SQ oracle for a target ``f`` with (hidden) marginal ``marginal``.

    Records every query's kind and, for Types I/II, ``||D*||_2^2`` so that
    learners' declared norm bounds can be audited.
    """

    def __init__(self, f: BooleanFunction, marginal: Distribution | None = None, mode: ToleranceMode | None = None,
                 budget: QueryBudget | None = None, log_cap: int = LOG_CAP):
        self.f = f
        self.n = f.n
        self.marginal = marginal if marginal is not None else Uniform(f.n)
        self.mode = mode if mode is not None else Exact()
        self.budget = budget
        self.log_cap = log_cap
        self.queries_made = 0
        self.counts = {k: 0 for k in ("I", "II", "III", "IV", "V")}
        self.log: list[dict] = []
        self.max_dstar_norm_sq = 0.0
        self._autocorr = None
        self._uniform_mean = None

    @property
    def tau(self) -> float:
        return self.mode.tau

    def _record(self, kind: str, k: int, norm_sq: float | None):
        if self.budget is not None:
            self.budget.charge("sq", k)
        self.queries_made += k
        self.counts[kind] += k
        if norm_sq is not None:
            self.max_dstar_norm_sq = max(self.max_dstar_norm_sq, norm_sq)
        room = self.log_cap - len(self.log)
        if room > 0:
            entry = {"type": kind} if norm_sq is None else {"type": kind, "dstar_norm_sq": norm_sq}
            self.log.extend([entry] * min(k, room))

    def query(self, q) -> float:
        norm = q.dstar.l2_norm_sq() if isinstance(q, (TypeI, TypeII)) else None
        self._record(q.kind, 1, norm)
        if isinstance(self.mode, Sampling):
            return _sample_mqsq(self.f, q, self.marginal, self.mode)
        exact = self._fast_exact(q)
        if exact is None:
            exact = exact_mqsq(self.f, q, self.marginal)
        return float(self.mode.adjust(np.array([exact]), [q.kind])[0])

    def _is_uniform_const(self, q) -> bool:
        return type(q.dstar) is Uniform and q.phi.const is not None and isinstance(self.f, TruthTable)

    def _fast_exact(self, q):
        # E_U[f] and the autocorrelation E_U[f(x) f(x^delta)] are cached for constant phi
        if isinstance(q, TypeI) and self._is_uniform_const(q):
            if self._uniform_mean is None:
                self._uniform_mean = float(self.f.table.mean())
            return q.phi.const * self._uniform_mean
        if isinstance(q, TypeII) and isinstance(q.perm, XorShift) and self._is_uniform_const(q):
            return q.phi.const * float(self.autocorrelation()[q.perm.delta])
        return None

    def autocorrelation(self) -> np.ndarray:
        if self._autocorr is None:
            spec = fwht(self.f.table)
            self._autocorr = fwht(spec * spec, inverse=True)
        return self._autocorr

    def type2_xor_batch(self, deltas, phi_const: float = 1.0) -> np.ndarray:
        """Issue ``TypeII(phi=const, D*=Uniform, x -> x ^ delta)`` for each delta."""
        deltas = np.asarray(deltas, dtype=np.int64)
        if (deltas == 0).any():
            raise ValueError("permutation has a fixed point")
        self._record("II", deltas.size, 2.0 ** -self.n)
        queries = [TypeII(phi_const, Uniform(self.n), XorShift(self.n, d)) for d in deltas.tolist()]
        if isinstance(self.mode, Sampling):
            return np.array([_sample_mqsq(self.f, q, None, self.mode) for q in queries])
        if isinstance(self.f, TruthTable):
            exact = phi_const * self.autocorrelation()[deltas]
        else:
            exact = np.array([exact_mqsq(self.f, q, None) for q in queries])
        return self.mode.adjust(exact, ["II"] * deltas.size)

    # conveniences
    def type1(self, phi, dstar=None) -> float:
        return self.query(TypeI(phi, dstar if dstar is not None else Uniform(self.n)))

    def type2(self, phi, perm, dstar=None) -> float:
        return self.query(TypeII(phi, dstar if dstar is not None else Uniform(self.n), perm))

    def export_log(self, path) -> None:
        with open(path, "w") as fh:
            for entry in self.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


# -------------------------------------------------------- refutation SQ


def exact_refutation_sq(Dref: LabeledDistribution, phi) -> float:
    idx, w = Dref.marginal.support()
    y = Dref.y(idx)
    v1 = _ranged(phi(idx, np.ones(idx.shape, dtype=np.uint8)))
    v0 = _ranged(phi(idx, np.zeros(idx.shape, dtype=np.uint8)))
    return float(np.dot(w, y * v1 + (1 - y) * v0))


def _ranged(v) -> np.ndarray:
    v = np.broadcast_to(np.asarray(v, dtype=float), np.shape(v) or (1,))
    if v.size and (v.min() < -RANGE_TOL or v.max() > 1 + RANGE_TOL):
        raise ValueError("phi out of range [0, 1]")
    return v


def refutation_sq(Dref: LabeledDistribution, phi, mode: ToleranceMode | None = None) -> float:
    """Answer ``E_{(x,y)~Dref}[phi(x, y)]`` within the mode's tolerance."""
    mode = mode if mode is not None else Exact()
    if isinstance(mode, Sampling):
        X, y = Dref.sample(mode.rng, mode.num_samples)
        return float(_ranged(phi(X, y)).mean())
    return float(mode.adjust(np.array([exact_refutation_sq(Dref, phi)]), ["SQ"])[0])


class RefutationSQOracle:
    """Stateful refutation SQ oracle with a query counter."""

    def __init__(self, Dref: LabeledDistribution, mode: ToleranceMode | None = None, budget: QueryBudget | None = None):
        self.Dref = Dref
        self.n = Dref.n
        self.mode = mode if mode is not None else Exact()
        self.budget = budget
        self.queries_made = 0

    @property
    def tau(self) -> float:
        return self.mode.tau

    def __call__(self, phi) -> float:
        if self.budget is not None:
            self.budget.charge("sq")
        self.queries_made += 1
        return refutation_sq(self.Dref, phi, self.mode)


class TargetSQOracle:
    """SQ access to a target under a distribution: answers ``E_{x~D}[phi(x) f(x)]``."""

    def __init__(self, f: BooleanFunction, D: Distribution, mode: ToleranceMode | None = None):
        if f.n != D.n:
            raise ValueError("dimension mismatch")
        self.f, self.D, self.n = f, D, f.n
        self.mode = mode if mode is not None else Exact()
        self.queries_made = 0

    @property
    def tau(self) -> float:
        return self.mode.tau

    def exact(self, phi) -> float:
        return exact_mqsq(self.f, TypeIV(phi), self.D)

    def __call__(self, phi) -> float:
        self.queries_made += 1
        return mqsq(self.f, TypeIV(phi), self.mode, self.D)
