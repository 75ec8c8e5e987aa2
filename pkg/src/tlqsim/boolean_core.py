"""Boolean functions, distributions, permutations and Fourier analysis on {0,1}^n.

Points of the cube are represented by their integer index: coordinate ``i``
(0-based) is bit ``i`` of the index.  All bulk operations take numpy integer
arrays of indices so that expectations can be computed by vectorized
summation over a distribution's support.

Labels are 0/1 throughout.  The +-1 view ``b -> 1 - 2b`` appears only in the
Fourier helpers.
"""

from __future__ import annotations

import json
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

MAX_DENSE_N = 24
MAX_LAZY_DENSE_MEMO_N = 20
MASS_TOL = 1e-9
RENORMALIZE_TOL = 1e-6


def _check_n(n: int, cap: int | None = MAX_DENSE_N) -> int:
    n = int(n)
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if cap is not None and n > cap:
        raise ValueError(f"dimension {n} exceeds the dense cap of {cap}")
    return n


def as_indices(x, n: int) -> np.ndarray:
    """Coerce ``x`` (int, BitVector, sequence or array of ints) to an index array."""
    if isinstance(x, BitVector):
        if x.n != n:
            raise ValueError(f"dimension mismatch: point has n={x.n}, function has n={n}")
        return np.array([x.bits], dtype=np.int64)
    arr = np.asarray(x, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= (1 << n)):
        raise ValueError(f"point index out of range for n={n}")
    return arr


def popcount(a) -> np.ndarray:
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def bits_of(idx, n: int) -> np.ndarray:
    """Expand indices into an ``(m, n)`` 0/1 matrix (column ``i`` = coordinate ``i``)."""
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.uint8)


def index_of(bits) -> np.ndarray:
    """Inverse of :func:`bits_of`."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[None, :]
    weights = np.left_shift(np.int64(1), np.arange(bits.shape[1], dtype=np.int64))
    return bits @ weights


def subset_mask(S: Iterable[int] | int) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    mask = 0
    for i in S:
        mask |= 1 << int(i)
    return mask


def mask_to_subset(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(int(mask).bit_length()) if (mask >> i) & 1)


@dataclass(frozen=True)
class BitVector:
    """A point of {0,1}^n stored as a packed word."""

    n: int
    bits: int

    def __post_init__(self):
        _check_n(self.n)
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError("bits above position n must be zero")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitVector":
        return cls(len(bits), int(index_of(bits)[0]))

    def to_bits(self) -> list[int]:
        return [(self.bits >> i) & 1 for i in range(self.n)]

    def __getitem__(self, i: int) -> int:
        return (self.bits >> i) & 1


# ---------------------------------------------------------------- functions


class BooleanFunction(ABC):
    """A {0,1}-valued function on {0,1}^n."""

    n: int

    @abstractmethod
    def _eval(self, idx: np.ndarray) -> np.ndarray: ...

    def __call__(self, x):
        """Evaluate at an int / BitVector (returns int) or an index array (returns uint8 array)."""
        scalar = isinstance(x, (int, np.integer, BitVector))
        out = self._eval(as_indices(x, self.n))
        return int(out[0]) if scalar else out

    def to_table(self) -> "TruthTable":
        return TruthTable(self.n, self._eval(np.arange(1 << _check_n(self.n), dtype=np.int64)))


class TruthTable(BooleanFunction):
    """Dense truth table of length 2^n."""

    def __init__(self, n: int, table):
        self.n = _check_n(n)
        table = np.asarray(table)
        if table.shape != (1 << self.n,):
            raise ValueError(f"truth table must have length 2^{self.n}, got shape {table.shape}")
        if table.size and not np.isin(table, (0, 1)).all():
            raise ValueError("truth table entries must be 0/1")
        self.table = table.astype(np.uint8)
        self.table.setflags(write=False)

    def _eval(self, idx):
        return self.table[idx]

    def to_table(self):
        return self

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[np.ndarray], np.ndarray]) -> "TruthTable":
        return cls(n, np.asarray(fn(np.arange(1 << n, dtype=np.int64))).astype(np.uint8))

    @classmethod
    def constant(cls, n: int, b: int) -> "TruthTable":
        return cls(n, np.full(1 << n, int(b), dtype=np.uint8))

    @classmethod
    def parity(cls, n: int, S: Iterable[int] | int) -> "TruthTable":
        mask = subset_mask(S)
        return cls.from_callable(n, lambda x: popcount(x & mask) & 1)

    @classmethod
    def dictator(cls, n: int, i: int) -> "TruthTable":
        return cls.from_callable(n, lambda x: (x >> i) & 1)

    @classmethod
    def conjunction(cls, n: int, coords: Iterable[int]) -> "TruthTable":
        mask = subset_mask(coords)
        return cls.from_callable(n, lambda x: (x & mask) == mask)

    @classmethod
    def junta(cls, n: int, coords: Sequence[int], base) -> "TruthTable":
        """k-junta on ``coords`` with ``base[a]`` the value at local assignment ``a``."""
        base = np.asarray(base, dtype=np.uint8)
        if base.shape != (1 << len(coords),):
            raise ValueError("base table must have length 2^len(coords)")
        return cls.from_callable(n, lambda x: base[project(x, coords)])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, p: float = 0.5) -> "TruthTable":
        return cls(n, (rng.random(1 << n) < p).astype(np.uint8))

    def pm(self) -> np.ndarray:
        """The +-1 view ``1 - 2f``."""
        return 1.0 - 2.0 * self.table

    def __invert__(self):
        return TruthTable(self.n, 1 - self.table)

    def __xor__(self, other: "TruthTable"):
        _same_n(self, other)
        return TruthTable(self.n, self.table ^ other.table)

    def __eq__(self, other):
        return isinstance(other, TruthTable) and self.n == other.n and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash((self.n, self.table.tobytes()))

    def __repr__(self):
        return f"TruthTable(n={self.n}, hex={self.to_hex()[:16]}{'...' if self.n > 6 else ''})"

    # hex packed bits, bit x of the table is bit (x mod 8) of byte x // 8
    def to_hex(self) -> str:
        return np.packbits(self.table, bitorder="little").tobytes().hex()

    @classmethod
    def from_hex(cls, n: int, text: str) -> "TruthTable":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")
        size = 1 << n
        if bits.size < size or bits[size:].any():
            raise ValueError("hex payload does not match the declared n")
        return cls(n, bits[:size])

    def to_json(self) -> dict:
        return {"n": self.n, "hex": self.to_hex()}

    @classmethod
    def from_json(cls, obj: Mapping) -> "TruthTable":
        return cls.from_hex(int(obj["n"]), obj["hex"])


class LazyBiasedFunction(BooleanFunction):
    """Random function whose value at each point is drawn on first use.

    ``p`` is either a constant bias or a callable giving a per-point
    probability (vectorized over index arrays).  Values are memoized, so
    repeated evaluation at a point always returns the same bit.  Insertion
    into the memo is serialized by a lock.
    """

    def __init__(self, n: int, p, rng=None):
        self.n = _check_n(n, cap=None)
        if not callable(p) and not 0.0 <= float(p) <= 1.0:
            raise ValueError("bias must lie in [0, 1]")
        self.p = p
        self.rng = np.random.default_rng(rng)
        self._lock = threading.Lock()
        if self.n <= MAX_LAZY_DENSE_MEMO_N:
            self._memo = np.full(1 << self.n, -1, dtype=np.int8)
        else:
            self._memo = {}

    def _probs(self, idx):
        if callable(self.p):
            return np.clip(np.asarray(self.p(idx), dtype=float), 0.0, 1.0)
        return np.full(idx.shape, float(self.p))

    def _eval(self, idx):
        if isinstance(self._memo, np.ndarray):
            vals = self._memo[idx]
            if (vals < 0).any():
                with self._lock:
                    new = np.unique(idx[self._memo[idx] < 0])
                    if new.size:
                        self._memo[new] = self.rng.random(new.size) < self._probs(new)
                vals = self._memo[idx]
            return vals.astype(np.uint8)
        out = np.empty(idx.shape, dtype=np.uint8)
        with self._lock:
            for j, x in enumerate(idx.tolist()):
                b = self._memo.get(x)
                if b is None:
                    b = int(self.rng.random() < self._probs(np.array([x]))[0])
                    self._memo[x] = b
                out[j] = b
        return out

    @property
    def realized_count(self) -> int:
        if isinstance(self._memo, np.ndarray):
            return int((self._memo >= 0).sum())
        return len(self._memo)


def _same_n(*objs):
    ns = {o.n for o in objs}
    if len(ns) != 1:
        raise ValueError(f"dimension mismatch: {sorted(ns)}")


def project(idx, coords: Sequence[int]) -> np.ndarray:
    """Local index of ``idx`` restricted to ``coords`` (j-th coord -> bit j)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros(idx.shape, dtype=np.int64)
    for j, c in enumerate(coords):
        out |= ((idx >> c) & 1) << j
    return out


def deposit(local, coords: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`project`: spread bit j of ``local`` to coordinate ``coords[j]``."""
    local = np.asarray(local, dtype=np.int64)
    out = np.zeros(local.shape, dtype=np.int64)
    for j, c in enumerate(coords):
        out |= ((local >> j) & 1) << c
    return out


# -------------------------------------------------------------- restrictions


@dataclass(frozen=True)
class Restriction:
    """Fixed coordinates and their bits, defining a subcube."""

    fixed: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        coords = [c for c, _ in self.fixed]
        if len(set(coords)) != len(coords):
            raise ValueError("restriction fixes a coordinate twice")
        if any(c < 0 for c in coords) or any(b not in (0, 1) for _, b in self.fixed):
            raise ValueError("invalid restriction entry")
        object.__setattr__(self, "fixed", tuple(sorted((int(c), int(b)) for c, b in self.fixed)))

    @classmethod
    def of(cls, mapping: Mapping[int, int] | None = None) -> "Restriction":
        return cls(tuple((mapping or {}).items()))

    def validate(self, n: int) -> "Restriction":
        if any(c >= n for c, _ in self.fixed):
            raise ValueError(f"restriction coordinate outside [0, {n})")
        return self

    @property
    def mask(self) -> int:
        return subset_mask(c for c, _ in self.fixed)

    @property
    def value(self) -> int:
        return subset_mask(c for c, b in self.fixed if b)

    @property
    def coords(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.fixed)

    def __len__(self):
        return len(self.fixed)

    def free_coords(self, n: int) -> list[int]:
        m = self.mask
        return [i for i in range(n) if not (m >> i) & 1]

    def contains(self, idx) -> np.ndarray:
        return (np.asarray(idx, dtype=np.int64) & self.mask) == self.value

    def apply(self, idx) -> np.ndarray:
        """Overwrite the fixed coordinates of ``idx``."""
        return (np.asarray(idx, dtype=np.int64) & ~self.mask) | self.value

    def extend(self, i: int, b: int) -> "Restriction":
        return Restriction(self.fixed + ((i, b),))

    def to_json(self) -> dict:
        return {str(c): b for c, b in self.fixed}


# ------------------------------------------------------------- distributions


class Distribution(ABC):
    """A probability mass function over {0,1}^n."""

    n: int

    @abstractmethod
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, weights)`` over the support."""

    @abstractmethod
    def l2_norm_sq(self) -> float: ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray: ...

    @abstractmethod
    def to_json(self) -> dict: ...

    def pmf(self) -> np.ndarray:
        out = np.zeros(1 << _check_n(self.n))
        idx, w = self.support()
        out[idx] = w
        return out

    def expect(self, values: Callable[[np.ndarray], np.ndarray]) -> float:
        idx, w = self.support()
        return float(np.dot(w, np.asarray(values(idx), dtype=float)))

    @staticmethod
    def from_json(obj: Mapping) -> "Distribution":
        kind, n = obj["type"], int(obj["n"])
        if kind == "uniform":
            return Uniform(n)
        if kind == "subcube":
            return SubcubeUniform(n, Restriction.of({int(k): int(v) for k, v in obj["fixed"].items()}))
        if kind == "point_mass":
            return PointMass(n, int(obj["x"]))
        if kind == "explicit":
            return Explicit(n, obj["weights"])
        raise ValueError(f"unknown distribution type {kind!r}")


class SubcubeUniform(Distribution):
    def __init__(self, n: int, restriction: Restriction = Restriction()):
        self.n = _check_n(n)
        self.restriction = restriction.validate(self.n)
        self._free = restriction.free_coords(self.n)

    def support(self):
        local = np.arange(1 << len(self._free), dtype=np.int64)
        idx = deposit(local, self._free) | self.restriction.value
        return idx, np.full(idx.size, 2.0 ** -len(self._free))

    def l2_norm_sq(self):
        return 2.0 ** -len(self._free)

    def sample(self, rng, m):
        local = rng.integers(0, 1 << len(self._free), size=m, dtype=np.int64)
        return deposit(local, self._free) | self.restriction.value

    def to_json(self):
        return {"type": "subcube", "n": self.n, "fixed": self.restriction.to_json()}

    def __repr__(self):
        return f"SubcubeUniform(n={self.n}, fixed={dict(self.restriction.fixed)})"


class Uniform(SubcubeUniform):
    def __init__(self, n: int):
        super().__init__(n, Restriction())

    def support(self):
        size = 1 << self.n
        return np.arange(size, dtype=np.int64), np.full(size, 1.0 / size)

    def sample(self, rng, m):
        return rng.integers(0, 1 << self.n, size=m, dtype=np.int64)

    def to_json(self):
        return {"type": "uniform", "n": self.n}

    def __repr__(self):
        return f"Uniform(n={self.n})"


class PointMass(Distribution):
    def __init__(self, n: int, x0):
        self.n = _check_n(n)
        self.x0 = int(as_indices(x0, self.n)[0])

    def support(self):
        return np.array([self.x0], dtype=np.int64), np.array([1.0])

    def l2_norm_sq(self):
        return 1.0

    def sample(self, rng, m):
        return np.full(m, self.x0, dtype=np.int64)

    def to_json(self):
        return {"type": "point_mass", "n": self.n, "x": self.x0}


class Explicit(Distribution):
    """Explicit weight vector; renormalized if mass is off by at most 1e-6."""

    def __init__(self, n: int, weights):
        self.n = _check_n(n)
        w = np.asarray(weights, dtype=float)
        if w.shape != (1 << self.n,):
            raise ValueError("weight vector must have length 2^n")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValueError(f"total mass {total} deviates from 1 by more than {RENORMALIZE_TOL}")
        self.weights = w / total
        self.weights.setflags(write=False)
        self._idx = np.flatnonzero(self.weights)

    def support(self):
        return self._idx, self.weights[self._idx]

    def pmf(self):
        return self.weights.copy()

    def l2_norm_sq(self):
        return float(np.dot(self.weights, self.weights))

    def sample(self, rng, m):
        _, w = self.support()
        return self._idx[rng.choice(self._idx.size, size=m, p=w)]

    def to_json(self):
        return {"type": "explicit", "n": self.n, "weights": self.weights.tolist()}


def distribution_to_json(D: Distribution) -> str:
    return json.dumps(D.to_json(), sort_keys=True)


# -------------------------------------------------------------- permutations


class Permutation(ABC):
    n: int

    @abstractmethod
    def __call__(self, idx) -> np.ndarray: ...

    def is_fixed_point_free(self) -> bool:
        idx = np.arange(1 << self.n, dtype=np.int64)
        return bool((self(idx) != idx).all())

    def cycles(self) -> list[list[int]]:
        """Cycle decomposition over the whole cube."""
        image = self(np.arange(1 << self.n, dtype=np.int64))
        seen = np.zeros(image.size, dtype=bool)
        out = []
        for start in range(image.size):
            if seen[start]:
                continue
            cyc, x = [], start
            while not seen[x]:
                seen[x] = True
                cyc.append(x)
                x = int(image[x])
            out.append(cyc)
        return out


class XorShift(Permutation):
    """``x -> x XOR delta``; fixed-point-free iff delta != 0."""

    def __init__(self, n: int, delta: int):
        self.n = _check_n(n)
        self.delta = int(delta)
        if not 0 <= self.delta < (1 << self.n):
            raise ValueError("shift mask out of range")

    def __call__(self, idx):
        return np.asarray(idx, dtype=np.int64) ^ self.delta

    def is_fixed_point_free(self):
        return self.delta != 0

    def __repr__(self):
        return f"XorShift(n={self.n}, delta={self.delta})"


class ExplicitPermutation(Permutation):
    def __init__(self, n: int, table):
        self.n = _check_n(n)
        t = np.asarray(table, dtype=np.int64)
        if t.shape != (1 << self.n,) or not np.array_equal(np.sort(t), np.arange(t.size)):
            raise ValueError("table is not a bijection of {0,1}^n")
        self.table = t

    def __call__(self, idx):
        return self.table[np.asarray(idx, dtype=np.int64)]


# ------------------------------------------------------------------- Fourier


def fwht(values, inverse: bool = False) -> np.ndarray:
    """Fast Walsh-Hadamard transform in O(n 2^n).

    Forward: ``out[S] = 2^-n * sum_x values[x] * (-1)^{|x & S|}``, i.e. the
    Fourier coefficient ``E_U[g chi_S]``.  Inverse: ``out[x] = sum_S values[S] chi_S(x)``.
    The butterfly runs in place on a float copy of the input.
    """
    a = np.array(values, dtype=np.float64)
    size = a.size
    n = size.bit_length() - 1
    if size != 1 << n:
        raise ValueError("length must be a power of two")
    _check_n(max(n, 1))
    h = 1
    while h < size:
        v = a.reshape(-1, 2, h)
        top = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 1, :] = top - v[:, 1, :]
        h *= 2
    if not inverse:
        a /= size
    return a


class FourierSpectrum:
    """Fourier coefficients indexed by subset mask."""

    def __init__(self, n: int, coeffs):
        self.n = _check_n(n)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (1 << self.n,):
            raise ValueError("coefficient vector must have length 2^n")

    def __getitem__(self, S) -> float:
        return float(self.coeffs[subset_mask(S)])

    def weight(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def support(self, tol: float = 1e-9) -> dict[tuple[int, ...], float]:
        return {mask_to_subset(int(s)): float(self.coeffs[s]) for s in np.flatnonzero(np.abs(self.coeffs) > tol)}

    def inverse(self) -> np.ndarray:
        return fwht(self.coeffs, inverse=True)


def walsh_hadamard(g) -> FourierSpectrum:
    """Spectrum of a real-valued table (usually the +-1 view of a boolean function)."""
    if isinstance(g, TruthTable):
        g = g.pm()
    g = np.asarray(g, dtype=float)
    return FourierSpectrum(g.size.bit_length() - 1, fwht(g))


def chi(S, idx) -> np.ndarray:
    """+-1 character chi_S at the given points."""
    return 1 - 2 * (popcount(np.asarray(idx, dtype=np.int64) & subset_mask(S)) & 1)


# ------------------------------------------------------- exact expectations


def mean(f: BooleanFunction, D: Distribution) -> float:
    _same_n(f, D)
    return D.expect(f)


def dist(f: BooleanFunction, g: BooleanFunction, D: Distribution) -> float:
    _same_n(f, g, D)
    return D.expect(lambda x: f(x) != g(x))


def err(f: BooleanFunction, Dref) -> float:
    """Exact ``Pr_{(x,y)~Dref}[f(x) != y]`` for a labeled distribution."""
    _same_n(f, Dref)
    idx, w = Dref.marginal.support()
    fx = f(idx).astype(float)
    y = Dref.y(idx)
    return float(np.dot(w, fx * (1 - y) + (1 - fx) * y))


def influence_exact(f: BooleanFunction, i: int, restriction: Restriction | None = None) -> float:
    """``Pr[f(x) != f(x ^ e_i)]`` for x uniform on the (restricted) cube."""
    if not 0 <= i < f.n:
        raise ValueError(f"coordinate {i} out of range for n={f.n}")
    restriction = restriction or Restriction()
    if (restriction.mask >> i) & 1:
        raise ValueError(f"coordinate {i} is fixed by the restriction")
    idx, w = SubcubeUniform(f.n, restriction).support()
    return float(np.dot(w, f(idx) != f(idx ^ (1 << i))))


def prefix_randomize(idx, ell: int, rng: np.random.Generator) -> np.ndarray:
    """Replace coordinates ``0..ell-1`` of each point by fresh uniform bits."""
    idx = np.asarray(idx, dtype=np.int64)
    if ell <= 0:
        return idx.copy()
    low = (1 << ell) - 1
    r = rng.integers(0, 1 << ell, size=idx.shape, dtype=np.int64)
    return (idx & ~low) | r


def prefix_randomized_eval(f: BooleanFunction, ell: int, x, rng: np.random.Generator):
    if not 0 <= ell <= f.n:
        raise ValueError("prefix length must lie in [0, n]")
    scalar = isinstance(x, (int, np.integer, BitVector))
    out = f(prefix_randomize(as_indices(x, f.n), ell, rng))
    return int(out[0]) if scalar else out
