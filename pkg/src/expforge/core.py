"""Finite-alphabet probability primitives: distributions, conditional families,
entropies and divergences (base 2), empirical types, and exact type-class
combinatorics.

All quantities are in bits. The conventions 0*log(0) = 0 and
q*log(q/0) = +inf are applied throughout; +inf is an ordinary float value,
never an exception.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InputError, ResourceCapError

#: Default ceiling on the number of enumerated types / grid points.
DEFAULT_TYPE_CAP = 10_000_000

#: Environment variable that overrides any configured enumeration cap.
TYPE_CAP_ENV_VAR = "EXPFORGE_TYPE_CAP"

_SUM_TOL = 1e-12


def resolve_type_cap(cap: int | None = None) -> int:
    """Effective enumeration cap: environment override, then argument, then default."""
    env = os.environ.get(TYPE_CAP_ENV_VAR)
    if env is not None:
        return int(env)
    if cap is not None:
        return int(cap)
    return DEFAULT_TYPE_CAP


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# Label sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct symbol labels. All probability vectors index
    against this order for the lifetime of a model."""

    symbols: tuple[str, ...]

    _MIN_SIZE = 2

    def __init__(self, symbols: Iterable[str]):
        object.__setattr__(self, "symbols", tuple(symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"labels must be unique, got {self.symbols}")
        if len(self.symbols) < self._MIN_SIZE:
            raise ValueError(
                f"need at least {self._MIN_SIZE} labels, got {len(self.symbols)}"
            )

    @property
    def size(self) -> int:
        return len(self.symbols)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.symbols)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise InputError(f"unknown label {label!r}, expected one of {self.symbols}") from None

    def indices(self, labels: Iterable[str]) -> np.ndarray:
        return np.array([self.index(lab) for lab in labels], dtype=np.int64)


class StateSet(Alphabet):
    """Ordered set of source-state labels. A single state is allowed (the
    memoryless specialization)."""

    _MIN_SIZE = 1


# ---------------------------------------------------------------------------
# Distributions and families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a finite alphabet.

    Entries must be nonnegative and sum to 1 within 1e-12. Inputs are never
    renormalized silently; use :meth:`from_weights` to normalize explicitly.
    """

    probs: np.ndarray

    def __init__(self, probs):
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"expected a 1-D probability vector, got shape {arr.shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError(f"entries must be finite and >= 0, got {arr}")
        total = float(arr.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"entries sum to {total!r}, expected 1 within {_SUM_TOL}")
        object.__setattr__(self, "probs", _readonly(arr))

    @classmethod
    def from_weights(cls, weights) -> "Distribution":
        """Explicitly normalize nonnegative weights into a Distribution."""
        arr = np.asarray(weights, dtype=np.float64)
        total = arr.sum()
        if total <= 0:
            raise ValueError("weights must have positive total")
        return cls(arr / total)

    @classmethod
    def point_mass(cls, index: int, size: int) -> "Distribution":
        arr = np.zeros(size)
        arr[index] = 1.0
        return cls(arr)

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of symbols with positive probability."""
        return self.probs > 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        body = ", ".join(f"{p:.6g}" for p in self.probs)
        return f"Distribution([{body}])"


@dataclass(frozen=True, eq=False)
class ConditionalFamily:
    """Stochastic matrix: one Distribution over the alphabet per source state."""

    rows: tuple[Distribution, ...]
    name: str = ""

    def __init__(self, rows: Iterable, name: str = ""):
        rows = tuple(r if isinstance(r, Distribution) else Distribution(r) for r in rows)
        if not rows:
            raise ValueError("a family needs at least one state row")
        sizes = {r.size for r in rows}
        if len(sizes) != 1:
            raise ValueError(f"rows have inconsistent lengths {sorted(sizes)}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "name", name)

    @property
    def n_states(self) -> int:
        return len(self.rows)

    @property
    def alphabet_size(self) -> int:
        return self.rows[0].size

    @cached_property
    def matrix(self) -> np.ndarray:
        """Row-per-state matrix of shape (n_states, alphabet_size)."""
        return _readonly(np.stack([r.probs for r in self.rows]))

    def row(self, s: int) -> Distribution:
        return self.rows[s]


# ---------------------------------------------------------------------------
# Numeric kernels (shared by every divergence path in the package)
# ---------------------------------------------------------------------------


def xlog2x(p: np.ndarray) -> np.ndarray:
    """Elementwise p*log2(p) with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log2(p), 0.0)


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL divergence in bits between stacked distributions.

    ``p`` has shape (n, k); ``q`` broadcasts against it ((k,) or (n, k)).
    Rows where some p[x] > 0 meets q[x] = 0 evaluate to +inf.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.divide(p, np.broadcast_to(q, p.shape))
        terms = np.where(p > 0, p * np.log2(ratio), 0.0)
    return terms.sum(axis=-1)


def entropy_rows(p: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy in bits."""
    return -xlog2x(p).sum(axis=-1)


# ---------------------------------------------------------------------------
# Entropies, divergences, marginals
# ---------------------------------------------------------------------------


def entropy(q: Distribution) -> float:
    """Shannon entropy H(q) in bits; lies in [0, log2 alphabet_size]."""
    return float(entropy_rows(q.probs))


def entropy_cond(g: ConditionalFamily, p: Distribution) -> float:
    """Conditional entropy in bits: sum_s p(s) * H(g(.|s))."""
    if p.size != g.n_states:
        raise InputError(f"state distribution length {p.size} != {g.n_states} states")
    return float(p.probs @ entropy_rows(g.matrix))


def kl_divergence(q: Distribution, g: Distribution) -> float:
    """KL divergence D(q || g) in bits; +inf when q puts mass where g has none."""
    if q.size != g.size:
        raise InputError(f"length mismatch {q.size} != {g.size}")
    return float(kl_rows(q.probs[None, :], g.probs)[0])


def kl_divergence_cond(g: ConditionalFamily, gm: ConditionalFamily, p: Distribution) -> float:
    """State-averaged KL divergence in bits: sum_s p(s) * D(g(.|s) || gm(.|s)).

    States with p(s) = 0 contribute nothing even when their row divergence is
    infinite. Always at least the divergence between the two marginals under p.
    """
    if g.n_states != gm.n_states or g.alphabet_size != gm.alphabet_size:
        raise InputError("families have mismatched shapes")
    if p.size != g.n_states:
        raise InputError(f"state distribution length {p.size} != {g.n_states} states")
    per_state = kl_rows(g.matrix, gm.matrix)
    active = p.probs > 0
    return float(np.sum(p.probs[active] * per_state[active]))


def marginalize(p: Distribution, g: ConditionalFamily) -> Distribution:
    """Marginal over the alphabet: sum_s p(s) * g(.|s)."""
    if p.size != g.n_states:
        raise InputError(f"state distribution length {p.size} != {g.n_states} states")
    return Distribution(p.probs @ g.matrix)


# ---------------------------------------------------------------------------
# Empirical types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalType:
    """Occurrence counts of a length-N sequence over an alphabet."""

    counts: np.ndarray
    length: int = field(init=False)

    def __init__(self, counts):
        arr = np.asarray(counts)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"expected a 1-D count vector, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            rounded = np.rint(arr)
            if not np.array_equal(rounded, arr):
                raise ValueError(f"counts must be integers, got {arr}")
            arr = rounded
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ValueError(f"counts must be nonnegative, got {arr}")
        total = int(arr.sum())
        if total < 1:
            raise ValueError("counts must sum to a positive length")
        object.__setattr__(self, "counts", _readonly(arr))
        object.__setattr__(self, "length", total)

    @property
    def probs(self) -> Distribution:
        return Distribution(self.counts / self.length)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmpiricalType):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"EmpiricalType(counts={self.counts.tolist()}, N={self.length})"


@dataclass(frozen=True, eq=False)
class ConditionalType:
    """Joint occurrence counts of (symbol, state) pairs, shape (|X|, |S|).

    Column s sums to the state count N(s). The conditional row for a state is
    defined only where that count is positive.
    """

    joint_counts: np.ndarray

    def __init__(self, joint_counts):
        arr = np.asarray(joint_counts, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D count matrix, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("joint counts must be nonnegative")
        if int(arr.sum()) < 1:
            raise ValueError("joint counts must sum to a positive length")
        object.__setattr__(self, "joint_counts", _readonly(arr))

    @property
    def length(self) -> int:
        return int(self.joint_counts.sum())

    @property
    def state_counts(self) -> np.ndarray:
        return self.joint_counts.sum(axis=0)

    def state_type(self) -> EmpiricalType:
        return EmpiricalType(self.state_counts)

    def conditional_row(self, s: int) -> Distribution:
        """Conditional symbol distribution given state s; s must have been observed."""
        n_s = int(self.state_counts[s])
        if n_s == 0:
            raise InputError(f"state index {s} never occurs; conditional row undefined")
        return Distribution(self.joint_counts[:, s] / n_s)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConditionalType):
            return NotImplemented
        return np.array_equal(self.joint_counts, other.joint_counts)


def _label_indices(x, labels: Alphabet) -> np.ndarray:
    if isinstance(x, str):
        seq = list(x)
    else:
        seq = list(x)
    if not seq:
        raise InputError("sequence must be nonempty")
    return labels.indices(seq)


def empirical_type(x, alphabet: Alphabet) -> EmpiricalType:
    """Empirical type of a symbol sequence (a string or an iterable of labels)."""
    idx = _label_indices(x, alphabet)
    counts = np.bincount(idx, minlength=alphabet.size)
    return EmpiricalType(counts)


def conditional_type(x, s, alphabet: Alphabet, states: StateSet) -> ConditionalType:
    """Joint symbol/state counts for a pair of equal-length sequences."""
    xi = _label_indices(x, alphabet)
    si = _label_indices(s, states)
    if xi.size != si.size:
        raise InputError(f"sequence lengths differ: {xi.size} vs {si.size}")
    joint = np.zeros((alphabet.size, states.size), dtype=np.int64)
    np.add.at(joint, (xi, si), 1)
    return ConditionalType(joint)


# ---------------------------------------------------------------------------
# Type enumeration and exact type-class combinatorics
# ---------------------------------------------------------------------------


def count_compositions(n: int, k: int) -> int:
    """Number of ways to write n as an ordered sum of k nonnegative integers."""
    return math.comb(n + k - 1, k - 1)


def iter_compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    """All k-part compositions of n, first coordinate descending.

    The order is fixed: it is the deterministic tie-break rule for every grid
    scan in the package.
    """
    if k == 1:
        yield (n,)
        return
    for head in range(n, -1, -1):
        for tail in iter_compositions(n - head, k - 1):
            yield (head,) + tail


def composition_matrix(n: int, k: int, cap: int | None = None) -> np.ndarray:
    """All k-part compositions of n as an int64 array, rows in the same
    descending-first-coordinate order as :func:`iter_compositions`.

    Vectorized for the two-part case so large grids stay cheap.
    """
    total = count_compositions(n, k)
    limit = resolve_type_cap(cap)
    if total > limit:
        raise ResourceCapError(
            f"a grid of {total} points exceeds the cap {limit}"
            f" (raise it via the cap argument or {TYPE_CAP_ENV_VAR})"
        )
    return _compositions_array(n, k)


def _compositions_array(n: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    if k == 2:
        head = np.arange(n, -1, -1, dtype=np.int64)
        return np.column_stack([head, n - head])
    blocks = []
    for head in range(n, -1, -1):
        sub = _compositions_array(n - head, k - 1)
        blocks.append(
            np.column_stack([np.full(len(sub), head, dtype=np.int64), sub])
        )
    return np.vstack(blocks)


def enumerate_types(n: int, alphabet_size: int, cap: int | None = None) -> list[EmpiricalType]:
    """Every type of a length-n sequence over an alphabet of the given size.

    Exhaustive and duplicate-free; the count is C(n + k - 1, k - 1), which is
    checked against the enumeration cap before any work happens.
    """
    if n < 1:
        raise ValueError(f"sequence length must be >= 1, got {n}")
    if alphabet_size < 2:
        raise ValueError(f"alphabet size must be >= 2, got {alphabet_size}")
    total = count_compositions(n, alphabet_size)
    limit = resolve_type_cap(cap)
    if total > limit:
        raise ResourceCapError(
            f"enumerating {total} types exceeds the cap {limit}"
            f" (raise it via the cap argument or {TYPE_CAP_ENV_VAR})"
        )
    return [EmpiricalType(c) for c in iter_compositions(n, alphabet_size)]


def type_class_size(t: EmpiricalType) -> int:
    """Exact number of sequences with type t (a multinomial coefficient)."""
    size = 1
    remaining = t.length
    for c in t.counts.tolist():
        size *= math.comb(remaining, c)
        remaining -= c
    return size


def type_class_log_prob(t: EmpiricalType, g: Distribution) -> float:
    """log2 probability that an i.i.d. g-sequence lands exactly in t's type class.

    Computed through the exact identity
    log2 |class| - N * (H(t) + D(t || g)); -inf when g misses part of t's support.
    """
    if g.size != t.counts.size:
        raise InputError(f"length mismatch {g.size} != {t.counts.size}")
    tp = t.probs
    div = kl_divergence(tp, g)
    if math.isinf(div):
        return float("-inf")
    return math.log2(type_class_size(t)) - t.length * (entropy(tp) + div)
