"""Mixture hulls of per-state distributions and KL-divergence minimization
onto and between them.

The projection problem min over simplex weights of D(W || sum_s w_s * row_s)
is convex, so a certified duality gap makes any local answer global. The
solver here runs multiplicative (EM-style) weight updates, whose iterates
stay strictly inside the simplex, and certifies optimality with the
conditional-gradient gap; a sequential-quadratic polish step covers the rare
stalls. The exhaustive grid oracle is kept fully independent of that path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.optimize

from .core import Distribution, kl_divergence, kl_rows, composition_matrix, _readonly
from .errors import InputError

_LN2 = math.log(2.0)
_SUM_TOL = 1e-12

#: Default optimality-gap tolerance, in bits.
DEFAULT_TOL = 1e-6

#: Default oracle grid denominator for up to three states (test-side use).
DEFAULT_ORACLE_DENOMINATOR = 1000


@dataclass(frozen=True, eq=False)
class Hull:
    """Convex hull of a family's per-state rows: every mixture
    sum_s w_s * row_s reachable by weighting the states."""

    extreme_points: tuple[Distribution, ...]
    label: str = ""

    def __init__(self, extreme_points: Iterable, label: str = ""):
        pts = tuple(
            p if isinstance(p, Distribution) else Distribution(p) for p in extreme_points
        )
        if not pts:
            raise ValueError("a hull needs at least one extreme point")
        sizes = {p.size for p in pts}
        if len(sizes) != 1:
            raise ValueError(f"extreme points have inconsistent lengths {sorted(sizes)}")
        object.__setattr__(self, "extreme_points", pts)
        object.__setattr__(self, "label", label)

    @property
    def n_points(self) -> int:
        return len(self.extreme_points)

    @property
    def alphabet_size(self) -> int:
        return self.extreme_points[0].size

    @cached_property
    def matrix(self) -> np.ndarray:
        """Extreme points stacked row-wise, shape (n_points, alphabet_size)."""
        return _readonly(np.stack([p.probs for p in self.extreme_points]))

    @cached_property
    def union_support(self) -> np.ndarray:
        """Symbols covered by at least one extreme point."""
        return _readonly(self.matrix.sum(axis=0) > 0)


@dataclass(frozen=True, eq=False)
class HullWeights:
    """Point on the weight simplex over a hull's extreme points."""

    weights: np.ndarray

    def __init__(self, weights):
        arr = np.asarray(weights, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"expected a 1-D weight vector, got shape {arr.shape}")
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError(f"weights must lie in [0, 1], got {arr}")
        if abs(float(arr.sum()) - 1.0) > _SUM_TOL:
            raise ValueError(f"weights sum to {arr.sum()!r}, expected 1 within {_SUM_TOL}")
        object.__setattr__(self, "weights", _readonly(arr))

    @property
    def size(self) -> int:
        return self.weights.size


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Outcome of projecting a distribution onto a hull in KL divergence.

    ``value`` is the divergence in bits (+inf when no mixture covers the
    target's support), ``point`` is the achieving mixture, and
    ``certified_gap`` bounds value - true_minimum from above.
    """

    value: float
    weights: HullWeights
    point: Distribution
    certified_gap: float


def hull_point(h: Hull, w: HullWeights) -> Distribution:
    """The mixture of h's extreme points under the given weights."""
    if w.size != h.n_points:
        raise InputError(f"{w.size} weights for a hull with {h.n_points} points")
    return Distribution(w.weights @ h.matrix)


# ---------------------------------------------------------------------------
# Batch projection engine
# ---------------------------------------------------------------------------


def _em_stats(W: np.ndarray, lam: np.ndarray, R: np.ndarray):
    """One evaluation of the multiplicative-update quantities.

    Returns (mix, u, gap_bits): the current mixtures, the per-state
    multipliers u_s = sum_x W(x) R[s,x] / mix(x), and the conditional-gradient
    optimality gap in bits, (max_s u_s - sum_s lam_s u_s) / ln 2.
    """
    mix = lam @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(W > 0, W / mix, 0.0)
    u = ratio @ R.T
    gap = (u.max(axis=1) - (u * lam).sum(axis=1)) / _LN2
    np.maximum(gap, 0.0, out=gap)
    return mix, u, gap


def _refine_weights(w: np.ndarray, R: np.ndarray, lam: np.ndarray, tol: float):
    """Polish a single stalled projection: extra multiplicative rounds, then a
    sequential-quadratic pass, keeping whichever point evaluates better."""
    W = w[None, :]
    lam = lam.copy()[None, :]
    for _ in range(50_000):
        mix, u, gap = _em_stats(W, lam, R)
        if gap[0] <= tol:
            return lam[0], float(gap[0])
        lam = lam * u
        lam /= lam.sum(axis=1, keepdims=True)

    def objective(x):
        x = np.clip(x, 1e-300, None)
        x = x / x.sum()
        mix = x @ R
        return float(kl_rows(w[None, :], np.maximum(mix, 1e-300)[None, :])[0])

    best_lam, best_val = lam[0], objective(lam[0])
    res = scipy.optimize.minimize(
        objective,
        best_lam,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * R.shape[0],
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    if res.x is not None:
        cand = np.clip(res.x, 0.0, None)
        if cand.sum() > 0:
            cand = cand / cand.sum()
            if objective(cand) < best_val:
                best_lam = cand
    _, _, gap = _em_stats(W, best_lam[None, :], R)
    return best_lam, float(gap[0])


def project_batch(
    W: np.ndarray,
    R: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = 20_000,
):
    """Project each row of W onto the hull spanned by the rows of R.

    Returns (values, weights, gaps): divergences in bits, mixing weights of
    shape (n, n_points), and the certified optimality gaps. Rows whose support
    no mixture can cover come back as +inf with zero gap (that value is exact).
    """
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    n, k = W.shape
    n_pts = R.shape[0]

    values = np.empty(n)
    weights = np.full((n, n_pts), 1.0 / n_pts)
    gaps = np.zeros(n)

    if n_pts == 1:
        # A one-point hull is plain divergence to that point; shares the exact
        # kernel so degenerate hulls and the single-state path agree bitwise.
        values[:] = kl_rows(W, R[0])
        return values, weights, gaps

    cover = R.sum(axis=0) > 0
    uncoverable = (W[:, ~cover] > 0).any(axis=1) if not cover.all() else np.zeros(n, bool)
    values[uncoverable] = np.inf

    pending = np.flatnonzero(~uncoverable)
    if pending.size == 0:
        return values, weights, gaps

    sub_W = W[pending]
    lam = np.full((pending.size, n_pts), 1.0 / n_pts)
    for _ in range(max_iter):
        mix, u, gap = _em_stats(sub_W, lam, R)
        done = gap <= tol
        if done.any():
            idx = pending[done]
            values[idx] = kl_rows(sub_W[done], mix[done])
            weights[idx] = lam[done]
            gaps[idx] = gap[done]
            keep = ~done
            pending = pending[keep]
            if pending.size == 0:
                return values, weights, gaps
            sub_W, lam, u = sub_W[keep], lam[keep], u[keep]
        lam = lam * u
        lam /= lam.sum(axis=1, keepdims=True)

    for pos, row in enumerate(pending):
        best, gap_val = _refine_weights(sub_W[pos], R, lam[pos], tol)
        values[row] = kl_rows(sub_W[pos][None, :], (best @ R)[None, :])[0]
        weights[row] = best
        gaps[row] = gap_val
    return values, weights, gaps


def min_divergence_to_hull(W: Distribution, h: Hull, tol: float = DEFAULT_TOL) -> ProjectionResult:
    """Minimum KL divergence D(W || .) over the hull, with optimality certificate.

    The problem is convex in the mixture, so the returned value is within the
    certified gap of the true minimum; the gap is at most ``tol`` except for
    pathological instances, where the honestly achieved gap is reported.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if W.size != h.alphabet_size:
        raise InputError(f"length mismatch {W.size} != {h.alphabet_size}")
    vals, lams, gaps = project_batch(W.probs[None, :], h.matrix, tol=tol)
    w = HullWeights(lams[0])
    return ProjectionResult(
        value=float(vals[0]),
        weights=w,
        point=hull_point(h, w),
        certified_gap=float(gaps[0]),
    )


# ---------------------------------------------------------------------------
# Divergence between hulls
# ---------------------------------------------------------------------------


def _em_weights(target: np.ndarray, R: np.ndarray, tol: float, max_iter: int = 20_000):
    """Minimize D(target || mu @ R) over mu; returns (mu, mix, gap_bits)."""
    _, lams, gaps = project_batch(target[None, :], R, tol=tol, max_iter=max_iter)
    mu = lams[0]
    return mu, mu @ R, float(gaps[0])


def min_divergence_between_hulls(a: Hull, b: Hull, tol: float = DEFAULT_TOL) -> float:
    """Minimum of D(A || B) over mixtures A from hull a and B from hull b (bits).

    Jointly convex over the product of the two weight simplexes; alternates an
    exact inner solve in the b-weights with conditional-gradient steps in the
    a-weights, and stops once the joint duality gap certifies ``tol``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if a.alphabet_size != b.alphabet_size:
        raise InputError("hulls live on different alphabets")
    Ra_full, Rb = a.matrix, b.matrix
    cover_b = b.union_support
    admissible = [i for i in range(a.n_points) if not np.any(Ra_full[i][~cover_b] > 0)]
    if not admissible:
        return float("inf")
    Ra = Ra_full[admissible]
    na = len(admissible)

    def gradient(A: np.ndarray, mix_b: np.ndarray) -> np.ndarray:
        # d/d lam_s of D(A || mix_b) in nats. Floors only ever touch
        # non-contributing or worse-making terms, so the duality gap built
        # from this gradient stays a valid (conservative) certificate.
        inner = np.log(np.maximum(A, 1e-300) / np.maximum(mix_b, 1e-300)) + 1.0
        return Ra @ inner

    def solve_lam_block(lam: np.ndarray, mix_b: np.ndarray) -> np.ndarray:
        safe_b = np.maximum(mix_b, 1e-300)

        def objective(x):
            x = np.clip(x, 1e-300, None)
            x = x / x.sum()
            return float(kl_rows((x @ Ra)[None, :], safe_b[None, :])[0])

        res = scipy.optimize.minimize(
            objective,
            lam,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * na,
            constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
            options={"ftol": 1e-15, "maxiter": 400},
        )
        if res.x is not None:
            cand = np.clip(res.x, 0.0, None)
            if cand.sum() > 0 and objective(cand) <= objective(lam):
                lam = cand / cand.sum()

        # Conditional-gradient mop-up; its line search keeps lam interior.
        A = lam @ Ra
        for _ in range(40):
            grad = gradient(A, mix_b)
            if float(lam @ grad - grad.min()) / _LN2 <= tol / 4.0:
                break
            vertex = int(np.argmin(grad))

            def along(g: float) -> float:
                mixture = (1.0 - g) * A + g * Ra[vertex]
                return float(kl_rows(mixture[None, :], safe_b[None, :])[0])

            step = scipy.optimize.minimize_scalar(
                along, bounds=(0.0, 1.0), method="bounded",
                options={"xatol": 1e-13},
            ).x
            lam = (1.0 - step) * lam
            lam[vertex] += step
            A = lam @ Ra
        return lam

    lam = np.full(na, 1.0 / na)
    inner_tol = tol / 10.0
    value = gap_lam = gap_mu = float("nan")
    for round_no in range(1000):
        A = lam @ Ra
        _, mix_b, gap_mu = _em_weights(A, Rb, inner_tol)
        value = float(kl_rows(A[None, :], mix_b[None, :])[0])
        if value <= tol:
            # Nonnegativity is a certificate of its own: the minimum lies in
            # [0, value], so value is already within tol of it.
            return value

        grad = gradient(A, mix_b)
        gap_lam = max(0.0, float(lam @ grad - grad.min()) / _LN2)
        if gap_lam + gap_mu <= tol:
            return value

        lam = solve_lam_block(lam, mix_b)

    raise RuntimeError(
        f"between-hull divergence failed to certify tol={tol} "
        f"(hulls {a.label!r}, {b.label!r}); last value {value:.9g}, "
        f"gap {gap_lam + gap_mu:.3g}"
    )


# ---------------------------------------------------------------------------
# Grids and the independent oracle
# ---------------------------------------------------------------------------


def simplex_grid(
    alphabet_size: int, resolution_denominator: int, cap: int | None = None
) -> list[Distribution]:
    """All distributions with the exact denominator: the types of that length.

    Exhaustive, in descending-first-coordinate order; guarded by the
    enumeration cap.
    """
    if resolution_denominator < 1:
        raise ValueError(f"denominator must be >= 1, got {resolution_denominator}")
    pts = composition_matrix(resolution_denominator, alphabet_size, cap=cap)
    return [Distribution(row / resolution_denominator) for row in pts]


def grid_matrix(alphabet_size: int, denominator: int, cap: int | None = None) -> np.ndarray:
    """Same grid as :func:`simplex_grid`, as a float array (internal workhorse)."""
    pts = composition_matrix(denominator, alphabet_size, cap=cap)
    return pts / float(denominator)


def oracle_min_divergence_to_hull(W: Distribution, h: Hull, grid_denominator: int) -> float:
    """Brute-force upper bound on the hull projection: exhaustive min of
    D(W || mixture) over all grid points of the weight simplex.

    Deliberately independent of the optimizer (pure enumeration), so it can
    serve as ground truth with resolution-limited slack.
    """
    if W.size != h.alphabet_size:
        raise InputError(f"length mismatch {W.size} != {h.alphabet_size}")
    lam_grid = grid_matrix(h.n_points, grid_denominator)
    mixtures = lam_grid @ h.matrix
    vals = kl_rows(np.broadcast_to(W.probs, mixtures.shape), mixtures)
    return float(vals.min())
