"""Upper-confidence indices.

* :func:`index_bisect` - the KLinf index ``sup{x : N KLinf(dist, x) <= g}``,
  found by a bracketing root search on the convex, nondecreasing map
  ``x -> KLinf(dist, x)``. Production path.
* :func:`index_dual` - the same quantity from an independent two-dimensional
  convex minimisation that never calls :func:`~heavybandits.klinf.klinf`.
  Kept as a cross-check.
* :func:`index_bounded01` - the index for distributions on [0, 1].
* :func:`truncated_mean`, :func:`robust_ucb_index`,
  :func:`truncation_envelope` - the truncated-empirical-mean machinery of
  the Robust-UCB baseline and the closed-form envelope that dominates the
  KLinf index.
"""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .distributions import EmpiricalDistribution, MomentClass, class_max_mean
from .klinf import (
    ConvergenceError,
    DualPoint,
    _arrays,
    _avg,
    klinf,
    klinf_bounded01,
    moment_projection,
)

__all__ = [
    "IndexQuery",
    "IndexResult",
    "InfeasibleQueryError",
    "TruncationMode",
    "TruncationSpec",
    "index_search",
    "index_bisect",
    "index_dual",
    "index_bounded01",
    "truncated_mean",
    "robust_ucb_index",
    "robust_ucb_width",
    "RobustUcbTracker",
    "truncation_envelope",
]


class InfeasibleQueryError(ValueError):
    """The confidence set of an index query is empty."""


@dataclass(frozen=True)
class IndexQuery:
    """Data for one index computation: ``sup{x : pulls * KLinf(dist, x) <= threshold}``."""

    dist: EmpiricalDistribution
    pulls: int
    threshold: float
    cls: MomentClass

    def __post_init__(self):
        if self.pulls < 1:
            raise ValueError(f"pulls must be >= 1, got {self.pulls}")
        if self.pulls != len(self.dist):
            raise ValueError(f"pulls={self.pulls} but the distribution holds {len(self.dist)} points")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    @property
    def radius(self) -> float:
        return self.threshold / self.pulls


@dataclass(frozen=True)
class IndexResult:
    """Index value plus the KLinf dual at the returned point (for warm starts)."""

    value: float
    dual: DualPoint
    klinf_calls: int


# ---------------------------------------------------------------- KLinf index


def index_search(q: IndexQuery, guess: Optional[float] = None,
                 dual: Optional[DualPoint] = None, tol: float = 1e-10,
                 max_iter: int = 200) -> IndexResult:
    """Locate ``sup{x : N KLinf(dist, x) <= g}`` with a safeguarded Newton search.

    ``KLinf(dist, .)`` is convex and nondecreasing with derivative equal to
    the optimal ``lambda1``. The search keeps a bracket ``[lo, hi]`` with
    ``KLinf(lo) <= g/N < KLinf(hi)`` and takes Newton steps, falling back to
    bisection whenever a step leaves the bracket. Because the function is
    convex, every Newton iterate lands at or above the root, so iterates
    converge from above.

    The bracket starts at the mean of the closest class member to ``dist``
    (``m(dist)`` when ``dist`` is in the class) and ends at the class maximum
    mean. If even that lower point is outside the confidence set, which can
    happen when the empirical moment exceeds ``B``, the lower point itself is
    returned.

    ``guess`` and ``dual`` warm-start the search (typically the previous
    index of the same arm and its dual).
    """
    cls = q.cls
    xmax = class_max_mean(cls)
    if math.isinf(q.threshold):
        return IndexResult(xmax, DualPoint(), 0)
    r = q.radius
    floor, lo = moment_projection(q.dist, cls)
    lo = max(lo, -xmax)
    if lo >= xmax or floor > r or q.threshold == 0.0:
        return IndexResult(min(lo, xmax), DualPoint(), 0)

    hi = xmax
    lo_dual = DualPoint()
    calls = 0
    x = guess if guess is not None and lo < guess < hi else 0.5 * (lo + hi)
    cur_dual = dual
    for _ in range(max_iter):
        res = klinf(q.dist, x, cls, start=cur_dual)
        calls += 1
        h = res.value - r
        slope = res.dual.lambda1
        if h <= 0:
            lo, lo_dual = x, res.dual
        else:
            hi = x
            if slope > 0 and h / slope <= tol * (1.0 + abs(x)):
                # tangent root is within tol of the true root (and above it)
                return IndexResult(max(x - h / slope, lo), res.dual, calls)
        if hi - lo <= tol * (1.0 + abs(lo)):
            break
        cur_dual = res.dual
        nxt = x - h / slope if slope > 0 and math.isfinite(h) else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        x = nxt
    else:
        raise ConvergenceError(f"index search did not converge in {max_iter} steps")
    return IndexResult(lo, lo_dual, calls)


def index_bisect(q: IndexQuery, tol: float = 1e-10) -> float:
    """``sup{x : N KLinf(dist, x) <= g}`` (see :func:`index_search`)."""
    return index_search(q, tol=tol).value


# ------------------------------------------------------------ index via dual


def index_dual(q: IndexQuery, mu_final: float = 1e-13, max_newton: int = 500) -> float:
    """The KLinf index as the minimum of a convex two-dimensional problem.

    Minimises ``lam1 + lam2 B - exp(E log(lam1 - X + lam2 |X|^(1+eps)) - C)``
    with ``C = g/N`` over ``lam2 > 0`` and
    ``lam1 >= lam2^(-1/eps) eps / (1+eps)^(1+1/eps)``, the set on which
    ``lam1 - x + lam2 |x|^(1+eps) >= 0`` for every real ``x``.

    Solved by a log-barrier path-following Newton method; the region is
    unbounded: when the KL ball misses the class entirely the objective is
    unbounded below, detected by weak duality and reported as
    :class:`InfeasibleQueryError`; other runaway iterates raise
    :class:`ConvergenceError`.
    ``C = 0`` is the degenerate case of a zero-radius ball: the answer is
    ``m(dist)`` when ``dist`` is in the class, and the query is infeasible
    otherwise.
    """
    cls = q.cls
    xs, w, f = _arrays(q.dist, 1.0 + cls.epsilon)
    xs = np.asarray(xs, dtype=float)
    B, eps = cls.B, cls.epsilon
    xmax = class_max_mean(cls)
    if math.isinf(q.threshold):
        return xmax
    if q.threshold == 0.0:
        if _avg(f, w) <= B:
            return _avg(xs, w)
        raise InfeasibleQueryError("zero-radius query on a distribution outside the class")
    C = q.radius
    k = eps / (1.0 + eps) ** (1.0 + 1.0 / eps)
    inv = 1.0 / eps
    scale = max(1.0, xmax, float(np.abs(xs).max()))

    def edge(l2):
        # lam1 lower limit and its first two derivatives in lam2
        e = k * l2 ** -inv
        return e, -inv * e / l2, inv * (inv + 1.0) * e / (l2 * l2)

    def objective(lam, mu):
        l1, l2 = lam
        if l2 <= 0:
            return math.inf
        s = l1 - edge(l2)[0]
        if s <= 0:
            return math.inf
        a = l1 - xs + l2 * f
        if a.min() <= 0:
            return math.inf
        G = math.exp(_avg(np.log(a), w) - C)
        return l1 + B * l2 - G - mu * (math.log(s) + math.log(l2))

    def derivs(lam, mu):
        l1, l2 = lam
        e, e1, e2 = edge(l2)
        s = l1 - e
        a = l1 - xs + l2 * f
        ia = 1.0 / a
        L = _avg(np.log(a), w)
        G = math.exp(L - C)
        gL = np.array([_avg(ia, w), _avg(f * ia, w)])
        ia2 = ia * ia
        HL = -np.array([[_avg(ia2, w), _avg(f * ia2, w)],
                        [_avg(f * ia2, w), _avg(f * f * ia2, w)]])
        grad = np.array([1.0, B]) - G * gL
        hess = -G * (np.outer(gL, gL) + HL)
        ds = np.array([1.0, -e1])
        grad += -mu * ds / s - mu * np.array([0.0, 1.0 / l2])
        hess += mu * (np.outer(ds, ds) / (s * s) + np.array([[0.0, 0.0], [0.0, e2 / s]]))
        hess[1, 1] += mu / (l2 * l2)
        return grad, hess

    # start: extra atom of the boundary curve at xmax, then step inside
    l2 = xmax ** -eps / (1.0 + eps)
    lam = np.array([edge(l2)[0] + scale, l2])
    mu = 0.1 * scale
    newton = 0
    while True:
        for _ in range(max_newton):
            grad, hess = derivs(lam, mu)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -grad
            dec = -float(grad @ step)
            if not dec >= 0:
                step, dec = -grad, float(grad @ grad)
            f0 = objective(lam, mu)
            # the Newton decrement bounds the suboptimality of this stage;
            # stop once it is below what the objective can resolve
            if dec < 1e-13 * (scale + abs(f0)):
                break
            t = 1.0
            while t > 1e-12:
                cand = lam + t * step
                fc = objective(cand, mu)
                if fc <= f0 - 0.25 * t * dec:
                    break
                t *= 0.5
            else:
                break
            lam = cand
            newton += 1
            if objective(lam, 0.0) < -xmax - 1e-9 * scale:
                # every class member has mean >= -xmax, so by weak duality a
                # dual value below that proves the confidence set is empty
                raise InfeasibleQueryError("confidence set is empty (dual unbounded below)")
            if not np.all(np.isfinite(lam)) or np.abs(lam).max() > 1e15:
                raise ConvergenceError("index dual iterates diverged")
        if mu <= mu_final * scale:
            break
        mu *= 0.1
    if newton >= max_newton * 20:  # pragma: no cover - defensive
        raise ConvergenceError("index dual exceeded its Newton budget")
    return objective(lam, 0.0)


# ------------------------------------------------------ bounded-support index


def index_bounded01(dist, pulls: int, threshold: float, tol: float = 1e-12) -> float:
    """``max{x in [m, 1] : KLinf_[0,1](dist, x) <= g / N}``."""
    xs, w, _ = _arrays(dist, 2.0)
    if xs.min() < 0 or xs.max() > 1:
        raise ValueError("support must lie in [0, 1]")
    if pulls < 1:
        raise ValueError("pulls must be >= 1")
    m = min(_avg(xs, w), 1.0)
    r = threshold / pulls
    if r <= 0 or m >= 1.0:
        return m
    # KLinf(dist, x) diverges as x -> 1 unless dist is the point mass at 1
    hi = 1.0 - 1e-15
    if klinf_bounded01(dist, hi) <= r:
        return hi
    return optimize.brentq(lambda x: klinf_bounded01(dist, x) - r, m, hi,
                           xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


# --------------------------------------------------------- truncated means


class TruncationMode(enum.Enum):
    LAST_LEVEL = "last_level"
    PER_SAMPLE = "per_sample"


@dataclass(frozen=True)
class TruncationSpec:
    """Confidence level and truncation schedule for :func:`truncated_mean`."""

    delta: float
    mode: TruncationMode = TruncationMode.LAST_LEVEL

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        object.__setattr__(self, "mode", TruncationMode(self.mode))


def _as_points(samples) -> np.ndarray:
    if isinstance(samples, EmpiricalDistribution):
        return samples.points
    return np.asarray(samples, dtype=float).ravel()


def truncated_mean(samples, cls: MomentClass, spec: TruncationSpec) -> float:
    """Average of the samples with large values zeroed.

    ``last_level`` drops every sample with ``|X_i| > u_n`` where
    ``u_n = (B n / log(1/delta))^(1/(1+eps))``; ``per_sample`` compares
    sample ``i`` with its own level ``u_i``.
    """
    x = _as_points(samples)
    n = len(x)
    if n == 0:
        raise ValueError("truncated mean of no samples")
    L = math.log(1.0 / spec.delta)
    q = 1.0 + cls.epsilon
    if spec.mode is TruncationMode.LAST_LEVEL:
        keep = np.abs(x) ** q <= cls.B * n / L
    else:
        keep = np.abs(x) ** q <= cls.B * np.arange(1, n + 1) / L
    return float(np.where(keep, x, 0.0).sum() / n)


def robust_ucb_width(n: int, cls: MomentClass, log_inv_delta: float) -> float:
    """Confidence width ``4 B^(1/(1+eps)) (log(1/delta)/n)^(eps/(1+eps))``."""
    e = cls.epsilon
    return 4.0 * class_max_mean(cls) * (log_inv_delta / n) ** (e / (1.0 + e))


def robust_ucb_index(samples, cls: MomentClass, t: float) -> float:
    """Robust-UCB index: per-sample truncated mean at ``delta = t^-2`` plus its width."""
    if t < 2:
        raise ValueError(f"t must be >= 2, got {t}")
    x = _as_points(samples)
    L = 2.0 * math.log(t)
    spec = TruncationSpec(math.exp(-L), TruncationMode.PER_SAMPLE)
    return truncated_mean(x, cls, spec) + robust_ucb_width(len(x), cls, L)


class RobustUcbTracker:
    """Incremental Robust-UCB index for one arm.

    Sample ``i`` survives per-sample truncation at time ``t`` iff
    ``|X_i|^(1+eps) / i <= B / (2 log t)``. The right side only shrinks as
    ``t`` grows, so a dropped sample never returns: keeping the survivors in
    a max-heap keyed on the left side makes each update O(log n) amortised.
    Queries must use nondecreasing ``t``.
    """

    def __init__(self, cls: MomentClass):
        self.cls = cls
        self.count = 0
        self._heap = []  # (-|X_i|^(1+eps)/i, X_i)
        self._kept_sum = 0.0
        self._last_t = 0.0

    def push(self, value: float) -> None:
        self.count += 1
        key = abs(value) ** (1.0 + self.cls.epsilon) / self.count
        heapq.heappush(self._heap, (-key, value))
        self._kept_sum += value

    def extend(self, values: Sequence[float]) -> None:
        for v in values:
            self.push(float(v))

    def index(self, t: float) -> float:
        if t < self._last_t:
            raise ValueError("RobustUcbTracker queried with decreasing t")
        if t < 2:
            raise ValueError(f"t must be >= 2, got {t}")
        if self.count == 0:
            raise ValueError("index of an arm with no samples")
        self._last_t = t
        L = 2.0 * math.log(t)
        limit = self.cls.B / L
        heap = self._heap
        while heap and -heap[0][0] > limit:
            _, v = heapq.heappop(heap)
            self._kept_sum -= v
        if not heap:
            self._kept_sum = 0.0
        return self._kept_sum / self.count + robust_ucb_width(self.count, self.cls, L)


def truncation_envelope(samples, cls: MomentClass, delta: float, C: float) -> float:
    """Closed-form upper bound on the KLinf index from a truncated test function.

    ``m_T + B^(1/(1+eps)) (L/n)^(eps/(1+eps)) (1 + (e^(C/L) - 1) L / C)``
    with ``L = log(1/delta)`` and ``m_T`` the last-level truncated mean.
    Here ``C`` bounds ``n KL``, i.e. it is the threshold ``g`` itself.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    x = _as_points(samples)
    n = len(x)
    L = math.log(1.0 / delta)
    e = cls.epsilon
    mt = truncated_mean(x, cls, TruncationSpec(delta, TruncationMode.LAST_LEVEL))
    with np.errstate(over="ignore"):
        growth = math.expm1(C / L) if C / L < 700 else math.inf
    return mt + class_max_mean(cls) * (L / n) ** (e / (1.0 + e)) * (1.0 + growth * L / C)
