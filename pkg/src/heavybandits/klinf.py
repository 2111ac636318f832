"""KLinf for moment-bounded distributions via its two-dimensional dual.

For a finite distribution ``eta`` and a candidate mean ``x`` with
``|x|^(1+eps) < B``::

    KLinf(eta, x) = max_{lam in R(x, B)} E_eta log(1 - (X - x) lam1 - (B - |X|^(1+eps)) lam2)

where ``R(x, B)`` is the set of nonnegative ``(lam1, lam2)`` for which the
affine-in-``lam`` expression inside the log is nonnegative for *every*
real ``X``, equivalently::

    eps lam1^(1+1/eps) / (lam2^(1/eps) (1+eps)^(1+1/eps)) + B lam2 - x lam1 - 1 <= 0.

The maximisation is solved with a log-barrier Newton method followed by an
active-set polish on the KKT system, which certifies optimality to
machine precision. The variant for distributions supported on [0, 1]
(:func:`klinf_bounded01`) is a one-dimensional concave problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from .distributions import (
    DiscreteDist,
    EmpiricalDistribution,
    MomentClass,
    class_max_mean,
)

__all__ = [
    "DualPoint",
    "KlinfResult",
    "ConvergenceError",
    "InfeasibleTargetError",
    "dual_objective",
    "dual_feasible",
    "dual_constraint",
    "dual_box",
    "klinf",
    "primal_reconstruct",
    "klinf_bounded01",
    "kl_divergence",
    "moment_projection",
]

_MAX_NEWTON = 10_000


class ConvergenceError(RuntimeError):
    """The dual optimiser stopped without meeting its tolerance."""


class InfeasibleTargetError(ValueError):
    """Raised for a target mean outside ``(-B^(1/(1+eps)), B^(1/(1+eps)))``."""


@dataclass(frozen=True)
class DualPoint:
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __iter__(self):
        yield self.lambda1
        yield self.lambda2

    def __getitem__(self, i):
        return (self.lambda1, self.lambda2)[i]


@dataclass(frozen=True)
class KlinfResult:
    """Optimal value (nats), maximising dual point and the extra primal atom.

    ``extra_support`` is the one point the optimal primal measure may place
    outside the support of the input; ``extra_mass`` is its probability.
    """

    value: float
    dual: DualPoint
    extra_support: Optional[float] = None
    extra_mass: float = 0.0
    iterations: int = 0

    def __float__(self):
        return float(self.value)


def _arrays(dist, p: float) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Support, weights (``None`` = uniform) and ``|X|^p`` of a finite distribution."""
    if isinstance(dist, EmpiricalDistribution):
        if dist.count == 0:
            raise ValueError("empty distribution")
        return dist.points, None, dist.powers(p)
    if isinstance(dist, DiscreteDist):
        xs, w = dist.support()
        return xs, w, np.abs(xs) ** p
    raise TypeError(f"KLinf needs a finite distribution, got {type(dist).__name__}")


def _avg(v: np.ndarray, w: Optional[np.ndarray]) -> float:
    return float(v.mean()) if w is None else float(np.dot(v, w))


def dual_constraint(lam, x: float, cls: MomentClass) -> float:
    """Left-hand side of the ``R(x, B)`` constraint (feasible iff <= 0).

    At ``lam2 = 0`` the value is the limit: ``-1`` if ``lam1 = 0``, else ``+inf``.
    """
    l1, l2 = float(lam[0]), float(lam[1])
    eps, B = cls.epsilon, cls.B
    if l2 <= 0.0:
        return -1.0 - x * l1 if l1 == 0.0 and l2 == 0.0 else math.inf
    p = 1.0 + 1.0 / eps
    k = eps / (1.0 + eps) ** p
    return k * l2 * (l1 / l2) ** p + B * l2 - x * l1 - 1.0


def dual_feasible(lam, x: float, cls: MomentClass, tol: float = 0.0) -> bool:
    l1, l2 = float(lam[0]), float(lam[1])
    if l1 < 0 or l2 < 0:
        return False
    return dual_constraint((l1, l2), x, cls) <= tol


def dual_box(x: float, cls: MomentClass) -> Tuple[float, float]:
    """Closed-form bounding box of ``R(x, B)``."""
    B, q = cls.B, 1.0 + cls.epsilon
    if abs(x) ** q >= B:
        raise InfeasibleTargetError(f"|x|^{q} = {abs(x) ** q:.6g} >= B = {B}")
    return 1.0 / (class_max_mean(cls) - x), 1.0 / (B - abs(x) ** q)


def dual_objective(dist, x: float, cls: MomentClass, lam) -> float:
    """``E log(1 - (X-x) lam1 - (B - |X|^(1+eps)) lam2)``; ``-inf`` if any argument <= 0."""
    xs, w, f = _arrays(dist, 1.0 + cls.epsilon)
    l1, l2 = float(lam[0]), float(lam[1])
    s = 1.0 - (xs - x) * l1 - (cls.B - f) * l2
    if np.any(s <= 0):
        return -math.inf
    return _avg(np.log(s), w)


class _Problem:
    """Cached arrays and derivative evaluations for one (dist, x, class)."""

    def __init__(self, xs, w, f, x, cls):
        self.x = float(x)
        self.B = cls.B
        self.eps = cls.epsilon
        self.p = 1.0 + 1.0 / cls.epsilon
        self.k = cls.epsilon / (1.0 + cls.epsilon) ** self.p
        self.a = xs - x
        self.b = cls.B - f
        self.w = w
        self.n = len(xs)

    def slack(self, lam):
        return 1.0 - self.a * lam[0] - self.b * lam[1]

    def value(self, lam) -> float:
        s = self.slack(lam)
        if s.min() <= 0:
            return -math.inf
        return _avg(np.log(s), self.w)

    def derivs(self, lam):
        """Value, gradient and Hessian of the dual objective."""
        s = self.slack(lam)
        if s.min() <= 0:
            return -math.inf, None, None
        inv = 1.0 / s
        ai = self.a * inv
        bi = self.b * inv
        if self.w is None:
            n = self.n
            val = float(np.log(s).sum()) / n
            g = np.array([-ai.sum() / n, -bi.sum() / n])
            haa, hab, hbb = ai @ ai / n, ai @ bi / n, bi @ bi / n
        else:
            w = self.w
            val = float(np.log(s) @ w)
            wa, wb = w * ai, w * bi
            g = np.array([-wa.sum(), -wb.sum()])
            haa, hab, hbb = wa @ ai, wa @ bi, wb @ bi
        H = -np.array([[haa, hab], [hab, hbb]])
        return val, g, H

    def constraint(self, lam):
        """``c``, its gradient and Hessian (requires ``lam2 > 0``)."""
        l1, l2 = lam
        k, p, B, x = self.k, self.p, self.B, self.x
        r = l1 / l2
        rp = r ** p
        c = k * l2 * rp + B * l2 - x * l1 - 1.0
        rp1 = r ** (p - 1.0)
        g = np.array([k * p * rp1 - x, k * (1.0 - p) * rp + B])
        q = k * p * (p - 1.0) / l2
        if r > 0:
            rp2 = r ** (p - 2.0)
        else:
            rp2 = 0.0 if p > 2.0 else (1.0 if p == 2.0 else math.inf)
        H = q * np.array([[rp2, -rp1], [-rp1, rp]])
        return c, g, H

    def interior(self, lam) -> bool:
        l1, l2 = lam
        if not (l1 > 0 and l2 > 0):
            return False
        return self.constraint(lam)[0] < 0 and self.slack(lam).min() > 0

    def extra_atom(self, lam) -> float:
        """Minimiser over y of ``1 - (y-x) lam1 - (B - |y|^(1+eps)) lam2``."""
        l1, l2 = lam
        return (l1 / (l2 * (1.0 + self.eps))) ** (1.0 / self.eps)


def _barrier(prob: _Problem, lam: np.ndarray, mu: float):
    val, g, H = prob.derivs(lam)
    c, gc, Hc = prob.constraint(lam)
    phi = val + mu * (math.log(-c) + math.log(lam[0]) + math.log(lam[1]))
    g = g + mu * (gc / c + 1.0 / lam)
    H = H + mu * (Hc / c - np.outer(gc, gc) / c ** 2 - np.diag(1.0 / lam ** 2))
    return phi, g, H


def _barrier_value(prob: _Problem, lam: np.ndarray, mu: float) -> float:
    if not (lam[0] > 0 and lam[1] > 0):
        return -math.inf
    c = prob.constraint(lam)[0]
    if not c < 0:
        return -math.inf
    v = prob.value(lam)
    if v == -math.inf:
        return v
    return v + mu * (math.log(-c) + math.log(lam[0]) + math.log(lam[1]))


def _interior_point(prob: _Problem, lam: np.ndarray, mu: float = 1e-3,
                    mu_final: float = 1e-12, shrink: float = 0.05):
    """Follow the barrier path from a strictly feasible ``lam``."""
    its = 0
    while True:
        for _ in range(200):
            phi, g, H = _barrier(prob, lam, mu)
            try:
                d = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                d = g * 1e-3
            dec2 = float(g @ d)
            its += 1
            if not np.all(np.isfinite(d)) or dec2 < 0:
                d, dec2 = g / max(1.0, np.abs(np.diag(H)).max()), float(g @ g)
            if dec2 <= max(1e-3 * mu, 1e-15) * 2:
                break
            t = 1.0
            while t > 1e-14:
                new = lam + t * d
                v = _barrier_value(prob, new, mu)
                if v >= phi + 0.25 * t * dec2 - 1e-15 * (1 + abs(phi)):
                    break
                t *= 0.5
            else:
                break
            lam = new
            if its > _MAX_NEWTON:
                raise ConvergenceError("barrier Newton iteration limit reached")
        if mu <= mu_final:
            return lam, mu, its
        mu = max(mu * shrink, mu_final)


def _kkt_free(prob: _Problem, lam, max_iter=40):
    lam = np.array(lam, dtype=float)
    for it in range(max_iter):
        val, g, H = prob.derivs(lam)
        if g is None:
            return None
        if np.abs(g).max() <= 1e-12 * (1.0 + np.abs(np.diag(H)).max() ** 0.5):
            return lam, 0.0, it
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-6 and not prob.interior(lam + t * d):
            t *= 0.5
        if t <= 1e-6:
            return None
        lam = lam + t * d
    return None


def _kkt_curve(prob: _Problem, lam, nu, max_iter=40):
    """Newton on ``grad F = nu grad c``, ``c = 0``."""
    lam = np.array(lam, dtype=float)
    for it in range(max_iter):
        if not (lam[0] > 0 and lam[1] > 0):
            return None
        val, g, H = prob.derivs(lam)
        if g is None:
            return None
        c, gc, Hc = prob.constraint(lam)
        r1 = g - nu * gc
        scale = 1.0 + np.abs(g).max()
        if np.abs(r1).max() <= 1e-12 * scale and abs(c) <= 1e-14:
            return lam, nu, it
        J = np.zeros((3, 3))
        J[:2, :2] = H - nu * Hc
        J[:2, 2] = -gc
        J[2, :2] = gc
        try:
            step = np.linalg.solve(J, -np.concatenate([r1, [c]]))
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-6:
            new = lam + t * step[:2]
            if new[0] > 0 and new[1] > 0 and prob.slack(new).min() > 0:
                break
            t *= 0.5
        else:
            return None
        lam = new
        nu = nu + t * step[2]
    return None


def _kkt_axis(prob: _Problem, lam2_hint=None):
    """Maximise over ``lam1 = 0``, ``lam2 in [0, 1/B]``."""
    b, w = prob.b, prob.w
    hi = 1.0 / prob.B

    def d1(l2):
        s = 1.0 - b * l2
        return -_avg(b / s, w)

    if d1(0.0) <= 0:
        return np.array([0.0, 0.0])
    s_hi = 1.0 - b * hi
    if s_hi.min() > 0 and d1(hi) >= 0:
        return np.array([0.0, hi])
    # concave: derivative decreasing, root strictly inside (0, hi)
    top = hi
    if s_hi.min() <= 0:
        top = hi * (1.0 - 1e-15)
        while d1(top) > 0:  # pragma: no cover - only at exact zeros of |X|
            top = hi - (hi - top) * 0.5
    l2 = optimize.brentq(d1, 0.0, top, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.array([0.0, l2])


def _certify_axis(prob: _Problem, lam) -> bool:
    """KKT on the ``lam1 = 0`` edge: the mean constraint must not want ``lam1 > 0``."""
    val, g, H = prob.derivs(lam)
    if g is None:
        return False
    if lam[1] >= 1.0 / prob.B:
        # corner (0, 1/B): g = nu_c * (-x, B) - nu1 * (1, 0) with nu_c, nu1 >= 0
        nu_c = g[1] / prob.B
        nu1 = -prob.x * nu_c - g[0]
        tol = 1e-9 * (1.0 + np.abs(g).max())
        return nu_c >= -tol and nu1 >= -tol
    return g[0] <= 1e-10 * (1.0 + abs(g[1]))


def _start_point(prob: _Problem, cls: MomentClass) -> np.ndarray:
    # half-way to the boundary point whose extra atom sits at max(x, xmax)
    y = max(class_max_mean(cls), prob.x)
    D = prob.B + prob.eps * y ** (1 + prob.eps) - (1 + prob.eps) * prob.x * y ** prob.eps
    lam = 0.5 * np.array([(1 + prob.eps) * y ** prob.eps, 1.0]) / D
    return lam


def _finish(prob: _Problem, lam, nu: float, its: int) -> KlinfResult:
    lam = np.maximum(lam, 0.0)
    val = prob.value(lam)
    y = None
    mass = 0.0
    if lam[1] > 0:
        s = prob.slack(lam)
        mass = 1.0 - _avg(1.0 / s, prob.w)
        if mass > 1e-9:
            y = float(prob.extra_atom(lam))
        else:
            mass = 0.0
    return KlinfResult(max(val, 0.0), DualPoint(float(lam[0]), float(lam[1])), y, mass, its)


def klinf(dist, x: float, cls: MomentClass, start: Optional[DualPoint] = None) -> KlinfResult:
    """Minimal KL from ``dist`` to the class members with mean >= ``x``.

    ``dist`` must be a :class:`DiscreteDist` or :class:`EmpiricalDistribution`.
    Returns ``value = inf`` when no class member reaches ``x``. ``start``
    is an optional warm start (typically the dual at a nearby ``x``).
    """
    xs, w, f = _arrays(dist, 1.0 + cls.epsilon)
    x = float(x)
    xmax = class_max_mean(cls)
    B = cls.B
    m = _avg(xs, w)
    M = _avg(f, w)
    if x >= xmax:
        if x == xmax and np.all(xs == xmax):
            return KlinfResult(0.0, DualPoint())
        return KlinfResult(math.inf, DualPoint())
    if x <= m and M <= B * (1 + 1e-12):
        return KlinfResult(0.0, DualPoint())

    prob = _Problem(xs, w, f, max(x, -xmax), cls)
    if x <= -xmax:
        # every class member already has mean >= x: only the moment constraint binds
        lam = _kkt_axis(prob)
        return _finish(prob, lam, 0.0, 0)

    # warm start: try to certify the previous active set directly
    if start is not None and (start.lambda1 > 0 or start.lambda2 > 0):
        got = _polish(prob, np.array([start.lambda1, start.lambda2]))
        if got is not None:
            lam, nu, its = got
            return _finish(prob, lam, nu, its)

    lam0 = _start_point(prob, cls)
    lam, mu, its = _interior_point(prob, lam0)
    got = _polish(prob, lam, mu)
    if got is not None:
        lam, nu, pits = got
        return _finish(prob, lam, nu, its + pits)
    return _finish(prob, lam, 0.0, its)


def moment_projection(dist, cls: MomentClass) -> Tuple[float, float]:
    """Distance to the class and mean of the closest member, ignoring any mean constraint.

    Returns ``(min KL(dist, kappa) over kappa in L_B, m(kappa*))``. This is the
    floor ``KLinf(dist, x)`` attains for every ``x <= m(kappa*)``; for
    ``dist`` inside the class it is ``(0, m(dist))``.
    """
    xs, w, f = _arrays(dist, 1.0 + cls.epsilon)
    m = _avg(xs, w)
    if _avg(f, w) <= cls.B:
        return 0.0, m
    prob = _Problem(xs, w, f, 0.0, cls)
    lam = _kkt_axis(prob)
    s = prob.slack(lam)
    # with lam1 = 0 any mass deficit sits at the origin and adds nothing to the mean
    return max(prob.value(lam), 0.0), _avg(xs / s, prob.w)


def _polish(prob: _Problem, lam, mu: Optional[float] = None):
    """Solve the KKT system for each candidate active set; return the first certified."""
    lam = np.asarray(lam, dtype=float)
    slack_c = -prob.constraint(lam)[0] if lam[1] > 0 else 1.0
    if mu is not None:
        c_guess = slack_c < max(math.sqrt(mu), 1e-6)
        l1_guess = lam[0] < max(math.sqrt(mu), 1e-6) * max(1.0, lam[1])
    else:
        c_guess = slack_c < 1e-3
        l1_guess = lam[0] == 0.0
    order = []
    if l1_guess:
        order.append("axis")
    order.append("curve" if c_guess else "free")
    order.append("free" if c_guess else "curve")
    if not l1_guess:
        order.append("axis")

    for kind in order:
        if kind == "axis":
            cand = _kkt_axis(prob)
            if cand[1] > 0 and _certify_axis(prob, cand):
                return cand, 0.0, 1
            if cand[1] == 0 and prob.derivs(np.array([0.0, 0.0]))[1][0] <= 0:
                return cand, 0.0, 1
        elif kind == "free":
            if lam[0] <= 0 or lam[1] <= 0:
                continue
            start = lam if prob.interior(lam) else lam * 0.999
            if not prob.interior(start):
                continue
            got = _kkt_free(prob, start)
            if got is not None:
                return got
        else:
            if lam[0] <= 0 or lam[1] <= 0:
                continue
            # multiplier from least squares on grad F = nu grad c
            g = prob.derivs(lam)[1]
            if g is None:
                continue
            gc = prob.constraint(lam)[1]
            nu = max(float(g @ gc / (gc @ gc)), 0.0)
            got = _kkt_curve(prob, lam, nu)
            if got is not None and got[1] >= -1e-12:
                return got
    return None


def primal_reconstruct(dist, x: float, cls: MomentClass, dual: DualPoint):
    """Optimal primal weights on the support of ``dist`` and the optional extra atom.

    Returns ``(weights, y_star)``; the extra atom carries ``1 - weights.sum()``.
    """
    xs, w, f = _arrays(dist, 1.0 + cls.epsilon)
    if w is None:
        w = np.full(len(xs), 1.0 / len(xs))
    l1, l2 = dual.lambda1, dual.lambda2
    s = 1.0 - (xs - x) * l1 - (cls.B - f) * l2
    if np.any(s <= 0):
        raise ValueError("dual point leaves the domain of the objective")
    weights = w / s
    total = float(weights.sum())
    if total > 1.0 + 1e-6:
        raise ValueError(f"dual point is not optimal: reconstructed mass {total:.9g} > 1")
    y = None
    if total < 1.0 - 1e-6:
        if l2 <= 0:
            raise ValueError("mass deficit with lambda2 = 0")
        y = (l1 / (l2 * (1.0 + cls.epsilon))) ** (1.0 / cls.epsilon)
    return weights, y


def kl_divergence(p_weights, q_weights) -> float:
    """``sum p log(p/q)`` over a common support (``q`` may carry extra mass elsewhere)."""
    p = np.asarray(p_weights, dtype=float)
    q = np.asarray(q_weights, dtype=float)
    nz = p > 0
    if np.any(q[nz] <= 0):
        return math.inf
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def klinf_bounded01(dist, x: float) -> float:
    """KLinf over distributions supported on [0, 1].

    ``max_{lam in [0, 1/(1-x)]} E log(1 - (X - x) lam)``.
    """
    xs, w, _ = _arrays(dist, 2.0)
    if xs.min() < 0 or xs.max() > 1:
        raise ValueError("support must lie in [0, 1]")
    if not (0.0 <= x < 1.0):
        raise ValueError(f"x must lie in [0, 1), got {x}")
    if _avg(xs, w) >= x:
        return 0.0
    a = xs - x
    top = 1.0 / (1.0 - x)

    def deriv(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -_avg(a / (1.0 - a * lam), w)

    s_top = 1.0 - a * top
    if s_top.min() > 0 and deriv(top) >= 0:
        lam = top
    else:
        hi = top
        if s_top.min() <= 0:
            # an atom at 1 makes the objective -inf at the endpoint
            gap = top
            hi = top - gap * 1e-12
            while deriv(hi) > 0:
                hi = top - (top - hi) * 1e-3
        lam = optimize.brentq(deriv, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                              maxiter=500)
    s = 1.0 - a * lam
    return max(_avg(np.log(s), w), 0.0)
