"""Arm reward models and the empirical-distribution container.

Three kinds of distribution appear throughout the package:

* :class:`GenParetoParams`, the heavy-tailed arm model used in the
  synthetic experiments,
* :class:`DiscreteDist`, a finite weighted support used for fixtures and
  oracles,
* :class:`EmpiricalDistribution`, the growing sample of one arm.

Every KL computation downstream consumes finite supports only, so the two
finite types expose a common ``support()`` method returning
``(values, weights)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate


class InfiniteMeanError(ValueError):
    """Raised when the mean of a distribution does not exist."""


class DivergentMomentError(ValueError):
    """Raised when a requested absolute moment is infinite."""


@dataclass(frozen=True)
class MomentClass:
    """Distributions with ``E|X|^(1+epsilon) <= B``."""

    B: float
    epsilon: float

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise ValueError(f"B must be positive and finite, got {self.B}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")

    @property
    def power(self) -> float:
        return 1.0 + self.epsilon

    @property
    def max_mean(self) -> float:
        return class_max_mean(self)

    def contains(self, dist, tol: float = 0.0) -> bool:
        return abs_moment(dist, self.power) <= self.B + tol


def class_max_mean(cls: MomentClass) -> float:
    """Largest mean attainable in the class, ``B^(1/(1+eps))``.

    Only the point mass at this value attains it.
    """
    return cls.B ** (1.0 / (1.0 + cls.epsilon))


@dataclass(frozen=True)
class GenParetoParams:
    """Generalized Pareto law with location ``mu``, scale ``sigma`` and shape ``zeta``.

    The density is ``(1/sigma) * (1 + zeta*(x-mu)/sigma)^(-1-1/zeta)`` on
    ``x >= mu``.
    """

    mu: float
    sigma: float
    zeta: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.zeta > 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = 1.0 + self.zeta * (x - self.mu) / self.sigma
        out = np.zeros_like(x)
        ok = x >= self.mu
        out[ok] = z[ok] ** (-1.0 - 1.0 / self.zeta) / self.sigma
        return out

    def quantile(self, u):
        return self.mu + self.sigma * ((1.0 - np.asarray(u)) ** (-self.zeta) - 1.0) / self.zeta


def genpareto_sample(params: GenParetoParams, u):
    """Inverse-CDF transform of uniform(s) ``u`` in (0, 1).

    Works elementwise on arrays; a scalar in gives a float out.
    """
    x = params.quantile(u)
    return float(x) if np.ndim(x) == 0 else x


def genpareto_mean(params: GenParetoParams) -> float:
    if params.zeta >= 1:
        raise InfiniteMeanError(f"GenPareto with zeta={params.zeta} >= 1 has no finite mean")
    return params.mu + params.sigma / (1.0 - params.zeta)


def _genpareto_abs_moment(params: GenParetoParams, p: float) -> float:
    # Substitute t = 1/(1 + zeta (x-mu)/sigma) in (0, 1]; the density becomes
    # t^(1/zeta - 1)/zeta and |x|^p ~ t^(-p) near 0, handled by an algebraic weight.
    mu, s, z = params.mu, params.sigma, params.zeta
    if p * z >= 1:
        raise DivergentMomentError(
            f"E|X|^{p} diverges for GenPareto with zeta={z} (need p < {1.0 / z:.6g})")

    def x_of(t):
        return mu + s * (1.0 / t - 1.0) / z

    def smooth(t):
        # |x(t)|^p * t^p stays bounded as t -> 0
        return abs(mu * t + s * (1.0 - t) / z) ** p / z

    alpha = 1.0 / z - 1.0 - p
    pieces = [0.0, 1.0]
    if mu < 0:
        # kink of |x| where x(t) = 0
        t0 = 1.0 / (1.0 - z * mu / s)
        pieces = [0.0, t0, 1.0]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        if lo == 0.0:
            val, _ = integrate.quad(smooth, lo, hi, weight="alg", wvar=(alpha, 0.0),
                                    epsabs=0.0, epsrel=1e-10, limit=200)
        else:
            val, _ = integrate.quad(lambda t: abs(x_of(t)) ** p * t ** (1.0 / z - 1.0) / z,
                                    lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution on distinct support points."""

    support_points: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __init__(self, support: Sequence[float], weights: Sequence[float]):
        sp = tuple(float(v) for v in support)
        w = tuple(float(v) for v in weights)
        if len(sp) == 0 or len(sp) != len(w):
            raise ValueError("support and weights must be nonempty and of equal length")
        if any(v < 0 for v in w):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        if len(set(sp)) != len(sp):
            raise ValueError("support points must be distinct")
        object.__setattr__(self, "support_points", sp)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDist":
        return cls([value], [1.0])

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array(self.support_points), np.array(self.weights)

    def mean(self) -> float:
        x, w = self.support()
        return float(np.dot(x, w))

    def quantile(self, u):
        x, w = self.support()
        order = np.argsort(x)
        cdf = np.cumsum(w[order])
        idx = np.searchsorted(cdf, np.asarray(u), side="right")
        return x[order][np.minimum(idx, len(x) - 1)]


class EmpiricalDistribution:
    """Raw samples of one arm with running sums.

    ``epsilon`` fixes the moment order tracked in ``running_abs_moment``
    (sum of ``|X_i|^(1+epsilon)``) and cached per point for the KL
    routines. Storage grows geometrically, so ``push`` is amortised O(1).
    """

    def __init__(self, points: Sequence[float] = (), epsilon: Optional[float] = None):
        self.epsilon = epsilon
        self._x = np.empty(16)
        self._f = np.empty(16)
        self.count = 0
        self.running_sum = 0.0
        self.running_abs_moment = 0.0
        self.extend(points)

    def _reserve(self, extra: int) -> None:
        need = self.count + extra
        if need > len(self._x):
            cap = max(need, 2 * len(self._x))
            for name in ("_x", "_f"):
                buf = np.empty(cap)
                buf[: self.count] = getattr(self, name)[: self.count]
                setattr(self, name, buf)

    def push(self, value: float) -> None:
        self.extend([value])

    def extend(self, values) -> None:
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return
        self._reserve(v.size)
        n = self.count
        self._x[n:n + v.size] = v
        self.running_sum += float(v.sum())
        if self.epsilon is not None:
            f = np.abs(v) ** (1.0 + self.epsilon)
            self._f[n:n + v.size] = f
            self.running_abs_moment += float(f.sum())
        self.count = n + v.size

    def __len__(self) -> int:
        return self.count

    @property
    def points(self) -> np.ndarray:
        return self._x[: self.count]

    def powers(self, p: float) -> np.ndarray:
        """``|X_i|^p`` for every stored point (cached for the tracked order)."""
        if self.epsilon is not None and p == 1.0 + self.epsilon:
            return self._f[: self.count]
        return np.abs(self.points) ** p

    def mean(self) -> float:
        if self.count == 0:
            raise ValueError("mean of an empty EmpiricalDistribution")
        return self.running_sum / self.count

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.count
        return self.points, np.full(n, 1.0 / n)

    def copy(self) -> "EmpiricalDistribution":
        return EmpiricalDistribution(self.points.copy(), epsilon=self.epsilon)


Dist = Union[GenParetoParams, DiscreteDist, EmpiricalDistribution]
FiniteDist = Union[DiscreteDist, EmpiricalDistribution]


def abs_moment(dist: Dist, p: float) -> float:
    """``E|X|^p``; exact for finite supports, quadrature for GenPareto."""
    if isinstance(dist, GenParetoParams):
        return _genpareto_abs_moment(dist, p)
    if isinstance(dist, EmpiricalDistribution):
        if dist.count == 0:
            raise ValueError("moment of an empty EmpiricalDistribution")
        return float(np.mean(dist.powers(p)))
    x, w = dist.support()
    return float(np.dot(np.abs(x) ** p, w))


def dist_mean(dist: Dist) -> float:
    if isinstance(dist, GenParetoParams):
        return genpareto_mean(dist)
    return dist.mean()


def sample_arm(dist: Dist, u) -> np.ndarray:
    """Rewards for uniforms ``u`` by inverse-CDF transform.

    Empirical distributions are resampled uniformly (by quantile of their
    sorted points).
    """
    u = np.asarray(u, dtype=float)
    if isinstance(dist, GenParetoParams):
        return np.asarray(dist.quantile(u), dtype=float)
    if isinstance(dist, DiscreteDist):
        return np.asarray(dist.quantile(u), dtype=float)
    if isinstance(dist, EmpiricalDistribution):
        pts = np.sort(dist.points)
        return pts[np.minimum((u * len(pts)).astype(np.int64), len(pts) - 1)]
    raise TypeError(f"cannot sample from {type(dist).__name__}")
