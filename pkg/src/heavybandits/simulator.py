"""Experiment orchestration: bandit instances, multi-run averaging, the
instance-dependent regret lower bound and Monte Carlo validation of the
anytime KLinf concentration bound.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import (
    DiscreteDist,
    DivergentMomentError,
    EmpiricalDistribution,
    GenParetoParams,
    MomentClass,
    abs_moment,
    class_max_mean,
    dist_mean,
    sample_arm,
)
from .klinf import _Problem, klinf, klinf_bounded01
from .policies import PolicyConfig, RegretTrace, checkpoint_grid, run_policy

__all__ = [
    "ClassMembershipError",
    "DegenerateInstanceError",
    "BanditInstance",
    "RunSummary",
    "run_many",
    "LowerBound",
    "lower_bound_curve",
    "concentration_check",
    "deviation_maxima",
    "binomial_slack",
]


class ClassMembershipError(ValueError):
    """An arm of an instance lies outside the moment class."""


class DegenerateInstanceError(ValueError):
    """A suboptimal arm is indistinguishable from the optimal one (KLinf = 0)."""


@dataclass
class BanditInstance:
    """Arm distributions plus the moment class they are promised to satisfy.

    Construction checks every arm against the class (``E|X|^(1+eps) <= B``
    up to ``tol``) and raises :class:`ClassMembershipError` naming the first
    offending arm.
    """

    arms: List
    cls: MomentClass
    tol: float = 1e-9
    moments: List[float] = field(init=False)
    means: List[float] = field(init=False)

    def __post_init__(self):
        self.arms = list(self.arms)
        if not self.arms:
            raise ValueError("an instance needs at least one arm")
        p = self.cls.power
        self.moments = []
        for k, arm in enumerate(self.arms):
            try:
                mom = abs_moment(arm, p)
            except DivergentMomentError as exc:
                raise ClassMembershipError(f"arm {k} violates L_B: {exc}") from exc
            if not mom <= self.cls.B + self.tol:
                raise ClassMembershipError(
                    f"arm {k} violates L_B: E|X|^{p:g} = {mom:.6g} > B = {self.cls.B:g}")
            self.moments.append(mom)
        self.means = [dist_mean(a) for a in self.arms]

    @property
    def optimal_arm(self) -> int:
        return int(np.argmax(self.means))

    @property
    def gaps(self) -> np.ndarray:
        m = np.asarray(self.means)
        return m.max() - m


# ------------------------------------------------------------------ run_many


@dataclass
class RunSummary:
    """Pointwise mean and (population) standard deviation over runs."""

    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    traces: List[RegretTrace]

    @property
    def mean_pulls(self) -> np.ndarray:
        return np.mean([tr.arm_pulls for tr in self.traces], axis=0)

    @property
    def mean_index_evals(self) -> float:
        return float(np.mean([tr.index_evals for tr in self.traces]))


def run_many(instance: BanditInstance, policy: PolicyConfig, T: int, runs: int,
             base_seed: int = 0, threads: int = 1) -> RunSummary:
    """``runs`` independent runs with seeds ``base_seed + r``, averaged pointwise."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = [base_seed + r for r in range(runs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(lambda s: run_policy(policy, instance, T, s), seeds))
    else:
        traces = [run_policy(policy, instance, T, s) for s in seeds]
    times = traces[0].times
    for tr in traces[1:]:
        if not np.array_equal(tr.times, times):  # pragma: no cover - grid is deterministic
            raise RuntimeError("runs produced different checkpoint grids")
    R = np.stack([tr.regrets for tr in traces])
    return RunSummary(times, R.mean(axis=0), R.std(axis=0), traces)


# --------------------------------------------------------------- lower bound


@dataclass
class LowerBound:
    """``t -> multiplier * ln(t) * sum_a gap_a / KLinf(arm_a, best mean)``.

    ``klinf_values`` and ``klinf_stderr`` are per arm (``nan`` for the
    optimal arm); the standard error is the Monte Carlo error of the
    sampled proxy (0 for finite arms).
    """

    constant: float
    klinf_values: List[float]
    klinf_stderr: List[float]
    multiplier: float = 1.0

    def __call__(self, t):
        return self.multiplier * self.constant * np.log(np.asarray(t, dtype=float))


def _proxy(arm, samples: int, seed: int, epsilon: float):
    if isinstance(arm, GenParetoParams):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10b]))
        return EmpiricalDistribution(sample_arm(arm, rng.random(samples)), epsilon=epsilon)
    return arm


def lower_bound_curve(instance: BanditInstance, T: Optional[int] = None, *, bounded: bool = False,
                      proxy_samples: int = 100_000, seed: int = 0,
                      multiplier: float = 1.0) -> LowerBound:
    """Asymptotic regret lower bound of the instance.

    Continuous arms are replaced by an i.i.d. sample of ``proxy_samples``
    points; finite arms are used exactly. ``bounded`` switches to the
    [0, 1]-support divergence. ``T`` is accepted for symmetry with the
    simulation calls; the curve is defined for every ``t >= 1``.
    """
    means = np.asarray(instance.means, dtype=float)
    best = int(np.argmax(means))
    target = float(means[best])
    cls = instance.cls
    const = 0.0
    vals: List[float] = []
    errs: List[float] = []
    for a, arm in enumerate(instance.arms):
        gap = target - means[a]
        if a == best or gap == 0.0:
            if a != best:
                raise DegenerateInstanceError(f"arm {a} has the optimal mean; KLinf is 0")
            vals.append(math.nan)
            errs.append(math.nan)
            continue
        proxy = _proxy(arm, proxy_samples, seed + a, cls.epsilon)
        if bounded:
            val = klinf_bounded01(proxy, target)
            err = 0.0
        else:
            res = klinf(proxy, target, cls)
            val = res.value
            err = _klinf_stderr(proxy, target, cls, res) if isinstance(proxy, EmpiricalDistribution) else 0.0
        if not val > 0:
            raise DegenerateInstanceError(f"arm {a}: KLinf to the optimal mean is {val}")
        vals.append(val)
        errs.append(err)
        const += gap / val
    return LowerBound(const, vals, errs, multiplier)


def _klinf_stderr(proxy: EmpiricalDistribution, x: float, cls: MomentClass, res) -> float:
    # the optimal value is a sample mean of log-slacks at the optimal dual
    # (envelope theorem), so its Monte Carlo error is their standard error
    prob = _Problem(proxy.points, None, proxy.powers(cls.power), x, cls)
    s = prob.slack(np.array(list(res.dual)))
    return float(np.std(np.log(s)) / math.sqrt(len(s)))


# ---------------------------------------------------------- concentration


def binomial_slack(p: float, runs: int, sigmas: float = 3.0) -> float:
    """``sigmas`` binomial standard deviations of a frequency estimate of ``p``."""
    return sigmas * math.sqrt(p * (1.0 - p) / runs)


def deviation_maxima(dist: DiscreteDist, cls: MomentClass, n_max: int, runs: int,
                     seed: int = 0,
                     cache: Optional[Dict[Tuple[int, ...], float]] = None) -> np.ndarray:
    """Per sample path, ``max_{n <= n_max} n KLinf(empirical_n, m(dist)) - 1 - 2 ln(1 + n)``.

    Path ``r`` draws ``n_max`` i.i.d. samples from ``dist`` with the stream
    ``(seed, r)``. The empirical distribution of a finite ``dist`` is a
    vector of support counts and KLinf only depends on their proportions,
    so values are cached by the reduced count vector; pass a shared
    ``cache`` dict to reuse it across calls with the same ``dist`` and ``cls``.
    """
    support, weights = dist.support()
    m = float(np.dot(support, weights))
    if cache is None:
        cache = {}
    s = len(support)
    powers = np.abs(support) ** cls.power

    def value(counts: np.ndarray, n: int, total: float) -> float:
        if total >= m * n and float(np.dot(counts, powers)) <= cls.B * n:
            return 0.0  # empirical law is in the class and already reaches m
        g = reduce(math.gcd, (int(c) for c in counts))
        key = tuple(int(c) // g for c in counts)
        v = cache.get(key)
        if v is None:
            nz = counts > 0
            emp = DiscreteDist(support[nz], counts[nz] / counts.sum())
            v = klinf(emp, m, cls).value
            cache[key] = v
        return v

    penalty = 1.0 + 2.0 * np.log1p(np.arange(1, n_max + 1))
    cum_w = np.cumsum(weights)
    out = np.empty(runs)
    for r in range(runs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        idx = np.minimum(np.searchsorted(cum_w, rng.random(n_max), side="right"), s - 1)
        counts = np.zeros(s, dtype=np.int64)
        total = 0.0
        best = -math.inf
        for n in range(1, n_max + 1):
            counts[idx[n - 1]] += 1
            total += support[idx[n - 1]]
            best = max(best, n * value(counts, n, total) - penalty[n - 1])
        out[r] = best
    return out


def concentration_check(dist: DiscreteDist, cls: MomentClass, n_max: int, x: float,
                        runs: int, seed: int = 0,
                        cache: Optional[Dict[Tuple[int, ...], float]] = None) -> float:
    """Fraction of sample paths on which the anytime KLinf deviation reaches ``x``.

    A path of ``n_max`` i.i.d. draws from ``dist`` violates when for some
    ``n <= n_max``: ``n KLinf(empirical_n, m(dist)) - 1 - 2 ln(1 + n) >= x``.
    The bound under test says this happens with probability at most ``e^-x``.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    maxima = deviation_maxima(dist, cls, n_max, runs, seed, cache)
    return float(np.mean(maxima >= x))
