"""Bandit policies: KLinf-UCB with geometric batching, KLinf-UCB2,
Empirical KL-UCB on [0, 1] and Robust-UCB.

Every policy runs through :func:`run_policy`, which plays a fixed horizon
against a :class:`~heavybandits.simulator.BanditInstance`-like object (any
object with ``arms``, ``cls`` and ``means``) and returns a
:class:`RegretTrace`.

Rewards come from one independent random stream per arm, derived from
``(seed, arm id)``: the ``j``-th pull of an arm sees the same reward under
every policy, which makes paired comparisons between policies exact.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import EmpiricalDistribution, MomentClass, sample_arm
from .indices import IndexQuery, RobustUcbTracker, index_bounded01, index_search
from .klinf import DualPoint

__all__ = [
    "ThresholdVariant",
    "ThresholdKind",
    "threshold_value",
    "batch_size",
    "ArmState",
    "PolicyState",
    "select_arm",
    "PolicyName",
    "PolicyConfig",
    "RegretTrace",
    "checkpoint_grid",
    "ArmStreams",
    "run_policy",
]


# ---------------------------------------------------------------- thresholds


class ThresholdVariant(enum.Enum):
    MAIN = "main"
    AGGRESSIVE = "aggressive"
    UCB2 = "ucb2"
    BOUNDED = "bounded"


@dataclass(frozen=True)
class ThresholdKind:
    """Exploration threshold ``g(t, N)``; ``epsilon1`` is the class slack of ``ucb2``."""

    variant: ThresholdVariant = ThresholdVariant.MAIN
    epsilon1: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", ThresholdVariant(self.variant))
        if self.variant is ThresholdVariant.UCB2:
            if self.epsilon1 is None or not self.epsilon1 > 0:
                raise ValueError("the ucb2 threshold needs epsilon1 > 0")


def threshold_value(kind: ThresholdKind, t: float, pulls: int) -> float:
    """Threshold at time ``t`` for an arm with ``pulls`` samples.

    * main: ``ln t + 2 ln ln t + 2 ln(1 + N) + 1``
    * aggressive: ``ln t``
    * ucb2: ``(1 + ln(1 + 1/ln ln t))^2 ln t``
    * bounded: ``ln t + ln ln t``
    """
    if t < 3:
        raise ValueError(f"thresholds are defined for t >= 3, got t={t}")
    lt = math.log(t)
    llt = math.log(lt)
    v = kind.variant
    if v is ThresholdVariant.MAIN:
        return lt + 2.0 * llt + 2.0 * math.log1p(pulls) + 1.0
    if v is ThresholdVariant.AGGRESSIVE:
        return lt
    if v is ThresholdVariant.UCB2:
        return (1.0 + math.log1p(1.0 / llt)) ** 2 * lt
    return lt + llt


def batch_size(eta_tilde: float, pulls: int) -> int:
    """``max(1, ceil(eta_tilde * pulls))``."""
    if pulls < 1:
        raise ValueError("pulls must be >= 1")
    if eta_tilde < 0:
        raise ValueError("eta_tilde must be >= 0")
    return max(1, math.ceil(eta_tilde * pulls))


# -------------------------------------------------------------------- state


@dataclass
class ArmState:
    """One arm as seen by the policy."""

    dist: EmpiricalDistribution
    index: float = math.nan
    index_evals: int = 0
    batches: int = 0
    dual: DualPoint = field(default_factory=DualPoint)

    @property
    def pulls(self) -> int:
        return len(self.dist)


@dataclass
class PolicyState:
    """Mutable state of the bandit loop. ``time`` is the number of pulls so far."""

    arms: List[ArmState]
    cls: MomentClass
    threshold: ThresholdKind = field(default_factory=ThresholdKind)
    eta_tilde: float = 0.0
    time: int = 0
    batch_counter: int = 0


def select_arm(state: PolicyState) -> int:
    """Arm with the largest index; ties go to the lowest id (strict comparison)."""
    best, best_val = 0, state.arms[0].index
    for a in range(1, len(state.arms)):
        v = state.arms[a].index
        if v > best_val:
            best, best_val = a, v
    return best


# ------------------------------------------------------------------ policies


class PolicyName(enum.Enum):
    KLINF_UCB = "klinf_ucb"
    KLINF_UCB2 = "klinf_ucb2"
    EMPIRICAL_KLUCB = "empirical_klucb"
    ROBUST_UCB = "robust_ucb"


@dataclass(frozen=True)
class PolicyConfig:
    """A policy and its parameters.

    ``eta_tilde`` and ``threshold`` apply to ``klinf_ucb``; ``klinf_ucb2``
    always uses the ucb2 threshold and the enlarged class ``B + epsilon1``
    (``epsilon1`` defaults to ``0.01 B``). The other two policies are
    unbatched and use their own fixed confidence schedules.
    """

    name: PolicyName = PolicyName.KLINF_UCB
    eta_tilde: float = 0.1
    threshold: ThresholdKind = field(default_factory=ThresholdKind)
    epsilon1: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "name", PolicyName(self.name))
        if self.eta_tilde < 0:
            raise ValueError("eta_tilde must be >= 0")
        if self.epsilon1 is not None and not self.epsilon1 > 0:
            raise ValueError("epsilon1 must be > 0")

    @property
    def batched(self) -> bool:
        return self.name in (PolicyName.KLINF_UCB, PolicyName.KLINF_UCB2)

    def effective_threshold(self) -> str:
        """Name of the confidence schedule the policy actually uses."""
        return {PolicyName.KLINF_UCB: self.threshold.variant.value,
                PolicyName.KLINF_UCB2: ThresholdVariant.UCB2.value,
                PolicyName.EMPIRICAL_KLUCB: ThresholdVariant.BOUNDED.value,
                PolicyName.ROBUST_UCB: "robust_t^-2"}[self.name]

    def label(self) -> str:
        if self.name is PolicyName.KLINF_UCB:
            return f"klinf_ucb_{self.threshold.variant.value}"
        return self.name.value


@dataclass
class RegretTrace:
    """Cumulative pseudo-regret at checkpoints plus cost counters of one run.

    ``batches`` lists ``(first pull time, arm, size)`` for every allocation
    after initialisation; ``arm_index_evals`` and ``arm_batches`` break the
    counters down per arm.
    """

    checkpoints: List[Tuple[int, float]]
    arm_pulls: List[int]
    index_evals: int
    seed: int
    arm_index_evals: List[int] = field(default_factory=list)
    arm_batches: List[int] = field(default_factory=list)
    batches: List[Tuple[int, int, int]] = field(default_factory=list)
    policy: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.checkpoints], dtype=np.int64)

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r for _, r in self.checkpoints], dtype=float)

    @property
    def final_regret(self) -> float:
        return self.checkpoints[-1][1]


def checkpoint_grid(K: int, T: int, ratio: float = 1.1) -> List[int]:
    """``K, ..., T`` growing by a factor ``ratio`` (at least +1 per step)."""
    grid = [K]
    while grid[-1] < T:
        grid.append(min(T, max(grid[-1] + 1, math.ceil(ratio * grid[-1]))))
    return grid


class ArmStreams:
    """Per-arm reward streams derived from ``(seed, arm id)``.

    Uniforms are drawn in fixed blocks; numpy generators produce the same
    sequence however the draws are chunked, so the ``j``-th reward of an
    arm depends only on ``(seed, arm, j)``.
    """

    BLOCK = 4096

    def __init__(self, arms: Sequence, seed: int):
        self.arms = list(arms)
        self._rngs = [np.random.default_rng(np.random.SeedSequence([seed, a]))
                      for a in range(len(arms))]
        self._buf = [np.empty(0) for _ in arms]
        self._pos = [0] * len(arms)

    def draw(self, arm: int, size: int) -> np.ndarray:
        out = []
        while size > 0:
            buf, pos = self._buf[arm], self._pos[arm]
            if pos >= len(buf):
                buf = sample_arm(self.arms[arm], self._rngs[arm].random(self.BLOCK))
                self._buf[arm], pos = buf, 0
            take = min(size, len(buf) - pos)
            out.append(buf[pos:pos + take])
            self._pos[arm] = pos + take
            size -= take
        return np.concatenate(out) if len(out) != 1 else out[0].copy()


def _validate(instance, T: int) -> None:
    K = len(instance.arms)
    if K < 2:
        raise ValueError(f"need at least 2 arms, got {K}")
    if T <= K:
        raise ValueError(f"horizon T={T} must exceed the number of arms K={K}")


def run_policy(policy: PolicyConfig, instance, T: int, seed: int,
               observer: Optional[Callable[[PolicyState], None]] = None) -> RegretTrace:
    """Play ``T`` rounds of ``policy`` on ``instance`` with reward seed ``seed``.

    Each arm is pulled once, then at every decision point all indices are
    recomputed (time ``t`` = pulls so far + 1), the arm with the largest index
    wins and receives a batch of ``max(1, ceil(eta_tilde N))`` pulls (one pull
    for the unbatched policies), truncated so the total never exceeds ``T``.

    ``observer``, if given, is called with the state after every index
    update (before the winner is chosen); it must not mutate the state.
    """
    _validate(instance, T)
    K = len(instance.arms)
    cls: MomentClass = instance.cls
    means = np.asarray(instance.means, dtype=float)
    gaps = means.max() - means
    name = policy.name

    threshold = policy.threshold
    eta = policy.eta_tilde if policy.batched else 0.0
    index_cls = cls
    if name is PolicyName.KLINF_UCB2:
        eps1 = policy.epsilon1 if policy.epsilon1 is not None else 0.01 * cls.B
        threshold = ThresholdKind(ThresholdVariant.UCB2, eps1)
        index_cls = MomentClass(cls.B + eps1, cls.epsilon)
    elif name is PolicyName.EMPIRICAL_KLUCB:
        threshold = ThresholdKind(ThresholdVariant.BOUNDED)

    streams = ArmStreams(instance.arms, seed)
    state = PolicyState(
        arms=[ArmState(EmpiricalDistribution(epsilon=index_cls.epsilon)) for _ in range(K)],
        cls=index_cls, threshold=threshold, eta_tilde=eta)
    trackers = [RobustUcbTracker(cls) for _ in range(K)] if name is PolicyName.ROBUST_UCB else None

    grid = checkpoint_grid(K, T)
    checkpoints: List[Tuple[int, float]] = []
    gi = 0
    regret = 0.0

    def allocate(arm: int, size: int) -> None:
        nonlocal regret, gi
        start = state.time
        rewards = streams.draw(arm, size)
        state.arms[arm].dist.extend(rewards)
        if trackers is not None:
            trackers[arm].extend(rewards)
        # regret grows linearly inside a batch: record every checkpoint it crosses
        while gi < len(grid) and grid[gi] <= start + size:
            checkpoints.append((grid[gi], regret + gaps[arm] * (grid[gi] - start)))
            gi += 1
        regret += gaps[arm] * size
        state.time = start + size

    for a in range(K):
        allocate(a, 1)
    state.batch_counter = K
    batches: List[Tuple[int, int, int]] = []

    while state.time < T:
        t = state.time + 1
        for a, arm in enumerate(state.arms):
            if name is PolicyName.ROBUST_UCB:
                arm.index = trackers[a].index(t)
            else:
                g = threshold_value(threshold, t, arm.pulls)
                if name is PolicyName.EMPIRICAL_KLUCB:
                    arm.index = index_bounded01(arm.dist, arm.pulls, g)
                else:
                    q = IndexQuery(arm.dist, arm.pulls, g, index_cls)
                    guess = arm.index if math.isfinite(arm.index) else None
                    res = index_search(q, guess=guess, dual=arm.dual)
                    arm.index, arm.dual = res.value, res.dual
            arm.index_evals += 1
        if observer is not None:
            observer(state)
        winner = select_arm(state)
        size = min(batch_size(eta, state.arms[winner].pulls), T - state.time)
        batches.append((state.time + 1, winner, size))
        state.arms[winner].batches += 1
        state.batch_counter += 1
        allocate(winner, size)

    evals = [arm.index_evals for arm in state.arms]
    return RegretTrace(
        checkpoints=checkpoints,
        arm_pulls=[arm.pulls for arm in state.arms],
        index_evals=int(sum(evals)),
        seed=seed,
        arm_index_evals=evals,
        arm_batches=[arm.batches for arm in state.arms],
        batches=batches,
        policy=policy.label(),
    )
