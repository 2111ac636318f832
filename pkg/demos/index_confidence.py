"""
Upper-confidence indices compared
=================================

For growing samples of a heavy-tailed arm, compare the KLinf index with
the truncated-mean envelope that dominates it and with the Robust-UCB
index at the same confidence level.
"""

import math

import numpy as np

from heavybandits import (EmpiricalDistribution, GenParetoParams, IndexQuery, MomentClass,
                          genpareto_sample, index_bisect, index_dual, robust_ucb_index,
                          truncation_envelope)

cls = MomentClass(7, 0.7)
x = genpareto_sample(GenParetoParams(-1, 1, 0.2), np.random.default_rng(1).random(20_000))
t = 1e4
g = 2 * math.log(t)  # the Robust-UCB confidence level delta = t^-2

print(f"true mean 0.25, class edge {cls.max_mean:.3f}, threshold g = {g:.3f}")
print(f"{'n':>6} {'mean':>8} {'KLinf index':>12} {'dual route':>11} {'envelope':>9} {'Robust-UCB':>11}")
for n in (10, 30, 100, 300, 1000, 3000, 10_000, 20_000):
    s = x[:n]
    q = IndexQuery(EmpiricalDistribution(s, epsilon=cls.epsilon), n, g, cls)
    u = index_bisect(q)
    try:
        v = f"{index_dual(q):11.5f}"
    except ValueError:
        v = f"{'empty set':>11}"
    env = truncation_envelope(s, cls, math.exp(-g), g)
    print(f"{n:6d} {s.mean():8.4f} {u:12.5f} {v} {env:9.4f} {robust_ucb_index(s, cls, t):11.4f}")
