"""
What geometric batching saves
=============================

KLinf-UCB recomputes indices only when a batch ends; a batch gives the
winning arm ceil(eta * N) more pulls. The number of index computations
drops from linear in T to logarithmic, at little cost in regret.
"""

import math

from heavybandits import PolicyConfig, run_policy
from heavybandits.cli import build_instance, load_config

instance = build_instance(load_config("experiment1"))
T = 10_000

print(f"{'eta':>6} {'regret':>9} {'decisions':>10} {'index evals':>12} {'batches per arm':>16}")
for eta in (0.0, 0.01, 0.05, 0.1, 0.3):
    tr = run_policy(PolicyConfig(eta_tilde=eta), instance, T, seed=0)
    print(f"{eta:6} {tr.final_regret:9.1f} {len(tr.batches):10d} {tr.index_evals:12d} "
          f"{str(tr.arm_batches):>16}")

# Each arm wins at most about 1/eta + log(N)/log(1+eta) batches.
eta = 0.1
tr = run_policy(PolicyConfig(eta_tilde=eta), instance, T, seed=0)
for a, (b, n) in enumerate(zip(tr.arm_batches, tr.arm_pulls)):
    bound = math.ceil(1 / eta) + math.log(n) / math.log1p(eta) + 2
    print(f"arm {a}: {b} batches for {n} pulls (bound {bound:.1f})")

# The batch log shows the geometric growth of the optimal arm's batches.
sizes = [size for _, arm, size in tr.batches if arm == 0]
print("first batch sizes of arm 0:", sizes[:12], "... last:", sizes[-3:])
