#!/usr/bin/env python
# One adversarial episode with the safety filter on vs off: the unfiltered
# run rams the wall, the filtered run glides along the constraint boundary.
# Writes safe_vs_unsafe.png when matplotlib is available.
import dataclasses

import numpy as np

from safeact.airhockey import reset_episode
from safeact.dynamics import forward_kinematics
from safeact.harness import ExperimentConfig, make_policy, run_episode

SEED = 4


def rollout(safety):
    cfg = ExperimentConfig(
        policy="adversarial", safety=safety, episodes=1, seed=SEED, log_trajectories=True
    )
    world0 = reset_episode(dataclasses.replace(cfg.world, seed=SEED), cfg.arm, cfg.table)
    policy = make_policy(cfg)
    policy.reset(seed=SEED)
    result, log = run_episode(cfg, policy, world0, seed=SEED)
    ee = np.array([forward_kinematics(cfg.arm, np.array(rec["q"]))[3] for rec in log])
    viol = np.array([rec["max_violation"] for rec in log])
    return result, ee, viol


res_on, ee_on, viol_on = rollout("on")
res_off, ee_off, viol_off = rollout("off")

print(f"safety ON : max violation {res_on.max_violation:.2e} over {res_on.steps} steps")
print(f"safety OFF: max violation {res_off.max_violation:.2e} over {res_off.steps} steps")
print("\nlowest mallet y on :", round(float(ee_on[:, 1].min()), 3), " (blocked at the 0.05 margin)")
print("lowest mallet y off:", round(float(ee_off[:, 1].min()), 3), " (through the wall)")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(ee_on[:, 0], ee_on[:, 1], label="filter on")
    ax1.plot(ee_off[:, 0], ee_off[:, 1], label="filter off", linestyle="--")
    ax1.add_patch(plt.Rectangle((0, 0), 2.0, 1.0, fill=False, color="k"))
    ax1.set_title("mallet path")
    ax1.set_aspect("equal")
    ax1.legend()
    ax2.plot(viol_on, label="filter on")
    ax2.plot(viol_off, label="filter off", linestyle="--")
    ax2.set_title("max constraint violation per step")
    ax2.set_xlabel("step")
    ax2.legend()
    fig.tight_layout()
    fig.savefig("safe_vs_unsafe.png", dpi=120)
    print("\nwrote safe_vs_unsafe.png")
except ImportError:
    print("\n(matplotlib not installed; skipping the plot)")
