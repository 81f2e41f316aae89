#!/usr/bin/env python
# Small evaluation sweep: every policy with the filter on and off,
# summarized the way the CLI does it (episodes.csv / summary.json per run,
# then one long-format comparison CSV).
import tempfile
from pathlib import Path

from safeact.harness import ExperimentConfig, compare_report, run_experiment

EPISODES = 25  # keep the demo quick; the acceptance suite runs the full batches

summaries = []
with tempfile.TemporaryDirectory() as tmp:
    for policy in ("scripted", "random", "adversarial"):
        for safety in ("on", "off"):
            cfg = ExperimentConfig(policy=policy, safety=safety, episodes=EPISODES, seed=0)
            out = Path(tmp) / f"{policy}-{safety}"
            summary = run_experiment(cfg, out)
            summaries.append(summary)
            print(
                f"{policy:12s} safety={safety:3s}: success {summary['success_rate']:.2f}, "
                f"mean violation {summary['mean_max_violation']:.2e}, "
                f"p95 {summary['p95_max_violation']:.2e}"
            )

report = compare_report(summaries)
Path("comparison.csv").write_text(report)
print("\nwrote comparison.csv:")
print(report)
