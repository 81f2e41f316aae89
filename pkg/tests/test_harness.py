import csv
import dataclasses
import filecmp
import io
import json
from pathlib import Path

import numpy as np
import pytest

from safeact.airhockey import EpisodeConfig, reset_episode
from safeact.cli import main as cli_main
from safeact.errors import ConfigurationError
from safeact.harness import (
    EPISODE_CSV_HEADER,
    ExperimentConfig,
    compare_report,
    make_policy,
    run_episode,
    run_experiment,
)
from safeact.safety import SafetyFilter


def small_cfg(**overrides):
    base = dict(policy="adversarial", safety="on", episodes=3, seed=5, horizon=1.0)
    base.update(overrides)
    return ExperimentConfig(**base)


class ZeroPolicy:
    v_ee_max = 1.5

    def reset(self, seed=None):
        pass

    def act(self, obs):
        return np.zeros(2)


class RecordingFilter(SafetyFilter):
    """Spy: counts calls and records outputs to assert the wiring."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.outputs = []

    def filter_action(self, s, u_nom):
        out = super().filter_action(s, u_nom)
        self.outputs.append(out[0].copy())
        return out


class TestRunEpisode:
    def test_zero_policy_keeps_ee_stationary(self, arm, table):
        cfg = small_cfg(policy="scripted", horizon=0.5, log_trajectories=True)
        world0 = reset_episode(EpisodeConfig(seed=0), arm, table)
        result, log = run_episode(cfg, ZeroPolicy(), world0, seed=0)
        q0 = world0.q
        for rec in log:
            assert np.max(np.abs(np.array(rec["q"]) - q0)) <= 1e-6
        assert result.max_violation == 0.0

    def test_adversarial_on_is_safe(self, arm, table):
        cfg = small_cfg(safety="on", horizon=2.0)
        world0 = reset_episode(EpisodeConfig(seed=1), arm, table)
        policy = make_policy(cfg)
        result, _ = run_episode(cfg, policy, world0, seed=1)
        assert result.max_violation <= 1e-3

    def test_adversarial_off_violates(self, arm, table):
        cfg = small_cfg(safety="off", horizon=2.0)
        world0 = reset_episode(EpisodeConfig(seed=1), arm, table)
        policy = make_policy(cfg)
        result, _ = run_episode(cfg, policy, world0, seed=1)
        assert result.max_violation > 0.01

    def test_filter_invoked_exactly_once_per_step_and_its_output_stepped(self, arm, table):
        # the safety-on branch must never feed u_nom to the world
        from safeact.airhockey import default_constraints
        from safeact.dynamics import make_velocity_integrator
        import safeact.harness as harness_mod

        cfg = small_cfg(safety="on", horizon=0.4, log_trajectories=True)
        world0 = reset_episode(EpisodeConfig(seed=2), arm, table)
        spy = {}

        original = harness_mod.SafetyFilter

        def patched(system, constraints, config):
            filt = RecordingFilter(system, constraints, config)
            spy["filter"] = filt
            return filt

        harness_mod.SafetyFilter = patched
        try:
            result, log = run_episode(cfg, make_policy(cfg), world0, seed=2)
        finally:
            harness_mod.SafetyFilter = original

        filt = spy["filter"]
        assert len(filt.outputs) == result.steps == len(log)
        for rec, u_filt in zip(log, filt.outputs):
            assert np.array_equal(np.array(rec["u_safe"]), u_filt)
            assert rec["u_nom"] != rec["u_safe"] or np.allclose(rec["u_nom"], rec["u_safe"])


class TestRunExperiment:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_cfg()
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        assert filecmp.cmp(tmp_path / "a/episodes.csv", tmp_path / "b/episodes.csv", shallow=False)
        assert filecmp.cmp(tmp_path / "a/summary.json", tmp_path / "b/summary.json", shallow=False)

    def test_single_episode_aggregate_matches_row(self, tmp_path):
        cfg = small_cfg(episodes=1)
        summary = run_experiment(cfg, tmp_path)
        with open(tmp_path / "episodes.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert summary["episodes"] == 1
        assert summary["success_rate"] == float(int(rows[0]["success"]))
        assert summary["mean_max_violation"] == pytest.approx(float(rows[0]["max_violation"]))
        assert summary["p95_max_violation"] == pytest.approx(float(rows[0]["max_violation"]))

    def test_episode_accounting_and_header(self, tmp_path):
        cfg = small_cfg(episodes=5)
        run_experiment(cfg, tmp_path)
        with open(tmp_path / "episodes.csv") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = list(reader)
        assert header == EPISODE_CSV_HEADER
        assert len(rows) == 5
        assert [int(r[0]) for r in rows] == [5, 6, 7, 8, 9]

    def test_paired_seeds_share_puck_initializations(self, tmp_path, arm, table):
        on = small_cfg(safety="on", episodes=2)
        off = small_cfg(safety="off", episodes=2)
        for i in range(2):
            w_on = reset_episode(dataclasses.replace(on.world, seed=on.seed + i), arm, table)
            w_off = reset_episode(dataclasses.replace(off.world, seed=off.seed + i), arm, table)
            assert np.array_equal(w_on.puck_p, w_off.puck_p)
            assert np.array_equal(w_on.puck_v, w_off.puck_v)

    def test_unwritable_output_fails_before_running(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("occupied")
        cfg = small_cfg()
        with pytest.raises(ConfigurationError):
            run_experiment(cfg, target / "sub")

    def test_config_echo_written(self, tmp_path):
        cfg = small_cfg()
        summary = run_experiment(cfg, tmp_path)
        with open(tmp_path / "config.json") as fh:
            echoed = json.load(fh)
        assert echoed["config_hash"] == summary["config_hash"]
        assert echoed["config"]["policy"] == "adversarial"

    def test_trajectory_logs_written_when_enabled(self, tmp_path):
        cfg = small_cfg(episodes=1, log_trajectories=True)
        run_experiment(cfg, tmp_path)
        traj = tmp_path / "traj-5.jsonl"
        assert traj.exists()
        lines = traj.read_text().strip().splitlines()
        record = json.loads(lines[0])
        assert set(record) == {
            "t", "q", "qd", "puck_p", "puck_v", "u_nom", "u_safe", "max_violation", "success_latched",
        }


class TestCompareReport:
    def test_single_summary_single_row(self):
        summary = {
            "condition": "scripted",
            "safety": "on",
            "success_rate": 0.9,
            "mean_max_violation": 0.0,
            "p95_max_violation": 0.0,
        }
        text = compare_report([summary])
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 1
        assert rows[0]["condition"] == "scripted"
        assert float(rows[0]["success_rate"]) == 0.9

    def test_on_off_pair_shares_condition(self):
        mk = lambda safety: {
            "condition": "scripted",
            "safety": safety,
            "success_rate": 0.5,
            "mean_max_violation": 0.1,
            "p95_max_violation": 0.2,
        }
        rows = list(csv.DictReader(io.StringIO(compare_report([mk("on"), mk("off")]))))
        assert [r["safety"] for r in rows] == ["on", "off"]
        assert rows[0]["condition"] == rows[1]["condition"]

    def test_round_trip_parse_recovers_values_exactly(self):
        summary = {
            "condition": "random",
            "safety": "off",
            "success_rate": 1.0 / 3.0,
            "mean_max_violation": 0.30000000000000004,
            "p95_max_violation": 1e-17,
        }
        text = compare_report([summary])
        header = text.splitlines()[0]
        assert header == "condition,safety,success_rate,mean_max_violation,p95_max_violation"
        row = list(csv.DictReader(io.StringIO(text)))[0]
        assert float(row["success_rate"]) == summary["success_rate"]
        assert float(row["mean_max_violation"]) == summary["mean_max_violation"]
        assert float(row["p95_max_violation"]) == summary["p95_max_violation"]

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            compare_report([])


class TestCli:
    def test_run_and_report_round_trip(self, tmp_path, capsys):
        config = {
            "policy": "adversarial",
            "safety": "off",
            "episodes": 2,
            "seed": 0,
            "horizon": 1.0,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        code = cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out/episodes.csv").exists()
        code = cli_main(
            [
                "report",
                "--in",
                str(tmp_path / "out/summary.json"),
                "--out",
                str(tmp_path / "report.csv"),
            ]
        )
        assert code == 0
        rows = list(csv.DictReader((tmp_path / "report.csv").open()))
        assert rows[0]["condition"] == "adversarial"

    def test_flag_overrides(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"policy": "scripted", "episodes": 9, "horizon": 1.0}))
        code = cli_main(
            [
                "run",
                "--config",
                str(cfg_path),
                "--episodes",
                "1",
                "--policy",
                "adversarial",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0
        with open(tmp_path / "out/config.json") as fh:
            echoed = json.load(fh)
        assert echoed["config"]["episodes"] == 1
        assert echoed["config"]["policy"] == "adversarial"

    def test_bad_config_exit_code(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text("{not json")
        assert cli_main(["run", "--config", str(cfg_path)]) == 1

    def test_unknown_field_exit_code(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"polcy": "scripted"}))
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1

    def test_unreachable_remote_exit_code(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"policy": "remote:127.0.0.1:1", "episodes": 1}))
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
