"""Experiment runner: seeded episode batches, safety on/off, CSV/JSON outputs.

Per-episode seeds derive as ``seed + index``, so safety-on and safety-off
runs of the same config see identical puck initializations (paired
comparison). Everything downstream of the config is deterministic;
re-running a config reproduces the output files byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .airhockey import (
    EpisodeConfig,
    TableGeometry,
    WorldState,
    check_success,
    default_constraints,
    observe,
    reset_episode,
    step_world,
)
from .constraints import evaluate, max_violation
from .dynamics import ArmModel, default_arm, dls_inverse_kinematics, ee_jacobian, make_velocity_integrator
from .errors import ConfigurationError, ProtocolError
from .policies import (
    DEFAULT_V_EE_MAX,
    AdversarialPolicy,
    RandomPolicy,
    RemotePolicy,
    ScriptedExpertPolicy,
)
from .safety import FilterConfig, SafetyFilter

EPISODE_CSV_HEADER = ("seed", "steps", "success", "max_violation", "clipped_steps", "protocol_error")
REPORT_CSV_HEADER = ("condition", "safety", "success_rate", "mean_max_violation", "p95_max_violation")

POLICY_NAMES = ("scripted", "random", "adversarial")


@dataclass(frozen=True)
class ExperimentConfig:
    policy: str = "scripted"
    safety: str = "on"
    episodes: int = 100
    seed: int = 0
    dt: float = 0.02
    horizon: float = 5.0
    ik_damping: float = 1e-3
    v_ee_max: float = DEFAULT_V_EE_MAX
    filter: FilterConfig = field(default_factory=FilterConfig)
    arm: ArmModel = field(default_factory=default_arm)
    table: TableGeometry = field(default_factory=TableGeometry)
    world: EpisodeConfig = field(default_factory=EpisodeConfig)
    log_trajectories: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if self.safety not in ("on", "off"):
            raise ConfigurationError("safety must be 'on' or 'off'")
        if not (self.policy in POLICY_NAMES or self.policy.startswith("remote:")):
            raise ConfigurationError(
                f"policy must be one of {POLICY_NAMES} or 'remote:HOST:PORT', got {self.policy!r}"
            )
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigurationError("dt and horizon must be positive")
        if self.ik_damping < 0:
            raise ConfigurationError("ik_damping must be >= 0")

    @property
    def safety_on(self) -> bool:
        return self.safety == "on"

    def to_dict(self) -> dict:
        def convert(value):
            if isinstance(value, np.ndarray):
                return [float(x) for x in value]
            if dataclasses.is_dataclass(value) and not isinstance(value, type):
                return {k: convert(v) for k, v in dataclasses.asdict(value).items()}
            if isinstance(value, (list, tuple)):
                return [convert(v) for v in value]
            return value

        out = {}
        for f in dataclasses.fields(self):
            out[f.name] = convert(getattr(self, f.name))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kwargs = {}
        nested = {
            "filter": FilterConfig,
            "arm": ArmModel,
            "table": TableGeometry,
            "world": EpisodeConfig,
        }
        for key, typ in nested.items():
            if key in data:
                sub = data.pop(key)
                if isinstance(sub, dict):
                    sub = {
                        k: tuple(v) if isinstance(v, list) and k.startswith("puck_init") else v
                        for k, v in sub.items()
                    }
                    kwargs[key] = typ(**sub)
                else:
                    kwargs[key] = sub
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        kwargs.update(data)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class EpisodeResult:
    seed: int
    steps: int
    success: bool
    max_violation: float
    correction_clipped_steps: int = 0
    protocol_error: str | None = None


def make_policy(cfg: ExperimentConfig):
    """Instantiate the policy named by the config (remote policies connect here)."""
    if cfg.policy == "scripted":
        return ScriptedExpertPolicy(cfg.table, v_ee_max=cfg.v_ee_max)
    if cfg.policy == "random":
        return RandomPolicy(seed=cfg.seed, v_ee_max=cfg.v_ee_max)
    if cfg.policy == "adversarial":
        return AdversarialPolicy(cfg.table, v_ee_max=cfg.v_ee_max)
    if cfg.policy.startswith("remote:"):
        return RemotePolicy(address=cfg.policy[len("remote:"):], v_ee_max=cfg.v_ee_max)
    raise ConfigurationError(f"unknown policy {cfg.policy!r}")


def run_episode(
    cfg: ExperimentConfig, policy, world0: WorldState, seed: int | None = None
) -> tuple[EpisodeResult, list[dict]]:
    """Roll one episode; returns the result and the per-step trajectory log.

    Pipeline order per step: observe, policy, inverse kinematics, safety
    filter (or plain clamp when safety is off), plant step. Violation is
    accumulated at every visited state. Remote protocol failures abort the
    episode and tag the result instead of substituting actions.
    """
    arm, table = cfg.arm, cfg.table
    constraints = default_constraints(arm, table)
    qd_bound = np.full(3, arm.qd_max)
    filt = None
    if cfg.safety_on:
        system = make_velocity_integrator(3, arm.qd_max)
        filt = SafetyFilter(system, constraints, cfg.filter)
        filt.reset(world0.q)

    world = world0
    n_steps = int(round(cfg.horizon / cfg.dt))
    worst = max_violation(evaluate(constraints, world.q).values)
    clipped_steps = 0
    protocol_error = None
    success = False
    steps_done = 0
    log: list[dict] = []

    for _ in range(n_steps):
        obs = observe(world, arm)
        try:
            v_ee = policy.act(obs)
        except ProtocolError as exc:
            protocol_error = type(exc).__name__ + ": " + str(exc)
            break
        u_nom = dls_inverse_kinematics(ee_jacobian(arm, world.q), v_ee, cfg.ik_damping)
        if filt is not None:
            u_safe, mu_dot, diag = filt.filter_action(world.q, u_nom)
            filt.advance_slack(mu_dot, cfg.dt)
            if diag.correction_clipped:
                clipped_steps += 1
        else:
            u_safe = np.clip(u_nom, -qd_bound, qd_bound)
        world = step_world(world, u_safe, cfg.dt, arm, table)
        steps_done += 1
        violation = max_violation(evaluate(constraints, world.q).values)
        worst = max(worst, violation)
        if cfg.log_trajectories:
            log.append(
                {
                    "t": world.t,
                    "q": [float(x) for x in world.q],
                    "qd": [float(x) for x in world.qd],
                    "puck_p": [float(x) for x in world.puck_p],
                    "puck_v": [float(x) for x in world.puck_v],
                    "u_nom": [float(x) for x in u_nom],
                    "u_safe": [float(x) for x in u_safe],
                    "max_violation": violation,
                    "success_latched": world.success_latched,
                }
            )
        if check_success(world, table):
            success = True
            break

    result = EpisodeResult(
        seed=cfg.world.seed if seed is None else seed,
        steps=steps_done,
        success=success,
        max_violation=worst,
        correction_clipped_steps=clipped_steps,
        protocol_error=protocol_error,
    )
    return result, log


def _episode_row(result: EpisodeResult) -> list:
    return [
        result.seed,
        result.steps,
        int(result.success),
        repr(result.max_violation),
        result.correction_clipped_steps,
        result.protocol_error or "",
    ]


def summarize(cfg: ExperimentConfig, results: list[EpisodeResult]) -> dict:
    violations = np.array([r.max_violation for r in results])
    tol = cfg.filter.violation_tolerance
    return {
        "condition": cfg.policy,
        "safety": cfg.safety,
        "episodes": len(results),
        "success_rate": float(np.mean([r.success for r in results])),
        "mean_max_violation": float(np.mean(violations)),
        "p95_max_violation": float(np.percentile(violations, 95)),
        "violation_rate": float(np.mean(violations > tol)),
        "protocol_errors": sum(1 for r in results if r.protocol_error),
        "config_hash": cfg.config_hash(),
    }


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Run ``cfg.episodes`` seeded episodes and write episodes.csv / summary.json.

    The effective config is echoed to the output directory. Fails before the
    first episode if the output location is not writable.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / "episodes.csv"
        probe_handle = open(probe, "w", newline="")
    except OSError as exc:
        raise ConfigurationError(f"output path not writable: {exc}") from exc

    with open(out / "config.json", "w") as fh:
        json.dump(
            {"config": cfg.to_dict(), "config_hash": cfg.config_hash()},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    policy = make_policy(cfg)
    results: list[EpisodeResult] = []
    try:
        with probe_handle as fh:
            writer = csv.writer(fh)
            writer.writerow(EPISODE_CSV_HEADER)
            for index in range(cfg.episodes):
                episode_seed = cfg.seed + index
                world_cfg = dataclasses.replace(
                    cfg.world, seed=episode_seed, dt=cfg.dt, horizon=cfg.horizon
                )
                world0 = reset_episode(world_cfg, cfg.arm, cfg.table)
                if isinstance(policy, RemotePolicy):
                    policy.reset(seed=episode_seed, episode=index)
                else:
                    policy.reset(seed=episode_seed)
                result, log = run_episode(cfg, policy, world0, seed=episode_seed)
                results.append(result)
                writer.writerow(_episode_row(result))
                if cfg.log_trajectories:
                    with open(out / f"traj-{episode_seed}.jsonl", "w") as tf:
                        for record in log:
                            tf.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if isinstance(policy, RemotePolicy):
            policy.close()

    summary = summarize(cfg, results)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def compare_report(summaries: list[dict]) -> str:
    """Plot-ready long-format CSV with one row per summary (fixed column order)."""
    if not summaries:
        raise ConfigurationError("need at least one summary to report on")
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(REPORT_CSV_HEADER)
    for s in summaries:
        writer.writerow(
            [
                s["condition"],
                s["safety"],
                repr(float(s["success_rate"])),
                repr(float(s["mean_max_violation"])),
                repr(float(s["p95_max_violation"])),
            ]
        )
    return buffer.getvalue()
