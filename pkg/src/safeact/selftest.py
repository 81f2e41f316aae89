"""Fast in-process invariant checks behind the ``safeact selftest`` command."""

from __future__ import annotations

import filecmp
import tempfile
from pathlib import Path

import numpy as np

from .airhockey import TableGeometry, default_constraints
from .constraints import evaluate, finite_difference_jacobian
from .dynamics import default_arm, ee_jacobian, forward_kinematics, make_velocity_integrator
from .harness import ExperimentConfig, run_experiment
from .safety import (
    FilterConfig,
    SafetyFilter,
    augmented_jacobian,
    slack_map_derivative,
    tangent_projector,
)


def _check_projector_annihilation(rng: np.random.Generator, trials: int = 1000) -> float:
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(1, 6))
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 6))
        J_g = rng.normal(size=(k, n))
        G = rng.normal(size=(n, m))
        mu = rng.normal(size=k)
        J_c = augmented_jacobian(J_g, G, mu, sharpness=3.0)
        w = np.concatenate([np.ones(m), np.full(k, 100.0)])
        P = tangent_projector(J_c, w, damping=0.0)
        worst = max(worst, float(np.max(np.abs(J_c @ P))))
    return worst


def _check_jacobian_oracle(rng: np.random.Generator, trials: int = 100) -> float:
    arm = default_arm()
    table = TableGeometry()
    constraints = default_constraints(arm, table)
    worst = 0.0
    for _ in range(trials):
        q = rng.uniform(-2.0, 2.0, size=3)
        analytic = evaluate(constraints, q).jacobian
        numeric = finite_difference_jacobian(constraints.eval, q, h=1e-6)
        err = np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric)))
        worst = max(worst, float(err))
        Ja = ee_jacobian(arm, q)
        Jn = finite_difference_jacobian(lambda x: forward_kinematics(arm, x)[3], q, h=1e-6)
        worst = max(worst, float(np.max(np.abs(Ja - Jn)) / max(1.0, np.max(np.abs(Jn)))))
    return worst


def _check_worked_example() -> float:
    system = make_velocity_integrator(2, 100.0)
    from .constraints import ConstraintSet

    cs = ConstraintSet(
        k=1,
        eval=lambda s: np.array([s[0]]),
        jac=lambda s: np.array([[1.0, 0.0]]),
        labels=("halfplane",),
    )
    cfg = FilterConfig(error_gain=1.0, slack_sharpness=1.0, slack_weight=1.0, damping=0.0)
    filt = SafetyFilter(system, cs, cfg)
    s = np.array([-np.log(2.0), 0.0])
    filt.reset(s)
    u_safe, mu_dot, _ = filt.filter_action(s, np.array([1.0, 0.0]))
    return float(
        max(
            abs(u_safe[0] - 0.2),
            abs(u_safe[1]),
            abs(mu_dot[0] + 0.4),
        )
    )


def _check_determinism() -> bool:
    cfg = ExperimentConfig(policy="adversarial", safety="on", episodes=3, seed=7)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        run_experiment(cfg, a)
        run_experiment(cfg, b)
        return filecmp.cmp(a / "episodes.csv", b / "episodes.csv", shallow=False) and filecmp.cmp(
            a / "summary.json", b / "summary.json", shallow=False
        )


def run_selftest() -> bool:
    rng = np.random.default_rng(0)
    ok = True

    residual = _check_projector_annihilation(rng)
    passed = residual <= 1e-9
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} projector annihilation (max residual {residual:.2e})")

    err = _check_jacobian_oracle(rng)
    passed = err <= 1e-5
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} jacobian finite-difference oracle (max rel err {err:.2e})")

    err = _check_worked_example()
    passed = err <= 1e-10
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} worked filter example (max abs err {err:.2e})")

    passed = _check_determinism()
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} experiment determinism (byte-identical outputs)")

    # strictly positive across the capped slack domain (saturation to 1.0 on
    # the far side is benign; rank only needs sigma' > 0)
    sigma_prime = slack_map_derivative(np.array([-50.0, 0.0, 50.0]), 1.0)
    passed = bool(np.all(sigma_prime > 0) and sigma_prime[1] == 0.5)
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} slack derivative strictly positive on the capped domain")

    return bool(ok)
