import math

import numpy as np
import pytest

from safeact.airhockey import (
    EpisodeConfig,
    TableGeometry,
    WorldState,
    check_success,
    default_constraints,
    mallet_puck_collision,
    observe,
    puck_wall_collision,
    reset_episode,
    step_world,
)
from safeact.constraints import evaluate
from safeact.dynamics import forward_kinematics
from safeact.errors import ConfigurationError, ContractViolation


def make_world(puck_p, puck_v, q=None, latched=False):
    return WorldState(
        q=np.zeros(3) if q is None else np.asarray(q, dtype=float),
        qd=np.zeros(3),
        puck_p=np.asarray(puck_p, dtype=float),
        puck_v=np.asarray(puck_v, dtype=float),
        t=0.0,
        success_latched=latched,
        rng=np.random.default_rng(0),
    )


class TestResetEpisode:
    def test_same_seed_bit_identical(self, arm, table):
        cfg = EpisodeConfig(seed=7)
        a = reset_episode(cfg, arm, table)
        b = reset_episode(cfg, arm, table)
        assert np.array_equal(a.q, b.q)
        assert np.array_equal(a.puck_p, b.puck_p)
        assert np.array_equal(a.puck_v, b.puck_v)

    def test_seeds_give_distinct_pucks(self, arm, table):
        pucks = {
            tuple(reset_episode(EpisodeConfig(seed=s), arm, table).puck_p) for s in range(100)
        }
        assert len(pucks) == 100

    def test_home_is_strictly_safe(self, arm, table, task_constraints):
        world = reset_episode(EpisodeConfig(seed=0), arm, table)
        values = evaluate(task_constraints, world.q).values
        assert np.max(values) <= -0.01

    def test_unsafe_home_rejected(self, arm, table):
        # arm pointing down-left, end-effector below the table
        with pytest.raises(ConfigurationError):
            reset_episode(EpisodeConfig(seed=0), arm, table, home_q=np.array([-2.2, 0.0, 0.0]))

    def test_puck_inside_init_box(self, arm, table):
        cfg = EpisodeConfig(seed=3)
        for s in range(20):
            world = reset_episode(EpisodeConfig(seed=s), arm, table)
            x_lo, x_hi, y_lo, y_hi = cfg.puck_init_box
            assert x_lo <= world.puck_p[0] <= x_hi
            assert y_lo <= world.puck_p[1] <= y_hi
            speed = np.linalg.norm(world.puck_v)
            assert cfg.puck_init_speed_range[0] <= speed <= cfg.puck_init_speed_range[1] + 1e-12


class TestStepWorld:
    def test_stationary_puck_stays(self, arm, table):
        w = make_world([1.5, 0.5], [0.0, 0.0], q=[-1.2, 2.4, -1.2])
        out = step_world(w, np.zeros(3), 0.02, arm, table)
        assert np.array_equal(out.puck_p, w.puck_p)

    def test_exponential_damping_oracle(self, arm, table):
        # free puck, v=(1,0), damping 0.1: v_x(dt) = exp(-0.002)
        custom = TableGeometry(puck_damping=0.1)
        w = make_world([1.5, 0.5], [1.0, 0.0], q=[-1.2, 2.4, -1.2])
        out = step_world(w, np.zeros(3), 0.02, arm, custom)
        assert abs(out.puck_v[0] - math.exp(-0.002)) < 1e-9

    def test_zero_control_moves_only_puck(self, arm, table):
        w = make_world([1.5, 0.5], [0.3, -0.2], q=[-1.2, 2.4, -1.2])
        out = step_world(w, np.zeros(3), 0.02, arm, table)
        assert np.array_equal(out.q, w.q)
        assert not np.array_equal(out.puck_p, w.puck_p)

    def test_time_advances(self, arm, table):
        w = make_world([1.5, 0.5], [0.0, 0.0], q=[-1.2, 2.4, -1.2])
        out = step_world(w, np.zeros(3), 0.02, arm, table)
        assert out.t == pytest.approx(0.02)

    def test_rejects_nonpositive_dt(self, arm, table):
        w = make_world([1.5, 0.5], [0.0, 0.0])
        with pytest.raises(ContractViolation):
            step_world(w, np.zeros(3), 0.0, arm, table)

    def test_replay_is_bit_exact(self, arm, table, rng):
        w0 = reset_episode(EpisodeConfig(seed=11), arm, table)
        actions = rng.uniform(-2, 2, size=(50, 3))

        def rollout():
            w = w0
            states = []
            for u in actions:
                w = step_world(w, u, 0.02, arm, table)
                states.append((w.q.copy(), w.puck_p.copy(), w.puck_v.copy()))
            return states

        for (qa, pa, va), (qb, pb, vb) in zip(rollout(), rollout()):
            assert np.array_equal(qa, qb)
            assert np.array_equal(pa, pb)
            assert np.array_equal(va, vb)

    def test_energy_never_increases_without_mallet_contact(self, arm, table, rng):
        # puck far from the arm's reach, random bounces included
        w = make_world([1.7, 0.8], [2.0, -1.7], q=[-1.2, 2.4, -1.2])
        speed = np.linalg.norm(w.puck_v)
        for _ in range(200):
            w = step_world(w, np.zeros(3), 0.02, arm, table)
            new_speed = np.linalg.norm(w.puck_v)
            assert new_speed <= speed + 1e-12
            speed = new_speed


class TestWallCollision:
    def test_reflection_arithmetic(self, table):
        p = np.array([1.0, table.width - table.puck_radius + 0.01])
        v = np.array([0.0, 1.0])
        p2, v2 = puck_wall_collision(p, v, table)
        assert v2[1] == pytest.approx(-0.8)
        assert p2[1] == pytest.approx(table.width - table.puck_radius - 0.01)

    def test_interior_untouched(self, table):
        p = np.array([1.0, 0.5])
        v = np.array([0.2, 0.3])
        p2, v2 = puck_wall_collision(p, v, table)
        assert np.array_equal(p2, p)
        assert np.array_equal(v2, v)

    def test_goal_mouth_passes_through(self, table):
        p = np.array([table.length - table.puck_radius + 0.01, table.goal_center_y])
        v = np.array([1.0, 0.0])
        p2, v2 = puck_wall_collision(p, v, table)
        assert np.array_equal(p2, p)
        assert np.array_equal(v2, v)

    def test_right_wall_outside_goal_reflects(self, table):
        p = np.array([table.length - table.puck_radius + 0.01, 0.1])
        v = np.array([1.0, 0.0])
        p2, v2 = puck_wall_collision(p, v, table)
        assert v2[0] == pytest.approx(-0.8)


class TestMalletCollision:
    def test_head_on_moving_mallet(self):
        # 1-D elastic reflection off a moving, infinitely heavy wall
        p, v = mallet_puck_collision(
            np.array([0.07, 0.0]),
            np.array([-1.0, 0.0]),
            np.array([0.0, 0.0]),
            np.array([0.5, 0.0]),
            puck_radius=0.03,
            mallet_radius=0.05,
        )
        assert np.allclose(v, [2.0, 0.0], atol=1e-12)
        assert p[0] == pytest.approx(0.08)

    def test_separating_contact_keeps_velocity(self):
        p, v = mallet_puck_collision(
            np.array([0.07, 0.0]),
            np.array([1.0, 0.0]),
            np.array([0.0, 0.0]),
            np.array([0.0, 0.0]),
            puck_radius=0.03,
            mallet_radius=0.05,
        )
        assert np.array_equal(v, [1.0, 0.0])
        assert p[0] == pytest.approx(0.08)  # still pushed out of overlap

    def test_no_overlap_is_identity(self):
        p0 = np.array([0.2, 0.0])
        v0 = np.array([-1.0, 0.0])
        p, v = mallet_puck_collision(
            p0, v0, np.zeros(2), np.zeros(2), puck_radius=0.03, mallet_radius=0.05
        )
        assert np.array_equal(p, p0)
        assert np.array_equal(v, v0)


class TestSuccess:
    def test_inside_goal_span(self, table):
        w = make_world([table.length + 0.01, table.goal_center_y], [1.0, 0.0])
        assert check_success(w, table)

    def test_outside_goal_span(self, table):
        w = make_world([table.length + 0.01, 0.05], [1.0, 0.0])
        assert not check_success(w, table)

    def test_stationary_centered_puck_never_succeeds(self, arm, table):
        w = make_world([1.0, 0.5], [0.0, 0.0], q=[-1.2, 2.4, -1.2])
        for _ in range(250):
            w = step_world(w, np.zeros(3), 0.02, arm, table)
        assert not check_success(w, table)

    def test_latch_is_monotone(self, arm, table):
        # puck flying through the goal mouth: once true, stays true
        w = make_world([1.9, 0.5], [3.0, 0.0], q=[-1.2, 2.4, -1.2])
        seen = False
        for _ in range(100):
            w = step_world(w, np.zeros(3), 0.02, arm, table)
            now = check_success(w, table)
            assert not (seen and not now)
            seen = seen or now
        assert seen


class TestObserve:
    def test_zero_joint_velocity_means_zero_ee_velocity(self, arm):
        w = make_world([1.0, 0.5], [0.0, 0.0], q=[-1.2, 2.4, -1.2])
        obs = observe(w, arm)
        assert np.array_equal(obs.ee_v, np.zeros(2))

    def test_ee_consistent_with_forward_kinematics(self, arm):
        w = make_world([1.0, 0.5], [0.0, 0.0], q=[0.4, -0.8, 1.0])
        obs = observe(w, arm)
        assert np.array_equal(obs.ee_p, forward_kinematics(arm, w.q)[3])

    def test_ee_velocity_matches_finite_difference(self, arm, table, rng):
        for _ in range(10):
            q = rng.uniform(-1.5, 1.5, size=3)
            qd = rng.uniform(-1.0, 1.0, size=3)
            w = make_world([1.8, 0.9], [0.0, 0.0], q=q)
            w.qd = qd
            obs = observe(w, arm)
            h = 1e-6
            ee_plus = forward_kinematics(arm, q + h * qd)[3]
            ee_minus = forward_kinematics(arm, q - h * qd)[3]
            fd = (ee_plus - ee_minus) / (2 * h)
            assert np.max(np.abs(obs.ee_v - fd)) <= 1e-4


class TestDefaultConstraints:
    def test_home_all_below_zero(self, arm, table, task_constraints):
        world = reset_episode(EpisodeConfig(seed=0), arm, table)
        assert np.all(task_constraints.eval(world.q) < 0)

    def test_row_count_and_groups(self, task_constraints):
        labels = task_constraints.labels
        assert len(labels) == 18
        assert sum(1 for l in labels if l.startswith("ee_")) == 4
        assert sum(1 for l in labels if l.startswith("link")) == 8
        assert sum(1 for l in labels if l.startswith("q")) == 6


class TestGeometryValidation:
    def test_goal_must_fit_in_width(self):
        with pytest.raises(ContractViolation):
            TableGeometry(goal_center_y=0.05, goal_half_width=0.2)

    def test_restitution_range(self):
        with pytest.raises(ContractViolation):
            TableGeometry(wall_restitution=1.5)

    def test_episode_config_validation(self):
        with pytest.raises(ContractViolation):
            EpisodeConfig(horizon=-1.0)
        with pytest.raises(ContractViolation):
            EpisodeConfig(puck_init_box=(1.0, 0.5, 0.0, 1.0))
