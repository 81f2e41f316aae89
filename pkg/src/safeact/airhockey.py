"""Deterministic planar air-hockey world: arm-driven mallet, puck, walls, goal.

Coordinates: the playing field is the rectangle [0, length] x [0, width],
the goal mouth is an opening in the right wall, and the arm base sits just
outside the left edge. The mallet is rigidly attached to the arm
end-effector. All stepping is pure; randomness enters only at episode reset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import (
    ConstraintSet,
    box_constraints,
    point_in_rectangle_constraints,
    stack_constraints,
)
from .dynamics import ArmModel, ee_jacobian, forward_kinematics, link_jacobian
from .errors import ConfigurationError, ContractViolation

Vector = np.ndarray

# Speed cap guarding against tunneling through walls at coarse time steps.
PUCK_SPEED_CAP = 5.0
# Outward expansion of the table rectangle that the arm links must stay in.
LINK_RECT_EXPANSION = 0.1
# Home joint configuration: mallet near the left quarter-line, strictly safe.
HOME_Q = np.array([-1.2, 2.4, -1.2])


@dataclass(frozen=True)
class TableGeometry:
    length: float = 2.0
    width: float = 1.0
    goal_center_y: float = 0.5
    goal_half_width: float = 0.125
    wall_restitution: float = 0.8
    puck_radius: float = 0.03
    mallet_radius: float = 0.05
    puck_damping: float = 0.3

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ContractViolation("table extents must be positive")
        if not (0 < self.wall_restitution <= 1):
            raise ContractViolation("wall_restitution must be in (0, 1]")
        if self.puck_radius <= 0 or self.mallet_radius <= 0:
            raise ContractViolation("radii must be positive")
        if self.puck_damping < 0:
            raise ContractViolation("puck_damping must be >= 0")
        if (
            self.goal_center_y - self.goal_half_width < 0
            or self.goal_center_y + self.goal_half_width > self.width
        ):
            raise ContractViolation("goal span must lie within the table width")


@dataclass
class WorldState:
    q: Vector
    qd: Vector
    puck_p: Vector
    puck_v: Vector
    t: float
    success_latched: bool
    rng: np.random.Generator


@dataclass(frozen=True)
class Observation:
    """Proprioceptive observation plus derived end-effector pose/velocity."""

    q: Vector
    qd: Vector
    puck_p: Vector
    puck_v: Vector
    ee_p: Vector
    ee_v: Vector


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: float = 5.0
    dt: float = 0.02
    puck_init_box: tuple[float, float, float, float] = (0.6, 0.9, 0.3, 0.7)
    puck_init_speed_range: tuple[float, float] = (0.0, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0 or self.dt <= 0:
            raise ContractViolation("horizon and dt must be positive")
        x_lo, x_hi, y_lo, y_hi = self.puck_init_box
        if x_lo >= x_hi or y_lo >= y_hi:
            raise ContractViolation("puck_init_box must be a non-degenerate rectangle")
        lo, hi = self.puck_init_speed_range
        if lo < 0 or hi < lo:
            raise ContractViolation("puck_init_speed_range must satisfy 0 <= lo <= hi")


def _link_point_map(arm: ArmModel, link: int):
    def point(q):
        return forward_kinematics(arm, q)[link], link_jacobian(arm, q, link)

    return point


def default_constraints(arm: ArmModel, table: TableGeometry) -> ConstraintSet:
    """The task's 18 safety rows.

    (a) end-effector inside the playing field with a mallet-radius margin,
    (b) both intermediate link endpoints inside the expanded outer rectangle,
    (c) joint position box limits.
    """
    play = (0.0, table.length, 0.0, table.width)
    outer = (
        -LINK_RECT_EXPANSION,
        table.length + LINK_RECT_EXPANSION,
        -LINK_RECT_EXPANSION,
        table.width + LINK_RECT_EXPANSION,
    )
    return stack_constraints(
        [
            point_in_rectangle_constraints(
                _link_point_map(arm, 3), play, margin=table.mallet_radius, name="ee"
            ),
            point_in_rectangle_constraints(_link_point_map(arm, 1), outer, name="link1"),
            point_in_rectangle_constraints(_link_point_map(arm, 2), outer, name="link2"),
            box_constraints(arm.q_min, arm.q_max, name="q"),
        ]
    )


def reset_episode(
    cfg: EpisodeConfig, arm: ArmModel, table: TableGeometry, home_q: Vector | None = None
) -> WorldState:
    """Fresh world: arm at home, puck placed and launched from the seed.

    Identical seeds give bit-identical worlds. Fails fast if the home
    configuration is not strictly safe (all constraint values <= -0.01).
    """
    q0 = HOME_Q.copy() if home_q is None else np.asarray(home_q, dtype=float).copy()
    g0 = default_constraints(arm, table).eval(q0)
    if np.max(g0) > -0.01:
        raise ConfigurationError(
            f"home configuration is not strictly safe (max constraint value {np.max(g0):.4f})"
        )
    rng = np.random.default_rng(cfg.seed)
    x_lo, x_hi, y_lo, y_hi = cfg.puck_init_box
    puck_p = np.array([rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)])
    angle = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(*cfg.puck_init_speed_range)
    puck_v = speed * np.array([math.cos(angle), math.sin(angle)])
    return WorldState(
        q=q0,
        qd=np.zeros(3),
        puck_p=puck_p,
        puck_v=puck_v,
        t=0.0,
        success_latched=False,
        rng=rng,
    )


def puck_wall_collision(
    puck_p: Vector, puck_v: Vector, table: TableGeometry
) -> tuple[Vector, Vector]:
    """Reflect the puck off any wall line it crossed, except the goal mouth.

    Position mirrors about the wall inset by the puck radius; the normal
    velocity component flips and shrinks by the restitution (only when still
    moving into the wall, so re-processing is harmless).
    """
    p = puck_p.copy()
    v = puck_v.copy()
    r = table.puck_radius
    e = table.wall_restitution

    lo_y, hi_y = r, table.width - r
    if p[1] > hi_y:
        p[1] = 2.0 * hi_y - p[1]
        if v[1] > 0:
            v[1] = -e * v[1]
    elif p[1] < lo_y:
        p[1] = 2.0 * lo_y - p[1]
        if v[1] < 0:
            v[1] = -e * v[1]

    lo_x, hi_x = r, table.length - r
    in_goal_span = abs(p[1] - table.goal_center_y) <= table.goal_half_width
    if p[0] > hi_x and not in_goal_span:
        p[0] = 2.0 * hi_x - p[0]
        if v[0] > 0:
            v[0] = -e * v[0]
    elif p[0] < lo_x:
        p[0] = 2.0 * lo_x - p[0]
        if v[0] < 0:
            v[0] = -e * v[0]
    return p, v


def mallet_puck_collision(
    puck_p: Vector,
    puck_v: Vector,
    mallet_p: Vector,
    mallet_v: Vector,
    puck_radius: float,
    mallet_radius: float,
) -> tuple[Vector, Vector]:
    """Resolve disc overlap against the kinematic (infinite-mass) mallet.

    The puck is pushed to contact distance along the center line and the
    relative normal velocity is reflected elastically when closing.
    """
    d = puck_p - mallet_p
    dist = float(np.linalg.norm(d))
    contact = puck_radius + mallet_radius
    if dist >= contact:
        return puck_p, puck_v
    n = d / dist if dist > 1e-12 else np.array([1.0, 0.0])
    p = mallet_p + contact * n
    closing = float((puck_v - mallet_v) @ n)
    v = puck_v - 2.0 * closing * n if closing < 0 else puck_v.copy()
    return p, v


def _in_goal(puck_p: Vector, table: TableGeometry) -> bool:
    return bool(
        puck_p[0] > table.length
        and abs(puck_p[1] - table.goal_center_y) <= table.goal_half_width
    )


def check_success(world: WorldState, table: TableGeometry) -> bool:
    """True once the puck center has crossed the goal mouth (latched for the episode)."""
    return world.success_latched or _in_goal(world.puck_p, table)


def observe(world: WorldState, arm: ArmModel) -> Observation:
    ee_p = forward_kinematics(arm, world.q)[3]
    ee_v = ee_jacobian(arm, world.q) @ world.qd
    return Observation(
        q=world.q.copy(),
        qd=world.qd.copy(),
        puck_p=world.puck_p.copy(),
        puck_v=world.puck_v.copy(),
        ee_p=ee_p,
        ee_v=ee_v,
    )


def step_world(
    world: WorldState, u_joint: Vector, dt: float, arm: ArmModel, table: TableGeometry
) -> WorldState:
    """One control period: velocity plant, exponential puck damping, contacts.

    Collision order is mallet first, then walls; the puck speed cap guards
    against tunneling.
    """
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    u = np.asarray(u_joint, dtype=float)
    q = world.q + dt * u
    qd = u.copy()

    gamma = table.puck_damping
    if gamma > 0:
        decay = math.exp(-gamma * dt)
        puck_p = world.puck_p + world.puck_v * (-math.expm1(-gamma * dt) / gamma)
        puck_v = world.puck_v * decay
    else:
        puck_p = world.puck_p + dt * world.puck_v
        puck_v = world.puck_v.copy()

    mallet_p = forward_kinematics(arm, q)[3]
    mallet_v = ee_jacobian(arm, q) @ qd
    puck_p, puck_v = mallet_puck_collision(
        puck_p, puck_v, mallet_p, mallet_v, table.puck_radius, table.mallet_radius
    )
    puck_p, puck_v = puck_wall_collision(puck_p, puck_v, table)

    speed = float(np.linalg.norm(puck_v))
    if speed > PUCK_SPEED_CAP:
        puck_v = puck_v * (PUCK_SPEED_CAP / speed)

    return WorldState(
        q=q,
        qd=qd,
        puck_p=puck_p,
        puck_v=puck_v,
        t=world.t + dt,
        success_latched=world.success_latched or _in_goal(puck_p, table),
        rng=world.rng,
    )
