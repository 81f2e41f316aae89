"""Control-affine systems, fixed-step integrators, and planar 3-link arm kinematics.

The plant used throughout the air-hockey harness is a joint-velocity
integrator (zero drift, identity control matrix), but the interfaces here
accept any system of the form  ds/dt = drift(s) + control_matrix(s) @ u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolation, SingularityError

Vector = np.ndarray
Matrix = np.ndarray


@dataclass(frozen=True)
class ControlAffineSystem:
    """A system with dynamics ``ds/dt = drift(s) + control_matrix(s) @ u``.

    Attributes:
        n: state dimension.
        m: control dimension.
        drift: state -> length-n vector (state units per second).
        control_matrix: state -> (n, m) matrix.
        u_min, u_max: per-component control bounds, each length m.
    """

    n: int
    m: int
    drift: Callable[[Vector], Vector]
    control_matrix: Callable[[Vector], Matrix]
    u_min: Vector
    u_max: Vector

    def __post_init__(self):
        u_min = np.asarray(self.u_min, dtype=float)
        u_max = np.asarray(self.u_max, dtype=float)
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        if u_min.shape != (self.m,) or u_max.shape != (self.m,):
            raise ContractViolation(
                f"control bounds must have shape ({self.m},), got {u_min.shape} / {u_max.shape}"
            )
        if not np.all(u_min < u_max):
            raise ContractViolation("u_min must be strictly below u_max componentwise")


def make_velocity_integrator(n: int, qd_max) -> ControlAffineSystem:
    """Build the joint-velocity plant: zero drift, identity control matrix.

    ``qd_max`` may be a scalar or a length-n vector of speed bounds; the
    control bounds are the symmetric box [-qd_max, +qd_max].
    """
    if n < 1:
        raise ContractViolation("state dimension must be >= 1")
    qd_max = np.broadcast_to(np.asarray(qd_max, dtype=float), (n,)).copy()
    if np.any(qd_max <= 0):
        raise ContractViolation("qd_max must be strictly positive")
    zero = np.zeros(n)
    eye = np.eye(n)
    return ControlAffineSystem(
        n=n,
        m=n,
        drift=lambda s: zero,
        control_matrix=lambda s: eye,
        u_min=-qd_max,
        u_max=qd_max,
    )


def step(
    system: ControlAffineSystem,
    s: Vector,
    u: Vector,
    dt: float,
    method: str = "rk4",
) -> Vector:
    """Advance the state by one step of ``dt`` seconds with ``u`` held constant.

    ``method`` is ``"euler"`` or ``"rk4"`` (classical 4-stage rule).
    """
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if s.shape != (system.n,):
        raise ContractViolation(f"state must have shape ({system.n},), got {s.shape}")
    if u.shape != (system.m,):
        raise ContractViolation(f"control must have shape ({system.m},), got {u.shape}")

    def rate(x):
        return system.drift(x) + system.control_matrix(x) @ u

    if method == "euler":
        return s + dt * rate(s)
    if method == "rk4":
        k1 = rate(s)
        k2 = rate(s + 0.5 * dt * k1)
        k3 = rate(s + 0.5 * dt * k2)
        k4 = rate(s + dt * k3)
        return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise ContractViolation(f"unknown integration method {method!r}")


@dataclass(frozen=True)
class ArmModel:
    """Planar three-link arm: lengths, base position, joint limits, speed bound."""

    link_lengths: Vector
    base_position: Vector
    q_min: Vector
    q_max: Vector
    qd_max: float

    def __post_init__(self):
        lengths = np.asarray(self.link_lengths, dtype=float)
        base = np.asarray(self.base_position, dtype=float)
        q_min = np.asarray(self.q_min, dtype=float)
        q_max = np.asarray(self.q_max, dtype=float)
        for name, value in (("link_lengths", lengths), ("q_min", q_min), ("q_max", q_max)):
            if value.shape != (3,):
                raise ContractViolation(f"{name} must have shape (3,)")
        if base.shape != (2,):
            raise ContractViolation("base_position must have shape (2,)")
        if np.any(lengths <= 0):
            raise ContractViolation("link lengths must be strictly positive")
        if not np.all(q_min < q_max):
            raise ContractViolation("q_min must be strictly below q_max componentwise")
        if self.qd_max <= 0:
            raise ContractViolation("qd_max must be positive")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "base_position", base)
        object.__setattr__(self, "q_min", q_min)
        object.__setattr__(self, "q_max", q_max)


def default_arm() -> ArmModel:
    """Arm used by the air-hockey task: reach 1.2 m, base outside the left edge."""
    return ArmModel(
        link_lengths=np.array([0.5, 0.4, 0.3]),
        base_position=np.array([-0.1, 0.5]),
        q_min=np.array([-2.9, -2.9, -2.9]),
        q_max=np.array([2.9, 2.9, 2.9]),
        qd_max=2.0,
    )


def forward_kinematics(arm: ArmModel, q: Vector) -> np.ndarray:
    """Positions of the joint frames and the end-effector, as a (4, 2) array.

    Row 0 is the base (joint 1), rows 1-2 the next joint positions, row 3
    the end-effector. Joint angles are unrestricted here; limits are a
    constraint, not a precondition.
    """
    l1, l2, l3 = arm.link_lengths
    t1 = float(q[0])
    t2 = t1 + float(q[1])
    t3 = t2 + float(q[2])
    x0, y0 = float(arm.base_position[0]), float(arm.base_position[1])
    x1 = x0 + l1 * math.cos(t1)
    y1 = y0 + l1 * math.sin(t1)
    x2 = x1 + l2 * math.cos(t2)
    y2 = y1 + l2 * math.sin(t2)
    x3 = x2 + l3 * math.cos(t3)
    y3 = y2 + l3 * math.sin(t3)
    return np.array([[x0, y0], [x1, y1], [x2, y2], [x3, y3]])


def link_jacobian(arm: ArmModel, q: Vector, link: int = 3) -> Matrix:
    """Jacobian of the end point of ``link`` (1-based) w.r.t. joint angles, (2, 3).

    Column k is the rotated lever arm contributed by joint k; columns past
    ``link`` are zero.
    """
    if link not in (1, 2, 3):
        raise ContractViolation("link must be 1, 2, or 3")
    lengths = arm.link_lengths
    t = [float(q[0]), float(q[0]) + float(q[1]), float(q[0]) + float(q[1]) + float(q[2])]
    J = np.zeros((2, 3))
    for k in range(link):
        jx = 0.0
        jy = 0.0
        for i in range(k, link):
            jx -= lengths[i] * math.sin(t[i])
            jy += lengths[i] * math.cos(t[i])
        J[0, k] = jx
        J[1, k] = jy
    return J


def ee_jacobian(arm: ArmModel, q: Vector) -> Matrix:
    """End-effector Jacobian J with d(ee)/dt = J @ qdot, shape (2, 3)."""
    return link_jacobian(arm, q, link=3)


def dls_inverse_kinematics(J: Matrix, v_ee: Vector, damping: float = 0.0) -> Vector:
    """Damped-least-squares joint velocities: ``J.T @ inv(J J.T + damping^2 I) @ v_ee``.

    With damping = 0 this is the minimum-norm exact solution and fails with
    SingularityError when J is rank deficient.
    """
    if damping < 0:
        raise ContractViolation("damping must be >= 0")
    J = np.asarray(J, dtype=float)
    v_ee = np.asarray(v_ee, dtype=float)
    k = J.shape[0]
    if v_ee.shape != (k,):
        raise ContractViolation(f"v_ee must have shape ({k},), got {v_ee.shape}")
    inner = J @ J.T + (damping * damping) * np.eye(k)
    try:
        w = np.linalg.solve(inner, v_ee)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(
            "J @ J.T is singular at zero damping; call with damping > 0"
        ) from exc
    return J.T @ w
