#!/usr/bin/env python
# Forward kinematics, Jacobians, and damped-least-squares IK on the 3-link arm.
import numpy as np

from safeact.dynamics import (
    default_arm,
    dls_inverse_kinematics,
    ee_jacobian,
    forward_kinematics,
)

arm = default_arm()
q = np.array([-1.2, 2.4, -1.2])

points = forward_kinematics(arm, q)
print("joint chain (base -> ee):")
for name, p in zip(("base", "joint2", "joint3", "ee"), points):
    print(f"  {name:7s} ({p[0]:+.4f}, {p[1]:+.4f})")

J = ee_jacobian(arm, q)
print("\nend-effector jacobian:\n", np.round(J, 4))

# command 0.3 m/s toward the goal and check the realized velocity
v_cmd = np.array([0.3, 0.0])
qd = dls_inverse_kinematics(J, v_cmd, damping=1e-3)
print("\ncommanded ee velocity:", v_cmd)
print("joint velocities:     ", np.round(qd, 4))
print("realized ee velocity: ", np.round(J @ qd, 6))

# walk the arm 1 s to the right at 50 Hz and watch the chain move
dt = 0.02
for _ in range(50):
    J = ee_jacobian(arm, q)
    q = q + dt * dls_inverse_kinematics(J, v_cmd, damping=1e-3)
print("\nee after 1 s of 0.3 m/s tracking:", np.round(forward_kinematics(arm, q)[3], 4))
