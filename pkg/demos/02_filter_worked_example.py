#!/usr/bin/env python
# The hand-checkable filter case: one half-plane constraint g(s) = s_0 <= 0.
#
# At s_0 = -ln 2 with unit sharpness the slack sits at mu = 0, so the
# manifold residual c = g + sigma(mu) is exactly zero and every number
# below can be verified by hand.
import math

import numpy as np

from safeact.constraints import ConstraintSet
from safeact.dynamics import make_velocity_integrator
from safeact.safety import FilterConfig, SafetyFilter

system = make_velocity_integrator(2, 100.0)
constraint = ConstraintSet(
    k=1,
    eval=lambda s: np.array([s[0]]),
    jac=lambda s: np.array([[1.0, 0.0]]),
    labels=("halfplane",),
)
config = FilterConfig(error_gain=1.0, slack_sharpness=1.0, slack_weight=1.0, damping=0.0)
filt = SafetyFilter(system, constraint, config)

s = np.array([-math.log(2.0), 0.0])
filt.reset(s)
print("state:", s, " slack mu:", filt.slack.mu, " residual c:", filt.manifold_residual(s))

# a nominal push straight at the constraint is split: 0.2 passes through
# as motion, the rest is absorbed by the slack coordinate
u_safe, mu_dot, diag = filt.filter_action(s, np.array([1.0, 0.0]))
print("\nnominal (1, 0)    -> safe", u_safe, " mu_dot", mu_dot)
print("  c_dot check: 1*%.3f + 0.5*%.3f = %.1e" % (u_safe[0], mu_dot[0], u_safe[0] + 0.5 * mu_dot[0]))

# motion parallel to the constraint is untouched
u_safe, mu_dot, _ = filt.filter_action(s, np.array([0.0, 1.0]))
print("nominal (0, 1)    -> safe", u_safe, " mu_dot", mu_dot)

# with a residual (state pushed 0.05 past the manifold anchor), the
# correction term drives c back at rate error_gain
s_off = s + np.array([0.05, 0.0])
u_safe, mu_dot, _ = filt.filter_action(s_off, np.zeros(2))
c = filt.manifold_residual(s_off)
print("\nresidual c =", np.round(c, 4), "-> correction u =", np.round(u_safe, 4), " mu_dot =", np.round(mu_dot, 4))
print("  c_dot = ", np.round(u_safe[0] + 0.5 * mu_dot[0], 6), " (= -error_gain * c)")
