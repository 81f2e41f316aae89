"""Safety filter: project nominal actions onto the tangent space of a constraint manifold.

Inequality constraints g(s) <= 0 are turned into the equality manifold

    c(s, mu) = g(s) + sigma(mu) = 0,

where sigma is an elementwise softplus of the slack coordinates mu, so
sigma > 0 everywhere and c = 0 implies strict safety. Stacking the control u
and the slack velocity mu_dot into one augmented velocity v = [u; mu_dot],
the manifold differential is

    c_dot = J_g f(s) + J_c v,    J_c = [J_g G(s) | diag(sigma'(mu))].

The filter decomposes v into a correction component that enforces
c_dot = -K c (drift and residual compensation) and a tangent component
P v_nom annihilated by J_c, so any nominal action is mapped to the nearest
motion that keeps the state on the manifold. The projector is weighted:
slack coordinates are cheap (weight >> 1), so far from the constraints the
nominal action passes through nearly unchanged while the slack absorbs the
normal component; at the boundary sigma' -> 0 blocks inward motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .constraints import ConstraintSet, evaluate
from .dynamics import ControlAffineSystem
from .errors import ContractViolation, NumericError, SingularityError

Vector = np.ndarray
Matrix = np.ndarray

# Slack coordinates are clamped to +-(_MU_CAP_SCALE / sharpness) so that
# sigma' stays strictly positive in float64.
_MU_CAP_SCALE = 50.0
# Softplus switches to its asymptote when the argument exceeds this.
_SOFTPLUS_CUTOFF = 30.0


@dataclass
class FilterConfig:
    """Gains and numerical knobs of the safety filter.

    Attributes:
        error_gain: feedback gain on the manifold residual (1/s); scalar or
            one value per constraint. The residual contracts as
            c_dot = -error_gain * c.
        slack_sharpness: softplus sharpness; larger means the slack map hugs
            max(0, mu) more tightly and the safe margin near the boundary
            shrinks.
        slack_weight: projection weight of slack coordinates relative to the
            controls (>= 1). Large values make the filter minimally invasive
            far from the constraint boundary.
        damping: pseudoinverse regularization; the softplus keeps the inner
            matrix nonsingular even at 0, so this is belt and braces.
        slack_floor: smallest slack value used when initializing on or past
            the boundary.
        violation_tolerance: per-trajectory violation level considered safe
            by reports (accounts for time discretization).
        slack_rate_limit: cap on the relative slack burn rate (1/s). The
            tangent component is scaled so no constraint loses slack faster
            than this fraction per second, which keeps a sampled-time step
            from spending more margin than it has. Only the inward (burning)
            direction is limited; np.inf disables the guard.
    """

    error_gain: float | np.ndarray = 10.0
    slack_sharpness: float = 3.0
    slack_weight: float = 100.0
    damping: float = 1e-6
    slack_floor: float = 1e-3
    violation_tolerance: float = 1e-3
    slack_rate_limit: float = 25.0

    def __post_init__(self):
        if np.any(np.asarray(self.error_gain) <= 0):
            raise ContractViolation("error_gain must be positive")
        if self.slack_sharpness <= 0:
            raise ContractViolation("slack_sharpness must be positive")
        if self.slack_weight < 1:
            raise ContractViolation("slack_weight must be >= 1")
        if self.damping < 0:
            raise ContractViolation("damping must be >= 0")
        if self.slack_floor <= 0:
            raise ContractViolation("slack_floor must be positive")
        if self.violation_tolerance < 0:
            raise ContractViolation("violation_tolerance must be >= 0")
        if self.slack_rate_limit <= 0:
            raise ContractViolation("slack_rate_limit must be positive")


@dataclass
class SlackState:
    """Slack coordinates mu, one per constraint row."""

    mu: Vector


@dataclass
class FilterDiagnostics:
    c_norm: float = 0.0
    projector_residual: float = 0.0
    correction_clipped: bool = False
    tangent_scale: float = 1.0
    rank_ok: bool = True


def slack_map(mu, sharpness: float) -> Vector:
    """Elementwise softplus ``log(1 + exp(sharpness * mu)) / sharpness``, always > 0."""
    if sharpness <= 0:
        raise ContractViolation("sharpness must be positive")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    z = sharpness * mu
    out = np.empty_like(mu)
    big = z > _SOFTPLUS_CUTOFF
    out[big] = mu[big] + np.exp(-z[big]) / sharpness
    out[~big] = np.log1p(np.exp(z[~big])) / sharpness
    return out


def slack_map_derivative(mu, sharpness: float) -> Vector:
    """Derivative of the slack map: logistic sigmoid of ``sharpness * mu``, in (0, 1)."""
    if sharpness <= 0:
        raise ContractViolation("sharpness must be positive")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return expit(sharpness * mu)


def inverse_slack_map(y, sharpness: float) -> Vector:
    """Inverse of the slack map for y > 0: ``log(expm1(sharpness * y)) / sharpness``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise ContractViolation("inverse slack map requires y > 0")
    z = sharpness * y
    out = np.empty_like(y)
    big = z > _SOFTPLUS_CUTOFF
    out[big] = y[big] - np.exp(-z[big]) / sharpness
    out[~big] = np.log(np.expm1(z[~big])) / sharpness
    return out


def initialize_slack(g_values, sharpness: float, slack_floor: float) -> SlackState:
    """Place the slack on the manifold: sigma(mu) = max(-g, slack_floor).

    Already-violated rows (g >= -slack_floor) get the floored slack, leaving
    a positive residual c = g + sigma that the error gain then contracts.
    """
    g_values = np.atleast_1d(np.asarray(g_values, dtype=float))
    target = np.maximum(-g_values, slack_floor)
    return SlackState(mu=inverse_slack_map(target, sharpness))


def augmented_jacobian(constraint_jac: Matrix, control_matrix: Matrix, mu, sharpness: float) -> Matrix:
    """Manifold differential ``J_c = [J_g @ G | diag(sigma'(mu))]``, shape (k, m + k)."""
    J_g = np.atleast_2d(np.asarray(constraint_jac, dtype=float))
    G = np.atleast_2d(np.asarray(control_matrix, dtype=float))
    k = J_g.shape[0]
    m = G.shape[1]
    if k == 0:
        return np.zeros((0, m))
    dsig = slack_map_derivative(mu, sharpness)
    if dsig.shape != (k,):
        raise ContractViolation("mu must have one entry per constraint row")
    out = np.zeros((k, m + k))
    out[:, :m] = J_g @ G
    out[:, m:] = np.diag(dsig)
    return out


def weighted_pseudoinverse(J: Matrix, weights, damping: float = 0.0) -> Matrix:
    """Weighted damped pseudoinverse ``W J.T inv(J W J.T + damping^2 I)``.

    ``weights`` is the diagonal of W (all positive). Closed form, so the
    result is deterministic with no factorization sign ambiguity.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    k, p = J.shape
    w = np.asarray(weights, dtype=float)
    if w.shape != (p,):
        raise ContractViolation(f"weights must have shape ({p},), got {w.shape}")
    if np.any(w <= 0):
        raise ContractViolation("weights must be strictly positive")
    if k == 0:
        return np.zeros((p, 0))
    JW = J * w[np.newaxis, :]
    inner = JW @ J.T + (damping * damping) * np.eye(k)
    try:
        # inner is symmetric, so solve(inner, JW).T == W J.T inv(inner)
        X = np.linalg.solve(inner, JW)
        # one step of iterative refinement: keeps the annihilation and
        # closed-loop identities tight even for ill-scaled weight ratios
        X += np.linalg.solve(inner, JW - inner @ X)
        return X.T
    except np.linalg.LinAlgError as exc:
        raise SingularityError(
            "J W J.T is singular at zero damping; use damping > 0"
        ) from exc


def tangent_projector(J_c: Matrix, weights, damping: float = 0.0) -> Matrix:
    """Oblique projector ``P = I - pinv_W(J_c) J_c`` onto the manifold tangent space.

    At zero damping J_c @ P vanishes, so projected motions keep c = 0 to
    first order.
    """
    J_c = np.atleast_2d(np.asarray(J_c, dtype=float))
    p = J_c.shape[1]
    return np.eye(p) - weighted_pseudoinverse(J_c, weights, damping) @ J_c


def _tangent_scale(corr: Vector, tan: Vector, lo: Vector, hi: Vector) -> float:
    """Largest alpha in [0, 1] with corr + alpha * tan inside [lo, hi] (1 if alpha=1 works)."""
    full = corr + tan
    if np.all(full >= lo) and np.all(full <= hi):
        return 1.0
    alpha = 1.0
    for i in range(corr.size):
        t = tan[i]
        if t > 1e-15:
            alpha = min(alpha, (hi[i] - corr[i]) / t)
        elif t < -1e-15:
            alpha = min(alpha, (lo[i] - corr[i]) / t)
    alpha = min(1.0, max(0.0, alpha))
    candidate = corr + alpha * tan
    if np.all(candidate >= lo) and np.all(candidate <= hi):
        return alpha
    return 0.0


def _augmented_bounds(
    u_min: Vector,
    u_max: Vector,
    g_values: Vector,
    sigma: Vector,
    dsig: Vector,
    rate_limit: float,
) -> tuple[Vector, Vector]:
    """Box for the augmented velocity: control limits plus the slack burn budget.

    Slack coordinates may grow freely but burn at most ``rate_limit`` times
    the remaining margin per second, so a sampled-time step cannot spend more
    margin than it has. The margin is the smaller of the slack value and the
    true distance to the boundary (they coincide on the manifold, but the
    slack runs ahead of -g while the residual c is nonzero); rows at or past
    the boundary get no burn budget at all.
    """
    m = u_min.size
    k = sigma.size
    lo = np.empty(m + k)
    hi = np.empty(m + k)
    lo[:m] = u_min
    hi[:m] = u_max
    if np.isfinite(rate_limit):
        margin = np.maximum(np.minimum(sigma, -g_values), 0.0)
        lo[m:] = -rate_limit * margin / dsig
    else:
        lo[m:] = -np.inf
    hi[m:] = np.inf
    return lo, hi


class SafetyFilter:
    """Stateful wrapper mapping nominal controls to constraint-compatible ones.

    Holds the slack coordinates paired with the system state across an
    episode; call :meth:`reset` at episode boundaries, then alternate
    :meth:`filter_action` and :meth:`advance_slack` once per control step.
    Single writer per instance; independent instances may run concurrently.
    """

    def __init__(
        self,
        system: ControlAffineSystem,
        constraints: ConstraintSet,
        config: FilterConfig | None = None,
    ):
        self.system = system
        self.constraints = constraints
        self.config = config if config is not None else FilterConfig()
        self.slack: SlackState | None = None
        self.last_diagnostics: FilterDiagnostics | None = None

    def reset(self, s: Vector) -> None:
        """Re-anchor the slack on the manifold at state ``s`` and clear diagnostics."""
        g = evaluate(self.constraints, s)
        self.slack = initialize_slack(
            g.values, self.config.slack_sharpness, self.config.slack_floor
        )
        self.last_diagnostics = None

    def manifold_residual(self, s: Vector) -> Vector:
        """Current residual c = g(s) + sigma(mu)."""
        if self.slack is None:
            raise ContractViolation("filter not initialized; call reset() first")
        g = evaluate(self.constraints, s)
        return g.values + slack_map(self.slack.mu, self.config.slack_sharpness)

    def filter_action(self, s: Vector, u_nom: Vector) -> tuple[Vector, Vector, FilterDiagnostics]:
        """Map ``u_nom`` to a safe control; returns (u_safe, mu_dot, diagnostics).

        The correction component enforces c_dot = -error_gain * c exactly
        (at zero damping); the tangent component carries as much of the
        nominal action as the control bounds allow. Only the tangent share
        is scaled to respect bounds, so the contraction of c survives
        saturation; clipping the correction itself is a flagged last resort.
        """
        if self.slack is None:
            raise ContractViolation("filter not initialized; call reset() first")
        u_nom = np.asarray(u_nom, dtype=float)
        m = self.system.m
        if u_nom.shape != (m,):
            raise ContractViolation(f"u_nom must have shape ({m},), got {u_nom.shape}")
        if not np.all(np.isfinite(u_nom)):
            raise NumericError("u_nom contains non-finite entries")
        cfg = self.config
        k = self.constraints.k
        u_min, u_max = self.system.u_min, self.system.u_max

        if k == 0:
            u_safe = np.clip(u_nom, u_min, u_max)
            diag = FilterDiagnostics(correction_clipped=bool(np.any(u_safe != u_nom)))
            self.last_diagnostics = diag
            return u_safe, np.zeros(0), diag

        g = evaluate(self.constraints, s)
        mu = self.slack.mu
        sigma = slack_map(mu, cfg.slack_sharpness)
        dsig = slack_map_derivative(mu, cfg.slack_sharpness)
        c = g.values + sigma

        f = self.system.drift(s)
        G = self.system.control_matrix(s)
        J_c = np.zeros((k, m + k))
        J_c[:, :m] = g.jacobian @ G
        J_c[:, m:] = np.diag(dsig)

        w = np.empty(m + k)
        w[:m] = 1.0
        w[m:] = cfg.slack_weight

        rank_ok = True
        try:
            J_pinv = weighted_pseudoinverse(J_c, w, cfg.damping)
        except SingularityError:
            # cannot happen with softplus slack unless inputs are degenerate
            rank_ok = False
            J_pinv = weighted_pseudoinverse(J_c, w, max(cfg.damping, 1e-8))
        P = np.eye(m + k) - J_pinv @ J_c

        drift_term = g.jacobian @ f
        v_corr = -(J_pinv @ (drift_term + np.asarray(cfg.error_gain) * c))
        v_tan = P[:, :m] @ u_nom  # == P @ [u_nom; 0]

        lo, hi = _augmented_bounds(u_min, u_max, g.values, sigma, dsig, cfg.slack_rate_limit)
        alpha = _tangent_scale(v_corr, v_tan, lo, hi)
        v = v_corr + alpha * v_tan
        u_safe = np.clip(v[:m], u_min, u_max)
        clipped = bool(np.any(u_safe != v[:m]))
        mu_dot = v[m:]

        diag = FilterDiagnostics(
            c_norm=float(np.linalg.norm(c)),
            projector_residual=float(np.max(np.abs(J_c @ P))),
            correction_clipped=clipped,
            tangent_scale=alpha,
            rank_ok=rank_ok,
        )
        if not (np.all(np.isfinite(u_safe)) and np.all(np.isfinite(mu_dot))):
            raise NumericError(
                "safety filter produced non-finite output",
                labels=self.constraints.labels,
                diagnostics=diag,
            )
        self.last_diagnostics = diag
        return u_safe, mu_dot, diag

    def advance_slack(self, mu_dot: Vector, dt: float) -> SlackState:
        """Euler-update the slack coordinates; the error gain absorbs the drift."""
        if dt <= 0:
            raise ContractViolation("dt must be positive")
        if self.slack is None:
            raise ContractViolation("filter not initialized; call reset() first")
        mu_dot = np.asarray(mu_dot, dtype=float)
        cap = _MU_CAP_SCALE / self.config.slack_sharpness
        self.slack = SlackState(mu=np.clip(self.slack.mu + dt * mu_dot, -cap, cap))
        return self.slack
