"""Inequality constraint sets g(s) <= 0: composition, differentiation, violation metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, NumericError

Vector = np.ndarray
Matrix = np.ndarray

# A point map returns a 2-D point and its (2, n) Jacobian at a given state.
PointMap = Callable[[Vector], tuple[Vector, Matrix]]


@dataclass(frozen=True)
class ConstraintSet:
    """k stacked differentiable constraints; safe states satisfy eval(s) <= 0 componentwise."""

    k: int
    eval: Callable[[Vector], Vector]
    jac: Callable[[Vector], Matrix]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != self.k:
            raise ContractViolation("labels must have one entry per constraint row")


@dataclass(frozen=True)
class ConstraintEvaluation:
    values: Vector
    jacobian: Matrix


def evaluate(constraints: ConstraintSet, s: Vector) -> ConstraintEvaluation:
    """Evaluate values and Jacobian at ``s``, rejecting non-finite output."""
    values = np.asarray(constraints.eval(s), dtype=float)
    jacobian = np.asarray(constraints.jac(s), dtype=float)
    if values.shape != (constraints.k,):
        raise ContractViolation(
            f"constraint eval returned shape {values.shape}, expected ({constraints.k},)"
        )
    bad_rows = ~(np.isfinite(values) & np.all(np.isfinite(jacobian), axis=1))
    if np.any(bad_rows):
        offenders = [constraints.labels[i] for i in np.flatnonzero(bad_rows)]
        raise NumericError(
            f"non-finite constraint output in rows: {', '.join(offenders)}",
            labels=offenders,
        )
    return ConstraintEvaluation(values=values, jacobian=jacobian)


def finite_difference_jacobian(g: Callable[[Vector], Vector], s: Vector, h: float = 1e-6) -> Matrix:
    """Central-difference Jacobian of ``g`` at ``s``: column i is (g(s+h e_i) - g(s-h e_i)) / 2h."""
    if h <= 0:
        raise ContractViolation("step h must be positive")
    s = np.asarray(s, dtype=float)
    n = s.size
    g0 = np.atleast_1d(np.asarray(g(s), dtype=float))
    J = np.zeros((g0.size, n))
    for i in range(n):
        sp = s.copy()
        sm = s.copy()
        sp[i] += h
        sm[i] -= h
        J[:, i] = (np.atleast_1d(g(sp)) - np.atleast_1d(g(sm))) / (2.0 * h)
    return J


def box_constraints(lo, hi, select: Sequence[int] | None = None, name: str = "s") -> ConstraintSet:
    """Two-sided bounds on selected state components.

    Each selected index i contributes the rows ``s_i - hi_i <= 0`` and
    ``lo_i - s_i <= 0`` (upper first). ``lo``/``hi`` span the full state.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape:
        raise ContractViolation("lo and hi must have the same shape")
    n = lo.size
    idx = list(range(n)) if select is None else [int(i) for i in select]
    if not idx:
        raise ContractViolation("selection must not be empty")
    if any(i < 0 or i >= n for i in idx):
        raise ContractViolation("selection index out of range")
    if not np.all(lo[idx] < hi[idx]):
        raise ContractViolation("lo must be strictly below hi on selected indices")

    k = 2 * len(idx)
    rows = np.zeros((k, n))
    for r, i in enumerate(idx):
        rows[2 * r, i] = 1.0
        rows[2 * r + 1, i] = -1.0

    def _eval(s: Vector) -> Vector:
        out = np.empty(k)
        for r, i in enumerate(idx):
            out[2 * r] = s[i] - hi[i]
            out[2 * r + 1] = lo[i] - s[i]
        return out

    labels = []
    for i in idx:
        labels.append(f"{name}{i + 1}_hi")
        labels.append(f"{name}{i + 1}_lo")
    return ConstraintSet(k=k, eval=_eval, jac=lambda s: rows.copy(), labels=tuple(labels))


def point_in_rectangle_constraints(
    point: PointMap,
    rect: tuple[float, float, float, float],
    margin: float = 0.0,
    name: str = "point",
) -> ConstraintSet:
    """Keep a mapped 2-D point inside ``rect = (x_lo, x_hi, y_lo, y_hi)`` shrunk by ``margin``.

    Four rows per point (x_hi, x_lo, y_hi, y_lo side order); Jacobians chain
    through the point map.
    """
    x_lo, x_hi, y_lo, y_hi = (float(v) for v in rect)
    if x_lo + margin >= x_hi - margin or y_lo + margin >= y_hi - margin:
        raise ContractViolation("rectangle degenerate after margin shrink")

    def _eval(s: Vector) -> Vector:
        p, _ = point(s)
        return np.array(
            [
                p[0] - (x_hi - margin),
                (x_lo + margin) - p[0],
                p[1] - (y_hi - margin),
                (y_lo + margin) - p[1],
            ]
        )

    def _jac(s: Vector) -> Matrix:
        _, Jp = point(s)
        return np.vstack([Jp[0], -Jp[0], Jp[1], -Jp[1]])

    labels = (f"{name}_x_hi", f"{name}_x_lo", f"{name}_y_hi", f"{name}_y_lo")
    return ConstraintSet(k=4, eval=_eval, jac=_jac, labels=labels)


def stack_constraints(sets: Sequence[ConstraintSet]) -> ConstraintSet:
    """Concatenate constraint sets in declaration order."""
    sets = list(sets)
    if not sets:
        raise ContractViolation("need at least one constraint set to stack")
    if len(sets) == 1:
        return sets[0]
    k = sum(c.k for c in sets)
    labels = tuple(label for c in sets for label in c.labels)

    def _eval(s: Vector) -> Vector:
        return np.concatenate([np.asarray(c.eval(s), dtype=float) for c in sets])

    def _jac(s: Vector) -> Matrix:
        return np.vstack([np.asarray(c.jac(s), dtype=float) for c in sets])

    return ConstraintSet(k=k, eval=_eval, jac=_jac, labels=labels)


def max_violation(values, weights=None) -> float:
    """Positive part of the largest (optionally weighted) constraint value; 0 if all safe."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != values.shape:
            raise ContractViolation("weights must match values in shape")
        values = weights * values
    return float(max(0.0, values.max()))
