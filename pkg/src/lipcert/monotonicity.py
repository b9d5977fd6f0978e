"""Partial-monotonicity certification of a scalar network over a box.

g is increasing in feature r when d g / d x_r stays positive, so monotonicity
reduces to certifying positivity of a directed partial derivative.  Each
constraint carries its own Lipschitz bound; a joint run evaluates every
constraint at each point and certifies from one shared point set, taking the
most conservative radius:

  * all constraints clear their margins: radius = min over c of value_c / L_c,
  * some constraint is strictly negative: radius = largest |value| / L among
    the negative violated ones (the sign is locked on that ball),
  * otherwise the point earns no ball and is recorded as a counter-example.

With a single constraint this reduces exactly to the plain positivity run.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .lipschitz import LipschitzEstimate, lipschitz_bounds
from .lipvor import (
    CertificationResult,
    CertificationState,
    CertificationStatus,
    PositivityProblem,
    _covering_run,
    _validate_initial_points,
    certified_fraction,
    certify,
)
from .geometry import BoxDomain
from .mlp import Network, jacobian, partial_derivative

# A linear feature has bound zero; clamp so radii stay finite.
TAU_LIPSCHITZ = 1e-12


class Direction(Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.INCREASING else -1.0


@dataclass(frozen=True)
class MonotonicityConstraint:
    feature: int
    direction: Direction
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.feature < 0:
            raise IndexOutOfRange("feature index must be nonnegative")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be > 0")


class MonotonicityStatus(str, Enum):
    CERTIFIED_MONOTONIC = "CertifiedMonotonic"
    VIOLATIONS_FOUND = "ViolationsFound"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class MonotonicityReport:
    overall_status: MonotonicityStatus
    per_feature: dict[int, CertificationResult]
    lipschitz_estimates: dict[int, LipschitzEstimate]
    iterations_used: int
    rng_seed: int

    def counterexamples(self) -> list[tuple[int, np.ndarray, float]]:
        out = []
        for feature, result in self.per_feature.items():
            for point, value in result.counterexamples:
                out.append((feature, point, value))
        return out

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": "monotonicity",
            "overall_status": self.overall_status.value,
            "iterations_used": self.iterations_used,
            "rng_seed": self.rng_seed,
            "lipschitz_estimates": {
                str(f): est.to_json_dict() for f, est in self.lipschitz_estimates.items()
            },
            "per_feature": {
                str(f): res.to_json_dict() for f, res in self.per_feature.items()
            },
        }


def _directed_evaluator(net: Network, constraint: MonotonicityConstraint):
    sign = constraint.direction.sign
    feature = constraint.feature

    def evaluate(x: np.ndarray) -> float:
        return sign * partial_derivative(net, x, feature)

    return evaluate


def monotone_positivity_problem(
    net: Network, constraint: MonotonicityConstraint, domain: BoxDomain
) -> PositivityProblem:
    """Positivity problem whose evaluator is the directed partial derivative."""
    if constraint.feature >= net.input_dim:
        raise IndexOutOfRange(
            f"feature {constraint.feature} outside 0..{net.input_dim - 1}"
        )
    if domain.dim != net.input_dim:
        raise DimensionMismatch("domain dimension does not match the network")
    estimate = lipschitz_bounds(net, [constraint.feature])[0]
    lip = max(estimate.bound, TAU_LIPSCHITZ)
    return PositivityProblem(
        _directed_evaluator(net, constraint), lip, constraint.epsilon, domain
    )


def _validate_constraints(net: Network, constraints) -> list[MonotonicityConstraint]:
    constraints = list(constraints)
    if not constraints:
        raise ValueError("at least one constraint is required")
    seen = set()
    for c in constraints:
        if c.feature >= net.input_dim:
            raise IndexOutOfRange(f"feature {c.feature} outside 0..{net.input_dim - 1}")
        if c.feature in seen:
            raise ValueError(f"feature {c.feature} appears in two constraints")
        seen.add(c.feature)
    return constraints


def certify_monotonic(
    net: Network,
    constraints,
    domain: BoxDomain,
    budget: int,
    exploration_p: float = 0.1,
    seed: int = 0,
    initial_points=None,
    fraction_samples: int = 100_000,
) -> MonotonicityReport:
    """Joint certification of all constraints from one shared point set.

    ``initial_points`` defaults to 10 seeded uniform points.  The report
    carries one full certification result per feature; the results share
    points, radii, cells, and the joint violation flags, while values and
    the counter-example lists are per feature.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    constraints = _validate_constraints(net, constraints)
    if domain.dim != net.input_dim:
        raise DimensionMismatch("domain dimension does not match the network")
    rng = np.random.default_rng(seed)
    if initial_points is None:
        initial_points = domain.uniform(rng, 10)
    points = _validate_initial_points(initial_points, domain)

    estimates = {
        c.feature: est
        for c, est in zip(constraints, lipschitz_bounds(net, [c.feature for c in constraints]))
    }
    lips = np.array(
        [max(estimates[c.feature].bound, TAU_LIPSCHITZ) for c in constraints]
    )
    epsilons = np.array([c.epsilon for c in constraints])
    signs = np.array([c.direction.sign for c in constraints])
    features = [c.feature for c in constraints]

    def evaluate(x: np.ndarray) -> tuple[float, bool, np.ndarray]:
        jac = jacobian(net, x)
        vals = signs * jac[features]
        ok = vals >= epsilons
        if ok.all():
            radius = float((vals / lips).min())
            return radius, False, vals
        negative = vals < 0.0
        if negative.any():
            radius = float((np.abs(vals[negative]) / lips[negative]).max())
        else:
            radius = 0.0
        return radius, True, vals

    run = _covering_run(domain, evaluate, points, budget, exploration_p, rng)

    value_matrix = np.asarray(run.records, dtype=float)
    per_feature: dict[int, CertificationResult] = {}
    joint_state_flags = run.flags
    shared_fraction: float | None = None
    for ci, c in enumerate(constraints):
        vals = value_matrix[:, ci]
        flags_c = vals < c.epsilon
        state = CertificationState(run.points, vals, run.radii, run.cells, joint_state_flags)
        if shared_fraction is None:
            shared_fraction = certified_fraction(state, domain, fraction_samples, seed)
        cex = [(run.points[i].copy(), float(vals[i])) for i in np.where(flags_c)[0]]
        if run.certified:
            status = CertificationStatus.CERTIFIED_POSITIVE
        elif cex:
            status = CertificationStatus.COUNTEREXAMPLES_FOUND
        else:
            status = CertificationStatus.BUDGET_EXHAUSTED
        per_feature[c.feature] = CertificationResult(
            status, cex, run.iterations_used, state, shared_fraction, seed
        )

    if run.certified:
        overall = MonotonicityStatus.CERTIFIED_MONOTONIC
    elif any(r.counterexamples for r in per_feature.values()):
        overall = MonotonicityStatus.VIOLATIONS_FOUND
    else:
        overall = MonotonicityStatus.INCONCLUSIVE
    return MonotonicityReport(overall, per_feature, estimates, run.iterations_used, seed)


def certify_features_independently(
    net: Network,
    constraints,
    domain: BoxDomain,
    budget: int,
    exploration_p: float = 0.1,
    seed: int = 0,
    initial_points=None,
    fraction_samples: int = 100_000,
) -> MonotonicityReport:
    """One plain positivity run per constraint; offered for comparison."""
    constraints = _validate_constraints(net, constraints)
    rng = np.random.default_rng(seed)
    if initial_points is None:
        initial_points = domain.uniform(rng, 10)
    per_feature: dict[int, CertificationResult] = {}
    estimates: dict[int, LipschitzEstimate] = {}
    iterations = 0
    for c in constraints:
        problem = monotone_positivity_problem(net, c, domain)
        estimates[c.feature] = lipschitz_bounds(net, [c.feature])[0]
        result = certify(
            problem,
            initial_points,
            budget,
            exploration_p,
            seed,
            fraction_samples=fraction_samples,
        )
        per_feature[c.feature] = result
        iterations += result.iterations_used
    statuses = {r.status for r in per_feature.values()}
    if statuses == {CertificationStatus.CERTIFIED_POSITIVE}:
        overall = MonotonicityStatus.CERTIFIED_MONOTONIC
    elif any(r.counterexamples for r in per_feature.values()):
        overall = MonotonicityStatus.VIOLATIONS_FOUND
    else:
        overall = MonotonicityStatus.INCONCLUSIVE
    return MonotonicityReport(overall, per_feature, estimates, iterations, seed)
