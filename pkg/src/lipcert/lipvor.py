"""Positivity certification of a Lipschitz function over a box.

If f has Lipschitz constant L and f(p) = v > 0, then f stays positive on the
open ball of radius v / L around p.  A finite point set therefore certifies
f > 0 on the whole box as soon as every clipped Voronoi cell lies strictly
inside its generator's ball, which reduces to one scalar test per cell:
furthest-vertex distance < radius.

The certifier grows the point set one vertex per iteration.  Uncovered cells
compete on their certified radius (largest first when exploiting, smallest
first when exploring); radius ties prefer the furthest vertex covered by the
fewest other balls, then the lexicographically smallest generator.  Points
whose value falls below the requested margin epsilon are kept as
counter-examples; a strictly negative value still contributes a ball of
radius |v| / L on which f is certified negative, which steers the search away
from regions already known to violate positivity.

The iteration budget has a closed form: a run that has not terminated keeps
its points pairwise further apart than epsilon / L, so a volume argument
bounds the number of points the box can hold.
"""
from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import (
    AllCovered,
    CertifyError,
    DimensionMismatch,
    DimensionTooHigh,
    DuplicatePoint,
    EvaluationFailure,
    NonPositiveLipschitz,
    PointOutsideDomain,
    ViolationPresent,
)
from .geometry import (
    MAX_ENUM_DIM,
    TAU_DUP,
    BoxDomain,
    VoronoiCell,
    compute_diagram,
    covered_count,
    update_diagram,
)


class CertificationStatus(str, Enum):
    CERTIFIED_POSITIVE = "CertifiedPositive"
    COUNTEREXAMPLES_FOUND = "CounterexamplesFound"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class PositivityProblem:
    """A black-box evaluator with a known Lipschitz constant over a box.

    ``epsilon`` is the positivity margin: evaluations below it are recorded
    as counter-examples rather than certifying points.
    """

    evaluator: Callable[[np.ndarray], float]
    lipschitz_constant: float
    epsilon: float
    domain: BoxDomain

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lipschitz_constant) and self.lipschitz_constant > 0.0):
            raise NonPositiveLipschitz("lipschitz_constant must be finite and > 0")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValueError("epsilon must be finite and > 0")


@dataclass
class CertificationState:
    """Evaluated points with their values, ball radii, cells, and flags."""

    points: np.ndarray
    values: np.ndarray
    radii: np.ndarray
    cells: list[VoronoiCell]
    violation_flags: np.ndarray

    def __post_init__(self) -> None:
        k = len(self.points)
        if not (len(self.values) == len(self.radii) == len(self.cells) == len(self.violation_flags) == k):
            raise DimensionMismatch("state arrays must share one length")


@dataclass
class CertificationResult:
    status: CertificationStatus
    counterexamples: list[tuple[np.ndarray, float]]
    iterations_used: int
    points_final: CertificationState
    certified_fraction: float
    rng_seed: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": "positivity",
            "status": self.status.value,
            "iterations_used": self.iterations_used,
            "points_evaluated": len(self.points_final.points),
            "certified_fraction": self.certified_fraction,
            "rng_seed": self.rng_seed,
            "counterexamples": [
                {"point": [float(c) for c in p], "value": float(v)}
                for p, v in self.counterexamples
            ],
        }


def positivity_radius(value: float, lipschitz_constant: float) -> float:
    """Radius of the ball on which the sign of ``value`` cannot flip."""
    if not (math.isfinite(lipschitz_constant) and lipschitz_constant > 0.0):
        raise NonPositiveLipschitz("lipschitz_constant must be finite and > 0")
    return abs(float(value)) / lipschitz_constant


def _certified_radius(value: float, lipschitz_constant: float, epsilon: float) -> float:
    # Margin-respecting rule: comfortable positives and strict negatives earn
    # a ball, values inside [0, epsilon) earn nothing.
    if value >= epsilon or value < 0.0:
        return abs(value) / lipschitz_constant
    return 0.0


def build_state(problem: PositivityProblem, points) -> CertificationState:
    """Evaluate ``points`` under ``problem`` and assemble the full state."""
    points = np.asarray(points, dtype=float)
    values = np.array([_call_evaluator(problem.evaluator, p) for p in points])
    radii = np.array(
        [_certified_radius(v, problem.lipschitz_constant, problem.epsilon) for v in values]
    )
    flags = values < problem.epsilon
    cells = compute_diagram(points, problem.domain)
    return CertificationState(points, values, radii, cells, flags)


def _call_evaluator(evaluator: Callable[[np.ndarray], float], point: np.ndarray) -> float:
    try:
        value = float(evaluator(point))
    except CertifyError:
        raise
    except Exception as exc:
        raise EvaluationFailure(f"evaluator failed at {point.tolist()}") from exc
    if not math.isfinite(value):
        raise EvaluationFailure(f"evaluator returned non-finite value at {point.tolist()}")
    return value


def global_condition(state: CertificationState) -> bool:
    """True when every cell sits strictly inside its generator's ball.

    Raises :class:`ViolationPresent` while counter-examples exist, because
    coverage by mixed-sign balls certifies nothing.
    """
    if bool(np.asarray(state.violation_flags).any()):
        raise ViolationPresent("cannot certify while counter-examples are present")
    fdists = np.array([c.furthest_distance for c in state.cells])
    return bool((fdists < np.asarray(state.radii)).all())


def _iter_candidates(
    points: np.ndarray,
    radii: np.ndarray,
    cells: list[VoronoiCell],
    fdists: np.ndarray,
    explore: bool,
) -> Iterator[int]:
    """Yield uncovered cell indices in selection order.

    Primary key is the certified radius (largest first when exploiting,
    smallest first when exploring).  Exact radius ties are broken by the
    covered-count of the furthest vertex, then by lexicographic order of the
    generator, so selection is deterministic.  Counts are only computed for
    tied groups.
    """
    uncovered = np.where(fdists >= radii)[0]
    if uncovered.size == 0:
        return
    keys = radii[uncovered]
    order = np.argsort(keys, kind="stable")
    if not explore:
        order = order[::-1]
    ordered = uncovered[order]
    i = 0
    while i < len(ordered):
        group = [ordered[i]]
        while i + len(group) < len(ordered) and radii[ordered[i + len(group)]] == radii[group[0]]:
            group.append(ordered[i + len(group)])
        if len(group) == 1:
            yield int(group[0])
        else:
            ranked = sorted(
                group,
                key=lambda j: (
                    covered_count(cells[j].furthest_vertex, points, radii, exclude=j),
                    tuple(points[j]),
                ),
            )
            yield from (int(j) for j in ranked)
        i += len(group)


def select_next_vertex(
    state: CertificationState, exploration_p: float, rng: np.random.Generator
) -> np.ndarray:
    """Furthest vertex of the cell chosen by the exploit/explore rule."""
    if not 0.0 <= exploration_p <= 1.0:
        raise ValueError("exploration_p must lie in [0, 1]")
    fdists = np.array([c.furthest_distance for c in state.cells])
    explore = bool(rng.random() < exploration_p)
    for j in _iter_candidates(
        np.asarray(state.points, dtype=float),
        np.asarray(state.radii, dtype=float),
        state.cells,
        fdists,
        explore,
    ):
        return state.cells[j].furthest_vertex.copy()
    raise AllCovered("every cell is already covered by its ball")


def _validate_initial_points(points, domain: BoxDomain) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DimensionMismatch("initial points must be a nonempty 2-d array")
    if points.shape[1] != domain.dim:
        raise DimensionMismatch("initial point dimension does not match the domain")
    if domain.dim > MAX_ENUM_DIM:
        raise DimensionTooHigh(f"certification supports dimension <= {MAX_ENUM_DIM}")
    if not np.isfinite(points).all():
        raise ValueError("initial points must be finite")
    inside = domain.contains(points)
    if not np.asarray(inside).all():
        raise PointOutsideDomain("all initial points must lie inside the domain")
    if len(points) >= 2:
        deltas = points[:, None, :] - points[None, :, :]
        pair = np.linalg.norm(deltas, axis=2)
        pair[np.diag_indices(len(points))] = np.inf
        if pair.min() <= TAU_DUP:
            raise DuplicatePoint("initial points must be pairwise distinct")
    return points


@dataclass
class _RunOutcome:
    points: np.ndarray
    radii: np.ndarray
    flags: np.ndarray
    records: list[Any]
    cells: list[VoronoiCell]
    iterations_used: int
    certified: bool


def _covering_run(
    domain: BoxDomain,
    evaluate: Callable[[np.ndarray], tuple[float, bool, Any]],
    initial_points: np.ndarray,
    max_iter: int,
    exploration_p: float,
    rng: np.random.Generator,
    trace: Callable[[int, np.ndarray, float, bool, bool, Any], None] | None = None,
) -> _RunOutcome:
    """Shared expansion loop over an abstract point evaluation.

    ``evaluate`` maps a point to (radius, violated, record).  One vertex is
    added per iteration; the loop stops on full coverage, budget exhaustion,
    or when every remaining candidate duplicates an existing point.
    """
    points = initial_points
    evals = [evaluate(p) for p in points]
    radii = np.array([e[0] for e in evals], dtype=float)
    flags = np.array([e[1] for e in evals], dtype=bool)
    records = [e[2] for e in evals]
    cells = compute_diagram(points, domain)
    fdists = np.array([c.furthest_distance for c in cells])
    if trace is not None:
        for i in range(len(points)):
            trace(0, points[i], radii[i], flags[i], bool(fdists[i] < radii[i]), records[i])

    iterations = 0
    certified = False
    while True:
        if not flags.any() and (fdists < radii).all():
            certified = True
            break
        if iterations >= max_iter:
            break
        explore = bool(rng.random() < exploration_p)
        vertex: np.ndarray | None = None
        for j in _iter_candidates(points, radii, cells, fdists, explore):
            cand = cells[j].furthest_vertex
            if np.linalg.norm(points - cand, axis=1).min() > TAU_DUP:
                vertex = cand
                break
        if vertex is None:
            break
        radius, violated, record = evaluate(vertex)
        points = np.vstack([points, vertex])
        radii = np.append(radii, radius)
        flags = np.append(flags, violated)
        records.append(record)
        cells = update_diagram(cells, points, domain)
        fdists = np.array([c.furthest_distance for c in cells])
        iterations += 1
        if trace is not None:
            trace(iterations, vertex, radius, violated, bool(fdists[-1] < radii[-1]), record)

    return _RunOutcome(points, radii, flags, records, cells, iterations, certified)


def certify(
    problem: PositivityProblem,
    initial_points,
    max_iter: int,
    exploration_p: float = 0.1,
    seed: int = 0,
    trace_path=None,
    fraction_samples: int = 100_000,
) -> CertificationResult:
    """Run the covering loop on ``problem`` from ``initial_points``.

    ``max_iter`` bounds the number of added points.  With probability
    ``exploration_p`` an iteration expands the least promising cell instead
    of the most promising one.  When ``trace_path`` is given, one JSON line
    per evaluation is appended there (initial points carry iteration 0).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if not 0.0 <= exploration_p <= 1.0:
        raise ValueError("exploration_p must lie in [0, 1]")
    points = _validate_initial_points(initial_points, problem.domain)
    rng = np.random.default_rng(seed)

    lip = problem.lipschitz_constant
    eps = problem.epsilon

    def evaluate(x: np.ndarray) -> tuple[float, bool, float]:
        value = _call_evaluator(problem.evaluator, x)
        return _certified_radius(value, lip, eps), value < eps, value

    trace_file = open(trace_path, "w", encoding="utf-8") if trace_path is not None else None
    try:
        trace = None
        if trace_file is not None:

            def trace(iteration, point, radius, violated, covered, record):
                row = {
                    "iteration": int(iteration),
                    "point": [float(c) for c in point],
                    "value": float(record),
                    "radius": float(radius),
                    "violated": bool(violated),
                    "covered": bool(covered),
                }
                trace_file.write(json.dumps(row, sort_keys=True) + "\n")

        run = _covering_run(
            problem.domain, evaluate, points, max_iter, exploration_p, rng, trace
        )
    finally:
        if trace_file is not None:
            trace_file.close()

    state = CertificationState(
        run.points, np.array(run.records, dtype=float), run.radii, run.cells, run.flags
    )
    counterexamples = [
        (run.points[i].copy(), float(run.records[i])) for i in np.where(run.flags)[0]
    ]
    if run.certified:
        status = CertificationStatus.CERTIFIED_POSITIVE
    elif counterexamples:
        status = CertificationStatus.COUNTEREXAMPLES_FOUND
    else:
        status = CertificationStatus.BUDGET_EXHAUSTED
    fraction = certified_fraction(state, problem.domain, fraction_samples, seed)
    return CertificationResult(
        status, counterexamples, run.iterations_used, state, fraction, seed
    )


def iteration_bound(domain: BoxDomain, epsilon: float, lipschitz_constant: float) -> int:
    """Volume-packing bound on the iterations any certification run can take.

    A run that is still going keeps its evaluated points pairwise further
    apart than epsilon / L, so the epsilon/(2L)-balls around them are
    disjoint inside the box inflated by that radius.  Dividing volumes and
    simplifying with a = longest box side gives
    ceil((2 (aL + eps) / (sqrt(pi) eps))^n * Gamma(n/2 + 1)).
    """
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ValueError("epsilon must be finite and > 0")
    if not (math.isfinite(lipschitz_constant) and lipschitz_constant > 0.0):
        raise NonPositiveLipschitz("lipschitz_constant must be finite and > 0")
    n = domain.dim
    a = domain.max_side
    base = 2.0 * (a * lipschitz_constant + epsilon) / (math.sqrt(math.pi) * epsilon)
    return int(math.ceil(base**n * math.gamma(n / 2.0 + 1.0)))


def certified_fraction(
    state: CertificationState, domain: BoxDomain, n_samples: int, seed: int
) -> float:
    """Monte Carlo volume fraction covered by the non-violating balls."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    flags = np.asarray(state.violation_flags, dtype=bool)
    centers = np.asarray(state.points, dtype=float)[~flags]
    radii = np.asarray(state.radii, dtype=float)[~flags]
    keep = radii > 0.0
    centers, radii = centers[keep], radii[keep]
    if len(centers) == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = n_samples
    # keep the pairwise distance block under ~2e7 entries
    chunk_cap = max(256, min(65_536, 20_000_000 // max(1, len(centers))))
    r2 = radii**2
    while remaining > 0:
        chunk = min(remaining, chunk_cap)
        samples = domain.uniform(rng, chunk)
        d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        hits += int((d2 <= r2[None, :]).any(axis=1).sum())
        remaining -= chunk
    return hits / n_samples
