"""End-to-end studies: heat-equation regression and a tabular scoring task.

The heat study fits a network to noisy samples of a closed-form solution of
u_t = k u_xx on a rod of length L with u(x, 0) = 0 and u(0, t) = u(L, t) = t.
Writing w(x) = x (x - L) / (2k), separation of variables gives

    u(x, t) = t + w(x) + sum over odd n of
              (4 L^2 / (k n^3 pi^3)) sin(n pi x / L) exp(-k (n pi / L)^2 t),

which is increasing in t, so a model fit to it should certify as monotone in
time.  The tabular study scores rows generated by a known monotone rule, so
all four features should certify as increasing.

Demos write a manifest capturing every parameter needed to reproduce the run
bit-for-bit, alongside the report JSON, CSV logs, the model, and figures.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConstantColumn, MalformedCSV, NonNumeric, OutOfDomain
from .geometry import BoxDomain, grid_points
from .lipvor import CertificationState
from .mlp import (
    ActivationKind,
    Network,
    forward_batch,
    init_network,
    partials_batch,
    save_network,
)
from .monotonicity import Direction, MonotonicityConstraint, MonotonicityReport
from .training import (
    Dataset,
    TrainingConfig,
    TrainingReport,
    certify_train_loop,
    mean_absolute_error,
    split_indices,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HeatScenario:
    """Rod geometry, sampling plan, and noise for the heat study."""

    rod_length: float = 1.0
    diffusivity: float = 1.0
    n_samples: int = 30
    noise_sigma: float = 0.02
    seed: int = 0
    series_terms: int = 199

    def __post_init__(self) -> None:
        if self.rod_length <= 0 or self.diffusivity <= 0:
            raise ValueError("rod_length and diffusivity must be positive")
        if self.n_samples < 5:
            raise ValueError("need at least five samples to split")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.series_terms < 1:
            raise ValueError("series_terms must be at least 1")

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain(np.array([0.0, 0.0]), np.array([self.rod_length, 1.0]))


def heat_solution(x, t, scenario: HeatScenario = HeatScenario()):
    """Closed-form rod temperature; broadcasts over array inputs."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    length, k = scenario.rod_length, scenario.diffusivity
    if (x < -1e-12).any() or (x > length + 1e-12).any():
        raise OutOfDomain("x must lie in [0, rod_length]")
    if (t < -1e-12).any():
        raise OutOfDomain("t must be nonnegative")
    x, t = np.broadcast_arrays(x, t)
    modes = np.arange(1, scenario.series_terms + 1, 2, dtype=float)
    coef = 4.0 * length**2 / (k * modes**3 * np.pi**3)
    angles = np.multiply.outer(x, modes * np.pi / length)
    decay = np.exp(np.multiply.outer(-t, k * (modes * np.pi / length) ** 2))
    series = (coef * np.sin(angles) * decay).sum(axis=-1)
    value = t + x * (x - length) / (2.0 * k) + series
    return float(value) if value.ndim == 0 else value


def generate_heat_dataset(scenario: HeatScenario) -> Dataset:
    """Noisy samples of the rod temperature, split 80/20 then 80/20."""
    rng = np.random.default_rng(scenario.seed)
    xs = rng.uniform(0.0, scenario.rod_length, scenario.n_samples)
    ts = rng.uniform(0.0, 1.0, scenario.n_samples)
    clean = heat_solution(xs, ts, scenario)
    noisy = clean + rng.normal(0.0, scenario.noise_sigma, scenario.n_samples)
    inputs = np.stack([xs, ts], axis=1)
    train, val, test = split_indices(scenario.n_samples, 0.2, 0.2, rng)
    return Dataset(inputs, noisy, train, val, test)


def minmax_scale(columns: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise map onto [0, 1]; constant columns are refused."""
    columns = np.atleast_2d(np.asarray(columns, dtype=float))
    lo = columns.min(axis=0)
    hi = columns.max(axis=0)
    if (hi - lo <= 0.0).any():
        raise ConstantColumn("a feature column is constant")
    return (columns - lo) / (hi - lo), lo, hi


def minmax_unscale(scaled: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.asarray(scaled, dtype=float) * (hi - lo) + lo


def load_tabular(path, monotone_features=(), domain: BoxDomain | None = None, seed: int = 0) -> Dataset:
    """CSV with a header and a trailing target column, scaled and split.

    Features are min-max scaled onto [0, 1]; targets are left raw.  Rows are
    shuffled with ``seed`` and split 75/25, then the larger part 75/25 again
    into train and validation.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise MalformedCSV("need a header row and at least two data rows")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise MalformedCSV("need at least one feature column and one target column")
    if any(len(r) != len(header) for r in body):
        raise MalformedCSV("ragged rows")
    try:
        values = np.array([[float(cell) for cell in row] for row in body])
    except ValueError as exc:
        raise NonNumeric("every data cell must parse as a number") from exc
    if not np.isfinite(values).all():
        raise NonNumeric("every data cell must be finite")

    raw_features, targets = values[:, :-1], values[:, -1]
    for r in monotone_features:
        if not 0 <= int(r) < raw_features.shape[1]:
            raise MalformedCSV(f"monotone feature {r} outside the feature columns")
    scaled, _, _ = minmax_scale(raw_features)
    if domain is not None and not np.asarray(domain.contains(scaled, tol=1e-12)).all():
        raise MalformedCSV("scaled features fall outside the declared domain")

    rng = np.random.default_rng(seed)
    train, val, test = split_indices(len(scaled), 0.25, 0.25, rng)
    return Dataset(scaled, targets, train, val, test)


def generate_tabular_csv(path, n_rows: int = 488, seed: int = 0) -> None:
    """Synthetic scoring table: four integer features, score = round(mean)."""
    rng = np.random.default_rng(seed)
    feats = rng.integers(1, 10, size=(n_rows, 4))
    score = np.rint(feats.mean(axis=1)).astype(int)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f1", "f2", "f3", "f4", "score"])
        for row, y in zip(feats, score):
            writer.writerow([*map(int, row), int(y)])


def parse_config_file(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments are ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedCSV(f"line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def config_hash(params: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(params).encode("utf-8")).hexdigest()


def build_manifest(demo: str, params: dict[str, Any]) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "demo": demo,
        "params": params,
        "config_hash": config_hash(params),
        "versions": {"lipcert": __version__, "numpy": np.__version__},
    }


def write_state_csvs(state: CertificationState, points_path, cells_path) -> None:
    """Both delimited dumps: one row per point and one row per cell vertex."""
    dim = state.points.shape[1]
    coords = [f"x{i}" for i in range(dim)]
    with open(points_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *coords, "value", "radius", "violation"])
        for i in range(len(state.points)):
            writer.writerow(
                [
                    i,
                    *[repr(float(c)) for c in state.points[i]],
                    repr(float(state.values[i])),
                    repr(float(state.radii[i])),
                    int(state.violation_flags[i]),
                ]
            )
    with open(cells_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator_index", *coords])
        for cell in state.cells:
            for vertex in cell.vertices:
                writer.writerow([cell.generator_index, *[repr(float(c)) for c in vertex]])


def write_training_log(path, history: dict[str, list[float]]) -> None:
    keys = ["train_base", "train_penalty", "train_total", "val_total"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "base_loss", "penalty", "total", "val_total"])
        for i in range(len(history["train_base"])):
            writer.writerow([i + 1, *[repr(history[k][i]) for k in keys]])


def grid_min_partial(net: Network, domain: BoxDomain, feature: int, per_dim: int, sign: float = 1.0) -> float:
    """Smallest directed partial derivative over a full grid."""
    pts = grid_points(domain, per_dim)
    best = np.inf
    for start in range(0, len(pts), 65_536):
        vals = sign * partials_batch(net, pts[start : start + 65_536], feature)
        best = min(best, float(vals.min()))
    return best


def _report_payload(
    report: MonotonicityReport,
    logs: list[dict[str, Any]],
    training: TrainingReport,
    extras: dict[str, Any],
) -> dict[str, Any]:
    payload = report.to_json_dict()
    payload["rounds"] = logs
    payload["training"] = training.to_json_dict()
    payload.update(extras)
    return payload


def run_heat_demo(
    outdir,
    seed: int = 2,
    *,
    n_samples: int = 30,
    noise_sigma: float = 0.02,
    hidden: int = 10,
    learning_rate: float = 0.01,
    weight_decay: float = 0.0,
    penalty_weight: float = 0.1,
    epsilon: float = 0.1,
    max_epochs: int = 8000,
    patience: int = 2000,
    budget: int = 2000,
    max_rounds: int = 3,
    exploration_p: float = 0.1,
    make_figures: bool = True,
) -> dict[str, Any]:
    """Train on noisy rod temperatures and certify monotonicity in time."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    params = {
        "seed": seed,
        "n_samples": n_samples,
        "noise_sigma": noise_sigma,
        "hidden": hidden,
        "learning_rate": learning_rate,
        "weight_decay": weight_decay,
        "penalty_weight": penalty_weight,
        "epsilon": epsilon,
        "max_epochs": max_epochs,
        "patience": patience,
        "budget": budget,
        "max_rounds": max_rounds,
        "exploration_p": exploration_p,
    }

    scenario = HeatScenario(n_samples=n_samples, noise_sigma=noise_sigma, seed=seed)
    data = generate_heat_dataset(scenario)
    domain = scenario.domain
    constraints = [MonotonicityConstraint(1, Direction.INCREASING, epsilon)]
    config = TrainingConfig(
        optimizer="adam",
        learning_rate=learning_rate,
        weight_decay=weight_decay,
        max_epochs=max_epochs,
        patience=patience,
        penalty_weight=penalty_weight,
        seed=seed,
    )
    net = init_network(2, (hidden,), ActivationKind.TANH, seed=seed)
    model, report, logs, training = certify_train_loop(
        net,
        data,
        constraints,
        domain,
        config,
        max_rounds,
        budget=budget,
        exploration_p=exploration_p,
        seed=seed,
        initial_points=data.split("train")[0],
    )

    test_x, test_y = data.split("test")
    extras = {
        "test_mae": mean_absolute_error(forward_batch(model, test_x), test_y),
        "grid_min_directed_partial": grid_min_partial(model, domain, 1, 201),
    }
    payload = _report_payload(report, logs, training, extras)

    write_json(outdir / "manifest.json", build_manifest("heat", params))
    write_json(outdir / "report.json", payload)
    save_network(model, outdir / "model.json")
    write_training_log(outdir / "training_log.csv", training.history)
    state = next(iter(report.per_feature.values())).points_final
    write_state_csvs(state, outdir / "points.csv", outdir / "cells.csv")
    if make_figures:
        from .plotting import plot_certification_state, plot_partial_derivative_map

        plot_certification_state(state, domain, outdir / "state.svg")
        plot_partial_derivative_map(model, domain, 1, outdir / "partial_t.svg")
    return payload


def run_tabular_demo(
    outdir,
    seed: int = 0,
    *,
    csv_path=None,
    n_rows: int = 488,
    hidden: tuple[int, int] = (5, 5),
    learning_rate: float = 0.005,
    weight_decay: float = 0.005,
    penalty_weight: float = 0.1,
    epsilon: float = 0.1,
    max_epochs: int = 8000,
    patience: int = 8000,
    budget: int = 3000,
    max_rounds: int = 3,
    exploration_p: float = 0.1,
    n_initial: int = 10,
    make_figures: bool = True,
) -> dict[str, Any]:
    """Fit the synthetic scoring table and certify all features increasing."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    params = {
        "seed": seed,
        "n_rows": n_rows,
        "hidden": list(hidden),
        "learning_rate": learning_rate,
        "weight_decay": weight_decay,
        "penalty_weight": penalty_weight,
        "epsilon": epsilon,
        "max_epochs": max_epochs,
        "patience": patience,
        "budget": budget,
        "max_rounds": max_rounds,
        "exploration_p": exploration_p,
        "n_initial": n_initial,
    }

    if csv_path is None:
        csv_path = outdir / "table.csv"
        generate_tabular_csv(csv_path, n_rows=n_rows, seed=seed)
    data = load_tabular(csv_path, monotone_features=(0, 1, 2, 3), seed=seed)
    dim = data.inputs.shape[1]
    domain = BoxDomain(np.zeros(dim), np.ones(dim))
    constraints = [
        MonotonicityConstraint(r, Direction.INCREASING, epsilon) for r in range(dim)
    ]
    config = TrainingConfig(
        optimizer="adam",
        learning_rate=learning_rate,
        weight_decay=weight_decay,
        max_epochs=max_epochs,
        patience=patience,
        penalty_weight=penalty_weight,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    train_x = data.split("train")[0]
    pick = rng.choice(len(train_x), size=min(n_initial, len(train_x)), replace=False)
    net = init_network(dim, hidden, ActivationKind.TANH, seed=seed)
    model, report, logs, training = certify_train_loop(
        net,
        data,
        constraints,
        domain,
        config,
        max_rounds,
        budget=budget,
        exploration_p=exploration_p,
        seed=seed,
        initial_points=train_x[pick],
    )

    test_x, test_y = data.split("test")
    extras = {
        "test_mae": mean_absolute_error(forward_batch(model, test_x), test_y),
        "grid_min_directed_partial": min(
            grid_min_partial(model, domain, r, 21) for r in range(dim)
        ),
    }
    payload = _report_payload(report, logs, training, extras)

    write_json(outdir / "manifest.json", build_manifest("tabular", params))
    write_json(outdir / "report.json", payload)
    save_network(model, outdir / "model.json")
    write_training_log(outdir / "training_log.csv", training.history)
    state = next(iter(report.per_feature.values())).points_final
    write_state_csvs(state, outdir / "points.csv", outdir / "cells.csv")
    if make_figures:
        from .plotting import plot_training_history

        plot_training_history(training.history, outdir / "training.svg")
    return payload


def run_demo_from_manifest(manifest_path, outdir) -> dict[str, Any]:
    """Re-run a demo with exactly the parameters a manifest recorded."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    demo = manifest.get("demo")
    params = dict(manifest.get("params", {}))
    seed = int(params.pop("seed"))
    if demo == "heat":
        return run_heat_demo(outdir, seed, **params)
    if demo == "tabular":
        if "hidden" in params:
            params["hidden"] = tuple(int(h) for h in params["hidden"])
        return run_tabular_demo(outdir, seed, **params)
    raise MalformedCSV(f"manifest names unknown demo {demo!r}")
