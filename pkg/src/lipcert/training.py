"""Penalized regression training that steers networks toward monotonicity.

The training objective is mean squared error plus a hinge penalty on directed
partial derivatives at a set of penalty points:

    total = mse(train) + lambda * sum_points sum_c max(0, eps_c - d_c dg/dx_r)

The penalty gradient needs derivatives of dg/dx_r with respect to weights.
These follow from a forward tangent pass (u_0 = e_r, t_l = u_{l-1} W_l,
u_l = t_l * phi'(z_l), so u_K is the directed derivative) and a reverse pass
over that augmented computation:

    tbar = ubar * phi'(z_l)
    zbar = ubar * t_l * phi''(z_l) + obar * phi'(z_l)
    dW_l = o_{l-1}^T zbar + u_{l-1}^T tbar,   db_l = sum zbar
    obar_{l-1} = zbar W_l^T,   ubar_{l-1} = tbar W_l^T

A central finite-difference fallback is available for small networks and
doubles as the test oracle for the analytic path.

Early stopping tracks total validation loss, but a checkpoint is only
eligible while the training penalty is exactly zero, so any model returned
through a checkpoint is penalty-free at its snapshot epoch.  If no epoch
qualifies, a :class:`NoEligibleCheckpoint` warning is issued and the final
model is returned.  Fine-tuning repeats training with counter-examples added
to the penalty set only; they never receive regression targets.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DimensionMismatch, NoEligibleCheckpoint, PointOutsideDomain
from .geometry import TAU_DUP, BoxDomain
from .mlp import ActivationKind, Network, forward_batch, forward_pass, jacobian_batch
from .monotonicity import (
    MonotonicityConstraint,
    MonotonicityReport,
    MonotonicityStatus,
    certify_monotonic,
)

_FD_PARAM_LIMIT = 200
_FD_STEP = 1e-5


@dataclass
class Dataset:
    """Inputs with targets and a disjoint, exhaustive train/val/test split."""

    inputs: np.ndarray
    targets: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self) -> None:
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if len(self.inputs) != len(self.targets):
            raise DimensionMismatch("inputs and targets must have equal length")
        self.train_idx = np.asarray(self.train_idx, dtype=int)
        self.val_idx = np.asarray(self.val_idx, dtype=int)
        self.test_idx = np.asarray(self.test_idx, dtype=int)
        n = len(self.inputs)
        union = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if len(union) != n or len(np.unique(union)) != n or union.min() < 0 or union.max() >= n:
            raise DimensionMismatch("splits must be disjoint and cover every row")
        if len(self.train_idx) == 0:
            raise DimensionMismatch("the training split cannot be empty")

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        return self.inputs[idx], self.targets[idx]


def split_indices(
    n: int, test_frac: float, val_frac: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffle 0..n-1, carve off test_frac, then val_frac of the remainder."""
    perm = rng.permutation(n)
    n_test = int(round(test_frac * n))
    test = perm[:n_test]
    rest = perm[n_test:]
    n_val = int(round(val_frac * len(rest)))
    val = rest[:n_val]
    train = rest[n_val:]
    return np.sort(train), np.sort(val), np.sort(test)


@dataclass(frozen=True)
class TrainingConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 2000
    patience: int = 200
    penalty_weight: float = 0.1
    seed: int = 0
    penalty_gradient_mode: str = "analytic"
    batch_size: int | None = None

    def __post_init__(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.penalty_gradient_mode not in ("analytic", "finite-difference"):
            raise ValueError("penalty_gradient_mode must be 'analytic' or 'finite-difference'")
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("learning_rate, max_epochs, and patience must be positive")
        if self.penalty_weight < 0 or self.weight_decay < 0:
            raise ValueError("penalty_weight and weight_decay must be nonnegative")


@dataclass
class TrainingReport:
    epochs_run: int
    best_epoch: int | None
    early_stop_reason: str
    history: dict[str, list[float]] = field(repr=False)
    metrics: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "early_stop_reason": self.early_stop_reason,
            "metrics": self.metrics,
        }


def mean_absolute_error(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - target)))


def r2_score(pred: np.ndarray, target: np.ndarray) -> float:
    ss_res = float(((target - pred) ** 2).sum())
    ss_tot = float(((target - target.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - ss_res / ss_tot


def _directed_partials(net: Network, points: np.ndarray, constraints) -> np.ndarray:
    """Matrix of d_c * dg/dx_{r_c} at each point, shape (points, constraints)."""
    jac = jacobian_batch(net, points)
    cols = [c.direction.sign * jac[:, c.feature] for c in constraints]
    return np.stack(cols, axis=1)


def monotonic_penalty(net: Network, points, constraints) -> float:
    """Hinge total sum_points sum_c max(0, eps_c - directed derivative)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0 or not constraints:
        return 0.0
    vals = _directed_partials(net, points, constraints)
    eps = np.array([c.epsilon for c in constraints])
    return float(np.maximum(0.0, eps[None, :] - vals).sum())


def _zero_grads(net: Network) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]


def _base_loss_and_grads(
    net: Network, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    zs, os = forward_pass(net, x)
    pred = os[-1][:, 0]
    resid = pred - y
    loss = float(np.mean(resid**2))
    grads = _zero_grads(net)
    delta = (2.0 / len(x)) * resid[:, None]
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        delta = delta * layer.activation.derivative(zs[idx])
        grads[idx] = (os[idx].T @ delta, delta.sum(axis=0))
        if idx > 0:
            delta = delta @ layer.weights.T
    return loss, grads


def _penalty_grads_analytic(
    net: Network, points: np.ndarray, constraints
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    grads = _zero_grads(net)
    total = 0.0
    zs, os = forward_pass(net, points)
    d1 = [l.activation.derivative(z) for l, z in zip(net.layers, zs)]
    d2 = [l.activation.second_derivative(z) for l, z in zip(net.layers, zs)]
    for c in constraints:
        # forward tangent along e_r
        us = [np.zeros((len(points), net.input_dim))]
        us[0][:, c.feature] = 1.0
        ts = []
        for idx, layer in enumerate(net.layers):
            t = us[idx] @ layer.weights
            ts.append(t)
            us.append(t * d1[idx])
        directed = c.direction.sign * us[-1][:, 0]
        active = directed < c.epsilon
        total += float(np.maximum(0.0, c.epsilon - directed).sum())
        if not active.any():
            continue
        # d penalty / d (directed derivative) is -1 on active points
        ubar = np.zeros((len(points), 1))
        ubar[active, 0] = -c.direction.sign
        obar = np.zeros((len(points), 1))
        for idx in range(len(net.layers) - 1, -1, -1):
            layer = net.layers[idx]
            tbar = ubar * d1[idx]
            zbar = ubar * ts[idx] * d2[idx] + obar * d1[idx]
            dw = os[idx].T @ zbar + us[idx].T @ tbar
            db = zbar.sum(axis=0)
            grads[idx] = (grads[idx][0] + dw, grads[idx][1] + db)
            if idx > 0:
                obar = zbar @ layer.weights.T
                ubar = tbar @ layer.weights.T
    return total, grads


def _penalty_grads_fd(
    net: Network, points: np.ndarray, constraints
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    if net.n_parameters >= _FD_PARAM_LIMIT:
        raise ValueError(
            f"finite-difference gradients are limited to networks under "
            f"{_FD_PARAM_LIMIT} parameters"
        )
    total = monotonic_penalty(net, points, constraints)
    grads = _zero_grads(net)
    probe = net.copy()
    for li, layer in enumerate(probe.layers):
        for arr, slot in ((layer.weights, 0), (layer.bias, 1)):
            flat = arr.ravel()
            gflat = grads[li][slot].ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + _FD_STEP
                hi = monotonic_penalty(probe, points, constraints)
                flat[i] = keep - _FD_STEP
                lo = monotonic_penalty(probe, points, constraints)
                flat[i] = keep
                gflat[i] = (hi - lo) / (2.0 * _FD_STEP)
    return total, grads


class _Optimizer:
    def __init__(self, net: Network, config: TrainingConfig) -> None:
        self.config = config
        self.step_count = 0
        if config.optimizer == "adam":
            self.m = _zero_grads(net)
            self.v = _zero_grads(net)

    def step(self, net: Network, grads: list[tuple[np.ndarray, np.ndarray]]) -> None:
        cfg = self.config
        self.step_count += 1
        for li, layer in enumerate(net.layers):
            gw, gb = grads[li]
            if cfg.weight_decay > 0.0:
                gw = gw + cfg.weight_decay * layer.weights
            if cfg.optimizer == "sgd":
                layer.weights -= cfg.learning_rate * gw
                layer.bias -= cfg.learning_rate * gb
                continue
            b1, b2, eps = 0.9, 0.999, 1e-8
            for arr, g, m, v in (
                (layer.weights, gw, self.m[li][0], self.v[li][0]),
                (layer.bias, gb, self.m[li][1], self.v[li][1]),
            ):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g**2
                mhat = m / (1.0 - b1**self.step_count)
                vhat = v / (1.0 - b2**self.step_count)
                arr -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)


def _evaluate_losses(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    penalty_points: np.ndarray,
    constraints,
    lam: float,
) -> tuple[float, float, float]:
    if len(x) > 0:
        pred = forward_batch(net, x)
        base = float(np.mean((pred - y) ** 2))
    else:
        base = 0.0
    pen = monotonic_penalty(net, penalty_points, constraints) if len(penalty_points) else 0.0
    return base, pen, base + lam * pen


def _fit(
    net: Network,
    data: Dataset,
    constraints,
    config: TrainingConfig,
    extra_penalty_points: np.ndarray | None = None,
) -> tuple[Network, TrainingReport]:
    rng = np.random.default_rng(config.seed)
    model = net.copy()
    opt = _Optimizer(model, config)
    lam = config.penalty_weight
    constraints = list(constraints)

    x_train, y_train = data.split("train")
    x_val, y_val = data.split("val")
    train_penalty_points = x_train
    if extra_penalty_points is not None and len(extra_penalty_points):
        train_penalty_points = np.vstack([x_train, np.atleast_2d(extra_penalty_points)])

    grad_fn = _penalty_grads_analytic
    if config.penalty_gradient_mode == "finite-difference":
        grad_fn = _penalty_grads_fd

    history: dict[str, list[float]] = {
        k: []
        for k in ("train_base", "train_penalty", "train_total", "val_base", "val_penalty", "val_total")
    }
    best_val = float("inf")
    since_improved = 0
    best_eligible_val = float("inf")
    best_snapshot: Network | None = None
    best_epoch: int | None = None
    reason = "max_epochs"
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        if config.batch_size is None or config.batch_size >= len(x_train):
            batches = [np.arange(len(x_train))]
        else:
            perm = rng.permutation(len(x_train))
            batches = np.array_split(perm, int(np.ceil(len(x_train) / config.batch_size)))
        for idx in batches:
            _, grads = _base_loss_and_grads(model, x_train[idx], y_train[idx])
            if lam > 0.0 and constraints and len(train_penalty_points):
                _, pgrads = grad_fn(model, train_penalty_points, constraints)
                for li in range(len(grads)):
                    grads[li] = (
                        grads[li][0] + lam * pgrads[li][0],
                        grads[li][1] + lam * pgrads[li][1],
                    )
            opt.step(model, grads)

        tb, tp, tt = _evaluate_losses(model, x_train, y_train, train_penalty_points, constraints, lam)
        if len(x_val):
            vb, vp, vt = _evaluate_losses(model, x_val, y_val, x_val, constraints, lam)
        else:
            vb, vp, vt = tb, tp, tt
        for key, val in zip(history, (tb, tp, tt, vb, vp, vt)):
            history[key].append(val)
        epochs_run = epoch

        if tp == 0.0 and vt < best_eligible_val:
            best_eligible_val = vt
            best_snapshot = model.copy()
            best_epoch = epoch
        if vt < best_val:
            best_val = vt
            since_improved = 0
        else:
            since_improved += 1
        if since_improved >= config.patience:
            reason = "patience"
            break

    if best_snapshot is not None:
        model = best_snapshot
    else:
        warnings.warn(
            "no epoch reached zero training penalty; returning the final model",
            NoEligibleCheckpoint,
        )

    metrics: dict[str, dict[str, float]] = {}
    for name in ("train", "val", "test"):
        xs, ys = data.split(name)
        if len(xs) == 0:
            continue
        pred = forward_batch(model, xs)
        metrics[name] = {"mae": mean_absolute_error(pred, ys), "r2": r2_score(pred, ys)}
    report = TrainingReport(epochs_run, best_epoch, reason, history, metrics)
    return model, report


def train(
    net: Network, data: Dataset, constraints, config: TrainingConfig
) -> tuple[Network, TrainingReport]:
    """Penalized fit on the training split; penalty points are its inputs."""
    return _fit(net, data, constraints, config)


def finetune_with_counterexamples(
    net: Network, data: Dataset, counterexamples, constraints, config: TrainingConfig
) -> tuple[Network, TrainingReport]:
    """Refit with counter-examples appended to the penalty set only."""
    counterexamples = np.atleast_2d(np.asarray(counterexamples, dtype=float))
    if counterexamples.size == 0:
        raise ValueError("counterexamples must be nonempty")
    return _fit(net, data, constraints, config, extra_penalty_points=counterexamples)


def _dedup_against(existing: np.ndarray, fresh: np.ndarray) -> np.ndarray:
    kept = []
    for row in fresh:
        pool = existing if not kept else np.vstack([existing, np.asarray(kept)])
        if len(pool) == 0 or np.linalg.norm(pool - row, axis=1).min() > TAU_DUP:
            kept.append(row)
    if not kept:
        return np.empty((0, fresh.shape[1]))
    return np.asarray(kept)


def certify_train_loop(
    net: Network,
    data: Dataset,
    constraints,
    domain: BoxDomain,
    config: TrainingConfig,
    max_rounds: int,
    *,
    budget: int = 2000,
    exploration_p: float = 0.1,
    seed: int = 0,
    initial_points=None,
) -> tuple[Network, MonotonicityReport, list[dict[str, Any]], TrainingReport]:
    """Alternate penalized training and certification until one certifies.

    Round 1 trains from scratch; later rounds fine-tune with all
    counter-examples collected so far.  Certification in round i uses seed
    ``seed + i - 1``.  Stops early when a round certifies or produces no new
    counter-example.  Returns the last model, its certification report, one
    log entry per round, and the last training report.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if not np.asarray(domain.contains(data.inputs)).all():
        raise PointOutsideDomain("dataset inputs must lie inside the domain")
    constraints = list(constraints)
    model = net
    accumulated = np.empty((0, net.input_dim))
    logs: list[dict[str, Any]] = []
    report: MonotonicityReport | None = None
    training_report: TrainingReport | None = None

    for round_no in range(1, max_rounds + 1):
        if round_no == 1:
            model, training_report = train(model, data, constraints, config)
            phase = "train"
        else:
            model, training_report = finetune_with_counterexamples(
                model, data, accumulated, constraints, config
            )
            phase = "finetune"
        report = certify_monotonic(
            model,
            constraints,
            domain,
            budget,
            exploration_p=exploration_p,
            seed=seed + round_no - 1,
            initial_points=initial_points,
        )
        fresh = np.array([p for _, p, _ in report.counterexamples()])
        if len(fresh):
            fresh = _dedup_against(accumulated, fresh)
        new_count = len(fresh)
        logs.append(
            {
                "round": round_no,
                "phase": phase,
                "epochs_run": training_report.epochs_run,
                "best_epoch": training_report.best_epoch,
                "metrics": training_report.metrics,
                "certification_status": report.overall_status.value,
                "iterations_used": report.iterations_used,
                "new_counterexamples": new_count,
            }
        )
        if report.overall_status is MonotonicityStatus.CERTIFIED_MONOTONIC:
            break
        if new_count == 0:
            break
        accumulated = np.vstack([accumulated, fresh])

    assert report is not None and training_report is not None
    return model, report, logs, training_report
