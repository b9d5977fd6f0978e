"""Command-line interface.

Subcommands:
  certify-function  cover a built-in analytic function over a box
  certify-ann       certify partial monotonicity of a saved model
  train             fit a model on a CSV with a monotonicity penalty
  finetune-loop     alternate training and certification on a CSV
  heat-demo         end-to-end rod-temperature study
  tabular-demo      end-to-end synthetic scoring study
  plot-state        render a previously dumped points CSV

Exit codes: 0 success (including budget-exhausted runs), 2 usage error,
3 certification found counter-examples, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import CertifyError
from .geometry import BoxDomain
from .harness import (
    load_tabular,
    parse_config_file,
    run_demo_from_manifest,
    run_heat_demo,
    run_tabular_demo,
    write_json,
    write_state_csvs,
)
from .lipvor import CertificationStatus, PositivityProblem, certify
from .mlp import ActivationKind, init_network, load_network, save_network
from .monotonicity import (
    Direction,
    MonotonicityConstraint,
    MonotonicityStatus,
    certify_features_independently,
    certify_monotonic,
)
from .training import TrainingConfig, certify_train_loop, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VIOLATIONS = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    pass


def _parse_domain(text: str) -> BoxDomain:
    """Format: 'lo:hi,lo:hi,...' with one pair per dimension."""
    lows, highs = [], []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise UsageError(f"bad domain segment {part!r}; expected lo:hi")
        try:
            lows.append(float(pieces[0]))
            highs.append(float(pieces[1]))
        except ValueError as exc:
            raise UsageError(f"bad domain segment {part!r}") from exc
    try:
        return BoxDomain(np.array(lows), np.array(highs))
    except Exception as exc:
        raise UsageError(f"invalid domain: {exc}") from exc


def _parse_constraint(text: str) -> MonotonicityConstraint:
    """Format: 'feature:inc[:epsilon]' or 'feature:dec[:epsilon]'."""
    pieces = text.split(":")
    if len(pieces) not in (2, 3):
        raise UsageError(f"bad constraint {text!r}; expected r:inc[:eps]")
    try:
        feature = int(pieces[0])
    except ValueError as exc:
        raise UsageError(f"bad feature index in {text!r}") from exc
    word = pieces[1].lower()
    if word in ("inc", "increasing"):
        direction = Direction.INCREASING
    elif word in ("dec", "decreasing"):
        direction = Direction.DECREASING
    else:
        raise UsageError(f"bad direction {pieces[1]!r}; expected inc or dec")
    epsilon = 0.1
    if len(pieces) == 3:
        try:
            epsilon = float(pieces[2])
        except ValueError as exc:
            raise UsageError(f"bad epsilon in {text!r}") from exc
    try:
        return MonotonicityConstraint(feature, direction, epsilon)
    except Exception as exc:
        raise UsageError(str(exc)) from exc


_BUILTIN_FUNCTIONS = {
    # name: (evaluator factory, true Lipschitz constant over any box)
    "const1": (lambda: (lambda x: 1.0), 1.0),
    "affine": (lambda: (lambda x: float(x[0]) - 0.5), 1.0),
    "sinusoid": (lambda: (lambda x: 2.0 + float(np.sin(2.0 * np.pi * x[0]))), 2.0 * np.pi),
}


def _cmd_certify_function(args: argparse.Namespace) -> int:
    if args.fn not in _BUILTIN_FUNCTIONS:
        raise UsageError(f"unknown function {args.fn!r}; choose from {sorted(_BUILTIN_FUNCTIONS)}")
    factory, lipschitz = _BUILTIN_FUNCTIONS[args.fn]
    domain = _parse_domain(args.domain)
    problem = PositivityProblem(factory(), lipschitz, args.epsilon, domain)
    rng = np.random.default_rng(args.seed)
    initial = domain.uniform(rng, args.n_initial)
    if args.trace:
        Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
    result = certify(
        problem,
        initial,
        args.max_iter,
        exploration_p=args.exploration_p,
        seed=args.seed,
        trace_path=args.trace,
    )
    payload = result.to_json_dict()
    payload["function"] = args.fn
    payload["epsilon"] = args.epsilon
    payload["lipschitz_constant"] = lipschitz
    if args.report:
        outdir = Path(args.report).parent
        outdir.mkdir(parents=True, exist_ok=True)
        write_json(args.report, payload)
        write_state_csvs(
            result.points_final,
            Path(args.report).with_suffix(".points.csv"),
            Path(args.report).with_suffix(".cells.csv"),
        )
        if domain.dim == 2:
            from .plotting import plot_certification_state

            plot_certification_state(
                result.points_final, domain, Path(args.report).with_suffix(".svg")
            )
    print(f"status: {result.status.value}")
    print(f"iterations: {result.iterations_used}")
    print(f"points: {len(result.points_final.points)}")
    print(f"certified fraction: {result.certified_fraction:.4f}")
    if result.status is CertificationStatus.COUNTEREXAMPLES_FOUND:
        return EXIT_VIOLATIONS
    return EXIT_OK


def _cmd_certify_ann(args: argparse.Namespace) -> int:
    net = load_network(args.model)
    domain = _parse_domain(args.domain) if args.domain else BoxDomain(
        np.zeros(net.input_dim), np.ones(net.input_dim)
    )
    constraints = [_parse_constraint(c) for c in args.constraint]
    if not constraints:
        raise UsageError("at least one --constraint is required")
    runner = certify_features_independently if args.independent else certify_monotonic
    report = runner(
        net,
        constraints,
        domain,
        args.budget,
        exploration_p=args.exploration_p,
        seed=args.seed,
    )
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        write_json(args.report, report.to_json_dict())
        first_state = next(iter(report.per_feature.values())).points_final
        write_state_csvs(
            first_state,
            Path(args.report).with_suffix(".points.csv"),
            Path(args.report).with_suffix(".cells.csv"),
        )
        if domain.dim == 2:
            from .plotting import plot_certification_state

            plot_certification_state(
                first_state, domain, Path(args.report).with_suffix(".svg")
            )
    print(f"overall: {report.overall_status.value}")
    for feature, result in sorted(report.per_feature.items()):
        bound = report.lipschitz_estimates[feature].bound
        print(
            f"feature {feature}: {result.status.value} "
            f"(bound {bound:.4g}, {len(result.counterexamples)} counter-examples)"
        )
    if report.overall_status is MonotonicityStatus.VIOLATIONS_FOUND:
        return EXIT_VIOLATIONS
    return EXIT_OK


def _config_from_file(path) -> tuple[TrainingConfig, dict[str, str]]:
    raw = parse_config_file(path)
    kwargs: dict[str, object] = {}
    casts = {
        "optimizer": str,
        "learning_rate": float,
        "weight_decay": float,
        "max_epochs": int,
        "patience": int,
        "penalty_weight": float,
        "seed": int,
        "penalty_gradient_mode": str,
        "batch_size": int,
    }
    for key, cast in casts.items():
        if key in raw:
            kwargs[key] = cast(raw[key])
    try:
        return TrainingConfig(**kwargs), raw
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc


def _hidden_from_raw(raw: dict[str, str]) -> tuple[int, ...]:
    text = raw.get("hidden", "10")
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad hidden sizes {text!r}") from exc


def _cmd_train(args: argparse.Namespace) -> int:
    config, raw = _config_from_file(args.config) if args.config else (TrainingConfig(), {})
    constraints = [_parse_constraint(c) for c in args.constraint]
    data = load_tabular(args.data, [c.feature for c in constraints], seed=config.seed)
    hidden = _hidden_from_raw(raw)
    net = init_network(
        data.inputs.shape[1], hidden, ActivationKind.TANH, seed=config.seed
    )
    model, report = train(net, data, constraints, config)
    save_network(model, args.out)
    if args.log:
        from .harness import write_training_log

        write_training_log(args.log, report.history)
    print(f"epochs: {report.epochs_run} (stop: {report.early_stop_reason})")
    for split, stats in report.metrics.items():
        print(f"{split}: mae={stats['mae']:.5f} r2={stats['r2']:.5f}")
    return EXIT_OK


def _cmd_finetune_loop(args: argparse.Namespace) -> int:
    config, raw = _config_from_file(args.config) if args.config else (TrainingConfig(), {})
    constraints = [_parse_constraint(c) for c in args.constraint]
    if not constraints:
        raise UsageError("at least one --constraint is required")
    data = load_tabular(args.data, [c.feature for c in constraints], seed=config.seed)
    dim = data.inputs.shape[1]
    domain = BoxDomain(np.zeros(dim), np.ones(dim))
    hidden = _hidden_from_raw(raw)
    net = init_network(dim, hidden, ActivationKind.TANH, seed=config.seed)
    model, report, logs, _ = certify_train_loop(
        net,
        data,
        constraints,
        domain,
        config,
        args.max_rounds,
        budget=args.budget,
        exploration_p=args.exploration_p,
        seed=config.seed,
    )
    save_network(model, args.out)
    if args.report:
        payload = report.to_json_dict()
        payload["rounds"] = logs
        write_json(args.report, payload)
    for entry in logs:
        print(
            f"round {entry['round']}: {entry['certification_status']} "
            f"({entry['iterations_used']} iterations, "
            f"{entry['new_counterexamples']} new counter-examples)"
        )
    if report.overall_status is MonotonicityStatus.VIOLATIONS_FOUND:
        return EXIT_VIOLATIONS
    return EXIT_OK


def _cmd_heat_demo(args: argparse.Namespace) -> int:
    if args.manifest:
        payload = run_demo_from_manifest(args.manifest, args.outdir)
    else:
        payload = run_heat_demo(
            args.outdir,
            args.seed,
            max_epochs=args.max_epochs,
            budget=args.budget,
            max_rounds=args.max_rounds,
        )
    print(f"overall: {payload['overall_status']}")
    print(f"test mae: {payload['test_mae']:.5f}")
    print(f"grid min directed partial: {payload['grid_min_directed_partial']:.5f}")
    if payload["overall_status"] == MonotonicityStatus.VIOLATIONS_FOUND.value:
        return EXIT_VIOLATIONS
    return EXIT_OK


def _cmd_tabular_demo(args: argparse.Namespace) -> int:
    if args.manifest:
        payload = run_demo_from_manifest(args.manifest, args.outdir)
    else:
        payload = run_tabular_demo(
            args.outdir,
            args.seed,
            max_epochs=args.max_epochs,
            budget=args.budget,
            max_rounds=args.max_rounds,
        )
    print(f"overall: {payload['overall_status']}")
    print(f"test mae: {payload['test_mae']:.5f}")
    if payload["overall_status"] == MonotonicityStatus.VIOLATIONS_FOUND.value:
        return EXIT_VIOLATIONS
    return EXIT_OK


def _cmd_plot_state(args: argparse.Namespace) -> int:
    with open(args.points, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise UsageError("points CSV has no data rows")
    header, body = rows[0], rows[1:]
    coord_cols = [i for i, name in enumerate(header) if name.startswith("x")]
    if len(coord_cols) != 2:
        raise UsageError("plot-state needs a two-dimensional points CSV")
    try:
        pts = np.array([[float(r[i]) for i in coord_cols] for r in body])
        radii = np.array([float(r[header.index("radius")]) for r in body])
        flags = np.array([int(r[header.index("violation")]) for r in body], dtype=bool)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed points CSV: {exc}") from exc
    domain = _parse_domain(args.domain)
    from .plotting import plot_points_csv

    plot_points_csv(pts, radii, flags, domain, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipcert",
        description="Positivity and partial-monotonicity certification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify-function", help="cover a built-in analytic function")
    p.add_argument("--fn", required=True, help="const1, affine, or sinusoid")
    p.add_argument("--domain", default="0:1,0:1")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--exploration-p", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-initial", type=int, default=5)
    p.add_argument("--trace", default=None, help="JSONL trace path")
    p.add_argument("--report", default=None, help="report JSON path")
    p.set_defaults(func=_cmd_certify_function)

    p = sub.add_parser("certify-ann", help="certify monotonicity of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--domain", default=None, help="defaults to the unit box")
    p.add_argument("--constraint", action="append", default=[], help="r:inc[:eps]")
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--exploration-p", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--independent", action="store_true", help="one run per feature")
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_certify_ann)

    p = sub.add_parser("train", help="penalized training on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="key=value training config")
    p.add_argument("--constraint", action="append", default=[])
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("finetune-loop", help="alternate training and certification")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--constraint", action="append", default=[])
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--exploration-p", type=float, default=0.1)
    p.set_defaults(func=_cmd_finetune_loop)

    p = sub.add_parser("heat-demo", help="rod-temperature end-to-end study")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=2)
    p.add_argument("--max-epochs", type=int, default=8000)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--manifest", default=None, help="re-run from a manifest")
    p.set_defaults(func=_cmd_heat_demo)

    p = sub.add_parser("tabular-demo", help="synthetic scoring end-to-end study")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=8000)
    p.add_argument("--budget", type=int, default=3000)
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_tabular_demo)

    p = sub.add_parser("plot-state", help="render a dumped points CSV")
    p.add_argument("--points", required=True)
    p.add_argument("--domain", default="0:1,0:1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot_state)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CertifyError as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
