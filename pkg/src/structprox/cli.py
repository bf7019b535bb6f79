"""Command line interface.

Subcommands: ``fit``, ``cv``, ``screen``, ``predict``, ``generate``.  A
config file of ``key=value`` lines (keys match the long flag names) may
supply any option; explicit flags override the file.  Exit codes: 0 on
success, 1 on invalid input, 2 on solver failure.  Primary output files
are deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import dataio
from .core import Dataset, Hyperparameters, VARIANTS
from .evaluation import (
    fit_pipeline,
    kfold_cv,
    log_grid,
    make_grid,
    predict,
    reduce_parameters,
    selected_groups,
)
from .preprocessing import (
    NORMALIZATION_MODES,
    fit_scaler,
    load_scaler,
    make_design,
    save_scaler,
)
from .solver import SolverFailure, screen_lambda_max
from .synthetic import SyntheticSpec, generate, write_files

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as ValueError (exit code 1)."""

    def error(self, message):
        raise ValueError(message)


def _parse_config_file(path) -> dict:
    """Read ``key=value`` lines; blank lines and ``#`` comments allowed."""
    settings = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(
                    "%s: line %d is not a key=value setting" % (path, lineno)
                )
            key, _, value = text.partition("=")
            settings[key.strip()] = value.strip()
    return settings


def _apply_config(args, parser: argparse.ArgumentParser, config: dict) -> None:
    """Fill options the command line left unset from the config mapping.

    Keys may use either hyphens or underscores (``max-iters``/``max_iters``).
    """
    actions = {}
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "config"):
            continue
        actions[action.dest] = action
    for key, raw in config.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ValueError("config file sets unknown option '%s'" % key)
        action = actions[dest]
        if getattr(args, action.dest, None) is None:
            value = action.type(raw) if action.type is not None else raw
            setattr(args, action.dest, value)


def _require(args, names: dict) -> None:
    for dest, flag in names.items():
        if getattr(args, dest, None) is None:
            raise ValueError("missing required option %s" % flag)


def _defaults(args, values: dict) -> None:
    for dest, value in values.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)


def _add_data_options(sp) -> None:
    sp.add_argument("--genetic", type=str, help="genetic feature CSV")
    sp.add_argument("--imaging", type=str, help="imaging feature CSV")
    sp.add_argument("--labels", type=str, help="0/1 label CSV")
    sp.add_argument("--groups", type=str, help="group definition file")
    sp.add_argument("--normalization", type=str, choices=NORMALIZATION_MODES,
                    help="column scaling mode (default sd)")


def _add_lambda_options(sp) -> None:
    sp.add_argument("--lambda-w", type=float, dest="lambda_w",
                    help="interaction penalty strength")
    sp.add_argument("--lambda-i", type=float, dest="lambda_i",
                    help="imaging penalty strength")
    sp.add_argument("--lambda-g", type=float, dest="lambda_g",
                    help="genetic penalty strength")


def _load_data(args):
    g_names, genetic = dataio.load_matrix_csv(args.genetic)
    i_names, imaging = dataio.load_matrix_csv(args.imaging)
    labels = dataio.load_labels_csv(args.labels)
    d = Dataset(genetic, imaging, labels)
    gs = dataio.load_group_file(args.groups, d.n_genetic)
    return d, gs, g_names, i_names


def _format_rate(value) -> str:
    return "--" if value is None else "%.1f" % value


def _results_table(rows) -> str:
    """Fixed-width comparison table; one row per (variant, source)."""
    header = "%-16s %-8s %6s %6s %6s %6s" % ("variant", "source", "Sen", "Spe", "Pre", "BAcc")
    lines = [header, "-" * len(header)]
    for name, source, sen, spe, pre, bacc in rows:
        lines.append(
            "%-16s %-8s %6s %6s %6s %6s"
            % (name, source, _format_rate(sen), _format_rate(spe),
               _format_rate(pre), _format_rate(bacc))
        )
    return "\n".join(lines)


def _save_reduced(out_dir, red, i_names, group_names) -> None:
    dataio.save_matrix_csv(
        os.path.join(out_dir, "reduced_interaction.csv"), group_names, red.interaction
    )
    with open(os.path.join(out_dir, "reduced_imaging.csv"), "w") as fh:
        fh.write("feature,max_abs\n")
        for name, value in zip(i_names, red.imaging):
            fh.write("%s,%.17g\n" % (name, value))
    with open(os.path.join(out_dir, "reduced_genetic.csv"), "w") as fh:
        fh.write("group,max_abs\n")
        for name, value in zip(group_names, red.genetic):
            fh.write("%s,%.17g\n" % (name, value))


def cmd_fit(args) -> int:
    _require(args, {
        "genetic": "--genetic", "imaging": "--imaging", "labels": "--labels",
        "groups": "--groups", "lambda_w": "--lambda-w", "lambda_i": "--lambda-i",
        "lambda_g": "--lambda-g",
    })
    _defaults(args, {
        "variant": "multilevel", "normalization": "sd", "out": "structprox-fit",
        "tol": 1e-5, "max_iters": 10000,
    })
    started = time.time()
    d, gs, g_names, i_names = _load_data(args)
    h = Hyperparameters(
        lambda_interaction=args.lambda_w,
        lambda_imaging=args.lambda_i,
        lambda_genetic=args.lambda_g,
        variant=args.variant,
        tol=args.tol,
        max_iters=args.max_iters,
    )
    model = fit_pipeline(d, gs, h, normalization=args.normalization)
    model.record.genetic_names = tuple(g_names)
    model.record.imaging_names = tuple(i_names)

    os.makedirs(args.out, exist_ok=True)
    dataio.save_params(os.path.join(args.out, "params.txt"), model.params, h.variant)
    save_scaler(model.record, os.path.join(args.out, "scaler.txt"))
    dataio.save_trace_csv(os.path.join(args.out, "trace.csv"), model.state)
    red = reduce_parameters(model.params, gs)
    _save_reduced(args.out, red, i_names, list(gs.names))

    sel = selected_groups(model.params, gs)
    final = model.state.history[-1]
    elapsed = time.time() - started
    summary = [
        "variant: %s" % h.variant,
        "lambda_w: %.17g" % h.lambda_interaction,
        "lambda_i: %.17g" % h.lambda_imaging,
        "lambda_g: %.17g" % h.lambda_genetic,
        "normalization: %s" % args.normalization,
        "samples: %d" % d.n_samples,
        "iterations: %d" % model.state.iterations,
        "converged: %s" % model.state.converged,
        "stop_reason: %s" % model.state.stop_reason,
        "final_risk: %.17g" % final.risk,
        "final_penalty: %.17g" % final.penalty,
        "final_objective: %.17g" % final.total,
        "selected_genetic_groups: %s"
        % (",".join(gs.names[l] for l in sel.genetic) or "none"),
        "selected_interaction_groups: %s"
        % (",".join(gs.names[l] for l in sel.interaction) or "none"),
        "wall_time_seconds: %.3f" % elapsed,
    ]
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary) + "\n")
    print(
        "fit: %s, %d iterations, objective %.6g, %d genetic / %d interaction groups selected"
        % (model.state.stop_reason, model.state.iterations, final.total,
           len(sel.genetic), len(sel.interaction))
    )
    print("outputs written to %s" % args.out)
    return 0


def _parse_variants(text: str) -> list[str]:
    variants = [v.strip() for v in text.split(",") if v.strip()]
    if not variants:
        raise ValueError("no variant named in %r" % text)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError("variant must be one of %r, got %r" % (VARIANTS, v))
    return variants


def _parse_grid(text: str):
    """Grid spec: either a point count or explicit 'w=...;i=...;g=...' lists."""
    text = text.strip()
    if "=" not in text:
        try:
            num = int(text)
        except ValueError:
            raise ValueError(
                "grid must be a point count or 'w=...;i=...;g=...', got %r" % text
            )
        values = log_grid(num)
        return values, values, values
    blocks = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, value_text = part.partition("=")
        key = key.strip()
        if key not in ("w", "i", "g"):
            raise ValueError("grid block must be one of w, i, g, got %r" % key)
        try:
            values = [float(v) for v in value_text.split(",") if v.strip()]
        except ValueError:
            raise ValueError("grid block %r holds a non-numeric value" % key)
        if not values:
            raise ValueError("grid block %r lists no values" % key)
        blocks[key] = values
    for key in ("w", "i", "g"):
        if key not in blocks:
            raise ValueError("grid must define block %r" % key)
    return blocks["w"], blocks["i"], blocks["g"]


def cmd_cv(args) -> int:
    _require(args, {
        "genetic": "--genetic", "imaging": "--imaging", "labels": "--labels",
        "groups": "--groups",
    })
    _defaults(args, {
        "variant": "multilevel", "normalization": "sd", "out": "structprox-cv",
        "folds": 10, "grid": "7", "seed": 0, "selection": "nested",
        "inner_folds": 3, "threshold": 0.5,
    })
    d, gs, _, _ = _load_data(args)
    variants = _parse_variants(args.variant)
    w_values, i_values, g_values = _parse_grid(args.grid)

    os.makedirs(args.out, exist_ok=True)
    table_rows = []
    metric_lines = ["variant,fold,tp,fp,tn,fn,sensitivity,specificity,precision,balanced_accuracy"]
    chosen_lines = ["variant,fold,lambda_w,lambda_i,lambda_g,selected_genetic,selected_interaction"]

    def rate_text(value):
        return "" if value is None else "%.17g" % value

    for variant in variants:
        grid = make_grid(w_values, i_values, g_values, variant=variant)
        result = kfold_cv(
            d, gs, grid,
            k=args.folds, seed=args.seed, selection=args.selection,
            inner_k=args.inner_folds, normalization=args.normalization,
            threshold=args.threshold,
        )
        for f, report in enumerate(result.fold_metrics):
            if report is None:
                metric_lines.append("%s,%d,,,,,,,," % (variant, f))
            else:
                metric_lines.append(
                    "%s,%d,%d,%d,%d,%d,%s,%s,%s,%s"
                    % (variant, f, report.tp, report.fp, report.tn, report.fn,
                       rate_text(report.sensitivity), rate_text(report.specificity),
                       rate_text(report.precision), rate_text(report.balanced_accuracy))
                )
        pooled = result.pooled
        metric_lines.append(
            "%s,pooled,%d,%d,%d,%d,%s,%s,%s,%s"
            % (variant, pooled.tp, pooled.fp, pooled.tn, pooled.fn,
               rate_text(pooled.sensitivity), rate_text(pooled.specificity),
               rate_text(pooled.precision), rate_text(pooled.balanced_accuracy))
        )
        mean = result.mean
        metric_lines.append(
            "%s,mean,,,,,%s,%s,%s,%s"
            % (variant, rate_text(mean.sensitivity), rate_text(mean.specificity),
               rate_text(mean.precision), rate_text(mean.balanced_accuracy))
        )
        for f, (h, sel) in enumerate(zip(result.chosen, result.selected)):
            chosen_lines.append(
                "%s,%d,%.17g,%.17g,%.17g,%s,%s"
                % (variant, f, h.lambda_interaction, h.lambda_imaging,
                   h.lambda_genetic,
                   ";".join(gs.names[l] for l in sel.genetic),
                   ";".join(gs.names[l] for l in sel.interaction))
            )
        table_rows.append((
            variant, "mean", mean.sensitivity, mean.specificity,
            mean.precision, mean.balanced_accuracy,
        ))
        table_rows.append((
            variant, "pooled", pooled.sensitivity, pooled.specificity,
            pooled.precision, pooled.balanced_accuracy,
        ))

    table = _results_table(table_rows)
    with open(os.path.join(args.out, "cv_metrics.csv"), "w") as fh:
        fh.write("\n".join(metric_lines) + "\n")
    with open(os.path.join(args.out, "cv_chosen.csv"), "w") as fh:
        fh.write("\n".join(chosen_lines) + "\n")
    with open(os.path.join(args.out, "table.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    print("outputs written to %s" % args.out)
    return 0


def cmd_screen(args) -> int:
    _require(args, {
        "genetic": "--genetic", "imaging": "--imaging", "labels": "--labels",
        "groups": "--groups",
    })
    _defaults(args, {"normalization": "sd"})
    d, gs, _, _ = _load_data(args)
    record = fit_scaler(d, args.normalization)
    design = make_design(d, gs, record)
    result = screen_lambda_max(design, gs)
    lines = [
        "lambda_g_max\t%.17g" % result.lambda_genetic_max,
        "lambda_w_max\t%.17g" % result.lambda_interaction_max,
        "group\tweight\tgenetic_bound\tinteraction_bound",
    ]
    for l in range(gs.n_groups):
        lines.append(
            "%s\t%.17g\t%.17g\t%.17g"
            % (gs.names[l], gs.weights[l],
               result.genetic_bounds[l], result.interaction_bounds[l])
        )
    text = "\n".join(lines)
    print(text)
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "screen.txt"), "w") as fh:
            fh.write(text + "\n")
    return 0


def _reorder_columns(names, X, wanted, kind: str):
    """Reorder CSV columns to the training order; names are authoritative."""
    if wanted is None:
        if X.shape[1] != len(names):
            raise ValueError("internal: name/column mismatch")
        return X
    if list(names) == list(wanted):
        return X
    position = {name: j for j, name in enumerate(names)}
    missing = [name for name in wanted if name not in position]
    if missing:
        raise ValueError(
            "%s data is missing column '%s' the model was trained on"
            % (kind, missing[0])
        )
    return X[:, [position[name] for name in wanted]]


def cmd_predict(args) -> int:
    _require(args, {
        "model": "--model", "scaler": "--scaler", "groups": "--groups",
        "genetic": "--genetic", "imaging": "--imaging",
    })
    _defaults(args, {"threshold": 0.5, "out": "structprox-predict"})
    params, variant = dataio.load_params(args.model)
    record = load_scaler(args.scaler)
    g_names, genetic = dataio.load_matrix_csv(args.genetic)
    i_names, imaging = dataio.load_matrix_csv(args.imaging)
    genetic = _reorder_columns(g_names, genetic, record.genetic_names, "genetic")
    imaging = _reorder_columns(i_names, imaging, record.imaging_names, "imaging")
    if genetic.shape[1] != record.n_genetic:
        raise ValueError(
            "genetic data has %d columns, scaler expects %d"
            % (genetic.shape[1], record.n_genetic)
        )
    if imaging.shape[1] != record.n_imaging:
        raise ValueError(
            "imaging data has %d columns, scaler expects %d"
            % (imaging.shape[1], record.n_imaging)
        )
    gs = dataio.load_group_file(args.groups, record.n_genetic)
    if gs.expanded_size != params.expanded_size or record.n_imaging != params.n_imaging:
        raise ValueError(
            "model dims (imaging %d, expanded %d) do not match groups/scaler "
            "(imaging %d, expanded %d)"
            % (params.n_imaging, params.expanded_size, record.n_imaging, gs.expanded_size)
        )
    probs, labels = predict(
        params, record, gs, genetic, imaging, threshold=args.threshold, variant=variant
    )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "predictions.csv")
    dataio.save_predictions_csv(out_path, probs, labels)
    print("wrote %d predictions to %s" % (probs.size, out_path))
    return 0


def cmd_generate(args) -> int:
    _require(args, {"out": "--out"})
    _defaults(args, {
        "samples": 200, "imaging_count": 6, "groups_count": 10, "group_size": 5,
        "overlap": 0.0, "active_groups": 2, "effect_w": 0.0, "effect_i": 0.0,
        "effect_g": 1.0, "intercept": 0.0, "noise": 0.0, "seed": 0,
    })
    spec = SyntheticSpec(
        n_samples=args.samples,
        n_imaging=args.imaging_count,
        n_groups=args.groups_count,
        group_size=args.group_size,
        overlap=args.overlap,
        n_active=args.active_groups,
        effect_interaction=args.effect_w,
        effect_imaging=args.effect_i,
        effect_genetic=args.effect_g,
        intercept=args.intercept,
        label_noise=args.noise,
        seed=args.seed,
    )
    data = generate(spec)
    write_files(data, args.out)
    print(
        "generated %d samples (%d genetic, %d imaging, %d groups) in %s"
        % (spec.n_samples, spec.n_genetic, spec.n_imaging, spec.n_groups, args.out)
    )
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="structprox", description=__doc__)
    parser.add_argument("--config", type=str, help="key=value settings file")
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("fit", help="train one model", add_help=True)
    _add_data_options(sp)
    _add_lambda_options(sp)
    sp.add_argument("--variant", type=str, help="model variant (default multilevel)")
    sp.add_argument("--tol", type=float, help="relative objective tolerance")
    sp.add_argument("--max-iters", type=int, dest="max_iters", help="iteration cap")
    sp.add_argument("--seed", type=int, help="unused by fit; accepted for config reuse")
    sp.add_argument("--out", type=str, help="output directory")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="cross-validate over a grid", add_help=True)
    _add_data_options(sp)
    sp.add_argument("--folds", type=int, help="number of folds (default 10)")
    sp.add_argument("--grid", type=str,
                    help="point count or 'w=...;i=...;g=...' lists (default 7)")
    sp.add_argument("--variant", type=str,
                    help="comma-separated variants (default multilevel)")
    sp.add_argument("--selection", type=str,
                    help="grid selection: nested (default) or oracle")
    sp.add_argument("--inner-folds", type=int, dest="inner_folds",
                    help="inner folds for nested selection (default 3)")
    sp.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    sp.add_argument("--seed", type=int, help="fold shuffling seed (default 0)")
    sp.add_argument("--out", type=str, help="output directory")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("screen", help="critical penalty strengths", add_help=True)
    _add_data_options(sp)
    sp.add_argument("--out", type=str, help="optional output directory")
    sp.set_defaults(func=cmd_screen)

    sp = sub.add_parser("predict", help="score new samples", add_help=True)
    sp.add_argument("--model", type=str, help="params.txt from a fit")
    sp.add_argument("--scaler", type=str, help="scaler.txt from the same fit")
    sp.add_argument("--groups", type=str, help="group definition file")
    sp.add_argument("--genetic", type=str, help="genetic feature CSV")
    sp.add_argument("--imaging", type=str, help="imaging feature CSV")
    sp.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    sp.add_argument("--out", type=str, help="output directory")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("generate", help="write a synthetic dataset", add_help=True)
    sp.add_argument("--samples", type=int, help="sample count (default 200)")
    sp.add_argument("--imaging-count", type=int, dest="imaging_count",
                    help="imaging feature count (default 6)")
    sp.add_argument("--groups-count", type=int, dest="groups_count",
                    help="group count (default 10)")
    sp.add_argument("--group-size", type=int, dest="group_size",
                    help="features per group (default 5)")
    sp.add_argument("--overlap", type=float, help="shared fraction between neighbours")
    sp.add_argument("--active-groups", type=int, dest="active_groups",
                    help="planted active groups (default 2)")
    sp.add_argument("--effect-w", type=float, dest="effect_w",
                    help="interaction effect size")
    sp.add_argument("--effect-i", type=float, dest="effect_i",
                    help="imaging effect size")
    sp.add_argument("--effect-g", type=float, dest="effect_g",
                    help="genetic effect size")
    sp.add_argument("--intercept", type=float, help="planted intercept")
    sp.add_argument("--noise", type=float, help="label flip probability")
    sp.add_argument("--seed", type=int, help="generator seed (default 0)")
    sp.add_argument("--out", type=str, help="output directory")
    sp.set_defaults(func=cmd_generate)

    for command_parser in sub.choices.values():
        command_parser.add_argument(
            "--config", type=str, help="key=value settings file"
        )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise ValueError("no command given; expected one of fit, cv, screen, predict, generate")
        if args.config:
            config = _parse_config_file(args.config)
            command_parser = None
            for action in parser._actions:
                if isinstance(action, argparse._SubParsersAction):
                    command_parser = action.choices[args.command]
            _apply_config(args, command_parser, config)
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except SolverFailure as exc:
        print("error: solver: %s" % " ".join(str(exc).split()), file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print("error: input: %s" % " ".join(str(exc).split()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
