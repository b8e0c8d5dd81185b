"""Command-line entry point: ``nln <command> [options]``.

Datasets come from ``--data FILE --schema FILE`` or from ``--dataset NAME``
for the generated benchmarks. Errors print a category and exit nonzero;
bad flags exit with status 2.
"""

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .boolnet import SHIPPED, generate_transitions, load_truth
from .data import MISSING_TOKEN, load_csv, read_csv
from .datasets import GENERATED
from .errors import NlnError, PreconditionError
from .harness import NlnPipeline, evaluate_model, kfold_cv, subsample_ratio
from .metrics import fit_threshold
from .model import build_model, load_model, save_model
from .oracle import assumption_gap_experiment, summarize_gap
from .postprocess import (STRATEGIES, IncrementalEvaluator, adjust_biases, discretize, eliminate_included_rules,
                          merge_models, postprocess, prune, retrain_continuous)
from .program import (coverage_breakdown, coverage_csv, coverage_table, extract_program, render_graph,
                      render_text)
from .training import TrainConfig, fit

STAGES = ("all", "discretize", "retrain", "prune", "adjust", "eliminate", "threshold")


def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--schema", help="schema file describing the CSV columns")
    g.add_argument("--dataset", choices=sorted(GENERATED), help="generated benchmark instead of --data")
    g.add_argument("--missing-token", default=MISSING_TOKEN, help="token marking a missing value (default ?)")


def _add_training(p):
    g = p.add_argument_group("training")
    g.add_argument("--rules", type=int, default=128, help="rule modules (default 128)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epochs", type=int, default=2000, help="maximum epochs")
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--lr", type=float, default=3e-3, help="ADAM learning rate")
    g.add_argument("--patience", type=int, default=200, help="epochs without validation improvement")
    g.add_argument("--val-fraction", type=float, default=0.2, help="validation share; 0 trains on everything")
    g.add_argument("--lambda-nonempty", type=float, default=0.1)
    g.add_argument("--lambda-sparsity", type=float, default=1e-3)
    g.add_argument("--dichotomies", type=int, default=32, help="fuzzy dichotomies per continuous feature")


def _config(args, **extra):
    return TrainConfig(lambda_nonempty=args.lambda_nonempty, lambda_sparsity=args.lambda_sparsity,
                       learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                       patience=args.patience, validation_fraction=args.val_fraction, seed=args.seed, **extra)


def _dataset(args, schema=None):
    if args.dataset:
        return GENERATED[args.dataset]()
    if not args.data:
        raise PreconditionError("give --data with --schema, or --dataset")
    if schema is not None:
        # a model's own schema carries the ranges fixed at training time
        return read_csv(args.data, schema, args.missing_token)
    if not args.schema:
        raise PreconditionError("--schema is required with --data")
    return load_csv(args.data, args.schema, args.missing_token)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_train(args):
    data = _dataset(args).with_ranges()
    model = build_model(data.schema, n_rules=args.rules, seed=args.seed, n_dichotomies=args.dichotomies)
    t0 = time.perf_counter()
    model, history = fit(model, data, _config(args, log_path=args.log))
    model.meta.update(seed=args.seed, epochs=len(history), seconds=round(time.perf_counter() - t0, 3))
    save_model(model, args.out)
    last = history[-1] if history else {}
    print(f"trained {len(history)} epochs, train loss {last.get('train_total', float('nan')):.6g}, "
          f"model written to {args.out}")


def _changed(before, after):
    if before.n_rules != after.n_rules or [a.shape for _, a, _, _ in before.param_specs()] != \
            [a.shape for _, a, _, _ in after.param_specs()]:
        return None
    return int(sum(np.sum(a != b) for (_, a, _, _), (_, b, _, _) in zip(before.param_specs(), after.param_specs())))


def cmd_postprocess(args):
    model = load_model(args.model)
    data = _dataset(args, model.schema)
    before = load_model(args.model)
    sse0 = IncrementalEvaluator(model, data).sse
    t0 = time.perf_counter()
    report = {"stage": args.stage, "strategy": args.strategy}
    if args.stage == "all":
        model, rep = postprocess(model, data, args.strategy, None, args.retrain_epochs)
        report.update(rep)
    elif args.stage == "discretize":
        discretize(model, data, args.strategy)
    elif args.stage == "retrain":
        retrain_continuous(model, data, None, args.retrain_epochs)
    elif args.stage == "prune":
        model = prune(model, data)
    elif args.stage == "adjust":
        adjust_biases(model, data)
    elif args.stage == "eliminate":
        report["eliminated"] = len(eliminate_included_rules(model, data))
    elif args.stage == "threshold":
        fit_threshold(model, data)
    report.update(loss_before=sse0, loss_after=IncrementalEvaluator(model, data).sse,
                  rules_before=before.n_rules, rules_after=model.n_rules, weights_changed=_changed(before, model),
                  seconds=round(time.perf_counter() - t0, 3))
    save_model(model, args.out)
    text = "".join(f"{k}: {v}\n" for k, v in report.items())
    _write(args.report, text)


def cmd_eval(args):
    model = load_model(args.model)
    data = _dataset(args, model.schema)
    if model.task != "multiclass" and model.threshold is None:
        raise PreconditionError("model has no decision threshold; run 'postprocess --stage threshold' first")
    metrics = evaluate_model(model, data) if model.is_discretized() else _plain_metrics(model, data)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(metrics.keys())
            w.writerow(metrics.values())
    for k, v in metrics.items():
        print(f"{k}: {v}")


def _plain_metrics(model, data):
    from .metrics import f1_and_accuracy
    from .model import predict

    return f1_and_accuracy(predict(model, model.predict_proba(data.values)), data.y, model.task)


def cmd_export(args):
    model = load_model(args.model)
    if args.format in ("coverage", "coverage-csv"):
        if not (args.data or args.dataset):
            raise PreconditionError("coverage export needs --data or --dataset")
        cols, rows = coverage_breakdown(model, _dataset(args, model.schema))
        _write(args.out, coverage_table(cols, rows) if args.format == "coverage" else coverage_csv(cols, rows))
        return
    data = _dataset(args, model.schema) if (args.data or args.dataset) else None
    program = extract_program(model, data)
    if args.format == "dot":
        _write(args.out, render_graph(program))
    else:
        _write(args.out, render_text(program, exact=args.format == "exact"))


def cmd_boolbench(args):
    truth = load_truth(args.program)
    full = generate_transitions(truth)
    data = subsample_ratio(full, args.ratio, args.seed)
    config = TrainConfig(validation_fraction=0.0, batch_size=args.batch_size, learning_rate=args.lr,
                         max_epochs=args.epochs)
    pipe = NlnPipeline(n_rules=args.rules, config=config, step_budget=args.step_budget, truth=truth)
    res = kfold_cv(data, args.folds, args.repeats, pipe, seed=args.seed, threads=args.threads)
    agg = res.aggregate
    n_vars = len(truth.schema.features)
    row = {"program": args.program, "variables": n_vars, "truth_rules": len(truth.rules), "ratio": args.ratio,
           "rows": len(data), "seed": args.seed, "accuracy": 100 * agg["accuracy"],
           "row_accuracy": 100 * agg["row_accuracy"], "recovered": agg["recovered"], "excess": agg["excess"],
           "rules": agg["rules"], "mean_rule_size": agg["mean_rule_size"]}
    _emit_row(row, args.csv)


def _emit_row(row, path):
    head = " ".join(f"{k}={_fmt(v)}" for k, v in row.items())
    print(head)
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(row.keys())
            w.writerow(row.values())


def _fmt(v):
    return f"{v:.2f}" if isinstance(v, float) else str(v)


def cmd_crossval(args):
    data = _dataset(args)
    pipe = NlnPipeline(n_rules=args.rules, config=_config(args), strategy=args.strategy,
                       retrain_epochs=args.retrain_epochs, n_dichotomies=args.dichotomies)
    res = kfold_cv(data, args.folds, args.repeats, pipe, seed=args.seed, threads=args.threads)
    if args.folds_csv:
        keys = [k for k in res.folds[0] if k != "model"]
        with open(args.folds_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
            w.writeheader()
            w.writerows(res.folds)
    agg = res.aggregate
    row = {"folds": args.folds, "repeats": args.repeats, "seed": args.seed, "f1": 100 * agg["f1"],
           "f1_std": 100 * agg["f1_std"], "accuracy": 100 * agg["accuracy"], "rules": agg["rules"],
           "mean_rule_size": agg["mean_rule_size"]}
    _emit_row(row, args.csv)


def cmd_merge(args):
    models = [load_model(p) for p in args.models]
    data = _dataset(args, models[0].schema)
    merged = merge_models(models, data)
    save_model(merged, args.out)
    print(f"merged {len(models)} models into {merged.n_rules} rules, written to {args.out}")


def cmd_oracle(args):
    rows = assumption_gap_experiment(args.width, args.depth, args.trials, args.seed, args.points, args.csv)
    print("depth loss_exact loss_factorized")
    for d, (le, lf) in summarize_gap(rows).items():
        print(f"{d} {le:.6f} {lf:.6f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="nln", description="Neural logic networks: learn IF-THEN rule sets.")
    parser.add_argument("--version", action="version", version=f"nln {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_data(p)
    _add_training(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="CSV training history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("postprocess", help="discretize, prune and adjust a trained model")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=STAGES, default="all")
    p.add_argument("--strategy", choices=STRATEGIES, default="descending_selection")
    p.add_argument("--retrain-epochs", type=int, default=100)
    p.add_argument("--report", help="text report file (default stdout)")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="metrics of a model on a dataset")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--csv", help="write the metrics as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write the logic program of a discretized model")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--format", choices=("text", "exact", "dot", "coverage", "coverage-csv"), default="text")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("boolbench", help="Boolean network discovery from state transitions")
    p.add_argument("--program", required=True, help=f"shipped program ({', '.join(SHIPPED)}) or file")
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rules", type=int, default=128)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--step-budget", type=int, default=15000, help="approximate optimizer steps per fold")
    p.add_argument("--threads", type=int, help="parallel folds (default NLN_THREADS or 1)")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_boolbench)

    p = sub.add_parser("crossval", help="k-fold cross-validation of the full pipeline")
    _add_data(p)
    _add_training(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--strategy", choices=STRATEGIES, default="descending_selection")
    p.add_argument("--retrain-epochs", type=int, default=100)
    p.add_argument("--threads", type=int)
    p.add_argument("--csv", help="aggregate row as CSV")
    p.add_argument("--folds-csv", help="per-fold metrics as CSV")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("merge", help="merge post-processed models and re-prune on a dataset")
    p.add_argument("--models", nargs="+", required=True)
    _add_data(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("oracle", help="exact versus factorized inference on random networks")
    p.add_argument("--width", type=int, default=3)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NlnError as exc:
        print(f"nln: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"nln: io error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
