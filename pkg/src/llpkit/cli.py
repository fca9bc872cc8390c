"""Command-line front end: synth, bag, train, eval, sweep.

Every command is batch-style and reproducible: the train and sweep
commands write a manifest (resolved config, dataset content hash, seed,
tool version, output paths) before any training starts, and rerunning with
the same flags produces identical output files except for wall-clock
columns.  Exit codes: 0 success, 1 numerical or I/O failure, 2 usage
error.  Errors print a single ``error: ...`` line on stderr.

Relative output paths resolve against the ``LLPKIT_OUT`` environment
variable when it is set.
"""

import argparse
import hashlib
import json
import os
import sys
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__, data, network, objectives, training
from .errors import LlpError, NumericalError, UsageError


def _out_path(raw) -> Path:
    path = Path(raw)
    root = os.environ.get("LLPKIT_OUT")
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_int_list(text, flag) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"{flag} expects a comma-separated integer list") from exc
    if not values:
        raise UsageError(f"{flag} is empty")
    return values


def _train_config(args, method=None) -> training.TrainConfig:
    return training.TrainConfig(
        method=method or args.method,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        patience=args.patience,
        rel_tol=args.rel_tol,
        seed=args.seed,
        target_refresh_interval=args.refresh,
        threshold=args.threshold,
        hidden_widths=tuple(_parse_int_list(args.hidden, "--hidden")),
        threads=args.threads,
    )


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _manifest(command, config, dataset_path, outputs) -> dict:
    resolved = asdict(config)
    resolved["hidden_widths"] = list(config.hidden_widths)
    return {
        "tool": "llpkit",
        "version": __version__,
        "command": command,
        "config": resolved,
        "seed": config.seed,
        "dataset": {
            "path": str(dataset_path),
            "sha256": _sha256(dataset_path),
        },
        "outputs": {name: str(p) for name, p in outputs.items()},
    }


def cmd_synth(args) -> int:
    spec = data.SyntheticSpec(
        num_instances=args.n,
        feature_dim=args.dim,
        class_separation=args.sep,
        positive_prior=args.prior,
        seed=args.seed,
    )
    instances = data.generate_synthetic(spec)
    out = _out_path(args.out)
    data.save_instances_csv(out, instances)
    positives = sum(inst.true_label for inst in instances)
    print(
        f"wrote {len(instances)} instances ({positives} positive, "
        f"{len(instances) - positives} negative) to {out}"
    )
    return 0


def cmd_bag(args) -> int:
    instances = data.load_instances_csv(args.input)
    dataset = data.make_bags(instances, args.min_size, args.max_size, args.seed)
    out = _out_path(args.out)
    data.save_bags_csv(out, dataset)
    histogram = Counter(bag.size for bag in dataset.bags)
    positives = sum(bag.positive_count for bag in dataset.bags)
    total = dataset.num_instances
    print(f"bags: {dataset.num_bags}")
    print(
        "size histogram: "
        + " ".join(f"{size}:{histogram[size]}" for size in sorted(histogram))
    )
    print(f"positives: {positives}/{total} ({100.0 * positives / total:.1f}%)")
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    dataset = data.load_bags_csv(args.bags)
    config = _train_config(args)
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.folds is not None:
        outputs = {"summary": out_dir / "cv_summary.json"}
        for fold in range(args.folds):
            outputs[f"curve_fold{fold}"] = out_dir / f"curve_fold{fold}.csv"
    else:
        outputs = {
            "checkpoint": out_dir / "checkpoint.json",
            "curve": out_dir / "curve.csv",
        }
    manifest = _manifest("train", config, args.bags, outputs)
    _write_json(out_dir / "manifest.json", manifest)

    if args.folds is not None:
        result = training.cross_validate(dataset, config, k=args.folds)
        _write_json(outputs["summary"], result.summary())
        for fr in result.folds:
            fr.record.write_csv(outputs[f"curve_fold{fr.fold}"])
        print(
            f"{config.method}: {len(result.folds)}-fold accuracy "
            f"{result.mean_accuracy:.6f} +- {result.std_accuracy:.6f}"
        )
        return 0

    eval_instances = (
        data.load_instances_csv(args.eval_data) if args.eval_data else None
    )
    params, record = training.train(dataset, config, eval_instances=eval_instances)
    network.save_checkpoint(outputs["checkpoint"], params)
    record.write_csv(outputs["curve"])
    last = record.rows[-1]
    line = f"{config.method}: {last.epoch} epochs, final loss {last.loss:.6f}"
    if last.log_likelihood is not None:
        line += f", log-likelihood {last.log_likelihood:.6f}"
    if last.test_accuracy is not None:
        line += f", test accuracy {last.test_accuracy:.6f}"
    print(line)
    print(f"wrote {outputs['checkpoint']} and {outputs['curve']}")
    return 0


def cmd_eval(args) -> int:
    params, _ = network.load_checkpoint(args.checkpoint)
    instances = data.load_instances_csv(args.data)
    if any(inst.true_label is None for inst in instances):
        raise UsageError(f"{args.data} has no label column")
    feature_dim = instances[0].features.size
    if feature_dim != params.input_dim:
        raise UsageError(
            f"checkpoint expects {params.input_dim} features, data has "
            f"{feature_dim}"
        )
    metrics = training.evaluate(
        params, instances, objectives.InferenceConfig(args.threshold)
    )
    payload = metrics.as_dict()
    payload["accuracy"] = round(payload["accuracy"], 6)
    print(f"accuracy: {metrics.accuracy:.6f}")
    print(
        f"confusion: tp={metrics.true_positive} fp={metrics.false_positive} "
        f"tn={metrics.true_negative} fn={metrics.false_negative}"
    )
    if args.out:
        out = _out_path(args.out)
        _write_json(out, payload)
        print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    instances = data.load_instances_csv(args.data)
    if any(inst.true_label is None for inst in instances):
        raise UsageError(f"{args.data} has no label column")
    sizes = _parse_int_list(args.sizes, "--sizes")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods is empty")
    for method in methods:
        if method not in training.METHODS:
            raise UsageError(
                f"unknown method {method!r}, expected one of {training.METHODS}"
            )
    if "mle" in methods:
        oversized = [s for s in sizes if s > args.mle_max_size]
        if oversized:
            raise UsageError(
                f"bag size {oversized[0]} exceeds the mle capacity guard "
                f"({args.mle_max_size}); raise --mle-max-size to override"
            )

    out = _out_path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    base = _train_config(args, method=methods[0])
    manifest = _manifest("sweep", base, args.data, {"results": out})
    manifest["sizes"] = sizes
    manifest["methods"] = methods
    manifest["folds"] = args.folds
    _write_json(out.with_name(out.name + ".manifest.json"), manifest)

    lines = ["method,bag_size,mean_accuracy,std"]
    for method in methods:
        config = replace(base, method=method)
        for row in training.bag_size_sweep(instances, sizes, config, k=args.folds):
            lines.append(
                f"{method},{row.bag_size},{row.mean_accuracy!r},"
                f"{row.std_accuracy!r}"
            )
            print(
                f"{method} size {row.bag_size}: accuracy "
                f"{row.mean_accuracy:.6f} +- {row.std_accuracy:.6f}"
            )
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def _add_train_flags(parser) -> None:
    parser.add_argument("--epochs", type=int, default=200, help="epoch cap")
    parser.add_argument("--batch-size", type=int, default=64,
                        help="instances (mle/supervised) or bags (amle/dllp)")
    parser.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--patience", type=int, default=10,
                        help="early-stop patience in epochs")
    parser.add_argument("--rel-tol", type=float, default=1e-5,
                        help="relative improvement threshold for early stop")
    parser.add_argument("--refresh", type=int, default=1,
                        help="epochs between soft-target refreshes (mle)")
    parser.add_argument("--threshold", type=float, default=0.5,
                        help="decision threshold")
    parser.add_argument("--hidden", default="32,32",
                        help="comma-separated hidden layer widths")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel fold workers (results are identical)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llpkit",
        description="Train instance classifiers from bag-level positive counts.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate labeled Gaussian-blob instances")
    synth.add_argument("--n", type=int, required=True, help="instance count")
    synth.add_argument("--dim", type=int, default=2, help="feature dimension")
    synth.add_argument("--sep", type=float, default=4.0,
                       help="distance between class means")
    synth.add_argument("--prior", type=float, default=0.5,
                       help="positive-class probability")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="instance CSV to write")
    synth.set_defaults(func=cmd_synth)

    bag = sub.add_parser("bag", help="group labeled instances into counted bags")
    bag.add_argument("--in", dest="input", required=True, help="instance CSV")
    bag.add_argument("--min", dest="min_size", type=int, default=1,
                     help="smallest bag size")
    bag.add_argument("--max", dest="max_size", type=int, default=12,
                     help="largest bag size")
    bag.add_argument("--seed", type=int, default=0)
    bag.add_argument("--out", required=True, help="bag CSV to write")
    bag.set_defaults(func=cmd_bag)

    train = sub.add_parser("train", help="train a classifier on a bag file")
    train.add_argument("--bags", required=True, help="bag CSV")
    train.add_argument("--method", required=True, choices=training.METHODS)
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--folds", type=int, default=None,
                       help="run k-fold cross-validation instead of one fit")
    train.add_argument("--eval", dest="eval_data", default=None,
                       help="labeled instance CSV scored after every epoch")
    _add_train_flags(train)
    train.set_defaults(func=cmd_train)

    evalp = sub.add_parser("eval", help="score a checkpoint on labeled instances")
    evalp.add_argument("--checkpoint", required=True)
    evalp.add_argument("--data", required=True, help="labeled instance CSV")
    evalp.add_argument("--threshold", type=float, default=0.5)
    evalp.add_argument("--out", default=None, help="metrics JSON to write")
    evalp.set_defaults(func=cmd_eval)

    sweep = sub.add_parser("sweep", help="cross-validated accuracy per bag size")
    sweep.add_argument("--data", required=True, help="labeled instance CSV")
    sweep.add_argument("--sizes", required=True, help="comma-separated bag sizes")
    sweep.add_argument("--methods", required=True,
                       help="comma-separated subset of " + ",".join(training.METHODS))
    sweep.add_argument("--out", required=True, help="results CSV to write")
    sweep.add_argument("--folds", type=int, default=10)
    sweep.add_argument("--mle-max-size", type=int, default=64,
                       help="largest bag size allowed for mle")
    _add_train_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LlpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
