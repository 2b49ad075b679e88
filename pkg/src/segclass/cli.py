"""Command-line interface.

Subcommands cover the full pipeline: ``gen`` writes phantom datasets,
``pretrain`` trains and saves a segmentation backbone, ``train`` runs a
single (framework, size, seed) cell, ``eval`` scores a saved model,
``sweep`` runs the whole grid into an output directory, and ``report``
rebuilds aggregate.csv and the charts from an existing records.csv.

Exit codes: 0 success, 2 configuration problems (including bad command
lines), 3 data problems, 4 numeric failures during training.
"""

import argparse
import json
import sys

from . import frameworks, nets, trainer
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import load_dataset, save_dataset
from .errors import ConfigError, DataError, NumericError
from .expconfig import FRAMEWORK_CHOICES, load_experiment
from .phantoms import generate_phantoms
from .sweep import load_records, run_sweep, write_reports

EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


def _parser():
    parser = argparse.ArgumentParser(
        prog="segclass",
        description="Segmentation-pretrained features versus training from scratch, on synthetic phantoms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a phantom dataset file")
    p.add_argument("--config", required=True, help="experiment INI file")
    p.add_argument("--task", choices=("plain", "level", "anomaly"), help="override the config task")
    p.add_argument("--count", type=int, help="sample count (plain task)")
    p.add_argument("--per-class", type=int, help="samples per class (level/anomaly tasks)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset path")

    p = sub.add_parser("pretrain", help="pretrain a segmentation backbone and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--framework", required=True, choices=frameworks.PRETRAINED)
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("train", help="train and score one grid cell")
    p.add_argument("--config", required=True)
    p.add_argument("--framework", required=True, choices=FRAMEWORK_CHOICES)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backbone", help="reuse a pretrained backbone checkpoint")
    p.add_argument("--out", help="save the trained classifier checkpoint here")
    p.add_argument("--record", help="write the cell record JSON here")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="evaluate a saved model on the test pool")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True, help="classifier checkpoint (head or scratch)")
    p.add_argument("--backbone", help="backbone checkpoint (required for head models)")
    p.add_argument("--data", help="score this dataset file instead of the config test pool")
    p.add_argument("--out", help="write the report JSON here instead of stdout")

    p = sub.add_parser("sweep", help="run the full framework/size/seed grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("report", help="rebuild aggregate.csv and charts from records.csv")
    p.add_argument("--dir", required=True, help="sweep output directory")

    return parser


def _cmd_gen(args):
    exp = load_experiment(args.config)
    task = args.task or exp.task.name
    if task == "plain":
        if args.per_class is not None:
            raise ConfigError("--per-class does not apply to the plain task; use --count")
        count = args.count if args.count is not None else exp.data.pretrain_count
        ds = generate_phantoms(exp.phantom, count, task, args.seed, tag="cli-plain")
    else:
        if args.count is not None:
            raise ConfigError(f"--count does not apply to the {task} task; use --per-class")
        per = args.per_class if args.per_class is not None else exp.data.pool_per_class
        classes = exp.phantom.levels if task == "level" else 3
        ds = generate_phantoms(
            exp.phantom, 0, task, args.seed, class_counts=[per] * classes, tag=f"cli-{task}"
        )
    save_dataset(args.out, ds)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


def _cmd_pretrain(args):
    exp = load_experiment(args.config)
    pretrain_ds, _, _ = frameworks.make_datasets(exp)
    net, result, targets = frameworks.pretrain_backbone(
        exp, args.framework, pretrain_ds, log_every=10 if args.verbose else 0
    )
    report = trainer.evaluate_segmentation(net, targets)
    save_checkpoint(args.out, net, epoch=exp.backbone.train.epochs, seed=exp.data.seed)
    print(
        f"pretrained {args.framework} backbone on {len(targets)} samples: "
        f"final loss {result.final_loss:.4f}, train foreground dice {report.dice_foreground:.4f}"
    )
    print(f"saved {args.out}")
    return 0


def _expected_backbone_config(exp, framework):
    num_labels = exp.phantom.num_labels if framework == "manual" else exp.task.kmeans_k
    return nets.SegNetConfig(
        dim=exp.phantom.dim,
        num_labels=num_labels,
        base_channels=exp.backbone.base_channels,
        right_leg_depth=exp.backbone.right_leg_depth,
        dropout_rate=exp.backbone.dropout_rate,
    )


def _cmd_train(args):
    exp = load_experiment(args.config)
    log_every = 10 if args.verbose else 0
    if args.framework in frameworks.PRETRAINED and args.backbone:
        bench = frameworks.prepare(exp, frameworks=(), log_every=log_every)
        net, _ = load_checkpoint(args.backbone, expected_config=_expected_backbone_config(exp, args.framework))
        bench.backbones[args.framework] = net
    else:
        bench = frameworks.prepare(exp, frameworks=(args.framework,), log_every=log_every)
    record = frameworks.run_cell(bench, args.framework, args.per_class, args.seed, keep_model=bool(args.out))
    model = record.pop("_model", None)
    if args.out:
        save_checkpoint(args.out, model, seed=args.seed)
        print(f"saved {args.out}")
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.record:
        with open(args.record, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_eval(args):
    exp = load_experiment(args.config)
    model, meta = load_checkpoint(args.model)
    kind = nets.net_kind(model)
    if kind == "segnet":
        raise ConfigError("eval scores classifiers; got a segmentation backbone checkpoint")
    if kind == "head":
        if not args.backbone:
            raise ConfigError("head checkpoints need --backbone to extract features")
        backbone, _ = load_checkpoint(args.backbone)
        if nets.net_kind(backbone) != "segnet":
            raise ConfigError(f"--backbone must be a segmentation checkpoint, got {nets.net_kind(backbone)}")
        if backbone.config.feature_channels != model.config.in_channels:
            raise ConfigError(
                f"backbone provides {backbone.config.feature_channels} feature channels "
                f"but the head expects {model.config.in_channels}"
            )
        model = nets.ComposedClassifier(backbone, model)
    if args.data:
        ds = load_dataset(args.data)
        ds = frameworks.apply_clahe(ds, exp.task.clahe_tiles, exp.task.clahe_clip)
        if ds.num_classes != exp.num_classes:
            raise DataError(
                f"dataset {args.data} has {ds.num_classes} classes, the experiment has {exp.num_classes}"
            )
    else:
        _, _, ds = frameworks.make_datasets(exp)
    report = trainer.evaluate_classifier(model, ds, batch_size=8)
    payload = {"n_samples": report.n_samples, "metrics": dict(report.metric_rows()), "checkpoint": dict(meta)}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_sweep(args):
    exp = load_experiment(args.config)
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    records = run_sweep(exp, args.out, jobs=args.jobs, log_every=10 if args.verbose else 0)
    cells = len(records) and len({(r["framework"], r["samples_per_class"], r["seed"]) for r in records})
    print(f"swept {cells} cells -> {args.out}")
    return 0


def _cmd_report(args):
    records = load_records(f"{args.dir}/records.csv")
    write_reports(args.dir, records)
    print(f"rebuilt aggregate.csv and charts in {args.dir}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[type(exc)]


if __name__ == "__main__":
    sys.exit(main())
