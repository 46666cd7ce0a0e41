"""``fradiag`` command line: gen, train, cv, eval, fuse, diagnose and plot.

Exit status is 0 on success, 1 on a runtime failure (one ``error: ...`` line on
stderr) and 2 on a usage error. Flags may also come from a ``key = value``
config file given with ``--config``; flags on the command line win. Outputs
named without a directory land in ``$FRADIAG_OUTDIR`` when that is set.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    FaultType,
    Group,
    LabeledDataset,
    LabelScheme,
    SchemeKind,
    export_csv,
    read_dataset,
    slice_degree_task,
    write_dataset,
)
from .diagsys import Classifier, PipelineManifest, diagnose_batch, diagnose_stage2_only, fuse, tune_lambda
from .errors import DomainError, FormatError, NumericalError
from .metrics import ConfusionMatrix, accuracy, cc_ed_map, confusion, macro_f1
from .nn import save_model
from .plotting import bode_plot, cced_plot, confusion_plot
from .training import TrainConfig, cross_validate, train
from .winding import generate_group
from .zoo import Architecture, build

log = logging.getLogger("fradiag")

OUTDIR_ENV = "FRADIAG_OUTDIR"


class UsageError(Exception):
    pass


def _out(path: str | None, default: str) -> Path:
    """Resolve an output path; bare names go to ``$FRADIAG_OUTDIR`` if set."""
    p = Path(path if path is not None else default)
    base = os.environ.get(OUTDIR_ENV)
    if base and not p.is_absolute() and p.parent == Path("."):
        p = Path(base) / p
    return p


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} {path!r} does not exist")
    return p


def _scheme(ds: LabeledDataset, task: str, fault_type: str | None) -> tuple[LabeledDataset, LabelScheme]:
    kind = SchemeKind(task)
    if kind is SchemeKind.DEGREE:
        if fault_type is None:
            raise UsageError("--task degree needs --fault-type")
        ft = FaultType.parse(fault_type)
        return slice_degree_task(ds, ft), LabelScheme.degree_scheme(ft)
    return ds, LabelScheme.for_group(ds.group, kind)


def _config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig.seeded(
        args.seed,
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
    )


def _dataset_for_model(model: Classifier, ds: LabeledDataset) -> tuple[LabeledDataset, LabelScheme]:
    scheme = model.scheme
    if scheme.kind is SchemeKind.DEGREE:
        ds = slice_degree_task(ds, scheme.fault_types[0])
    return ds, scheme


# subcommands


def cmd_gen(args: argparse.Namespace) -> None:
    out = _out(args.out, f"g{args.group}.frds")
    ds = generate_group(Group(args.group), args.seed, jobs=args.jobs)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    if args.csv:
        export_csv(ds, _out(args.csv, "dataset.csv"))
    print(f"samples = {len(ds)}")
    print(f"path = {out}")


def cmd_train(args: argparse.Namespace) -> None:
    ds, scheme = _scheme(read_dataset(_existing(args.data, "dataset")), args.task, args.fault_type)
    spec = build(args.arch, scheme.C, args.scale)
    result = train(spec, ds, scheme, _config(args))
    out = _out(args.out, "model.fram")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.params, spec, scheme.classes, out, ds.connection)
    print(f"epochs = {result.epochs}")
    print(f"final_loss = {result.history[-1]:.6f}")
    print(f"path = {out}")


def cmd_cv(args: argparse.Namespace) -> None:
    ds, scheme = _scheme(read_dataset(_existing(args.data, "dataset")), args.task, args.fault_type)
    arch = Architecture.parse(args.arch)
    report = cross_validate(
        lambda C: build(arch, C, args.scale),
        ds,
        scheme,
        k=args.k,
        cfg=_config(args),
        fold_seed=args.seed,
        jobs=args.jobs,
    )
    out = _out(args.out, "cv")
    report.write(out)
    print(f"acc_mean = {report.mean_acc:.6f}")
    print(f"f1_mean = {report.mean_f1:.6f}")
    print(f"path = {out}")


def _evaluate(probs: np.ndarray, truths: np.ndarray, C: int) -> ConfusionMatrix:
    return confusion(np.argmax(probs, axis=1), truths, C)


def cmd_eval(args: argparse.Namespace) -> None:
    model = Classifier.load(_existing(args.model, "model"))
    ds, scheme = _dataset_for_model(model, read_dataset(_existing(args.data, "dataset")))
    cm = _evaluate(model.predict_proba(ds.values), scheme.encode_dataset(ds), scheme.C)
    print(f"acc = {accuracy(cm):.6f}")
    print(f"f1 = {macro_f1(cm):.6f}")
    if args.out:
        out = _out(args.out, "confusion.csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(cm.to_csv(scheme.classes))


def cmd_fuse(args: argparse.Namespace) -> None:
    a = Classifier.load(_existing(args.model_a, "model"))
    b = Classifier.load(_existing(args.model_b, "model"))
    if a.classes != b.classes:
        raise DomainError("fused models must share one class list")
    ds, scheme = _dataset_for_model(a, read_dataset(_existing(args.data, "dataset")))
    truths = scheme.encode_dataset(ds)
    pa, pb = a.predict_proba(ds.values), b.predict_proba(ds.values)
    if args.lam is None:
        val, _ = _dataset_for_model(a, read_dataset(_existing(args.val, "validation dataset")))
        yv = scheme.encode_dataset(val)
        lam, val_acc = tune_lambda(a.predict_proba(val.values), b.predict_proba(val.values), yv)
        print(f"val_acc = {val_acc:.6f}")
    else:
        lam = args.lam
    lines = [f"lambda = {lam!r}"]
    for tag, probs in (("a", pa), ("b", pb), ("fused", fuse(pa, pb, lam))):
        cm = _evaluate(probs, truths, scheme.C)
        lines += [f"acc_{tag} = {accuracy(cm):.6f}", f"f1_{tag} = {macro_f1(cm):.6f}"]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out(args.out, "fusion.txt")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _indices(spec: str | None, n: int) -> list[int]:
    if spec is None:
        return list(range(n))
    idx = [int(tok) for tok in spec.split(",") if tok.strip()]
    bad = [i for i in idx if not 0 <= i < n]
    if bad:
        raise DomainError(f"sample indices {bad} outside [0, {n})")
    return idx


def cmd_diagnose(args: argparse.Namespace) -> None:
    if args.pipeline:
        manifest = PipelineManifest.read(_existing(args.pipeline, "pipeline manifest"))
        stage1_path, stage2_path = manifest.stage1, manifest.stage2
    else:
        stage1_path, stage2_path = args.stage1, args.stage2
    if stage2_path is None or (stage1_path is None and not args.stage2_only):
        raise UsageError("diagnose needs --stage2 and, unless --stage2-only, --stage1 (or --pipeline)")
    stage2 = Classifier.load(_existing(stage2_path, "stage-2 model"))
    ciw = read_dataset(_existing(args.ciw, "CIW dataset"))
    idx = _indices(args.indices, len(ciw))
    if args.stage2_only:
        results = [diagnose_stage2_only(stage2, ciw.sweep(i), ciw.grid) for i in idx]
    else:
        stage1 = Classifier.load(_existing(stage1_path, "stage-1 model"))
        if args.ee is None:
            raise UsageError("diagnose needs --ee unless --stage2-only is given")
        ee = read_dataset(_existing(args.ee, "EE dataset"))
        if len(ee) != len(ciw):
            raise DomainError("EE and CIW datasets must pair up sample by sample")
        if np.any(ee.seeds != ciw.seeds):
            raise DomainError("EE and CIW datasets do not describe the same windings")
        results = diagnose_batch(stage1, stage2, [ee.sweep(i) for i in idx], [ciw.sweep(i) for i in idx], ee.grid)
        if args.manifest:
            m = PipelineManifest(str(stage1_path), str(stage2_path), ee.grid.grid_id)
            m.write(_out(args.manifest, "pipeline.txt"))
    rows = ["index,truth,verdict,conflict,stage2_invoked"]
    hits = 0
    for i, d in zip(idx, results):
        truth = ciw.label(i)
        hits += (d.verdict.fault_type, d.verdict.degree) == (truth.fault_type, truth.degree)
        verdict = "Healthy" if d.healthy else str(d.verdict)
        rows.append(f"{i},{truth},{verdict},{int(d.conflict)},{int(d.stage2 is not None)}")
    out = _out(args.out, "diagnosis.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    if len(results) == 1:
        sys.stdout.write(results[0].to_text())
    print(f"samples = {len(results)}")
    print(f"exact_match = {hits / max(len(results), 1):.6f}")
    print(f"conflicts = {sum(d.conflict for d in results)}")
    print(f"path = {out}")


def cmd_plot(args: argparse.Namespace) -> None:
    stem = _out(args.out, args.kind)
    if args.kind == "confusion":
        cm, classes = ConfusionMatrix.from_csv(_existing(args.confusion, "confusion CSV").read_text())
        paths = confusion_plot(cm, classes, stem)
    else:
        if args.data is None:
            raise UsageError(f"--kind {args.kind} needs --data")
        ds = read_dataset(_existing(args.data, "dataset"))
        if args.kind == "bode":
            idx = _indices(args.indices or "0", len(ds))
            paths = bode_plot([ds.sweep(i) for i in idx], stem, [f"#{i} {ds.label(i)}" for i in idx])
        else:
            select = None
            if args.fault_type:
                ft = FaultType.parse(args.fault_type)
                select = lambda lab: lab.fault_type is ft  # noqa: E731
            paths = cced_plot(cc_ed_map(ds, select=select), stem)
    for p in paths:
        print(f"path = {p}")


# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--config", help="key = value file supplying defaults for any flag")
    p.add_argument("-v", "--verbose", action="store_true")


def _training_flags(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--arch", default="fra-diagnoser", help="architecture name, case-insensitive")
    p.add_argument("--task", choices=[k.value for k in SchemeKind], default="type")
    p.add_argument("--fault-type", help="fault type of a degree task, e.g. FB")
    p.add_argument("--scale", type=float, default=0.1, help="hidden width multiplier (default 0.1)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--out", help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fradiag", description="FRA fault diagnosis of transformer windings")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", help="simulate one dataset group")
    p.add_argument("--group", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--out", help="dataset file to write")
    p.add_argument("--csv", help="also export the dataset as CSV")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model on a whole dataset")
    _training_flags(p, "model file to write")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _training_flags(p, "report directory")
    p.add_argument("--k", type=int, default=10)
    _common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("eval", help="score a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="confusion CSV to write")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="weighted fusion of two models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--data", required=True, help="dataset to score")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambda", dest="lam", type=float, help="fixed weight of model A")
    g.add_argument("--val", help="validation dataset for tuning the weight")
    p.add_argument("--out", help="report file to write")
    _common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("diagnose", help="two-stage EE/CIW diagnosis")
    p.add_argument("--stage1", help="EE type model")
    p.add_argument("--stage2", help="CIW type-and-degree model")
    p.add_argument("--pipeline", help="pipeline manifest naming both models")
    p.add_argument("--ee", help="EE dataset")
    p.add_argument("--ciw", required=True, help="CIW dataset paired with --ee")
    p.add_argument("--indices", help="comma-separated sample indices (default all)")
    p.add_argument("--stage2-only", action="store_true", help="skip the EE screening stage")
    p.add_argument("--manifest", help="write the pipeline manifest here")
    p.add_argument("--out", help="diagnosis CSV to write")
    _common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("plot", help="render a figure as SVG plus CSV")
    p.add_argument("--kind", choices=["bode", "confusion", "cced"], required=True)
    p.add_argument("--data", help="dataset (bode, cced)")
    p.add_argument("--indices", help="sample indices to draw (bode; default 0)")
    p.add_argument("--fault-type", help="restrict a CC-ED map to one fault type")
    p.add_argument("--confusion", help="confusion CSV (confusion)")
    p.add_argument("--out", help="output stem; .svg and .csv are appended")
    _common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def _read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc.strerror}") from None
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config line {n} is not 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Install config-file values as defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    choices = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in choices), None)
    if command is None:
        return
    subparser = choices[command]
    actions = {a.dest: a for a in subparser._actions}
    for key, raw in _read_config(known.config).items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"config key {key!r} is not a flag of {command}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        else:
            value = action.type(raw) if action.type else raw
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config value {raw!r} not allowed for {key}")
        subparser.set_defaults(**{key: value})
        action.required = False


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fradiag: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fradiag: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, FormatError, NumericalError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
