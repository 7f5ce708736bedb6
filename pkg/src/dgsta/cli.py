"""Command-line entry point: ``dgsta {train,eval,gradcheck,bench,masks}``.

Randomness: every command derives its generators from ``--seed`` through
``numpy.random.SeedSequence(seed)``. `train` spawns one child per fold and
each fold child spawns (init, train) streams; the train stream drives batch
shuffling, augmentation, frame sampling and dropout. Synthetic data uses
the seed in its own ``--synthetic`` spec.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric/training error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .bench import BenchmarkMismatch, run_benchmark
from .data import Dataset, load_dataset, parse_synthetic_spec, synth_gestures
from .errors import DataError, ParameterError, ShapeError, TrainingError
from .gradcheck import TINY, model_gradcheck
from .graph import HAND_BONES, GraphShape, build_mask, load_bone_list
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .training import AugmentConfig, FoldSpec, confusion_matrix, make_folds, predict_all, run_fold

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
TIMING_FIELDS = ("wall_time_s",)


def load_schema(name: str) -> dict:
    return json.loads(resources.files("dgsta").joinpath(f"schemas/{name}.schema.json").read_text())


def validate(doc: dict, name: str) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema(name))


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("dhg", "shrec", "synthetic"), default=None)
    p.add_argument("--data-root", type=Path, default=None)
    p.add_argument("--synthetic", metavar="SPEC", default=None, help="classes=K,per_class=M,seed=S[,length=L]")
    p.add_argument("--gestures", type=int, choices=(14, 28), default=14)


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=("dgsta", "gat", "ssg"), default="dgsta")
    p.add_argument("--temporal-same-joint", action="store_true")
    p.add_argument("--bones", type=Path, default=None, help="bone list file for the ssg variant")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--feat-dim", type=int, default=128)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--head-dim", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float32")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgsta", description="Spatial-temporal graph attention for skeleton hand gestures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate under a protocol")
    _data_args(p)
    _model_args(p)
    p.add_argument("--protocol", choices=("loso", "fixed_split", "none"), default=None)
    p.add_argument("--folds", default=None, help="comma-separated test subjects to run (loso only)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    aug = p.add_mutually_exclusive_group()
    aug.add_argument("--augment", dest="augment", action="store_true", default=None)
    aug.add_argument("--no-augment", dest="augment", action="store_false")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs/latest"))

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _data_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="all", help="all | train | test | subject=<id>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of all parameter groups")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="check seeds seed..seed+n-1")
    p.add_argument("--variant", choices=("dgsta", "gat", "ssg"), default="dgsta")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("bench", help="time per-edge vs masked attention")
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--N", type=int, default=22)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--H", type=int, default=8)
    p.add_argument("--d-in", type=int, default=128)
    p.add_argument("--mask", choices=("spatial", "temporal", "ssg", "full"), default="spatial")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("masks", help="dump an attention mask")
    p.add_argument("--kind", choices=("spatial", "temporal", "ssg", "full"), default="spatial")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--N", type=int, default=22)
    p.add_argument("--temporal-same-joint", action="store_true")
    p.add_argument("--bones", type=Path, default=None)
    p.add_argument("--format", choices=("ascii", "pgm"), default="ascii")
    p.add_argument("--out", type=Path, default=None)
    return parser


# ---------------------------------------------------------------------------
# commands


def _dataset(args) -> tuple[Dataset, str, dict | None]:
    kind = args.dataset or ("synthetic" if args.synthetic else None)
    if kind is None:
        raise ParameterError("choose --dataset {dhg,shrec,synthetic} or give --synthetic SPEC")
    if kind == "synthetic":
        spec = parse_synthetic_spec(args.synthetic or "")
        kw = {k: v for k, v in spec.items() if k in ("length", "noise")}
        return synth_gestures(spec["classes"], spec["per_class"], rng=spec["seed"], **kw), kind, spec
    if args.data_root is None:
        raise ParameterError(f"--dataset {kind} needs --data-root")
    return load_dataset(kind, args.data_root, args.gestures), kind, None


def _model_config(args, classes: int) -> ModelConfig:
    bones = tuple(load_bone_list(args.bones)) if args.bones else HAND_BONES
    return ModelConfig(
        frames=args.frames,
        feat_dim=args.feat_dim,
        heads=args.heads,
        head_dim=args.head_dim,
        classes=classes,
        dropout=args.dropout,
        variant=args.variant,
        temporal_same_joint_only=args.temporal_same_joint,
        dtype=args.dtype,
        bones=bones,
    )


def cmd_train(args) -> dict:
    start = time.perf_counter()
    data, kind, synth = _dataset(args)
    cfg = _model_config(args, data.classes)
    protocol = args.protocol or {"dhg": "loso", "shrec": "fixed_split", "synthetic": "none"}[kind]
    folds = make_folds(data, protocol)
    if args.folds:
        if protocol != "loso":
            raise ParameterError("--folds only applies to --protocol loso")
        wanted = {int(s) for s in args.folds.split(",")}
        folds = [f for f in folds if f.subject in wanted]
        if not folds:
            raise ParameterError(f"no subjects match --folds {args.folds}")
    use_aug = args.augment if args.augment is not None else kind != "synthetic"
    aug = AugmentConfig(seed=args.seed) if use_aug else None
    if args.epochs < 0:
        raise ParameterError("--epochs must be >= 0")

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).spawn(len(folds))
    rows, ckpts, metrics = [], [], []
    for k, (fold, ss) in enumerate(zip(folds, seeds)):
        csv_name, ckpt_name = f"fold_{k}.csv", f"fold_{k}.ckpt.npz"
        res = run_fold(data, fold, cfg, args.epochs, ss, batch_size=args.batch_size, lr=args.lr, aug=aug, csv_path=out / csv_name)
        save_checkpoint(out / ckpt_name, res.params, cfg, {"fold": k, "test_subject": fold.subject, "protocol": protocol})
        metrics.append(csv_name)
        ckpts.append(ckpt_name)
        rows.append(
            {
                "fold": k,
                "test_subject": fold.subject,
                "n_train": res.n_train,
                "n_test": res.n_test,
                "accuracy": res.accuracy,
                "best_epoch": res.best_epoch,
                "final_accuracy": res.final_accuracy,
                "final_train_accuracy": res.final_train_accuracy,
                "final_loss": res.history[-1].loss if res.history else None,
            }
        )
        print(f"fold {k} (test subject {fold.subject}): accuracy {res.accuracy:.4f}, final train accuracy {res.final_train_accuracy:.4f}", flush=True)

    summary = {
        "config": {
            "model": cfg.to_dict(),
            "augment": dataclasses.asdict(aug) if aug else None,
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "gestures": data.classes,
            "synthetic": synth,
        },
        "seed": args.seed,
        "dataset": kind,
        "protocol": protocol,
        "folds": rows,
        "mean_accuracy": float(np.mean([r["accuracy"] for r in rows])),
        "train_accuracy": float(np.mean([r["final_train_accuracy"] for r in rows])),
        "wall_time_s": time.perf_counter() - start,
        "artifacts": {"checkpoints": ckpts, "metrics": metrics},
    }
    validate(summary, "summary")
    _write_json(out / "summary.json", summary)
    print(f"mean accuracy over {len(rows)} fold(s): {summary['mean_accuracy']:.4f}  -> {out / 'summary.json'}")
    return summary


def _eval_split(data: Dataset, split: str):
    seqs = data.sequences
    if split == "all":
        return seqs
    if split in ("train", "test"):
        return [s for s in seqs if s.split == split]
    if split.startswith("subject="):
        sid = int(split.split("=", 1)[1])
        return [s for s in seqs if s.subject == sid]
    raise ParameterError(f"unknown split {split!r}")


def cmd_eval(args) -> dict:
    params, cfg, _ = load_checkpoint(args.checkpoint)
    data, kind, _ = _dataset(args)
    if cfg.classes != data.classes:
        raise DataError(f"checkpoint predicts {cfg.classes} classes but the data has {data.classes}")
    seqs = _eval_split(data, args.split)
    if not seqs:
        raise DataError(f"split {args.split!r} selects no sequences")
    preds = predict_all(params, cfg, seqs)
    labels = np.array([s.label for s in seqs])
    cm = confusion_matrix(labels, preds, cfg.classes)
    doc = {
        "checkpoint": str(args.checkpoint),
        "dataset": kind,
        "split": args.split,
        "n": len(seqs),
        "accuracy": float(np.mean(preds == labels)),
        "confusion": cm.tolist(),
    }
    validate(doc, "eval")
    print(f"accuracy {doc['accuracy']:.4f} on {doc['n']} sequences")
    for row in cm:
        print(" ".join(f"{v:4d}" for v in row))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(args.out, doc)
    return doc


def cmd_gradcheck(args) -> dict:
    cfg = dataclasses.replace(TINY, variant=args.variant)
    reports = []
    for s in range(args.seed, args.seed + args.seeds):
        rep = model_gradcheck(cfg, seed=s, tol=args.tol)
        print(f"seed {s}:\n{rep.table()}")
        reports.append(rep)
    doc = {"passed": all(r.passed for r in reports), "reports": [r.to_dict() for r in reports]}
    if args.out:
        _write_json(args.out, doc)
    if not doc["passed"]:
        failed = sorted({g for r in reports for g in r.failed_groups})
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
    return doc


def cmd_bench(args) -> dict:
    rep = run_benchmark(args.T, args.N, args.d, args.H, args.d_in, args.reps, args.warmup, args.mask, args.seed)
    doc = rep.to_dict()
    validate(doc, "bench")
    print(rep.summary())
    if args.out:
        out = args.out if args.out.suffix == ".json" else args.out / "bench.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, doc)
    return doc


def cmd_masks(args) -> None:
    if args.bones:
        bones = load_bone_list(args.bones)
    else:
        bones = HAND_BONES if args.N == 22 else ()
    mask = build_mask(args.kind, GraphShape(args.T, args.N), bones=bones, same_joint_only=args.temporal_same_joint)
    if args.format == "pgm":
        payload = mask.to_pgm()
        if args.out is None:
            sys.stdout.buffer.write(payload)
        else:
            args.out.write_bytes(payload)
    else:
        text = mask.to_ascii() + "\n"
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.write_text(text)


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck, "bench": cmd_bench, "masks": cmd_masks}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (ParameterError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, BenchmarkMismatch) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "gradcheck" and not result["passed"]:
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
