"""Compare how fast each variant fits the synthetic 3-class set.

Prints one row per (seed, variant): epochs to 95% train accuracy, final train
accuracy and wall time, and writes the same rows to a CSV.

    python scripts/overfit_ablation.py --seeds 5 --variants dgsta gat ssg --out runs/overfit.csv
"""
import argparse
import csv
import time
from pathlib import Path

from dgsta.data import synth_gestures
from dgsta.network import ModelConfig, init_params
from dgsta.training import AugmentConfig, FoldStreams, fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--variants", nargs="+", default=["dgsta", "gat"], choices=["dgsta", "gat", "ssg"])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    ap.add_argument("--augment", action="store_true")
    ap.add_argument("--target", type=float, default=1.0, help="stop once train accuracy reaches this")
    ap.add_argument("--out", type=Path, default=Path("runs/overfit.csv"))
    args = ap.parse_args()

    data = synth_gestures(3, args.per_class, rng=args.data_seed)
    aug = AugmentConfig() if args.augment else None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "variant", "epoch_to_95", "final_train_acc", "epochs_run", "seconds"])
        for seed in range(args.seeds):
            for variant in args.variants:
                cfg = ModelConfig(classes=3, variant=variant, dtype=args.dtype)
                streams = FoldStreams.from_seed(seed)
                params = init_params(cfg, streams.init)
                t0 = time.perf_counter()
                hist = fit(params, cfg, data.sequences, None, args.epochs, streams.train, aug=aug,
                           callback=lambda r: r.train_acc >= args.target)
                e95 = next((h.epoch for h in hist if h.train_acc >= 0.95), "")
                row = [seed, variant, e95, hist[-1].train_acc, len(hist), round(time.perf_counter() - t0, 1)]
                w.writerow(row)
                fh.flush()
                print(*row, sep="\t", flush=True)


if __name__ == "__main__":
    main()
