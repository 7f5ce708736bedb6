"""Plot loss and accuracy curves from the fold_<k>.csv files of a train run.

Needs matplotlib (``pip install .[plot]``).

    python scripts/plot_metrics.py runs/latest --out runs/latest/curves.png
"""
import argparse
import csv
from pathlib import Path


def read_csv(path: Path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in ("epoch", "loss", "train_acc", "test_acc")}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = sorted(args.run_dir.glob("fold_*.csv"))
    if not files:
        ap.error(f"no fold_*.csv in {args.run_dir}")
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    for f in files:
        m = read_csv(f)
        ax_loss.plot(m["epoch"], m["loss"], lw=1, label=f.stem)
        ax_acc.plot(m["epoch"], m["test_acc"], lw=1, label=f"{f.stem} held-out")
        ax_acc.plot(m["epoch"], m["train_acc"], lw=1, ls="--", label=f"{f.stem} train")
    ax_loss.set(xlabel="epoch", ylabel="training loss")
    ax_acc.set(xlabel="epoch", ylabel="accuracy", ylim=(0, 1.02))
    if len(files) <= 4:
        ax_acc.legend(fontsize=7)
    fig.tight_layout()
    out = args.out or args.run_dir / "curves.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
