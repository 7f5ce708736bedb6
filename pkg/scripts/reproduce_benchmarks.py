"""Long-running accuracy harness on the real datasets (hours on a CPU).

Runs full LOSO on DHG-14/28 and the fixed split on SHREC-14/28 through the
``dgsta train`` command and compares the mean accuracy with target
accuracies. A run counts as reproduced when it lands within
``--margin`` accuracy points. Nothing here is part of the test suite.

    python scripts/reproduce_benchmarks.py --dhg /data/DHG2016 --shrec /data/SHREC2017 --epochs 200
"""
import argparse
import json
from pathlib import Path

from dgsta.cli import main as dgsta_main

REFERENCE = {("dhg", 14): 91.9, ("dhg", 28): 88.0, ("shrec", 14): 94.4, ("shrec", 28): 90.7}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dhg", type=Path)
    ap.add_argument("--shrec", type=Path)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--margin", type=float, default=3.0)
    ap.add_argument("--variant", default="dgsta", choices=["dgsta", "gat", "ssg"])
    ap.add_argument("--out", type=Path, default=Path("runs/reproduce"))
    args = ap.parse_args()

    results = []
    for (kind, gestures), ref in REFERENCE.items():
        root = getattr(args, kind)
        if root is None:
            continue
        out = args.out / f"{kind}{gestures}_{args.variant}"
        code = dgsta_main([
            "train", "--dataset", kind, "--data-root", str(root), "--gestures", str(gestures),
            "--variant", args.variant, "--epochs", str(args.epochs), "--seed", str(args.seed), "--out", str(out),
        ])
        if code != 0:
            results.append({"run": f"{kind}-{gestures}", "exit": code})
            continue
        acc = 100 * json.loads((out / "summary.json").read_text())["mean_accuracy"]
        results.append({"run": f"{kind}-{gestures}", "accuracy": round(acc, 2), "reference": ref,
                        "within_margin": abs(acc - ref) <= args.margin})
    if not results:
        ap.error("give --dhg and/or --shrec")
    for r in results:
        print(json.dumps(r))
    (args.out / "reproduce.json").write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
