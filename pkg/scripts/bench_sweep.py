"""Naive-vs-masked attention timing over frame counts and mask kinds.

    python scripts/bench_sweep.py --frames 1 2 4 8 --masks spatial temporal --out runs/bench_sweep.jsonl
"""
import argparse
import json
from pathlib import Path

from dgsta.bench import run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--frames", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--masks", nargs="+", default=["spatial", "temporal", "ssg", "full"])
    ap.add_argument("--joints", type=int, default=22)
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--out", type=Path, default=Path("runs/bench_sweep.jsonl"))
    args = ap.parse_args()

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        print(f"{'T':>3} {'mask':>9} {'naive ms':>10} {'masked ms':>10} {'speedup':>8} {'reduction':>9}")
        for T in args.frames:
            for mask in args.masks:
                rep = run_benchmark(T=T, N=args.joints, reps=args.reps, mask=mask)
                fh.write(json.dumps(rep.to_dict()) + "\n")
                print(f"{T:>3} {mask:>9} {rep.naive.median * 1e3:>10.2f} {rep.masked.median * 1e3:>10.3f} "
                      f"{rep.speedup:>7.1f}x {rep.percent_reduction:>8.1f}%", flush=True)


if __name__ == "__main__":
    main()
