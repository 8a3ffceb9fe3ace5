#!/usr/bin/env python3
"""Label-ratio sweep: how probe accuracy moves as more labels are revealed.

Runs pretraining for one loss kind across a list of label ratios and seeds
on the default synthetic dataset, then prints the seed-mean linear/kNN
table and writes the full grid as JSON.

Example:
    python scripts/alpha_sweep.py --alphas 0,0.25,0.5,0.75,1 --seeds 0,1,2
"""

import argparse
import json
import sys
import time
from pathlib import Path

from conlab.config import RunConfig
from conlab.experiments import compare_grid, compare_to_dict, compare_to_text
from conlab.pipeline import generate_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--loss", default="unicon")
    ap.add_argument("--alphas", default="0,0.5,1")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--out", default="out/alpha_sweep.json")
    args = ap.parse_args(argv)

    cfg = RunConfig()
    dataset = generate_dataset(cfg.dataset)
    alphas = [float(a) for a in args.alphas.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]

    t0 = time.time()

    def progress(kind, alpha, seed, res):
        print(
            f"  {kind} alpha={alpha:g} seed={seed}: linear={res.linear_top1:.4f}",
            flush=True,
        )

    result = compare_grid(dataset, cfg, [args.loss], alphas, seeds, progress)
    print()
    print(compare_to_text(result))
    print(f"({time.time() - t0:.0f}s)")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(compare_to_dict(result), indent=2, sort_keys=True))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
