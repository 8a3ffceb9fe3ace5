#!/usr/bin/env python3
"""Loss-family comparison at full supervision.

Trains every label-aware loss kind (plus the single-positive baseline) at
alpha = 1 under identical seeds and schedule, and prints the seed-mean
linear-probe table. The alpha = 0 column rides along as the standing
single-positive equivalence check.

Example:
    python scripts/loss_family.py --seeds 0,1,2
"""

import argparse
import json
import sys
import time
from pathlib import Path

from conlab.config import RunConfig
from conlab.experiments import compare_grid, compare_to_dict, compare_to_text
from conlab.losses import LOSS_KINDS
from conlab.pipeline import generate_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--losses", default=",".join(LOSS_KINDS),
        help="comma-separated loss kinds",
    )
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--out", default="out/loss_family.json")
    args = ap.parse_args(argv)

    cfg = RunConfig()
    dataset = generate_dataset(cfg.dataset)
    losses = [tok for tok in args.losses.split(",") if tok]
    seeds = [int(s) for s in args.seeds.split(",")]

    t0 = time.time()

    def progress(kind, alpha, seed, res):
        print(
            f"  {kind} alpha={alpha:g} seed={seed}: linear={res.linear_top1:.4f}",
            flush=True,
        )

    result = compare_grid(dataset, cfg, losses, [1.0], seeds, progress)
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
