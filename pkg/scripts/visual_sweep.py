"""Transition mistakes and decode time over exposure, lookahead and downsample.

Writes a CSV (stdout by default) and prints, per lookahead, the mean
mistakes across seeds so the effect of transient frames is easy to read.
"""

import argparse
import csv
import sys
from collections import defaultdict

import numpy as np

from sidechan import visual

EXPOSURES = [f / 30 for f in (0.2, 0.4, 0.6, 0.8, 1.0)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--bits", type=int, default=176)
    ap.add_argument("--noise", type=float, default=40.0)
    ap.add_argument("--locate-noise", type=float, default=1.5)
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args(argv)

    link = visual.VisualLink(cfg=visual.CameraConfig(noise=args.noise, locate_noise=args.locate_noise),
                             tail_frames=4)
    rows = []
    for seed in range(args.seeds):
        payload = np.random.default_rng(seed).integers(0, 2, args.bits)
        for r in visual.sweep_configurations(link, payload, EXPOSURES, seed=seed):
            rows.append({"seed": seed, **r})

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=["seed", "exposure", "lookahead", "downsample", "mistakes", "time_s"])
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()

    by = defaultdict(list)
    for r in rows:
        by[(r["lookahead"], r["downsample"])].append((r["mistakes"], r["time_s"]))
    print("lookahead downsample mean_mistakes mean_time_ms", file=sys.stderr)
    for (a, d), v in sorted(by.items()):
        m, t = np.mean(v, axis=0)
        print(f"{a:9d} {d:10d} {m:13.2f} {1000 * t:12.1f}", file=sys.stderr)


if __name__ == "__main__":
    main()
