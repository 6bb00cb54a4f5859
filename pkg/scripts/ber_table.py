"""Bit error rate per channel configuration, as CSV."""

import argparse

from sidechan import sim


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--payloads", type=int, default=20)
    ap.add_argument("--bits", type=int, default=176)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", default="0,2,4,8,16", help="comma-separated pixel noise values")
    args = ap.parse_args(argv)
    transducers = [(a, d) for a in (0, 15, 30, 45) for d in (0.5, 1.5, 3.0)]
    rows = sim.measure_ber(args.payloads, args.bits, args.seed,
                           pixel_noise=[float(x) for x in args.noise.split(",")], transducers=transducers)
    print(sim.rows_to_csv(rows, sim.BER_HEADER), end="")


if __name__ == "__main__":
    main()
