"""Cost of pre-registering every salt value for one plate (the bricking attack)."""

import argparse
from decimal import Decimal

from sidechan import pki


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fee", default="0.09", help="insertion fee in USD")
    ap.add_argument("--max-bits", type=int, default=32)
    args = ap.parse_args(argv)
    fee = Decimal(args.fee)
    print(f"{'salt bits':>9}  {'entries':>14}  cost")
    for bits in range(0, args.max_bits + 1, 4):
        print(f"{bits:9d}  {1 << bits:14,d}  {pki.format_usd(pki.brick_attack_cost(bits, fee))}")


if __name__ == "__main__":
    main()
