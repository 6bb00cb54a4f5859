"""Simulated airtime and host compute time of the key exchange.

Airtime comes from the line rates (ultrasound at 1/m, lights at 15 bit/s);
compute time is measured for X25519 plus scrypt on this machine.
"""

import argparse
import time

from sidechan import handshake as hs, pki


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--period", type=float, default=0.020, help="acoustic modulation period m")
    args = ap.parse_args(argv)

    ca = pki.CertificateAuthority.from_seed("dmv", b"timing")
    rng = hs.Drbg(0)
    a = hs.enroll("KX-4821", 0x1A2B3C4D, ca, None, rng.fork("a"))
    b = hs.enroll("TR-0937", 0x0BADF00D, ca, None, rng.fork("b"))
    dht = pki.DhtCopy([pki.DhtEntry(i.primary_key, i.public_key, i.certificate) for i in (a, b)])
    channels = hs.IdealChannels(acoustic_period=args.period)

    t0 = time.perf_counter()
    sims = []
    for seed in range(args.runs):
        res = hs.run_handshake(a, b, channels, {a.plate: dht, b.plate: dht}, {"dmv": ca.public_key},
                               hs.Drbg(seed), follower=b.plate)
        assert res.confirmed
        sims.append(res.elapsed)
    host = (time.perf_counter() - t0) / args.runs

    ac = channels.airtime("acoustic", hs.ULTRASONIC_BITS)
    vi = channels.airtime("visual", hs.TAG_BITS)
    print(f"acoustic phase  {ac:7.3f} s  ({hs.ULTRASONIC_BITS} bits + preamble per direction, full duplex)")
    print(f"visual phase    {vi:7.3f} s  ({hs.TAG_BITS} bits + preamble per direction)")
    print(f"session airtime {max(sims):7.3f} s")
    print(f"host compute    {1000 * host:7.1f} ms per session (both parties, scrypt N=2^14)")


if __name__ == "__main__":
    main()
