"""Command-line front end.

``sidechan simulate ...``, ``sidechan sweep ...`` and ``sidechan pki ...``;
the same groups are also installed as the stand-alone commands
``simulate``, ``sweep`` and ``pki``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from . import acoustic, codec, handshake as hs, pki, sim, visual
from .errors import SidechanError

SWEEP_HEADER = ("exposure", "lookahead", "downsample", "mistakes", "time_s")
DEFAULT_EXPOSURES = tuple(round(f / 30, 6) for f in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _salt(text: str) -> int:
    return int(text, 0)


def _out(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# -- simulate -------------------------------------------------------------------

def _cmd_run(args) -> int:
    result = sim.run_scenario(args.scenario, seed=args.seed, trace_path=args.trace)
    print(json.dumps(result.summary, sort_keys=True, indent=1))
    return result.exit_code


def _cmd_ber(args) -> int:
    rows = sim.measure_ber(payloads=args.payloads, n_bits=args.bits, seed=args.seed,
                           pixel_noise=_floats(args.noise), acoustic_period=args.period)
    _out(sim.rows_to_csv(rows, sim.BER_HEADER), args.out)
    return 0


def _cmd_attacks(args) -> int:
    rows = sim.attack_suite(args.scenarios or sim.ATTACK_SCENARIOS)
    width = max(len(r["scenario"]) for r in rows)
    for r in rows:
        print(f"{r['scenario']:<{width}}  expected={r['expected']:<28} got={r['outcome']:<24} {r['verdict']}")
    return 0 if all(r["verdict"] == "PASS" for r in rows) else 1


def _cmd_ac_encode(args) -> int:
    cfg = acoustic.TransducerConfig(angle_deg=args.angle, distance_m=args.distance, period=args.period)
    levels = codec.encode_frame(codec.bits_from_hex(args.hex), cfg.half_period)
    acoustic.write_trace_csv(acoustic.acoustic_transmit(levels, cfg, args.seed), args.out)
    return 0


def _cmd_ac_decode(args) -> int:
    trace = acoustic.read_trace_csv(args.trace)
    print(codec.bits_to_hex(acoustic.acoustic_receive(trace, args.period, args.bits)))
    return 0


def _cmd_capture(args) -> int:
    cfg = visual.CameraConfig(noise=args.noise, exposure=args.exposure)
    link = visual.VisualLink(cfg=cfg, tail_frames=4)
    bits = codec.bits_from_hex(args.hex)
    _, frames, poses = link.capture(bits, args.seed)
    visual.write_capture(args.out, frames, poses, cfg, args.seed,
                         {"half_period": link.half_period, "payload_bits": len(bits)})
    return 0


def _cmd_decode_capture(args) -> int:
    frames, poses, manifest = visual.read_capture(args.capture)
    cam = dict(manifest["camera"])
    if args.lookahead:
        cam["lookahead"] = args.lookahead
    cfg = visual.CameraConfig(**cam)
    n = args.bits or manifest.get("payload_bits")
    bits = visual.visual_receive(frames, poses, cfg, manifest["half_period"], n, seed=manifest.get("seed"))
    print(codec.bits_to_hex(bits))
    return 0


# -- sweep --------------------------------------------------------------------------

def _cmd_sweep(args) -> int:
    values = _floats(args.values) if args.values else None
    grid = {"exposure": list(DEFAULT_EXPOSURES), "lookahead": [1, 2, 4], "downsample": [1, 2, 4]}
    if args.param:
        if values is None:
            raise SystemExit("--values is required with --param")
        grid = {"exposure": [visual.CameraConfig().exposure], "lookahead": [2], "downsample": [2]}
        grid[args.param] = [int(v) for v in values] if args.param != "exposure" else values
    cfg = visual.CameraConfig(noise=args.noise, locate_noise=args.locate_noise)
    link = visual.VisualLink(cfg=cfg, tail_frames=4)
    payload = np.random.default_rng(args.seed).integers(0, 2, args.bits)
    rows = visual.sweep_configurations(link, payload, grid["exposure"], grid["lookahead"], grid["downsample"],
                                       seed=args.seed)
    for r in rows:
        r["time_s"] = f"{r['time_s']:.6f}"
    _out(sim.rows_to_csv(rows, SWEEP_HEADER), args.out)
    return 0


# -- pki ------------------------------------------------------------------------------

def _load(store: str) -> pki.PkiNode:
    if not Path(store).exists():
        raise SidechanError(f"{store}: no chain store here; run 'pki init' first")
    return pki.PkiNode.load(store)


def _cmd_pki_init(args) -> int:
    if Path(args.store).exists():
        raise SidechanError(f"{args.store} already exists")
    node = pki.PkiNode(pki.ChainParams(difficulty_bits=args.difficulty, reveal_delay=args.delay),
                       pki.FeeSchedule(args.fee))
    for name in args.ca or ["dmv"]:
        node.add_ca(pki.CertificateAuthority.from_seed(name, f"{name}/{args.seed}".encode()))
    node.save(args.store)
    print(f"initialised {args.store}: genesis {node.tip.hash.hex()} CAs {','.join(sorted(node.cas))}")
    return 0


def _cmd_pki_register(args) -> int:
    node = _load(args.store)
    if args.ca not in node.ca_keys:
        raise SidechanError(f"no signing key for CA {args.ca!r} in {args.store}")
    ca = node.ca_keys[args.ca]
    if args.pubkey:
        pub = bytes.fromhex(args.pubkey)
    else:
        pub = hs.x25519_public(hs.Drbg(f"{args.plate}/{args.salt}".encode()).bytes(32))
    cert = ca.issue(args.plate, args.salt, pub)
    lineage = node.register(pki.DhtEntry(cert.primary_key, pub, cert), payer=args.plate)
    node.save(args.store)
    print(f"registered {args.plate} prim={cert.primary_key.hex()} pub={pub.hex()} "
          f"commit@{lineage.commit_height} reveal@{lineage.reveal_height} fee={pki.format_usd(node.fees.insertion_fee)}")
    return 0


def _cmd_pki_sync(args) -> int:
    node = _load(args.store)
    accepted = {n: node.cas[n] for n in args.accept_ca if n in node.cas}
    tip = bytes.fromhex(args.tip) if args.tip else None
    res = pki.filtered_sync(node, accepted, tip, strict=args.strict)
    if args.out:
        with open(args.out, "wb") as fh:
            for e in res.copy.entries():
                pki._write_record(fh, pki.R_ENTRY, e.to_bytes())
    print(f"kept {len(res.copy)} dropped {len(res.dropped)} rejected {len(res.rejected)}")
    for prim, why in res.rejected:
        print(f"  rejected {prim.hex()}: {why}")
    return 0


def _cmd_pki_lookup(args) -> int:
    node = _load(args.store)
    accepted = {n: node.cas[n] for n in (args.accept_ca or node.cas)}
    copy = pki.filtered_sync(node, accepted).copy
    entry = copy.lookup(pki.compute_primary_key(args.plate, args.salt))
    pki.check_certificate(entry.certificate, accepted, entry.primary_key, entry.public_key)
    print(f"prim={entry.primary_key.hex()} pub={entry.public_key.hex()} issuer={entry.certificate.issuer} cert=valid")
    return 0


def _cmd_pki_verify(args) -> int:
    node = _load(args.store)
    node.verify(bytes.fromhex(args.tip) if args.tip else None)
    print(f"OK height {node.height} entries {len(node.dht)} tip {node.tip.hash.hex()}")
    return 0


def _cmd_attack_cost(args) -> int:
    try:
        fee = Decimal(args.fee)
    except InvalidOperation:
        raise SidechanError(f"bad fee {args.fee!r}") from None
    print(pki.format_usd(pki.brick_attack_cost(args.salt_bits, pki.FeeSchedule(fee))))
    return 0


# -- parser ---------------------------------------------------------------------------

def _add_simulate(sp) -> None:
    sub = sp.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario", help="TOML file or bundled scenario name")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write JSON-lines trace here")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("ber", help="bit error table per channel configuration")
    p.add_argument("--payloads", type=int, default=20)
    p.add_argument("--bits", type=int, default=176)
    p.add_argument("--noise", default="0,1,2,4", help="pixel noise values")
    p.add_argument("--period", type=float, default=0.020, help="acoustic modulation period m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ber)
    p = sub.add_parser("attack-suite", help="run the attack scenarios and print verdicts")
    p.add_argument("scenarios", nargs="*")
    p.set_defaults(func=_cmd_attacks)
    p = sub.add_parser("acoustic-encode", help="payload hex -> envelope CSV")
    p.add_argument("--hex", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--distance", type=float, default=0.0)
    p.add_argument("--period", type=float, default=0.020)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ac_encode)
    p = sub.add_parser("acoustic-decode", help="envelope CSV -> payload hex")
    p.add_argument("trace")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--period", type=float, default=0.020)
    p.set_defaults(func=_cmd_ac_decode)
    p = sub.add_parser("capture", help="payload hex -> frame directory with manifest")
    p.add_argument("--hex", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--exposure", type=float, default=visual.CameraConfig().exposure)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_capture)
    p = sub.add_parser("decode-capture", help="frame directory -> payload hex")
    p.add_argument("capture")
    p.add_argument("--bits", type=int)
    p.add_argument("--lookahead", type=int)
    p.set_defaults(func=_cmd_decode_capture)


def _add_sweep(p) -> None:
    p.add_argument("--param", choices=["exposure", "lookahead", "downsample"])
    p.add_argument("--values", help="comma-separated values for --param")
    p.add_argument("--bits", type=int, default=176)
    p.add_argument("--noise", type=float, default=40.0)
    p.add_argument("--locate-noise", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)


def _add_pki(p) -> None:
    p.add_argument("--store", default="pki.chain", help="append-only chain + DHT file")
    sub = p.add_subparsers(dest="cmd", required=True)
    q = sub.add_parser("init")
    q.add_argument("--ca", action="append", help="CA name (repeatable)")
    q.add_argument("--difficulty", type=int, default=12)
    q.add_argument("--delay", type=int, default=6)
    q.add_argument("--fee", default="0.09")
    q.add_argument("--seed", default="0")
    q.set_defaults(func=_cmd_pki_init)
    q = sub.add_parser("register")
    q.add_argument("--plate", required=True)
    q.add_argument("--salt", type=_salt, required=True)
    q.add_argument("--ca", required=True)
    q.add_argument("--pubkey", help="32-byte X25519 public key as hex")
    q.set_defaults(func=_cmd_pki_register)
    q = sub.add_parser("sync")
    q.add_argument("--accept-ca", action="append", required=True)
    q.add_argument("--tip", help="trusted tip hash (hex)")
    q.add_argument("--strict", action="store_true")
    q.add_argument("--out", help="write the filtered copy here")
    q.set_defaults(func=_cmd_pki_sync)
    q = sub.add_parser("lookup")
    q.add_argument("--plate", required=True)
    q.add_argument("--salt", type=_salt, required=True)
    q.add_argument("--accept-ca", action="append")
    q.set_defaults(func=_cmd_pki_lookup)
    q = sub.add_parser("verify")
    q.add_argument("--tip", help="trusted tip hash (hex)")
    q.set_defaults(func=_cmd_pki_verify)
    q = sub.add_parser("attack-cost")
    q.add_argument("--salt-bits", type=int, required=True)
    q.add_argument("--fee", default="0.09")
    q.set_defaults(func=_cmd_attack_cost)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sidechan", description="side-channel V2V session simulator")
    groups = ap.add_subparsers(dest="group", required=True)
    _add_simulate(groups.add_parser("simulate", help="scenarios, BER tables, attacks"))
    _add_sweep(groups.add_parser("sweep", help="visual decoder configuration sweep"))
    _add_pki(groups.add_parser("pki", help="chain and DHT operations"))
    return ap


def _dispatch(args) -> int:
    try:
        return args.func(args)
    except SidechanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return _dispatch(build_parser().parse_args(argv))


def _group_main(group: str, adder, argv=None) -> int:
    ap = argparse.ArgumentParser(prog=group)
    adder(ap)
    return _dispatch(ap.parse_args(argv))


def simulate_main(argv=None) -> int:
    return _group_main("simulate", _add_simulate, argv)


def sweep_main(argv=None) -> int:
    return _group_main("sweep", _add_sweep, argv)


def pki_main(argv=None) -> int:
    return _group_main("pki", _add_pki, argv)


if __name__ == "__main__":
    sys.exit(main())
