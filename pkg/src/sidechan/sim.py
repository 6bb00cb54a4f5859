"""Scenario files, the two-vehicle runner, BER tables and the attack suite."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import acoustic, codec, handshake as hs, pki, visual
from .errors import ChainVerificationError, ConfigError, DecodeFailure, SidechanError

OUTCOMES = ("Confirmed", "TagMismatch", "NotFound", "CertInvalid", "CANotAccepted", "DecodeFailure",
            "Timeout", "ChainVerificationError", "DegenerateSecret")


# -- schema ---------------------------------------------------------------------

@dataclass(frozen=True)
class VehicleSpec:
    plate: str
    salt: int
    ca: str = "dmv"
    role: str = "lead"                 # lead | follow
    register: bool = True
    broadcast_salt: int | None = None  # salt put on the air instead of the registered one
    shown_plate: str | None = None     # plate the peer's camera reads


@dataclass(frozen=True)
class PkiSpec:
    accepted_cas: tuple[str, ...] = ("dmv",)
    difficulty_bits: int = 12
    retarget_window: int = 10
    target_interval: float = 60.0
    reveal_delay: int = 6
    fee: str = "0.09"
    strict_sync: bool = True


@dataclass(frozen=True)
class ChannelSpec:
    mode: str = "physical"             # physical | ideal
    acoustic_period: float = 0.020
    angle_deg: float = 0.0
    distance_m: float = 1.5
    jitter: float = 0.0
    frames_per_slot: int = 1
    sway: float = 0.0
    camera: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Flip:
    channel: str
    sender: str
    bits: tuple[int, ...]


@dataclass(frozen=True)
class FaultSpec:
    flips: tuple[Flip, ...] = ()
    occlude: dict = field(default_factory=dict)      # sender plate -> frame indices
    tamper: tuple[dict, ...] = ()                    # {plate, byte} mutations of the DHT mirror
    rf_jam: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    vehicles: tuple[VehicleSpec, VehicleSpec]
    expect: tuple[str, ...] = ("Confirmed",)
    description: str = ""
    duration: float = 30.0
    cas: tuple[str, ...] = ("dmv",)
    pki: PkiSpec = PkiSpec()
    channels: ChannelSpec = ChannelSpec()
    faults: FaultSpec = FaultSpec()
    timeouts: hs.Timeouts = hs.Timeouts()
    scrypt_n: int = 1 << 14


def _line_of(text: str, table: str | None, key: str | None = None, index: int = 0) -> int | None:
    """1-based line of ``key`` inside the ``index``-th ``[table]``/``[[table]]`` block."""
    lines = text.splitlines()
    start, seen = 0, -1
    if table:
        pat = re.compile(r"^\s*\[\[?\s*" + re.escape(table) + r"\s*\]\]?\s*(#.*)?$")
        for i, ln in enumerate(lines):
            if pat.match(ln):
                seen += 1
                if seen == index:
                    start = i
                    break
        else:
            if "." in table:
                # inline array under the parent table, e.g. flip = [...] in [faults]
                parent, _, child = table.rpartition(".")
                return _line_of(text, parent, child, 0)
            return None
        if key is None:
            return start + 1
    kpat = re.compile(r"^\s*" + re.escape(key or "") + r"\s*=")
    for i in range(start + (1 if table else 0), len(lines)):
        if table and lines[i].lstrip().startswith("["):
            break
        if kpat.match(lines[i]):
            return i + 1
    return start + 1 if table else None


class _Loader:
    def __init__(self, text: str, source: str):
        self.text, self.source = text, source

    def error(self, msg: str, table: str | None = None, key: str | None = None, index: int = 0):
        line = _line_of(self.text, table, key, index)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {msg}")

    def take(self, raw: dict, cls, table: str | None, index: int = 0, convert=None) -> Any:
        names = {f.name for f in fields(cls)}
        for k in raw:
            if k not in names:
                raise self.error(f"unknown key {k!r}", table, k, index)
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            v = raw[f.name]
            if convert and f.name in convert:
                try:
                    v = convert[f.name](v)
                except (TypeError, ValueError, KeyError) as exc:
                    raise self.error(f"bad value for {f.name!r}: {exc}", table, f.name, index) from None
            kwargs[f.name] = v
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise self.error(str(exc), table, None, index) from None
        except ValueError as exc:
            raise self.error(str(exc), table, None, index) from None


def _typed(kind):
    def check(v):
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            return float(v)
        if kind is int and isinstance(v, bool) or not isinstance(v, kind):
            raise TypeError(f"expected {kind.__name__}, got {type(v).__name__}")
        return v
    return check


def _str_list(v):
    if isinstance(v, str):
        return (v,)
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise TypeError("expected a string or list of strings")
    return tuple(v)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    ld = _Loader(text, source)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source}:{m.group(1) if m else '?'}: {exc}") from None
    allowed = {"scenario", "vehicle", "ca", "pki", "channels", "faults", "timeouts"}
    for k in raw:
        if k not in allowed:
            raise ld.error(f"unknown table {k!r}", k) if isinstance(raw[k], (dict, list)) \
                else ld.error(f"unknown key {k!r}", None, k)
    top = dict(raw.get("scenario", {}))
    if "name" not in top or "seed" not in top:
        raise ld.error("[scenario] needs name and seed", "scenario")
    for k in top:
        if k not in {"name", "seed", "expect", "description", "duration", "scrypt_n"}:
            raise ld.error(f"unknown key {k!r}", "scenario", k)
    for k, kind in (("name", str), ("seed", int), ("description", str), ("scrypt_n", int)):
        if k in top:
            try:
                _typed(kind)(top[k])
            except TypeError as exc:
                raise ld.error(f"{k}: {exc}", "scenario", k) from None
    expect = _str_list(top.get("expect", "Confirmed"))
    for e in expect:
        if e not in OUTCOMES:
            raise ld.error(f"unknown expected outcome {e!r}", "scenario", "expect")
    vraw = raw.get("vehicle", [])
    if not isinstance(vraw, list) or len(vraw) != 2:
        raise ld.error("exactly two [[vehicle]] tables are required", "vehicle")
    conv_int = _typed(int)
    vehicles = []
    for i, v in enumerate(vraw):
        for req in ("plate", "salt"):
            if req not in v:
                raise ld.error(f"vehicle needs {req!r}", "vehicle", None, i)
        spec = ld.take(v, VehicleSpec, "vehicle", i, {"salt": conv_int, "broadcast_salt": conv_int,
                                                      "plate": _typed(str), "register": _typed(bool)})
        if spec.role not in ("lead", "follow"):
            raise ld.error("role must be 'lead' or 'follow'", "vehicle", "role", i)
        try:
            pki.salt_bytes(spec.salt)
            if spec.broadcast_salt is not None:
                pki.salt_bytes(spec.broadcast_salt)
        except SidechanError as exc:
            raise ld.error(str(exc), "vehicle", "salt", i) from None
        vehicles.append(spec)
    if vehicles[0].plate == vehicles[1].plate:
        raise ld.error("vehicles need distinct plates", "vehicle", "plate", 1)
    cas = tuple(c.get("name") for c in raw.get("ca", [{"name": "dmv"}]))
    if not all(isinstance(c, str) for c in cas):
        raise ld.error("every [[ca]] needs a name", "ca")
    pk = ld.take(raw.get("pki", {}), PkiSpec, "pki", 0, {"accepted_cas": _str_list, "fee": str})
    for v in vehicles:
        if v.ca not in cas:
            raise ld.error(f"vehicle {v.plate} names unknown CA {v.ca!r}", "vehicle", "ca",
                           vehicles.index(v))
    ch_raw = dict(raw.get("channels", {}))
    cam = ch_raw.pop("camera", {})
    ch = ld.take(ch_raw, ChannelSpec, "channels", 0, {"angle_deg": _typed(float), "distance_m": _typed(float),
                                                      "acoustic_period": _typed(float)})
    if ch.mode not in ("physical", "ideal"):
        raise ld.error("mode must be 'physical' or 'ideal'", "channels", "mode")
    camera_fields = {f.name for f in fields(visual.CameraConfig)}
    for k in cam:
        if k not in camera_fields:
            raise ld.error(f"unknown camera key {k!r}", "channels.camera", k)
    try:
        visual.CameraConfig(**cam)
        acoustic.TransducerConfig(angle_deg=ch.angle_deg, distance_m=ch.distance_m, period=ch.acoustic_period)
    except (ConfigError, TypeError) as exc:
        raise ld.error(str(exc), "channels") from None
    ch = replace(ch, camera=dict(cam))
    f_raw = raw.get("faults", {})
    for k in f_raw:
        if k not in {"flip", "occlude", "tamper", "rf_jam"}:
            raise ld.error(f"unknown key {k!r}", "faults", k)
    plates = {v.plate for v in vehicles}
    flips = []
    for i, fl in enumerate(f_raw.get("flip", [])):
        spec = ld.take(fl, Flip, "faults.flip", i, {"bits": lambda b: tuple(conv_int(x) for x in b)})
        if spec.channel not in ("acoustic", "visual") or spec.sender not in plates:
            raise ld.error("flip needs channel acoustic|visual and a vehicle plate as sender", "faults.flip",
                           None, i)
        flips.append(spec)
    occlude = {}
    for i, oc in enumerate(f_raw.get("occlude", [])):
        if set(oc) - {"sender", "frames"} or oc.get("sender") not in plates:
            raise ld.error("occlude needs sender (a plate) and frames", "faults.occlude", None, i)
        occlude[oc["sender"]] = tuple(conv_int(x) for x in oc.get("frames", []))
    tamper = []
    for i, tm in enumerate(f_raw.get("tamper", [])):
        if set(tm) - {"plate", "byte"} or tm.get("plate") not in plates:
            raise ld.error("tamper needs plate and byte", "faults.tamper", None, i)
        tamper.append({"plate": tm["plate"], "byte": conv_int(tm.get("byte", 40))})
    faults = FaultSpec(tuple(flips), occlude, tuple(tamper), bool(f_raw.get("rf_jam", False)))
    to = ld.take(raw.get("timeouts", {}), hs.Timeouts, "timeouts", 0,
                 {"acoustic": _typed(float), "visual": _typed(float)})
    return Scenario(
        name=top["name"], seed=top["seed"], vehicles=tuple(vehicles), expect=expect,
        description=top.get("description", ""), duration=float(top.get("duration", 30.0)), cas=cas,
        pki=pk, channels=ch, faults=faults, timeouts=to, scrypt_n=top.get("scrypt_n", 1 << 14),
    )


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        if str(path) in bundled:
            p = bundled[str(path)]
        else:
            raise ConfigError(f"{path}: no such scenario file")
    return parse_scenario(p.read_text(), str(path))


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("sidechan") / "scenarios"
    return {Path(str(f)).stem: Path(str(f)) for f in root.iterdir() if str(f).endswith(".toml")}


# -- trace ----------------------------------------------------------------------

class Trace:
    """Events in simulated time; serialised as sorted-key JSON lines."""

    def __init__(self):
        self.events: list[dict] = []

    def __call__(self, t: float, source: str, kind: str, payload: dict) -> None:
        if self.events and t < self.events[-1]["t"]:
            raise RuntimeError("trace time went backwards")
        self.events.append({"t": round(float(t), 9), "source": source, "kind": kind, "payload": payload})

    def dumps(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


# -- channels -----------------------------------------------------------------------

class PhysicalChannels:
    """Runs every transfer through the simulated transducer and camera."""

    def __init__(self, spec: ChannelSpec, faults: FaultSpec, rng: hs.Drbg):
        self.spec, self.faults, self.rng = spec, faults, rng
        self.tcfg = acoustic.TransducerConfig(angle_deg=spec.angle_deg, distance_m=spec.distance_m,
                                              period=spec.acoustic_period, jitter=spec.jitter,
                                              samples_per_slot=10)
        self.link = visual.VisualLink(cfg=visual.CameraConfig(**spec.camera),
                                      frames_per_slot=spec.frames_per_slot, sway=spec.sway, tail_frames=4)
        self.errors: dict[str, list[int]] = {"acoustic": [0, 0], "visual": [0, 0]}

    def _seed(self) -> int:
        return int.from_bytes(self.rng.bytes(4), "big")

    def send(self, channel, sender, bits):
        bits = codec.as_bits(bits)
        if channel == "acoustic":
            trace = acoustic.acoustic_transmit(codec.encode_frame(bits, self.tcfg.half_period), self.tcfg,
                                               self._seed())
            out = acoustic.acoustic_receive(trace, self.tcfg.period, len(bits))
            airtime = (len(codec.PREAMBLE) + len(bits)) * self.tcfg.period
        else:
            out, _, _ = self.link.transfer(bits, self._seed(), self.faults.occlude.get(sender, ()))
            airtime = self.link.airtime(len(bits))
        out = _apply_flips(out, self.faults, channel, sender)
        self.errors[channel][0] += len(bits)
        self.errors[channel][1] += codec.bit_errors(bits, out)
        return out, airtime


def _apply_flips(bits, faults: FaultSpec, channel: str, sender: str) -> np.ndarray:
    out = codec.as_bits(bits).copy()
    for fl in faults.flips:
        if fl.channel == channel and fl.sender == sender:
            for i in fl.bits:
                if not 0 <= i < len(out):
                    raise ConfigError(f"flip index {i} outside the {len(out)}-bit {channel} payload")
                out[i] ^= 1
    return out


class FaultyIdealChannels(hs.IdealChannels):
    def __init__(self, spec: ChannelSpec, faults: FaultSpec):
        super().__init__(acoustic_period=spec.acoustic_period,
                         visual_bit_time=2 * spec.frames_per_slot / visual.CameraConfig(**spec.camera).frame_rate)
        self.faults = faults
        self.errors = {"acoustic": [0, 0], "visual": [0, 0]}

    def send(self, channel, sender, bits):
        if channel == "visual" and self.faults.occlude.get(sender):
            raise DecodeFailure(f"plate of {sender} not visible during the visual transfer")
        out, airtime = super().send(channel, sender, bits)
        out = _apply_flips(out, self.faults, channel, sender)
        self.errors[channel][0] += len(bits)
        self.errors[channel][1] += codec.bit_errors(bits, out)
        return out, airtime


# -- runner -----------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: Scenario
    outcome: str
    passed: bool
    summary: dict
    trace: Trace

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _mutate_entry(entry: pki.DhtEntry, byte: int) -> pki.DhtEntry | None:
    raw = bytearray(entry.to_bytes())
    raw[byte % len(raw)] ^= 0x01
    try:
        return pki.DhtEntry.from_bytes(bytes(raw))
    except (ValueError, SidechanError):
        return None


def run_scenario(scenario: Scenario | str | Path, seed: int | None = None,
                 trace_path: str | Path | None = None) -> RunResult:
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    if seed is not None:
        sc = replace(sc, seed=seed)
    trace = Trace()
    rng = hs.Drbg(sc.seed)
    trace(0.0, "sim", "start", {"scenario": sc.name, "seed": sc.seed, "expect": list(sc.expect),
                                "rf_jammed": sc.faults.rf_jam})
    if sc.faults.rf_jam:
        # no RF link exists in the model; jamming it changes nothing below
        trace(0.0, "rf", "jammed", {"effect": "none: session runs on side-channels only"})

    params = pki.ChainParams(difficulty_bits=sc.pki.difficulty_bits, retarget_window=sc.pki.retarget_window,
                             target_interval=sc.pki.target_interval, reveal_delay=sc.pki.reveal_delay)
    node = pki.PkiNode(params, pki.FeeSchedule(sc.pki.fee))
    cas = {name: pki.CertificateAuthority.from_seed(name, rng.fork("ca/" + name).bytes(32)) for name in sc.cas}
    for ca in cas.values():
        node.add_ca(ca)
    idents = {}
    for v in sc.vehicles:
        ident = hs.enroll(v.plate, v.salt, cas[v.ca], node if v.register else None, rng.fork("id/" + v.plate))
        if v.broadcast_salt is not None:
            ident = replace(ident, identity_salt=v.broadcast_salt)
        idents[v.plate] = ident
        trace(0.0, "pki", "enrolled", {"plate": v.plate, "ca": v.ca, "registered": v.register,
                                       "primary_key": pki.compute_primary_key(v.plate, v.salt).hex(),
                                       "height": node.height})
    mirror = list(node.dht.values())
    for tm in sc.faults.tamper:
        prim = pki.compute_primary_key(tm["plate"], next(v.salt for v in sc.vehicles if v.plate == tm["plate"]))
        mirror = [(_mutate_entry(e, tm["byte"]) or e) if e.primary_key == prim else e for e in mirror]
        trace(0.0, "pki", "tampered", {"plate": tm["plate"], "byte": tm["byte"]})
    accepted = {n: cas[n].public_key for n in sc.pki.accepted_cas if n in cas}
    summary: dict[str, Any] = {"scenario": sc.name, "seed": sc.seed, "expect": list(sc.expect)}
    try:
        synced = pki.filtered_sync(node, accepted, node.tip.hash, sc.pki.strict_sync, mirror)
    except ChainVerificationError as exc:
        trace(0.0, "pki", "sync_failed", {"error": "ChainVerificationError", "detail": str(exc)})
        return _finish(sc, "ChainVerificationError", summary, trace, trace_path, None, None)
    trace(0.0, "pki", "synced", {"kept": len(synced.copy), "dropped": len(synced.dropped),
                                 "rejected": len(synced.rejected), "tip": node.tip.hash.hex()})

    if sc.channels.mode == "physical":
        channels = PhysicalChannels(sc.channels, sc.faults, rng.fork("channels"))
    else:
        channels = FaultyIdealChannels(sc.channels, sc.faults)
    a, b = (idents[v.plate] for v in sc.vehicles)
    follower = next((v.plate for v in sc.vehicles if v.role == "follow"), None)
    seen = {v.plate: v.shown_plate for v in sc.vehicles if v.shown_plate}
    # each camera reads the plate displayed by the *other* vehicle
    plates_seen = {}
    for v, w in zip(sc.vehicles, sc.vehicles[::-1]):
        if w.plate in seen:
            plates_seen[v.plate] = seen[w.plate]
    res = hs.run_handshake(
        a, b, channels, {p: synced.copy for p in idents}, accepted, rng.fork("session"), follower,
        sc.timeouts, hs.ScryptParams(n=sc.scrypt_n), plates_seen, trace,
    )
    outcome = "Confirmed" if res.confirmed else (res.error or "Failed")
    if res.confirmed and res.elapsed > sc.duration:
        outcome = "Timeout"
    if res.confirmed:
        ka, kb = (res.states[p] for p in sorted(res.states))
        summary["keys_agree"] = ka.K == kb.K and ka.M == kb.M
    return _finish(sc, outcome, summary, trace, trace_path, res, channels)


def _finish(sc, outcome, summary, trace, trace_path, res, channels) -> RunResult:
    summary["outcome"] = outcome
    if res is not None:
        summary["sim_time_s"] = round(res.elapsed, 9)
        per_channel = {}
        for ch in ("acoustic", "visual"):
            sent = {p: n for (c, p), n in sorted(res.bits.items()) if c == ch}
            errs = channels.errors[ch]
            per_channel[ch] = {"bits_per_direction": sent, "errored_bits": errs[1],
                               "ber": errs[1] / errs[0] if errs[0] else 0.0}
        summary["channels"] = per_channel
        summary["phases"] = {p: s.phase.value for p, s in sorted(res.states.items())}
    passed = outcome in sc.expect
    summary["passed"] = passed
    t_end = trace.events[-1]["t"] if trace.events else 0.0
    trace(t_end, "sim", "end", {"outcome": outcome, "passed": passed})
    if trace_path is not None:
        trace.write(trace_path)
    return RunResult(sc, outcome, passed, summary, trace)


# -- BER tables -------------------------------------------------------------------

BER_HEADER = ("channel", "config", "payload_bits", "errored_bits", "ber")


def measure_ber(
    payloads: int = 20,
    n_bits: int = 176,
    seed: int = 0,
    pixel_noise: Sequence[float] = (0, 1, 2, 4),
    transducers: Sequence[tuple[float, float]] = ((0, 0.5), (45, 3.0)),
    acoustic_period: float = 0.020,
    camera: dict | None = None,
) -> list[dict]:
    """Bit error rates per channel configuration over seeded random payloads.

    A payload whose transfer fails to decode counts as entirely errored.
    """
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 2, (payloads, n_bits)).astype(np.uint8)
    rows = []
    for angle, dist in transducers:
        cfg = acoustic.TransducerConfig(angle_deg=angle, distance_m=dist, period=acoustic_period,
                                        samples_per_slot=10)
        err = 0
        for i, p in enumerate(data):
            tr = acoustic.acoustic_transmit(codec.encode_frame(p, cfg.half_period), cfg, seed * 100003 + i)
            try:
                err += codec.bit_errors(p, acoustic.acoustic_receive(tr, cfg.period, n_bits))
            except DecodeFailure:
                err += n_bits
        rows.append(_ber_row("acoustic", f"angle={angle:g},distance={dist:g},m={acoustic_period:g}",
                             payloads * n_bits, err))
    for sigma in pixel_noise:
        link = visual.VisualLink(cfg=visual.CameraConfig(**{**(camera or {}), "noise": float(sigma)}),
                                 tail_frames=4)
        err = 0
        for i, p in enumerate(data):
            try:
                out, _, _ = link.transfer(p, seed * 100003 + i)
                err += codec.bit_errors(p, out)
            except DecodeFailure:
                err += n_bits
        rows.append(_ber_row("visual", f"noise={sigma:g},lookahead={link.cfg.lookahead}",
                             payloads * n_bits, err))
    return rows


def _ber_row(channel, config, bits, errs):
    return {"channel": channel, "config": config, "payload_bits": bits, "errored_bits": errs,
            "ber": errs / bits if bits else 0.0}


def rows_to_csv(rows: list[dict], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in header})
    return buf.getvalue()


# -- attack suite -------------------------------------------------------------------

ATTACK_SCENARIOS = ("honest", "tampered-dht", "impersonation", "salt-flip", "occlusion", "rf-jam")


def attack_suite(names: Sequence[str | Path] = ATTACK_SCENARIOS) -> list[dict]:
    rows = []
    for name in names:
        r = run_scenario(name)
        rows.append({"scenario": r.scenario.name, "expected": "|".join(r.scenario.expect),
                     "outcome": r.outcome, "verdict": "PASS" if r.passed else "FAIL"})
    return rows
