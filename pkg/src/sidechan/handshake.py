"""Session key establishment over the two side-channels.

Message flow, per direction: identity salt I and session salt R go out on the
ultrasonic channel (160 bits); the peer plate is read visually; after PKI
lookup, ECDH and scrypt, a 16-bit confirmation tag goes out on the lights.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

import numpy as np
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import codec, pki
from .errors import (
    DecodeFailure,
    DegenerateSecret,
    PeerAuthError,
    SidechanError,
    TagMismatch,
    Timeout,
)

SALT_BITS = 32
SESSION_SALT_BITS = 128
TAG_BITS = 16
ULTRASONIC_BITS = SALT_BITS + SESSION_SALT_BITS

INITIATOR, RESPONDER = "initiator", "responder"
ROLE_BYTE = {INITIATOR: b"\x01", RESPONDER: b"\x02"}


class Drbg:
    """Deterministic byte stream: SHA-256(seed || counter) blocks."""

    def __init__(self, seed: int | bytes):
        self._seed = seed if isinstance(seed, bytes) else int(seed).to_bytes(16, "big", signed=True)
        self._counter = 0
        self._buf = b""

    def bytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.sha256(self._seed + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def fork(self, label: str) -> Drbg:
        return Drbg(hashlib.sha256(self._seed + b"/" + label.encode()).digest())


@dataclass(frozen=True)
class ScryptParams:
    n: int = 1 << 14
    r: int = 8
    p: int = 1
    dklen: int = 32


@dataclass(frozen=True)
class VehicleIdentity:
    plate: str
    identity_salt: int
    private_key: bytes = field(repr=False)
    public_key: bytes
    certificate: pki.Certificate

    @property
    def primary_key(self) -> bytes:
        return pki.compute_primary_key(self.plate, self.identity_salt)


def x25519_public(private_key: bytes) -> bytes:
    return X25519PrivateKey.from_private_bytes(private_key).public_key().public_bytes(
        Encoding.Raw, PublicFormat.Raw)


def enroll(
    plate: str,
    identity_salt: int,
    ca: pki.CertificateAuthority,
    node: pki.PkiNode | None,
    rng: Drbg,
) -> VehicleIdentity:
    """Make a long-term key pair, get it certified and (optionally) published."""
    priv = rng.bytes(32)
    pub = x25519_public(priv)
    cert = ca.issue(plate, identity_salt, pub)
    ident = VehicleIdentity(plate, identity_salt, priv, pub, cert)
    if node is not None:
        node.register(pki.DhtEntry(cert.primary_key, pub, cert), payer=plate)
    return ident


# -- protocol pieces ----------------------------------------------------------

def make_ultrasonic_payload(identity_salt: int, r_self: bytes) -> np.ndarray:
    """I (32 bits) || R (128 bits), big-endian."""
    if len(r_self) * 8 != SESSION_SALT_BITS:
        raise ValueError("session salt must be 128 bits")
    return np.concatenate((codec.bits_from_int(identity_salt, SALT_BITS), codec.bits_from_bytes(r_self)))


def parse_ultrasonic_payload(bits) -> tuple[int, bytes]:
    bits = codec.as_bits(bits)
    if len(bits) != ULTRASONIC_BITS:
        raise DecodeFailure(f"expected {ULTRASONIC_BITS} bits, got {len(bits)}")
    return codec.bits_to_int(bits[:SALT_BITS]), codec.bits_to_bytes(bits[SALT_BITS:])


def resolve_peer(
    plate_peer: str,
    payload,
    dht: pki.DhtCopy,
    accepted_cas: Mapping[str, bytes],
) -> tuple[bytes, pki.Certificate]:
    """Plate read on camera + salt heard on ultrasound -> peer public key."""
    salt, _ = parse_ultrasonic_payload(payload)
    prim = pki.compute_primary_key(plate_peer, salt)
    entry = dht.lookup(prim)
    pki.check_certificate(entry.certificate, accepted_cas, prim, entry.public_key)
    return entry.public_key, entry.certificate


@dataclass(frozen=True)
class SessionKeys:
    master: bytes = field(repr=False)
    K: bytes = field(repr=False)
    M: bytes = field(repr=False)


def derive_keys(
    private_key: bytes,
    peer_public: bytes,
    r_initiator: bytes,
    r_responder: bytes,
    params: ScryptParams = ScryptParams(),
) -> SessionKeys:
    try:
        shared = X25519PrivateKey.from_private_bytes(private_key).exchange(
            X25519PublicKey.from_public_bytes(peer_public))
    except ValueError as exc:         # low-order point: all-zero output
        raise DegenerateSecret(str(exc)) from exc
    if shared == bytes(32):
        raise DegenerateSecret("all-zero shared secret")
    master = hashlib.scrypt(shared, salt=r_initiator + r_responder, n=params.n, r=params.r, p=params.p,
                            dklen=params.dklen, maxmem=256 * params.n * params.r + (1 << 20))
    return SessionKeys(master, master[:16], master[16:32])


def confirm_tag(master: bytes, role: str) -> int:
    """First 16 bits of SHA-256(master || role byte)."""
    return int.from_bytes(hashlib.sha256(master + ROLE_BYTE[role]).digest()[:2], "big")


def tag_bits(tag: int) -> np.ndarray:
    return codec.bits_from_int(tag, TAG_BITS)


def assign_roles(a: VehicleIdentity, b: VehicleIdentity, follower: str | None) -> dict[str, str]:
    """Map plate -> role: the following vehicle initiates; otherwise lower Prim does."""
    if follower is None:
        first = a if a.primary_key < b.primary_key else b
    else:
        first = a if follower == a.plate else b
        if follower not in (a.plate, b.plate):
            raise ValueError(f"unknown follower {follower!r}")
    return {first.plate: INITIATOR, (b if first is a else a).plate: RESPONDER}


# -- per-party state machine -----------------------------------------------------

class Phase(str, enum.Enum):
    IDLE = "Idle"
    SALT_SENT = "SaltSent"
    PEER_RESOLVED = "PeerResolved"
    KEYS_DERIVED = "KeysDerived"
    CONFIRMED = "Confirmed"
    FAILED = "Failed"


ALLOWED = {
    Phase.IDLE: {Phase.SALT_SENT, Phase.FAILED},
    Phase.SALT_SENT: {Phase.PEER_RESOLVED, Phase.FAILED},
    Phase.PEER_RESOLVED: {Phase.KEYS_DERIVED, Phase.FAILED},
    Phase.KEYS_DERIVED: {Phase.CONFIRMED, Phase.FAILED},
    Phase.CONFIRMED: set(),
    Phase.FAILED: set(),
}


class SessionState:
    def __init__(self, identity: VehicleIdentity, role: str, rng: Drbg,
                 on_phase: Callable[[SessionState, Phase, str], None] | None = None):
        self.identity, self.role = identity, role
        self.r_self = rng.bytes(SESSION_SALT_BITS // 8)
        self.r_peer: bytes | None = None
        self.peer_public: bytes | None = None
        self.peer_salt: int | None = None
        self.phase = Phase.IDLE
        self.reason: str | None = None
        self._keys: SessionKeys | None = None
        self._on_phase = on_phase

    @property
    def peer_role(self) -> str:
        return RESPONDER if self.role == INITIATOR else INITIATOR

    @property
    def keys(self) -> SessionKeys | None:
        return self._keys if self.phase in (Phase.KEYS_DERIVED, Phase.CONFIRMED) else None

    @property
    def K(self) -> bytes | None:
        return self.keys.K if self.keys else None

    @property
    def M(self) -> bytes | None:
        return self.keys.M if self.keys else None

    def _goto(self, phase: Phase, note: str = "") -> None:
        if phase not in ALLOWED[self.phase]:
            raise RuntimeError(f"illegal transition {self.phase.value} -> {phase.value}")
        self.phase = phase
        if self._on_phase:
            self._on_phase(self, phase, note)

    def fail(self, reason: str) -> None:
        if self.phase in (Phase.CONFIRMED, Phase.FAILED):
            return
        self._keys = None
        self.r_peer = None
        self.reason = reason
        self._goto(Phase.FAILED, reason)

    def ultrasonic_payload(self) -> np.ndarray:
        bits = make_ultrasonic_payload(self.identity.identity_salt, self.r_self)
        self._goto(Phase.SALT_SENT)
        return bits

    def on_ultrasonic(self, bits, plate_peer: str, dht: pki.DhtCopy, accepted_cas: Mapping[str, bytes]) -> None:
        self.peer_salt, self.r_peer = parse_ultrasonic_payload(bits)
        self.peer_public, _ = resolve_peer(plate_peer, bits, dht, accepted_cas)
        self._goto(Phase.PEER_RESOLVED)

    def derive(self, params: ScryptParams = ScryptParams()) -> None:
        r_i, r_r = (self.r_self, self.r_peer) if self.role == INITIATOR else (self.r_peer, self.r_self)
        self._keys = derive_keys(self.identity.private_key, self.peer_public, r_i, r_r, params)
        self._goto(Phase.KEYS_DERIVED)

    def my_tag(self) -> int:
        return confirm_tag(self._keys.master, self.role)

    def on_tag(self, bits) -> None:
        got = codec.bits_to_int(codec.as_bits(bits))
        want = confirm_tag(self._keys.master, self.peer_role)
        if len(bits) != TAG_BITS or not hmac.compare_digest(got.to_bytes(2, "big"), want.to_bytes(2, "big")):
            raise TagMismatch(f"peer tag {got:04x} != expected {want:04x}")
        self._goto(Phase.CONFIRMED)


# -- channels and the two-party driver --------------------------------------------

class Channels(Protocol):
    """Side-channel transport used by the driver.

    ``send`` carries ``bits`` from ``sender`` to the other vehicle and
    returns (received bits, airtime in simulated seconds).
    """

    def send(self, channel: str, sender: str, bits: np.ndarray) -> tuple[np.ndarray, float]: ...


@dataclass
class IdealChannels:
    """Bit-exact links timed at the nominal line rates, with fault hooks.

    ``flips`` maps (channel, sender) to payload bit indices to invert;
    ``drop`` holds (channel, sender) pairs whose transfer fails to decode.
    """

    acoustic_period: float = 0.020
    visual_bit_time: float = 2 / 30
    flips: dict = field(default_factory=dict)
    drop: set = field(default_factory=set)

    def airtime(self, channel: str, n_bits: int) -> float:
        per_bit = self.acoustic_period if channel == "acoustic" else self.visual_bit_time
        return (len(codec.PREAMBLE) + n_bits) * per_bit

    def send(self, channel, sender, bits):
        if (channel, sender) in self.drop:
            raise DecodeFailure(f"{channel} transfer from {sender} lost")
        out = codec.as_bits(bits).copy()
        for i in self.flips.get((channel, sender), ()):
            out[i] ^= 1
        return out, self.airtime(channel, len(out))


@dataclass(frozen=True)
class Timeouts:
    acoustic: float = 10.0
    visual: float = 5.0


@dataclass
class HandshakeResult:
    states: dict[str, SessionState]
    bits: dict[tuple[str, str], int]       # (channel, sender) -> payload bits sent
    elapsed: float
    error: str | None = None

    @property
    def confirmed(self) -> bool:
        return all(s.phase == Phase.CONFIRMED for s in self.states.values())


TraceHook = Callable[[float, str, str, dict], None]


def run_handshake(
    a: VehicleIdentity,
    b: VehicleIdentity,
    channels: Channels,
    dhts: Mapping[str, pki.DhtCopy],
    accepted_cas: Mapping[str, bytes],
    rng: Drbg,
    follower: str | None = None,
    timeouts: Timeouts = Timeouts(),
    scrypt: ScryptParams = ScryptParams(),
    plates_seen: Mapping[str, str] | None = None,
    trace: TraceHook | None = None,
    t0: float = 0.0,
) -> HandshakeResult:
    """Run both ends of one session in simulated time.

    Both vehicles transmit at once in each step (the channels are full
    duplex), so a step lasts as long as its slower direction.
    ``plates_seen`` maps a vehicle to the plate string its camera reads
    for the peer (defaults to the peer's real plate).
    """
    clock = [t0]

    def emit(kind: str, who: str, **payload):
        if trace:
            trace(clock[0], "handshake", kind, dict(vehicle=who, **payload))

    def on_phase(state: SessionState, phase: Phase, note: str):
        emit("phase", state.identity.plate, role=state.role, phase=phase.value, note=note)

    roles = assign_roles(a, b, follower)
    ids = {a.plate: a, b.plate: b}
    peer = {a.plate: b.plate, b.plate: a.plate}
    seen = {p: (plates_seen or {}).get(p, peer[p]) for p in ids}
    states = {p: SessionState(ids[p], roles[p], rng.fork(p), on_phase) for p in sorted(ids)}
    sent: dict[tuple[str, str], int] = {}
    result = HandshakeResult(states, sent, 0.0)

    def exchange(channel: str, payloads: dict[str, np.ndarray], limit: float) -> dict[str, np.ndarray]:
        got, longest = {}, 0.0
        for p in sorted(payloads):
            bits, airtime = channels.send(channel, p, payloads[p])
            sent[(channel, p)] = len(payloads[p])
            emit("transmit", p, channel=channel, bits=len(payloads[p]), hex=codec.bits_to_hex(payloads[p]),
                 airtime=round(airtime, 9))
            got[peer[p]] = bits
            longest = max(longest, airtime)
        if longest > limit:
            clock[0] += limit
            raise Timeout(f"{channel} phase needed {longest:.3f} s, deadline {limit:.3f} s")
        clock[0] += longest
        return got

    current = None
    try:
        current = "acoustic"
        heard = exchange("acoustic", {p: s.ultrasonic_payload() for p, s in states.items()}, timeouts.acoustic)
        current = "resolve"
        for p, s in states.items():
            s.on_ultrasonic(heard[p], seen[p], dhts[p], accepted_cas)
        for s in states.values():
            s.derive(scrypt)
        current = "visual"
        tags = exchange("visual", {p: tag_bits(s.my_tag()) for p, s in states.items()}, timeouts.visual)
        current = "confirm"
        errors = []
        for p, s in states.items():
            try:
                s.on_tag(tags[p])
            except TagMismatch as exc:
                errors.append(exc)
                s.fail(f"TagMismatch: {exc}")
        if errors:
            raise errors[0]
    except (SidechanError, PeerAuthError) as exc:
        result.error = type(exc).__name__
        for s in states.values():
            s.fail(f"{type(exc).__name__}: {exc}")
        emit("failure", "*", stage=current, error=type(exc).__name__, detail=str(exc))
    result.elapsed = clock[0] - t0
    if result.confirmed:
        emit("confirmed", "*", elapsed=round(result.elapsed, 9))
    return result
