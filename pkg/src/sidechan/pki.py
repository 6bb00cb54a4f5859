"""Blockchain-anchored public-key directory.

A single-process stand-in for a name-registration chain: entries live in a
hash table off-chain, and only their hashes go on-chain, first in a commit
transaction and, D blocks later, in a reveal transaction.  Anyone holding a
trusted chain tip can check a downloaded table against the chain.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat, PublicFormat

from .errors import (
    CANotAccepted,
    CertInvalid,
    ChainVerificationError,
    CollisionError,
    CommitTooRecent,
    ConfigError,
    DuplicateCommit,
    EntrySizeError,
    HashMismatch,
    NoCommit,
    NotFound,
    SaltSizeError,
)

SALT_BITS = 32
MAX_ENTRY_BYTES = 8 * 1024
DEFAULT_FEE = Decimal("0.09")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _plate_bytes(plate: bytes | str) -> bytes:
    return plate.encode("utf-8") if isinstance(plate, str) else bytes(plate)


def salt_bytes(identity_salt: int | bytes) -> bytes:
    if isinstance(identity_salt, (bytes, bytearray)):
        if len(identity_salt) != SALT_BITS // 8:
            raise SaltSizeError(f"identity salt must be {SALT_BITS} bits, got {8 * len(identity_salt)}")
        return bytes(identity_salt)
    if isinstance(identity_salt, bool) or not isinstance(identity_salt, int):
        raise SaltSizeError("identity salt must be an int or 4 bytes")
    if not 0 <= identity_salt < 1 << SALT_BITS:
        raise SaltSizeError(f"identity salt {identity_salt} does not fit in {SALT_BITS} bits")
    return identity_salt.to_bytes(SALT_BITS // 8, "big")


def compute_primary_key(plate: bytes | str, identity_salt: int | bytes) -> bytes:
    """SHA-256(plate || big-endian 32-bit salt)."""
    p = _plate_bytes(plate)
    if not p:
        raise ValueError("plate must be non-empty")
    return sha256(p + salt_bytes(identity_salt))


# -- wire helpers -------------------------------------------------------------

def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ValueError("truncated record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def lp(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ValueError("trailing bytes in record")


def raw_public(key: Ed25519PrivateKey | Ed25519PublicKey) -> bytes:
    pub = key.public_key() if isinstance(key, Ed25519PrivateKey) else key
    return pub.public_bytes(Encoding.Raw, PublicFormat.Raw)


# -- certificates and entries -------------------------------------------------

CERT_MAGIC = b"SCC1"


@dataclass(frozen=True)
class Certificate:
    primary_key: bytes
    public_key: bytes
    issuer: str
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        return CERT_MAGIC + _lp(self.primary_key) + _lp(self.public_key) + _lp(self.issuer.encode())

    def to_bytes(self) -> bytes:
        return self.signed_bytes() + _lp(self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> Certificate:
        r = _Reader(data)
        if r.take(4) != CERT_MAGIC:
            raise ValueError("not a certificate")
        prim, pub, issuer, sig = r.lp(), r.lp(), r.lp().decode(), r.lp()
        r.done()
        return cls(prim, pub, issuer, sig)

    def verify(self, ca_public_key: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(ca_public_key).verify(self.signature, self.signed_bytes())
        except (InvalidSignature, ValueError):
            return False
        return len(self.primary_key) == 32 and len(self.public_key) == 32


def check_certificate(
    cert: Certificate,
    accepted: Mapping[str, bytes],
    primary_key: bytes | None = None,
    public_key: bytes | None = None,
) -> None:
    """Raise unless ``cert`` is from an accepted CA and binds the given keys."""
    if cert.issuer not in accepted:
        raise CANotAccepted(f"issuer {cert.issuer!r} is not an accepted CA")
    if not cert.verify(accepted[cert.issuer]):
        raise CertInvalid(f"bad signature from {cert.issuer!r}")
    if primary_key is not None and cert.primary_key != primary_key:
        raise CertInvalid("certificate is for a different primary key")
    if public_key is not None and cert.public_key != public_key:
        raise CertInvalid("certificate binds a different public key")


class CertificateAuthority:
    def __init__(self, name: str, signing_key: Ed25519PrivateKey):
        self.name = name
        self._key = signing_key
        self.issued: dict[bytes, bytes] = {}

    @classmethod
    def from_seed(cls, name: str, seed: bytes) -> CertificateAuthority:
        return cls(name, Ed25519PrivateKey.from_private_bytes(sha256(b"ca-key" + seed)))

    @property
    def public_key(self) -> bytes:
        return raw_public(self._key)

    def private_seed(self) -> bytes:
        return self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def issue(self, plate: bytes | str, identity_salt: int | bytes, public_key: bytes) -> Certificate:
        prim = compute_primary_key(plate, identity_salt)
        if prim in self.issued:
            raise CollisionError(f"primary key {prim.hex()[:16]}... already registered with {self.name}")
        if len(public_key) != 32:
            raise ValueError("public key must be 32 bytes")
        unsigned = Certificate(prim, bytes(public_key), self.name)
        self.issued[prim] = bytes(public_key)
        return Certificate(prim, bytes(public_key), self.name, self._key.sign(unsigned.signed_bytes()))


@dataclass(frozen=True)
class DhtEntry:
    primary_key: bytes
    public_key: bytes
    certificate: Certificate
    extra: bytes = b""

    def __post_init__(self):
        if len(self.primary_key) != 32 or len(self.public_key) != 32:
            raise ValueError("primary and public keys are 32 bytes")
        if self.payload_size > MAX_ENTRY_BYTES:
            raise EntrySizeError(f"entry is {self.payload_size} bytes, cap is {MAX_ENTRY_BYTES}")

    def to_bytes(self) -> bytes:
        return self.primary_key + self.public_key + _lp(self.certificate.to_bytes()) + _lp(self.extra)

    @classmethod
    def from_bytes(cls, data: bytes) -> DhtEntry:
        r = _Reader(data)
        prim, pub = r.take(32), r.take(32)
        cert = Certificate.from_bytes(r.lp())
        extra = r.lp()
        r.done()
        return cls(prim, pub, cert, extra)

    @property
    def payload_size(self) -> int:
        return 64 + 8 + len(self.certificate.to_bytes()) + len(self.extra)

    @property
    def entry_hash(self) -> bytes:
        return sha256(self.to_bytes())


# -- transactions and blocks --------------------------------------------------

COMMIT, REVEAL = b"C", b"R"


@dataclass(frozen=True)
class Transaction:
    kind: bytes
    entry_hash: bytes
    ref: bytes = b""      # reveal: txid of the matching commit; commit: payer tag

    def to_bytes(self) -> bytes:
        return self.kind + self.entry_hash + _lp(self.ref)

    @classmethod
    def from_bytes(cls, data: bytes) -> Transaction:
        r = _Reader(data)
        kind = r.take(1)
        if kind not in (COMMIT, REVEAL):
            raise ValueError("unknown transaction kind")
        tx = cls(kind, r.take(32), r.lp())
        r.done()
        return tx

    @property
    def txid(self) -> bytes:
        return sha256(self.to_bytes())


HEADER = struct.Struct(">Q32s32sdBQ")


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: float
    bits: int
    nonce: int
    txs: tuple[Transaction, ...] = ()

    @property
    def tx_hashes(self) -> list[bytes]:
        return [tx.txid for tx in self.txs]

    @property
    def tx_root(self) -> bytes:
        return sha256(b"".join(self.tx_hashes))

    def header(self) -> bytes:
        return HEADER.pack(self.height, self.prev_hash, self.tx_root, self.timestamp, self.bits, self.nonce)

    @property
    def hash(self) -> bytes:
        return sha256(self.header())

    def to_bytes(self) -> bytes:
        body = b"".join(_lp(tx.to_bytes()) for tx in self.txs)
        return self.header() + struct.pack(">I", len(self.txs)) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> Block:
        r = _Reader(data)
        height, prev, root, ts, bits, nonce = r.unpack(HEADER.format)
        (n,) = r.unpack(">I")
        txs = tuple(Transaction.from_bytes(r.lp()) for _ in range(n))
        r.done()
        block = cls(height, prev, ts, bits, nonce, txs)
        if block.tx_root != root:
            raise ValueError("transaction root does not match body")
        return block


def meets_target(digest: bytes, bits: int) -> bool:
    return int.from_bytes(digest, "big") >> (256 - bits) == 0 if bits else True


def solve(height: int, prev_hash: bytes, timestamp: float, bits: int, txs: tuple[Transaction, ...]) -> Block:
    """Search nonces until the header hash has ``bits`` leading zero bits."""
    proto = Block(height, prev_hash, timestamp, bits, 0, txs)
    prefix = hashlib.sha256(proto.header()[:-8])
    nonce = 0
    while True:
        h = prefix.copy()
        h.update(nonce.to_bytes(8, "big"))
        if meets_target(h.digest(), bits):
            return Block(height, prev_hash, timestamp, bits, nonce, txs)
        nonce += 1


@dataclass(frozen=True)
class FeeSchedule:
    insertion_fee: Decimal = DEFAULT_FEE

    def __post_init__(self):
        object.__setattr__(self, "insertion_fee", Decimal(str(self.insertion_fee)))
        if self.insertion_fee <= 0:
            raise ConfigError("insertion fee must be positive")


@dataclass(frozen=True)
class ChainParams:
    difficulty_bits: int = 12
    retarget_window: int = 10
    target_interval: float = 60.0      # simulated seconds between blocks
    reveal_delay: int = 6
    max_bits: int = 32

    def __post_init__(self):
        if not 0 <= self.difficulty_bits <= self.max_bits or self.retarget_window < 2:
            raise ConfigError("bad difficulty parameters")
        if self.target_interval <= 0 or self.reveal_delay < 1:
            raise ConfigError("target interval and reveal delay must be positive")


GENESIS_PREV = bytes(32)


def next_bits(blocks: list[Block], params: ChainParams) -> int:
    """Difficulty for the block after ``blocks``.

    Every ``retarget_window`` blocks the leading-zero requirement moves by
    log2(expected / actual) span, at most two bits per step.
    """
    if not blocks:
        return params.difficulty_bits
    height = len(blocks)
    last = blocks[-1].bits
    N = params.retarget_window
    if height % N:
        return last
    window = blocks[-N:]
    actual = window[-1].timestamp - window[0].timestamp
    expected = (N - 1) * params.target_interval
    step = 2 if actual <= 0 else max(-2, min(2, round(math.log2(expected / actual))))
    return max(1, min(params.max_bits, last + step))


def verify_chain(blocks: list[Block], params: ChainParams, trusted_tip: bytes | None = None) -> None:
    """Check lineage, proof of work, difficulty schedule and timestamps."""
    if not blocks:
        raise ChainVerificationError("empty chain")
    seen_commits: set[bytes] = set()
    for i, b in enumerate(blocks):
        if b.height != i:
            raise ChainVerificationError(f"block {i} claims height {b.height}")
        prev = GENESIS_PREV if i == 0 else blocks[i - 1].hash
        if b.prev_hash != prev:
            raise ChainVerificationError(f"block {i} does not link to its parent")
        if b.bits != next_bits(blocks[:i], params):
            raise ChainVerificationError(f"block {i} has the wrong difficulty")
        if not meets_target(b.hash, b.bits):
            raise ChainVerificationError(f"block {i} fails proof of work")
        if i and b.timestamp < blocks[i - 1].timestamp:
            raise ChainVerificationError(f"block {i} goes back in time")
        for tx in b.txs:
            if tx.kind == COMMIT:
                if tx.entry_hash in seen_commits:
                    raise ChainVerificationError(f"block {i} repeats a commit")
                seen_commits.add(tx.entry_hash)
    if trusted_tip is not None and blocks[-1].hash != trusted_tip:
        raise ChainVerificationError("chain tip differs from the trusted checkpoint")


@dataclass(frozen=True)
class Receipt:
    txid: bytes
    entry_hash: bytes


@dataclass(frozen=True)
class Lineage:
    commit_height: int
    reveal_height: int


def _index(blocks: list[Block]) -> tuple[dict, dict]:
    """txid -> (height, tx) for commits, entry hash -> (height, tx) for reveals."""
    commits, reveals = {}, {}
    for b in blocks:
        for tx in b.txs:
            if tx.kind == COMMIT:
                commits[tx.txid] = (b.height, tx)
            else:
                reveals.setdefault(tx.entry_hash, (b.height, tx))
    return commits, reveals


def entry_lineage(entry: DhtEntry, commits: dict, reveals: dict, delay: int) -> Lineage:
    """Find the on-chain commit/reveal pair backing ``entry`` or raise."""
    h = entry.entry_hash
    if h not in reveals:
        raise ChainVerificationError(f"entry {entry.primary_key.hex()[:16]}... has no reveal on chain")
    hr, rtx = reveals[h]
    if rtx.ref not in commits:
        raise ChainVerificationError("reveal points at an unknown commit")
    h0, ctx = commits[rtx.ref]
    if ctx.entry_hash != h:
        raise ChainVerificationError("entry hash differs from its historic commit")
    if h0 > hr - delay:
        raise ChainVerificationError("reveal came less than D blocks after the commit")
    return Lineage(h0, hr)


# -- DHT copies and the writer node --------------------------------------------

class DhtCopy:
    """Read-mostly primary-key table."""

    def __init__(self, entries: Iterable[DhtEntry] = ()):
        self._entries = {e.primary_key: e for e in entries}

    def lookup(self, primary_key: bytes) -> DhtEntry:
        try:
            return self._entries[primary_key]
        except KeyError:
            raise NotFound(f"no entry for primary key {primary_key.hex()[:16]}...") from None

    def __contains__(self, primary_key: bytes) -> bool:
        return primary_key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[DhtEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def digest(self) -> bytes:
        return sha256(b"".join(e.to_bytes() for e in self.entries()))


@dataclass
class SyncResult:
    copy: DhtCopy
    dropped: list[bytes] = field(default_factory=list)            # issuer not accepted
    rejected: list[tuple[bytes, str]] = field(default_factory=list)  # accepted issuer, failed checks


class PkiNode:
    """Chain, mempool and the full DHT held by one writer."""

    def __init__(self, params: ChainParams = ChainParams(), fees: FeeSchedule = FeeSchedule(),
                 genesis_time: float = 0.0):
        self.params, self.fees = params, fees
        self.blocks: list[Block] = []
        self.mempool: list[Transaction] = []
        self.dht: dict[bytes, DhtEntry] = {}
        self.cas: dict[str, bytes] = {}
        self.ca_keys: dict[str, CertificateAuthority] = {}
        self.fee_ledger: list[tuple[str, Decimal, str]] = []
        self._commits: dict[bytes, tuple[int, Transaction]] = {}
        self._committed_hashes: set[bytes] = set()
        self._lock = threading.RLock()
        self._saved = {"blocks": 0, "entries": 0, "cas": 0, "fees": 0, "params": False}
        self._entry_log: list[DhtEntry] = []
        self.mine_block(timestamp=genesis_time)

    # chain
    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def mine_block(self, timestamp: float | None = None) -> Block:
        with self._lock:
            if timestamp is None:
                timestamp = self.tip.timestamp + self.params.target_interval
            prev = self.tip.hash if self.blocks else GENESIS_PREV
            block = solve(len(self.blocks), prev, float(timestamp), next_bits(self.blocks, self.params),
                          tuple(self.mempool))
            self._append(block)
            self.mempool = []
            return block

    def mine(self, n: int, interval: float | None = None) -> list[Block]:
        step = self.params.target_interval if interval is None else interval
        return [self.mine_block(self.tip.timestamp + step) for _ in range(n)]

    def _append(self, block: Block) -> None:
        self.blocks.append(block)
        for tx in block.txs:
            if tx.kind == COMMIT:
                self._commits[tx.txid] = (block.height, tx)

    def verify(self, trusted_tip: bytes | None = None) -> None:
        verify_chain(self.blocks, self.params, trusted_tip)
        commits, reveals = _index(self.blocks)
        for e in self.dht.values():
            entry_lineage(e, commits, reveals, self.params.reveal_delay)

    # CAs
    def add_ca(self, ca: CertificateAuthority, keep_private: bool = True) -> None:
        with self._lock:
            self.cas[ca.name] = ca.public_key
            if keep_private:
                self.ca_keys[ca.name] = ca

    # commit / reveal
    def commit(self, entry: DhtEntry, payer: str = "") -> Receipt:
        with self._lock:
            h = entry.entry_hash
            if h in self._committed_hashes:
                raise DuplicateCommit("entry already committed")
            tx = Transaction(COMMIT, h, payer.encode())
            self._committed_hashes.add(h)
            self.mempool.append(tx)
            self.fee_ledger.append((payer, self.fees.insertion_fee, "insertion"))
            return Receipt(tx.txid, h)

    def commit_height(self, receipt: Receipt) -> int:
        if receipt.txid not in self._commits:
            raise NoCommit("commit is not on chain")
        return self._commits[receipt.txid][0]

    def reveal(self, entry: DhtEntry, receipt: Receipt, delay_blocks: int | None = None) -> Transaction:
        """Publish ``entry``; the reveal is on chain once the next block is mined."""
        delay = self.params.reveal_delay if delay_blocks is None else delay_blocks
        with self._lock:
            h0 = self.commit_height(receipt)
            if entry.entry_hash != self._commits[receipt.txid][1].entry_hash:
                raise HashMismatch("entry differs from the hash committed at height %d" % h0)
            if self.height - h0 < delay:
                raise CommitTooRecent(f"commit at height {h0}, only {self.height - h0} of {delay} blocks elapsed")
            tx = Transaction(REVEAL, entry.entry_hash, receipt.txid)
            self.mempool.append(tx)
            self.dht[entry.primary_key] = entry
            self._entry_log.append(entry)
            return tx

    def register(self, entry: DhtEntry, payer: str = "") -> Lineage:
        """Honest commit, wait D blocks, reveal, and mine the reveal."""
        receipt = self.commit(entry, payer)
        self.mine_block()
        self.mine(self.params.reveal_delay - 1)
        self.mine_block()
        self.reveal(entry, receipt)
        self.mine_block()
        return Lineage(self.commit_height(receipt), self.height)

    def lookup(self, primary_key: bytes) -> DhtEntry:
        return DhtCopy(self.dht.values()).lookup(primary_key)

    def total_fees(self, payer: str | None = None) -> Decimal:
        return sum((amt for who, amt, _ in self.fee_ledger if payer is None or who == payer), Decimal(0))

    # persistence
    def save(self, path: str | Path) -> None:
        """Append every record not yet written to ``path``."""
        if not self._saved["params"] and Path(path).exists() and Path(path).stat().st_size:
            raise ConfigError(f"{path} already holds a chain; load it instead")
        with self._lock, open(path, "ab") as fh:
            s = self._saved
            if not s["params"]:
                _write_record(fh, R_PARAMS, json.dumps({"chain": asdict(self.params),
                              "fee": str(self.fees.insertion_fee)}, sort_keys=True).encode())
                s["params"] = True
            names = sorted(self.cas)
            for name in names[s["cas"]:]:
                ca = self.ca_keys.get(name)
                seed = ca.private_seed() if ca else b""
                _write_record(fh, R_CA, _lp(name.encode()) + _lp(self.cas[name]) + _lp(seed))
            s["cas"] = len(names)
            for b in self.blocks[s["blocks"]:]:
                _write_record(fh, R_BLOCK, b.to_bytes())
            s["blocks"] = len(self.blocks)
            for e in self._entry_log[s["entries"]:]:
                _write_record(fh, R_ENTRY, e.to_bytes())
            s["entries"] = len(self._entry_log)
            for who, amt, memo in self.fee_ledger[s["fees"]:]:
                _write_record(fh, R_FEE, _lp(who.encode()) + _lp(str(amt).encode()) + _lp(memo.encode()))
            s["fees"] = len(self.fee_ledger)

    @classmethod
    def load(cls, path: str | Path) -> PkiNode:
        """Rebuild a node from its record file; the chain is not re-verified here."""
        recs = read_records(path)
        if not recs or recs[0][0] != R_PARAMS:
            raise ChainVerificationError(f"{path}: missing parameter record")
        meta = json.loads(recs[0][1])
        node = cls.__new__(cls)
        node.params = ChainParams(**meta["chain"])
        node.fees = FeeSchedule(Decimal(meta["fee"]))
        node.blocks, node.mempool, node.dht, node.cas, node.ca_keys = [], [], {}, {}, {}
        node.fee_ledger, node._commits, node._committed_hashes = [], {}, set()
        node._lock = threading.RLock()
        node._entry_log = []
        try:
            for kind, body in recs[1:]:
                if kind == R_CA:
                    r = _Reader(body)
                    name, pub, seed = r.lp().decode(), r.lp(), r.lp()
                    node.cas[name] = pub
                    if seed:
                        node.ca_keys[name] = CertificateAuthority(name, Ed25519PrivateKey.from_private_bytes(seed))
                elif kind == R_BLOCK:
                    node._append(Block.from_bytes(body))
                elif kind == R_ENTRY:
                    e = DhtEntry.from_bytes(body)
                    node.dht[e.primary_key] = e
                    node._entry_log.append(e)
                elif kind == R_FEE:
                    r = _Reader(body)
                    node.fee_ledger.append((r.lp().decode(), Decimal(r.lp().decode()), r.lp().decode()))
                else:
                    raise ValueError(f"unknown record type {kind}")
        except (ValueError, struct.error) as exc:
            raise ChainVerificationError(f"{path}: corrupt record: {exc}") from exc
        for _, tx in node._commits.values():
            node._committed_hashes.add(tx.entry_hash)
        for ca in node.ca_keys.values():
            ca.issued.update({e.primary_key: e.public_key for e in node.dht.values()
                              if e.certificate.issuer == ca.name})
        node._saved = {"blocks": len(node.blocks), "entries": len(node._entry_log), "cas": len(node.cas),
                       "fees": len(node.fee_ledger), "params": True}
        return node


R_PARAMS, R_CA, R_BLOCK, R_ENTRY, R_FEE = 1, 2, 3, 4, 5


def _write_record(fh, kind: int, body: bytes) -> None:
    fh.write(struct.pack(">IB", len(body) + 1, kind) + body)


def read_records(path: str | Path) -> list[tuple[int, bytes]]:
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        if pos + 5 > len(data):
            raise ChainVerificationError(f"{path}: truncated record header at byte {pos}")
        n, kind = struct.unpack_from(">IB", data, pos)
        if n < 1 or pos + 4 + n > len(data):
            raise ChainVerificationError(f"{path}: truncated record at byte {pos}")
        out.append((kind, data[pos + 5:pos + 4 + n]))
        pos += 4 + n
    return out


def filtered_sync(
    source: PkiNode,
    accepted_cas: Mapping[str, bytes],
    trusted_tip: bytes | None = None,
    strict: bool = False,
    entries: Iterable[DhtEntry] | None = None,
) -> SyncResult:
    """Copy the entries vouched for by accepted CAs and backed by the chain.

    ``entries`` overrides the source's table, standing in for a download
    from an untrusted mirror.  Entries from other issuers are dropped
    silently.  Entries from accepted issuers that fail a check are left out
    and reported, or raise ChainVerificationError when ``strict``.
    """
    verify_chain(source.blocks, source.params, trusted_tip)
    commits, reveals = _index(source.blocks)
    kept, result = [], SyncResult(DhtCopy())
    pool = source.dht.values() if entries is None else entries
    for e in sorted(pool, key=lambda e: e.primary_key):
        if e.certificate.issuer not in accepted_cas:
            result.dropped.append(e.primary_key)
            continue
        try:
            check_certificate(e.certificate, accepted_cas, e.primary_key, e.public_key)
            entry_lineage(e, commits, reveals, source.params.reveal_delay)
        except (CertInvalid, ChainVerificationError) as exc:
            if strict:
                raise ChainVerificationError(f"entry {e.primary_key.hex()[:16]}...: {exc}") from exc
            result.rejected.append((e.primary_key, str(exc)))
            continue
        kept.append(e)
    result.copy = DhtCopy(kept)
    return result


def brick_attack_cost(salt_bits: int, fee: FeeSchedule | Decimal | float | str = DEFAULT_FEE) -> Decimal:
    """USD to pre-register every salt value of one plate: fee * 2**salt_bits."""
    if salt_bits < 0:
        raise ValueError("salt_bits must be >= 0")
    f = fee.insertion_fee if isinstance(fee, FeeSchedule) else Decimal(str(fee))
    return f * (1 << salt_bits)


def format_usd(amount: Decimal) -> str:
    return f"{amount.quantize(Decimal('0.01')):,} USD"
