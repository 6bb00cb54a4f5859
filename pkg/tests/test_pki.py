import dataclasses
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sidechan import pki
from sidechan.errors import (
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

# SHA-256 over "KX-4821" || 1a2b3c4d, computed with `openssl dgst -sha256`
KX_PRIM = "67816bf048ad11fc1e17afc678faa365e5594590abb6b45a1174e044c535bfa1"

FAST = pki.ChainParams(difficulty_bits=4)


def _entry(ca, plate="KX-4821", salt=0x1A2B3C4D, pub=b"\x11" * 32):
    cert = ca.issue(plate, salt, pub)
    return pki.DhtEntry(cert.primary_key, pub, cert)


@pytest.fixture
def ca():
    return pki.CertificateAuthority.from_seed("dmv", b"seed")


def test_primary_key_known_answer():
    assert pki.compute_primary_key("KX-4821", 0x1A2B3C4D).hex() == KX_PRIM
    assert pki.compute_primary_key(b"KX-4821", bytes.fromhex("1a2b3c4d")).hex() == KX_PRIM


def test_salt_must_be_32_bits():
    with pytest.raises(SaltSizeError):
        pki.salt_bytes(1 << 32)
    with pytest.raises(SaltSizeError):
        pki.salt_bytes(b"\x00\x01")


def test_certificate_round_trip_and_signature(ca):
    cert = ca.issue("KX-4821", 7, b"\x22" * 32)
    back = pki.Certificate.from_bytes(cert.to_bytes())
    assert back == cert and back.verify(ca.public_key)
    other = pki.CertificateAuthority.from_seed("dmv", b"other")
    assert not cert.verify(other.public_key)
    forged = dataclasses.replace(cert, public_key=b"\x33" * 32)
    assert not forged.verify(ca.public_key)


def test_check_certificate(ca):
    cert = ca.issue("KX-4821", 7, b"\x22" * 32)
    pki.check_certificate(cert, {"dmv": ca.public_key}, cert.primary_key, cert.public_key)
    with pytest.raises(CANotAccepted):
        pki.check_certificate(cert, {"other": ca.public_key})
    with pytest.raises(CertInvalid):
        pki.check_certificate(cert, {"dmv": ca.public_key}, bytes(32))
    bad = pki.CertificateAuthority.from_seed("dmv", b"x").public_key
    with pytest.raises(CertInvalid):
        pki.check_certificate(cert, {"dmv": bad})


def test_ca_refuses_duplicate_primary_key(ca):
    ca.issue("KX-4821", 7, b"\x22" * 32)
    with pytest.raises(CollisionError):
        ca.issue("KX-4821", 7, b"\x44" * 32)


def test_entry_size_cap(ca):
    cert = ca.issue("A", 1, b"\x01" * 32)
    pki.DhtEntry(cert.primary_key, b"\x01" * 32, cert, b"x" * 100)
    with pytest.raises(EntrySizeError):
        pki.DhtEntry(cert.primary_key, b"\x01" * 32, cert, b"x" * pki.MAX_ENTRY_BYTES)


def test_entry_serialisation(ca):
    e = _entry(ca)
    assert pki.DhtEntry.from_bytes(e.to_bytes()) == e
    assert len(e.entry_hash) == 32


@given(st.integers(1, 16))
def test_proof_of_work(bits):
    b = pki.solve(1, bytes(32), 0.0, bits, ())
    assert int.from_bytes(b.hash, "big") >> (256 - bits) == 0


def test_retarget_schedule():
    p = pki.ChainParams(difficulty_bits=6, retarget_window=10, target_interval=60.0)
    node = pki.PkiNode(p)
    node.mine(9, interval=15.0)            # 4x too fast: +2 bits
    assert node.tip.bits == 6
    assert pki.next_bits(node.blocks, p) == 8
    node.mine(10, interval=15.0 * 4 * 2)   # 2x too slow: -1 bit
    assert pki.next_bits(node.blocks, p) == 7
    node.verify()


def test_commit_reveal_lifecycle(ca):
    node = pki.PkiNode(FAST)
    e = _entry(ca)
    rc = node.commit(e, "kx")
    with pytest.raises(DuplicateCommit):
        node.commit(e)
    with pytest.raises(NoCommit):
        node.reveal(e, rc)
    node.mine_block()                      # commit lands at height 1
    node.mine(FAST.reveal_delay - 1)
    with pytest.raises(CommitTooRecent):
        node.reveal(e, rc)
    node.mine_block()
    with pytest.raises(HashMismatch):
        node.reveal(_entry(pki.CertificateAuthority.from_seed("dmv", b"q"), pub=b"\x12" * 32), rc)
    node.reveal(e, rc)
    node.mine_block()
    node.verify(node.tip.hash)
    assert node.lookup(e.primary_key) == e
    assert node.total_fees("kx") == Decimal("0.09")


def test_lookup_missing():
    with pytest.raises(NotFound):
        pki.DhtCopy().lookup(bytes(32))


def test_register_and_lineage(ca):
    node = pki.PkiNode(FAST)
    lin = node.register(_entry(ca))
    assert lin.reveal_height - lin.commit_height >= FAST.reveal_delay


def test_verify_chain_catches_breaks(ca):
    node = pki.PkiNode(FAST)
    node.register(_entry(ca))
    blocks = list(node.blocks)
    with pytest.raises(ChainVerificationError):
        pki.verify_chain(blocks[:1] + blocks[2:], FAST)
    with pytest.raises(ChainVerificationError):
        pki.verify_chain(blocks, FAST, trusted_tip=bytes(32))
    assert blocks[1].txs                   # the commit
    gone = dataclasses.replace(blocks[1], txs=())
    with pytest.raises(ChainVerificationError):
        pki.verify_chain(blocks[:1] + [gone] + blocks[2:], FAST)
    with pytest.raises(ChainVerificationError):
        pki.verify_chain([], FAST)


def test_entry_without_reveal_is_rejected(ca):
    node = pki.PkiNode(FAST)
    e = _entry(ca)
    node.commit(e)
    node.mine_block()
    with pytest.raises(ChainVerificationError):
        pki.entry_lineage(e, *pki._index(node.blocks), FAST.reveal_delay)


def test_filtered_sync(ca):
    node = pki.PkiNode(FAST)
    rogue = pki.CertificateAuthority.from_seed("rogue", b"r")
    good = _entry(ca)
    node.register(good)
    node.register(_entry(rogue, plate="ZZ-1"))
    accepted = {"dmv": ca.public_key}
    res = pki.filtered_sync(node, accepted, node.tip.hash)
    assert len(res.copy) == 1 and res.copy.lookup(good.primary_key) == good
    assert len(res.dropped) == 1 and not res.rejected
    # an accepted issuer whose entry was never put on chain
    stray = _entry(ca, plate="AB-1")
    res = pki.filtered_sync(node, accepted, entries=[good, stray])
    assert len(res.rejected) == 1
    with pytest.raises(ChainVerificationError):
        pki.filtered_sync(node, accepted, strict=True, entries=[good, stray])


def test_persistence_round_trip(ca, tmp_path):
    path = tmp_path / "chain.bin"
    node = pki.PkiNode(FAST)
    node.add_ca(ca)
    node.register(_entry(ca), "kx")
    node.save(path)
    size = path.stat().st_size
    node.save(path)                        # nothing new: nothing appended
    assert path.stat().st_size == size
    back = pki.PkiNode.load(path)
    assert [b.hash for b in back.blocks] == [b.hash for b in node.blocks]
    assert back.dht == node.dht and back.cas == node.cas
    back.verify(node.tip.hash)
    back.register(_entry(back.ca_keys["dmv"], plate="TR-0937", salt=0x0BADF00D), "tr")
    back.save(path)
    again = pki.PkiNode.load(path)
    assert again.height == back.height and again.total_fees() == Decimal("0.18")
    with pytest.raises(ConfigError):
        pki.PkiNode(FAST).save(path)


def test_corrupt_store(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00\x00\x00\x09\x01{}")
    with pytest.raises(ChainVerificationError):
        pki.PkiNode.load(path)


@pytest.mark.parametrize("bits,fee,want", [
    (32, "0.09", "386,547,056.64 USD"),
    (0, "0.09", "0.09 USD"),
    (16, "1", "65,536.00 USD"),
])
def test_attack_cost(bits, fee, want):
    assert pki.format_usd(pki.brick_attack_cost(bits, fee)) == want


def test_attack_cost_is_exact_decimal():
    assert pki.brick_attack_cost(32) == Decimal("0.09") * 4294967296
