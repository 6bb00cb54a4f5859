import pytest
from hypothesis import given
from hypothesis import strategies as st

from sidechan import codec, handshake as hs, pki
from sidechan.errors import DecodeFailure, DegenerateSecret, TagMismatch

# RFC 7748 section 6.1 test vectors
ALICE = bytes.fromhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a")
BOB = bytes.fromhex("5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb")
ALICE_PUB = "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a"
BOB_PUB = "de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f"
R_I = bytes.fromhex("00112233445566778899aabbccddeeff")
R_R = bytes.fromhex("ffeeddccbbaa99887766554433221100")
# scrypt(shared, R_I || R_R, N=2^14, r=8, p=1, 32) and the truncated SHA-256
# tags, all computed with `openssl kdf` / `openssl dgst`
MASTER = "33c9594dc8fb5ef5334bf4b9e1912be984a44ec9d5cd3fa6d63fd92025dfd767"
TAG_I, TAG_R = 0xEB56, 0x3E6D

FAST = hs.ScryptParams(n=1 << 10)


def test_x25519_public_vectors():
    assert hs.x25519_public(ALICE).hex() == ALICE_PUB
    assert hs.x25519_public(BOB).hex() == BOB_PUB


def test_master_and_tags_known_answer():
    k = hs.derive_keys(ALICE, bytes.fromhex(BOB_PUB), R_I, R_R)
    assert k.master.hex() == MASTER
    assert k.K == k.master[:16] and k.M == k.master[16:]
    assert hs.derive_keys(BOB, bytes.fromhex(ALICE_PUB), R_I, R_R) == k
    assert hs.confirm_tag(k.master, hs.INITIATOR) == TAG_I
    assert hs.confirm_tag(k.master, hs.RESPONDER) == TAG_R


def test_degenerate_peer_key():
    with pytest.raises(DegenerateSecret):
        hs.derive_keys(ALICE, bytes(32), R_I, R_R, FAST)


def test_keys_not_repr():
    k = hs.derive_keys(ALICE, bytes.fromhex(BOB_PUB), R_I, R_R, FAST)
    assert k.master.hex() not in repr(k)


@given(st.integers(0, 2**32 - 1), st.binary(min_size=16, max_size=16))
def test_ultrasonic_payload_round_trip(salt, r):
    bits = hs.make_ultrasonic_payload(salt, r)
    assert len(bits) == hs.ULTRASONIC_BITS == 160
    assert hs.parse_ultrasonic_payload(bits) == (salt, r)


def test_payload_length_checked():
    with pytest.raises(DecodeFailure):
        hs.parse_ultrasonic_payload([0] * 159)


def test_drbg_is_deterministic():
    a, b = hs.Drbg(7), hs.Drbg(7)
    assert a.bytes(40) == b.bytes(40)
    assert hs.Drbg(7).fork("x").bytes(8) != hs.Drbg(7).fork("y").bytes(8)


# -- two-party runs ----------------------------------------------------------------

@pytest.fixture(scope="module")
def world():
    ca = pki.CertificateAuthority.from_seed("dmv", b"hs")
    rng = hs.Drbg(1)
    a = hs.enroll("KX-4821", 0x1A2B3C4D, ca, None, rng.fork("a"))
    b = hs.enroll("TR-0937", 0x0BADF00D, ca, None, rng.fork("b"))
    dht = pki.DhtCopy([pki.DhtEntry(i.primary_key, i.public_key, i.certificate) for i in (a, b)])
    return a, b, {a.plate: dht, b.plate: dht}, {"dmv": ca.public_key}


def _run(world, channels=None, seed=0, **kw):
    a, b, dhts, cas = world
    return hs.run_handshake(a, b, channels or hs.IdealChannels(), dhts, cas, hs.Drbg(seed),
                            scrypt=FAST, **kw)


def test_honest_run(world):
    events = []
    res = _run(world, trace=lambda *e: events.append(e))
    assert res.confirmed and res.error is None
    s1, s2 = res.states.values()
    assert s1.K == s2.K and s1.M == s2.M and s1.K is not None
    assert set(res.bits.values()) <= {160, 16}
    assert res.bits[("acoustic", "KX-4821")] == 160 and res.bits[("visual", "TR-0937")] == 16
    assert res.elapsed == pytest.approx(168 * 0.02 + 24 * 2 / 30)
    phases = [e[3]["phase"] for e in events if e[2] == "phase" and e[3]["vehicle"] == "KX-4821"]
    assert phases == ["SaltSent", "PeerResolved", "KeysDerived", "Confirmed"]


def test_roles(world):
    a, b, _, _ = world
    assert hs.assign_roles(a, b, "TR-0937") == {"TR-0937": hs.INITIATOR, "KX-4821": hs.RESPONDER}
    lower = min((a, b), key=lambda i: i.primary_key)
    assert hs.assign_roles(a, b, None)[lower.plate] == hs.INITIATOR
    with pytest.raises(ValueError):
        hs.assign_roles(a, b, "nobody")


def test_sessions_differ_by_seed(world):
    r1, r2 = _run(world, seed=1), _run(world, seed=2)
    k1 = next(iter(r1.states.values())).K
    k2 = next(iter(r2.states.values())).K
    assert k1 != k2


@pytest.mark.parametrize("channel,sender,bit", [
    ("acoustic", "KX-4821", 0),       # identity salt: lookup fails
    ("acoustic", "TR-0937", 100),     # session salt
    ("visual", "KX-4821", 3),         # confirmation tag
])
def test_single_flip_is_caught(world, channel, sender, bit):
    res = _run(world, hs.IdealChannels(flips={(channel, sender): [bit]}))
    assert not res.confirmed
    assert res.error in ("TagMismatch", "NotFound")
    failed = [s for s in res.states.values() if s.phase == hs.Phase.FAILED]
    # a corrupted tag only fails its receiver; the sender saw a good tag
    assert len(failed) == (1 if channel == "visual" else 2)
    assert all(s.K is None and s.M is None for s in failed)


def test_salt_flip_gives_tag_mismatch(world):
    res = _run(world, hs.IdealChannels(flips={("acoustic", "KX-4821"): [97]}))
    assert res.error == "TagMismatch"


def test_lost_transfer(world):
    res = _run(world, hs.IdealChannels(drop={("visual", "TR-0937")}))
    assert res.error == "DecodeFailure"


def test_timeout(world):
    res = _run(world, hs.IdealChannels(acoustic_period=0.1))
    assert res.error == "Timeout"


def test_wrong_plate_read(world):
    res = _run(world, plates_seen={"KX-4821": "TR-0938"})
    assert res.error == "NotFound"


def test_unaccepted_ca(world):
    a, b, dhts, _ = world
    other = pki.CertificateAuthority.from_seed("dmv", b"elsewhere").public_key
    res = hs.run_handshake(a, b, hs.IdealChannels(), dhts, {"dmv": other}, hs.Drbg(0), scrypt=FAST)
    assert res.error == "CertInvalid"


def test_state_machine_guards(world):
    a, *_ = world
    st_ = hs.SessionState(a, hs.INITIATOR, hs.Drbg(3))
    assert st_.keys is None
    with pytest.raises(RuntimeError):
        st_._goto(hs.Phase.CONFIRMED)
    st_.ultrasonic_payload()
    st_.fail("test")
    assert st_.phase == hs.Phase.FAILED and st_.reason == "test"
    with pytest.raises(RuntimeError):
        st_._goto(hs.Phase.PEER_RESOLVED)
    assert all(hs.ALLOWED[p] <= set(hs.Phase) for p in hs.Phase)
    assert not hs.ALLOWED[hs.Phase.CONFIRMED] and not hs.ALLOWED[hs.Phase.FAILED]


def test_on_tag_rejects_wrong_length(world):
    res = _run(world)
    s = next(iter(res.states.values()))
    fresh = hs.SessionState(s.identity, s.role, hs.Drbg(0))
    fresh._keys, fresh.phase = s.keys, hs.Phase.KEYS_DERIVED
    with pytest.raises(TagMismatch):
        fresh.on_tag(codec.bits_from_int(0, 15))
