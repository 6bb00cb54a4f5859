import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sidechan import acoustic, codec
from sidechan.errors import ConfigError, DecodeFailure

payloads = st.lists(st.integers(0, 1), min_size=1, max_size=120)


def _send(payload, cfg, seed=0):
    return acoustic.acoustic_transmit(codec.encode_frame(payload, cfg.half_period), cfg, seed)


@given(payloads, st.sampled_from([0.0, 15.0, 30.0, 45.0]), st.sampled_from([0.0, 0.5, 1.5, 3.0]))
def test_round_trip_under_distortion(payload, angle, dist):
    cfg = acoustic.TransducerConfig(angle_deg=angle, distance_m=dist, samples_per_slot=10)
    assert acoustic.acoustic_receive(_send(payload, cfg), cfg.period, len(payload)).tolist() == payload


def test_distortion_stretches_on_runs_only():
    cfg = acoustic.TransducerConfig(angle_deg=45, distance_m=3.0)
    assert cfg.distortion == pytest.approx(1.25)
    base = acoustic.TransducerConfig()
    p = [1, 0, 0, 1, 1, 0]
    assert np.allclose(acoustic.rising_edges(_send(p, cfg)), acoustic.rising_edges(_send(p, base)))
    assert acoustic.duty_cycle(_send(p, cfg)) > acoustic.duty_cycle(_send(p, base))


def test_rising_to_transitions_hand_example():
    # slots 1 0 1 0 | 1 1 0 0 ... -> rises at 0, 2, 4
    h = 0.01
    iv = acoustic.rising_to_transitions(np.array([2 * h, 2 * h]), 2 * h)
    assert np.allclose(iv / h, [1, 1, 1, 1, 1])


def test_rising_distance_out_of_range():
    with pytest.raises(DecodeFailure):
        acoustic.rising_to_transitions(np.array([0.05]), 0.02)


def test_glitches_are_skipped():
    cfg = acoustic.TransducerConfig(samples_per_slot=20)
    tr = _send([1, 0, 1, 1, 0, 0, 1, 0], cfg)
    s = tr.samples.copy()
    rise = int(np.flatnonzero(np.diff(s.astype(int)) == 1)[1]) + 1
    s[rise + 3] = 0                    # dropout inside an ON burst: a spurious rise
    noisy = acoustic.EnvelopeTrace(s, tr.sample_rate)
    assert acoustic.acoustic_receive(noisy, cfg.period, 8).tolist() == [1, 0, 1, 1, 0, 0, 1, 0]


def test_jitter_tolerated():
    cfg = acoustic.TransducerConfig(jitter=0.0005, samples_per_slot=40)
    rng = np.random.default_rng(3)
    for seed in range(20):
        p = rng.integers(0, 2, 64).tolist()
        assert acoustic.acoustic_receive(_send(p, cfg, seed), cfg.period, 64).tolist() == p


def test_config_validation():
    with pytest.raises(ConfigError):
        acoustic.TransducerConfig(angle_deg=50)
    with pytest.raises(ConfigError):
        acoustic.TransducerConfig(period=0)
    with pytest.raises(ConfigError):
        acoustic.TransducerConfig(samples_per_slot=4)
    cfg = acoustic.TransducerConfig()
    with pytest.raises(ConfigError):
        acoustic.acoustic_transmit(codec.encode_frame([1], 0.5), cfg)


def test_no_edges_is_decode_failure():
    silent = acoustic.EnvelopeTrace(np.zeros(100, dtype=np.uint8), 1000.0)
    with pytest.raises(DecodeFailure):
        acoustic.acoustic_receive(silent, 0.02, 8)


def test_csv_round_trip(tmp_path):
    cfg = acoustic.TransducerConfig(samples_per_slot=10)
    tr = _send([1, 1, 0, 1], cfg)
    acoustic.write_trace_csv(tr, tmp_path / "t.csv")
    back = acoustic.read_trace_csv(tmp_path / "t.csv")
    assert np.array_equal(back.samples, tr.samples)
    assert back.sample_rate == pytest.approx(tr.sample_rate)
    assert acoustic.acoustic_receive(back, cfg.period, 4).tolist() == [1, 1, 0, 1]


def test_csv_rejects_uneven_sampling(tmp_path):
    (tmp_path / "bad.csv").write_text("time_s,level\n0,0\n0.1,1\n0.3,0\n")
    with pytest.raises(ConfigError):
        acoustic.read_trace_csv(tmp_path / "bad.csv")
