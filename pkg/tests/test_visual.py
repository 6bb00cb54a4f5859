import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sidechan import codec, visual
from sidechan.errors import ConfigError, DecodeFailure, EmptyRegion, PlateNotVisible


# -- geometry ------------------------------------------------------------------------

@given(st.floats(0, 320), st.floats(0, 240), st.floats(10, 80), st.floats(-1.0, 1.0), st.floats(-0.3, 0.3))
def test_region_is_affine_image_of_light(x, y, s, theta, skew):
    pose = visual.PlatePose(x, y, s, theta, skew)
    light = visual.DEFAULT_GEOMETRY[0]
    region = visual.map_pose_to_lights(pose, light)
    # boundary points of the fitted ellipse pulled back to plate units
    t = np.linspace(0, 2 * np.pi, 32)
    pts = region.to_pixels(np.stack((np.cos(t), np.sin(t)), axis=1))
    c, sn = np.cos(theta), np.sin(theta)
    A = s * np.array([[c, -sn], [sn, c]]) @ np.array([[1, skew], [0, 1]])
    q = np.linalg.solve(A, (pts - [x, y]).T).T - light.offset
    a, b = light.semi_axes
    assert np.allclose((q[:, 0] / a) ** 2 + (q[:, 1] / b) ** 2, 1.0, atol=1e-6)
    assert region.sigma == pytest.approx(min(region.semi_axes) / 4)


def test_region_for_default_pose():
    r = visual.map_pose_to_lights(visual.PlatePose(160, 176))
    assert r.center == pytest.approx((160, 176 - 2 * 56))
    assert r.semi_axes == pytest.approx((0.85 * 56, 0.55 * 56))
    assert r.orientation == pytest.approx(0.0)


def test_locate_plate_occluded():
    f = visual.Frame(np.zeros((4, 4, 3), np.uint8), 0.0, 0, occluded=True)
    with pytest.raises(PlateNotVisible):
        visual.locate_plate(f, visual.PlatePose(1, 1))


# -- exposure --------------------------------------------------------------------------

def test_exposure_mixing_hand_example():
    lv = codec.LevelSequence(np.array([1, 0, 1, 1], np.uint8), 1 / 30)
    x = visual.exposure_levels(lv, 4, visual.CameraConfig())
    # window [0.4, 1.2] frame periods: 0.6 of 0.8 lit, and so on
    assert x == pytest.approx([0.75, 0.25, 1.0, 0.75])


def test_camera_config_validation():
    with pytest.raises(ConfigError):
        visual.CameraConfig(lookahead=0)
    with pytest.raises(ConfigError):
        visual.CameraConfig(exposure=0)
    with pytest.raises(ConfigError):
        visual.CameraConfig(downsample=0)


# -- receiver stages -------------------------------------------------------------------

def test_value_quantize():
    px = np.array([[[10, 200, 30], [255, 0, 0]]], np.uint8)
    assert visual.value_quantize(px, 256).tolist() == [[200, 255]]
    assert visual.value_quantize(px, 4).tolist() == [[3, 3]]
    assert visual.value_quantize(px, 16).tolist() == [[200 * 16 // 256, 15]]


def test_downscale_block_mean():
    g = np.arange(36, dtype=float).reshape(6, 6)
    d = visual.downscale(g, 2)
    want = [[np.mean(g[2 * i:2 * i + 2, 2 * j:2 * j + 2]) for j in range(3)] for i in range(3)]
    assert np.allclose(d, want)


def test_unit_disk_grid_inside_disk():
    g = visual.unit_disk_grid(7)
    assert np.all(np.hypot(g[:, 0], g[:, 1]) <= 1 + 1e-12)
    assert len(g) == sum(1 for u in np.linspace(-1, 1, 7) for v in np.linspace(-1, 1, 7) if u * u + v * v <= 1)


def test_region_statistic_on_linear_image():
    # bilinear sampling reproduces a linear image exactly
    H, W = 60, 80
    yy, xx = np.mgrid[0:H, 0:W]
    img = 0.5 * xx + 2.0 * yy + 3.0
    region = visual.LightRegion((40.0, 30.0), (12.0, 7.0), 0.3, 7.0 / 4)
    grid = visual.unit_disk_grid(9)
    got = visual.region_statistic(img, region, 256, grid)
    pts = region.to_pixels(grid)
    d = np.hypot(pts[:, 0] - 40, pts[:, 1] - 30)
    w = np.exp(-0.5 * (d / region.sigma) ** 2) / (region.sigma * np.sqrt(2 * np.pi))
    want = (0.5 * pts[:, 0] + 2 * pts[:, 1] + 3) * w / (256 * len(grid))
    assert np.allclose(got, want)


def test_region_outside_frame():
    region = visual.LightRegion((500.0, 500.0), (5.0, 3.0), 0.0, 0.75)
    with pytest.raises(EmptyRegion):
        visual.region_statistic(np.zeros((10, 10)), region, 256, visual.unit_disk_grid(5))


@given(st.lists(st.lists(st.floats(0, 1), min_size=6, max_size=6), min_size=3, max_size=8), st.integers(1, 2))
def test_correlation_matches_reference(rows, a):
    rows = np.asarray(rows)
    got = visual.correlate_lookahead(rows, a)
    for i in range(len(rows) - a):
        r1, r2 = rows[i], rows[i + a]
        if np.ptp(r1) == 0 or np.ptp(r2) == 0:
            want = 0.0 if np.array_equal(r1, r2) else 2.0
        else:
            want = min(max(oracles.pearson_distance(r1.tolist(), r2.tolist()), 0.0), 2.0)
        assert got[i] == pytest.approx(want, abs=1e-9)


def test_correlation_endpoints():
    r = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 2.0, 1.0]])
    assert visual.correlate_lookahead(r, 1) == pytest.approx([0.0, 2.0])


# -- chain decoder ---------------------------------------------------------------------

@pytest.mark.parametrize("a", [2, 4])
def test_chain_decoder_on_transient_rows(a):
    rng = np.random.default_rng(a)
    p = rng.integers(0, 2, 64)
    cfg = visual.CameraConfig(lookahead=a)
    lv = codec.encode_frame(p, 1 / 30)
    iv = visual.ideal_intervals(lv, cfg, 64)
    assert codec.decode_intervals(iv, 64).tolist() == p.tolist()


@pytest.mark.parametrize("a", [1, 2, 3, 4])
def test_chain_decoder_without_transients(a):
    # exposure window inside one slot: every frame is clean
    rng = np.random.default_rng(a)
    p = rng.integers(0, 2, 64)
    cfg = visual.CameraConfig(lookahead=a, phase=0.1 / 30)
    lv = codec.encode_frame(p, 1 / 30)
    iv = visual.ideal_intervals(lv, cfg, 64)
    assert codec.decode_intervals(iv, 64).tolist() == p.tolist()


def test_chain_decoder_flat_input_fails():
    with pytest.raises(DecodeFailure):
        visual.lag_chain_decode(np.zeros(100), 2, 1, 102, 100, 256, 0.01)


def test_lookahead_longer_than_preamble():
    with pytest.raises(ConfigError):
        visual.lag_chain_decode(np.zeros(40), 16, 1, 56)


def test_transition_mistakes():
    assert visual.transition_mistakes([1, 0, 1], [1, 0, 1]) == 0
    assert visual.transition_mistakes([1, 1, 1], [1, 0, 1]) == 2
    assert visual.transition_mistakes([1, 0], [1, 0, 1]) == 1


# -- rendered link ---------------------------------------------------------------------

def test_link_round_trip_noiseless():
    p = np.random.default_rng(5).integers(0, 2, 32)
    link = visual.VisualLink(tail_frames=4)
    out, sent, slots = link.transfer(p, seed=1)
    assert out.tolist() == p.tolist()
    assert visual.transition_mistakes(slots, sent) == 0
    assert link.airtime(32) == pytest.approx(80 / 30)


@pytest.mark.parametrize("ds", [2, 4])
def test_link_round_trip_downsampled(ds):
    p = np.random.default_rng(6).integers(0, 2, 24)
    link = visual.VisualLink(cfg=visual.CameraConfig(downsample=ds, noise=2.0), tail_frames=4)
    assert link.transfer(p, seed=2)[0].tolist() == p.tolist()


def test_two_frames_per_slot():
    p = [1, 0, 0, 1, 1, 0, 1, 0]
    link = visual.VisualLink(cfg=visual.CameraConfig(lookahead=4), frames_per_slot=2, tail_frames=4)
    assert link.transfer(p, seed=3)[0].tolist() == p


def test_occlusion_is_decode_failure():
    link = visual.VisualLink(tail_frames=4)
    with pytest.raises(DecodeFailure):
        link.transfer([1, 0, 1, 1], seed=0, occluded=[5])


def test_render_is_seeded():
    link = visual.VisualLink(cfg=visual.CameraConfig(noise=5.0))
    _, f1, _ = link.capture([1, 0], seed=9)
    _, f2, _ = link.capture([1, 0], seed=9)
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(f1, f2))


def test_capture_files_round_trip(tmp_path):
    p = [0, 1, 1, 0, 1, 0, 0, 1]
    link = visual.VisualLink(cfg=visual.CameraConfig(noise=3.0), tail_frames=4)
    _, frames, poses = link.capture(p, seed=4)
    frames[0].pixels[0, 0] = (10, 10, 10)     # leading whitespace byte in the raster
    visual.write_capture(tmp_path, frames, poses, link.cfg, seed=4)
    back, bposes, manifest = visual.read_capture(tmp_path)
    assert manifest["frame_rate"] == 30.0 and len(back) == len(frames)
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(frames, back))
    assert bposes == poses
    got = visual.visual_receive(back, bposes, link.cfg, link.half_period, len(p), seed=4)
    assert got.tolist() == p


def test_sweep_rows():
    link = visual.VisualLink(tail_frames=4)
    rows = visual.sweep_configurations(link, [1, 0, 1, 1], [0.8 / 30], (1, 2), (1, 2))
    assert len(rows) == 4
    assert {"exposure", "lookahead", "downsample", "mistakes", "time_s"} <= set(rows[0])
    assert all(r["time_s"] >= 0 for r in rows)
