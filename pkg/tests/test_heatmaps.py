import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signstream.errors import ConfigError
from signstream.heatmaps import (
    HeatmapConfig,
    KeypointLayout,
    KeypointTrajectory,
    group_subsets,
    rasterize,
    read_keypoint_file,
    select_keypoints,
    write_keypoint_file,
)


def single_point_traj(x, y, conf=1.0):
    return KeypointTrajectory(
        np.array([[[x, y]]], dtype=float), np.array([[conf]], dtype=float)
    )


def test_on_grid_keypoint_peaks_at_one():
    cfg = HeatmapConfig(sigma=4.0, height=16, width=16)
    vol = rasterize(single_point_traj(5.0, 9.0), cfg)
    assert vol.shape == (1, 16, 16, 1)
    assert vol[0, 5, 9, 0] == 1.0
    assert vol.max() == 1.0


def test_sigma_four_offset_value():
    # offset of 4 pixels along one axis: exp(-16/32)
    cfg = HeatmapConfig(height=16, width=16)
    assert cfg.sigma == 4.0
    vol = rasterize(single_point_traj(8.0, 8.0), cfg)
    assert vol[0, 12, 8, 0] == pytest.approx(np.exp(-16.0 / 32.0), abs=1e-12)
    assert vol[0, 12, 8, 0] == pytest.approx(0.606531, abs=1e-6)


def test_low_confidence_channel_suppressed():
    cfg = HeatmapConfig(height=8, width=8, confidence_threshold=0.3)
    vol = rasterize(single_point_traj(4.0, 4.0, conf=0.0), cfg)
    assert np.all(vol == 0.0)


def test_out_of_frame_center_suppressed():
    cfg = HeatmapConfig(sigma=2.0, height=8, width=8)
    inside = rasterize(single_point_traj(-5.9, 4.0), cfg)  # within -3*sigma margin
    assert inside.max() > 0.0
    outside = rasterize(single_point_traj(-6.1, 4.0), cfg)  # beyond the margin
    assert np.all(outside == 0.0)


def test_closed_form_on_random_keypoints():
    gen = np.random.default_rng(0)
    cfg = HeatmapConfig(sigma=4.0, height=12, width=10, confidence_threshold=0.0)
    coords = gen.uniform(0, 10, size=(5, 7, 2))
    conf = np.ones((5, 7))
    vol = rasterize(KeypointTrajectory(coords, conf), cfg)
    for _ in range(100):
        t, k = gen.integers(5), gen.integers(7)
        i, j = gen.integers(12), gen.integers(10)
        x, y = coords[t, k]
        expected = np.exp(-((i - x) ** 2 + (j - y) ** 2) / (2 * 16.0))
        assert vol[t, i, j, k] == pytest.approx(expected, abs=1e-7)


def test_values_in_unit_interval_and_monotone_decay():
    gen = np.random.default_rng(1)
    cfg = HeatmapConfig(sigma=3.0, height=9, width=9, confidence_threshold=0.0)
    vol = rasterize(KeypointTrajectory(gen.uniform(0, 9, (3, 4, 2)), np.ones((3, 4))), cfg)
    assert vol.min() >= 0.0 and vol.max() <= 1.0
    # strictly decreasing in squared distance from the center
    vol1 = rasterize(single_point_traj(4.0, 4.0), HeatmapConfig(sigma=2.0, height=9, width=9))
    center_row = vol1[0, :, 4, 0]
    assert np.all(np.diff(center_row[:5]) > 0) and np.all(np.diff(center_row[4:]) < 0)


@settings(max_examples=30, deadline=None)
@given(
    di=st.integers(min_value=-3, max_value=3),
    dj=st.integers(min_value=-3, max_value=3),
)
def test_integer_shift_equivariance(di, dj):
    cfg = HeatmapConfig(sigma=2.0, height=17, width=17)
    base = rasterize(single_point_traj(8.0, 8.0), cfg)[0, :, :, 0]
    shifted = rasterize(single_point_traj(8.0 + di, 8.0 + dj), cfg)[0, :, :, 0]
    lo_i, hi_i = max(0, di), min(17, 17 + di)
    lo_j, hi_j = max(0, dj), min(17, 17 + dj)
    np.testing.assert_allclose(
        shifted[lo_i:hi_i, lo_j:hi_j],
        base[lo_i - di : hi_i - di, lo_j - dj : hi_j - dj],
        atol=1e-12,
    )


def test_off_grid_peak_below_one():
    cfg = HeatmapConfig(sigma=2.0, height=9, width=9)
    vol = rasterize(single_point_traj(4.5, 4.0), cfg)
    assert vol.max() < 1.0


# ---------------------------------------------------------------- selection


def test_select_keypoints_counts():
    assert len(select_keypoints()) == 79
    assert len(select_keypoints(groups={"body"})) == 11
    assert len(select_keypoints(groups={"body", "hand"})) == 53
    assert len(select_keypoints(groups={"body", "hand", "mouth"})) == 63


def test_select_keypoints_ordering_and_uniqueness():
    idx = select_keypoints()
    assert len(set(idx)) == 79
    assert idx[:11] == list(range(11))
    assert idx[11:53] == list(range(11, 53))
    assert all(53 <= i < 121 for i in idx[53:])


def test_select_keypoints_missing_group_errors():
    with pytest.raises(ConfigError):
        select_keypoints({"body": 11, "face": 68})
    with pytest.raises(ConfigError):
        select_keypoints(groups={"body", "toes"})


def test_group_subsets_layout():
    layout = KeypointLayout({"body": 3, "hand": 4, "mouth": 2, "face": 3})
    assert group_subsets(layout, {"body"}) == [0, 1, 2]
    assert group_subsets(layout, {"hand", "body"}) == [0, 1, 2, 3, 4, 5, 6]
    assert group_subsets(layout, {"face"}) == [9, 10, 11]
    with pytest.raises(ConfigError):
        group_subsets(layout, {"nose"})
    with pytest.raises(ConfigError):
        group_subsets(layout, set())


# ------------------------------------------------------------------ file I/O


def test_keypoint_file_round_trip(tmp_path):
    gen = np.random.default_rng(2)
    layout = KeypointLayout({"body": 2, "hand": 2, "mouth": 1, "face": 1})
    traj = KeypointTrajectory(
        gen.uniform(0, 16, size=(5, 6, 2)).astype(np.float32).astype(np.float64),
        gen.uniform(0, 1, size=(5, 6)).astype(np.float32).astype(np.float64),
        layout,
    )
    path = str(tmp_path / "kp.bin")
    write_keypoint_file(path, traj)
    back = read_keypoint_file(path)
    np.testing.assert_array_equal(back.coords, traj.coords)
    np.testing.assert_array_equal(back.confidence, traj.confidence)
    assert back.layout.counts == layout.counts


def test_trajectory_validation():
    with pytest.raises(ValueError):
        KeypointTrajectory(np.array([[[np.inf, 0.0]]]), np.array([[1.0]]))
    with pytest.raises(ValueError):
        KeypointTrajectory(np.array([[[0.0, 0.0]]]), np.array([[1.5]]))
    with pytest.raises(ConfigError):
        HeatmapConfig(sigma=0.0)
    with pytest.raises(ConfigError):
        HeatmapConfig(height=0)
