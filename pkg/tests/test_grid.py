import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_bev, naive_decode, spaced_scene

from safedrive.grid import (
    DensityMap,
    DetectedObject,
    NoiseConfig,
    accumulate_waypoints,
    cell_of,
    corrupt_perception,
    decode_density_map,
    encode_density_map,
    lidar_to_bev,
)


def _obj(x, y, **kw):
    base = dict(heading=0.0, speed=0.0, half_length=2.0, half_width=1.0)
    base.update(kw)
    return DetectedObject(x, y, **base)


def brute_force_cell(x, y, R):
    for i in range(R):
        for j in range(R):
            x0, y0 = -R / 2 + j, float(i)
            if x0 <= x < x0 + 1 and y0 <= y < y0 + 1:
                return i, j
    return None


def _as_tuples(objects):
    return [(o.x, o.y, o.heading, o.speed, o.half_width, o.half_length) for o in objects]


# --- encode ---

def test_encode_empty_and_rejects_bad_size():
    assert encode_density_map([], 20) == DensityMap.zeros(20)
    with pytest.raises(ValueError):
        encode_density_map([], 0)


def test_encode_object_at_cell_center():
    dmap = encode_density_map([_obj(0.5, 7.5, heading=0.3, speed=2.0)], 20)
    i, j = 7, 10
    assert dmap.cells[i, j, 0] == 1.0
    assert tuple(dmap.cells[i, j, 1:3]) == (0.0, 0.0)
    assert dmap.prob.sum() == 1.0


def test_encode_example_matches_brute_force_cell():
    dmap = encode_density_map([_obj(0.3, 5.2)], 20)
    i, j = brute_force_cell(0.3, 5.2, 20)
    assert (i, j) == (5, 10)
    assert dmap.cells[i, j, 0] == 1.0
    assert dmap.cells[i, j, 1] == pytest.approx(0.3 - 0.5)
    assert dmap.cells[i, j, 2] == pytest.approx(5.2 - 5.5)


@settings(max_examples=300)
@given(st.floats(-12, 12), st.floats(-2, 22))
def test_cell_of_matches_brute_force(x, y):
    assert cell_of(x, y, 20) == brute_force_cell(x, y, 20)


def test_encode_channels_and_invariants():
    rng = np.random.default_rng(3)
    for _ in range(50):
        objs = [
            _obj(rng.uniform(-10, 10), rng.uniform(0, 20), heading=rng.uniform(-7, 7),
                 speed=rng.uniform(0, 8), half_length=rng.uniform(0.2, 3), half_width=rng.uniform(0.2, 1.5))
            for _ in range(rng.integers(0, 12))
        ]
        c = encode_density_map(objs, 20).cells
        assert set(np.unique(c[..., 0])) <= {0.0, 1.0}
        assert np.all(np.abs(c[..., 1:3]) <= 0.5)
        assert np.all((c[..., 3] > -math.pi) & (c[..., 3] <= math.pi))
        assert np.all(c[..., 5:] >= 0)
        assert np.all(c[c[..., 0] == 0] == 0)


def test_nearer_object_wins_shared_cell():
    far = _obj(0.9, 5.9, speed=1.0)
    near = _obj(0.1, 5.1, speed=2.0)
    for order in ([far, near], [near, far]):
        dmap = encode_density_map(order, 20)
        assert dmap.cells[5, 10, 4] == 2.0


def test_encode_skips_uncovered_objects():
    dmap = encode_density_map([_obj(0, -1), _obj(10.0, 5), _obj(0, 20.0)], 20)
    assert dmap.prob.sum() == 0.0


def test_class_rides_out_of_band():
    dmap = encode_density_map([_obj(0.5, 3.5, cls="pedestrian")], 20)
    (obj,) = decode_density_map(dmap)
    assert obj.cls == "pedestrian"
    restored = DensityMap.from_text(dmap.to_text())
    assert restored == dmap
    assert decode_density_map(restored)[0].cls == "vehicle"


# --- decode ---

def test_decode_all_zero_and_threshold_errors():
    assert decode_density_map(DensityMap.zeros(20)) == []
    with pytest.raises(ValueError):
        decode_density_map(DensityMap.zeros(20), 0.5, 0.5)


def test_decode_single_high_confidence_cell():
    cells = np.zeros((20, 20, 7))
    cells[4, 3, 0] = 0.95
    (obj,) = decode_density_map(DensityMap(cells), 0.9, 0.5)
    assert (obj.x, obj.y) == (-10 + 3.5, 4.5)


def test_decode_local_maximum_rule():
    cells = np.zeros((20, 20, 7))
    cells[8, 8, 0] = 0.6
    cells[7:10, 7:10, 0][cells[7:10, 7:10, 0] == 0] = 0.4
    assert len(decode_density_map(DensityMap(cells), 0.9, 0.5)) == 1
    cells[9, 9, 0] = 0.6  # plateau: no strict maximum
    assert decode_density_map(DensityMap(cells), 0.9, 0.5) == []


def test_decode_matches_naive_reference():
    rng = np.random.default_rng(4)
    for _ in range(200):
        cells = np.zeros((20, 20, 7))
        cells[..., 0] = rng.uniform(0, 1, (20, 20)) ** rng.uniform(0.3, 3)
        cells[..., 1:3] = rng.uniform(-0.6, 0.6, (20, 20, 2))
        cells[..., 3] = rng.uniform(-math.pi, math.pi, (20, 20))
        cells[..., 4] = rng.uniform(0, 10, (20, 20))
        cells[..., 5:] = rng.uniform(0, 3, (20, 20, 2))
        dmap = DensityMap(cells)
        assert _as_tuples(decode_density_map(dmap, 0.9, 0.5)) == naive_decode(cells, 0.9, 0.5)


def test_decode_invariant_to_sub_threshold_noise():
    rng = np.random.default_rng(5)
    cells = np.zeros((20, 20, 7))
    cells[2, 2, 0] = cells[10, 15, 0] = 1.0
    base = decode_density_map(DensityMap(cells))
    noisy = cells.copy()
    mask = noisy[..., 0] == 0
    noisy[..., 0][mask] = rng.uniform(0, 0.5, mask.sum())
    assert decode_density_map(DensityMap(noisy)) == base


def test_decode_clamps_offsets():
    cells = np.zeros((20, 20, 7))
    cells[0, 0] = (1.0, 3.0, -3.0, 0.0, 0.0, 1.0, 1.0)
    (obj,) = decode_density_map(DensityMap(cells))
    assert (obj.x, obj.y) == (-9.0, 0.0)


def test_round_trip_recovers_objects():
    rng = np.random.default_rng(6)
    for _ in range(100):
        scene = spaced_scene(rng, int(rng.integers(1, 15)))
        got = decode_density_map(encode_density_map(scene, 20))
        key = lambda o: (o.y, o.x)  # noqa: E731
        for a, b in zip(sorted(scene, key=key), sorted(got, key=key)):
            assert abs(a.x - b.x) < 1e-12 and abs(a.y - b.y) < 1e-12
            assert (a.heading, a.speed, a.half_length, a.half_width, a.cls) == (
                b.heading, b.speed, b.half_length, b.half_width, b.cls)
        assert len(got) == len(scene)


# --- serialisation ---

def test_text_and_binary_records_round_trip():
    rng = np.random.default_rng(7)
    dmap = DensityMap(rng.normal(size=(6, 6, 7)))
    assert DensityMap.from_text(dmap.to_text()) == dmap
    assert DensityMap.from_bytes(dmap.to_bytes()) == dmap
    assert dmap.to_text().splitlines()[0] == "6 7"
    assert len(dmap.to_bytes()) == 8 + 6 * 6 * 7 * 8


@pytest.mark.parametrize("text", ["", "2 6\n", "2 7\n0 0 0 0 0 0 0\n"])
def test_text_record_rejects_malformed(text):
    with pytest.raises(ValueError):
        DensityMap.from_text(text)


def test_density_map_validation_and_immutability():
    with pytest.raises(ValueError):
        DensityMap(np.zeros((3, 4, 7)))
    with pytest.raises(ValueError):
        DensityMap(np.full((2, 2, 7), np.nan))
    dmap = DensityMap.zeros(3)
    with pytest.raises(ValueError):
        dmap.cells[0, 0, 0] = 1.0


# --- BEV ---

def test_bev_shape_and_empty_cloud():
    h = lidar_to_bev(np.zeros((0, 3)))
    assert h.counts.shape == (2, 80, 80)
    assert h.total == 0
    assert h.cell_size ** 2 == pytest.approx(0.125)


def test_bev_single_point():
    h = lidar_to_bev([(0.0, 5.0, 1.0)], ground_z=0.0)
    assert h.total == 1
    i, j = int(5.0 / h.cell_size), int(14.0 / h.cell_size)
    assert h.counts[0, i, j] == 1


def test_bev_matches_brute_force_and_counts_in_range():
    rng = np.random.default_rng(8)
    pts = np.column_stack([rng.uniform(-20, 20, 10_000), rng.uniform(-5, 35, 10_000),
                           rng.normal(0, 1, 10_000)])
    h = lidar_to_bev(pts, ground_z=0.0)
    assert np.array_equal(h.counts, brute_force_bev(pts, 0.0, h.cell_size, 28.0, 14.0))
    in_range = ((pts[:, 1] >= 0) & (pts[:, 1] < 28) & (pts[:, 0] >= -14) & (pts[:, 0] < 14)).sum()
    assert h.total == in_range


def test_bev_ground_plane_is_below_channel():
    h = lidar_to_bev([(0.0, 1.0, 0.5), (0.0, 1.0, 0.5 + 1e-9)], ground_z=0.5)
    assert h.counts[1].sum() == 1 and h.counts[0].sum() == 1


# --- waypoints ---

def test_accumulate_waypoint_examples():
    assert accumulate_waypoints(np.zeros((10, 2))).as_array().tolist() == [[0.0, 0.0]] * 10
    pts = accumulate_waypoints([(0, 1)] * 10).as_array()
    assert pts.tolist() == [[0.0, float(k)] for k in range(1, 11)]
    with pytest.raises(ValueError):
        accumulate_waypoints([])


def test_accumulate_matches_running_sum():
    rng = np.random.default_rng(9)
    d = rng.normal(size=(10, 2))
    sx = sy = 0.0
    expected = []
    for dx, dy in d:
        sx += dx
        sy += dy
        expected.append((sx, sy))
    got = accumulate_waypoints(d).as_array()
    assert np.allclose(got, expected, rtol=0, atol=1e-12)


# --- noise stub ---

def test_noise_identity_and_full_dropout():
    objs = [_obj(1, 2), _obj(-3, 8, cls="bicycle")]
    assert corrupt_perception(objs, NoiseConfig()) == objs
    assert corrupt_perception(objs, NoiseConfig(dropout_prob=1.0, seed=3)) == []
    fps = corrupt_perception(objs, NoiseConfig(dropout_prob=1.0, false_positive_rate=5.0, seed=3))
    assert fps and all(o.cls == "vehicle" and cell_of(o.x, o.y, 20) for o in fps)


def test_noise_is_deterministic_per_seed():
    objs = [_obj(1, 2), _obj(-3, 8, cls="pedestrian")]
    cfg = NoiseConfig(position_sigma=0.2, dropout_prob=0.3, false_positive_rate=1.0, seed=11)
    a, b = corrupt_perception(objs, cfg), corrupt_perception(objs, cfg)
    assert repr(a) == repr(b)
    c = corrupt_perception(objs, NoiseConfig(0.2, 0.3, 1.0, seed=12))
    assert repr(a) != repr(c)


def test_noise_preserves_class_and_jitters():
    objs = [_obj(1, 2, cls="pedestrian")]
    (out,) = corrupt_perception(objs, NoiseConfig(position_sigma=0.2, seed=1))
    assert out.cls == "pedestrian"
    assert (out.x, out.y) != (1, 2)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(position_sigma=-1)
    with pytest.raises(ValueError):
        NoiseConfig(dropout_prob=1.5)


def test_detected_object_validation():
    with pytest.raises(ValueError):
        _obj(0, 0, confidence=1.5)
    with pytest.raises(ValueError):
        _obj(0, 0, cls="tram")
    with pytest.raises(ValueError):
        _obj(0, 0, half_width=0.0)
