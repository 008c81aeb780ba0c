import math

import numpy as np
import pytest
from oracles import oracle_meta, oracle_prob, oracle_traffic, oracle_waypoint

from safedrive.geometry import WaypointPath
from safedrive.grid import DensityMap
from safedrive.losses import (
    BCE_EPS,
    LossParts,
    LossWeights,
    TrafficState,
    binary_cross_entropy,
    density_meta_loss,
    density_prob_loss,
    evaluate_losses,
    total_loss,
    traffic_loss,
    waypoint_loss,
)

W = LossWeights()


def _random_maps(rng, R=20, density=0.2):
    target = rng.uniform(-1, 1, (R, R, 7))
    target[..., 0] = (rng.uniform(size=(R, R)) < density).astype(float)
    pred = rng.uniform(-1, 1, (R, R, 7))
    pred[..., 0] = rng.uniform(size=(R, R))
    return DensityMap(pred), DensityMap(target)


# --- waypoint ---

def test_waypoint_loss_examples():
    path = [(0.0, float(k)) for k in range(1, 11)]
    assert waypoint_loss(path, path) == 0.0
    shifted = [(x + 0.1, y) for x, y in path]
    assert waypoint_loss(shifted, path) == pytest.approx(1.0, abs=1e-12)
    assert waypoint_loss(WaypointPath(shifted), WaypointPath(path)) == pytest.approx(1.0, abs=1e-12)


def test_waypoint_loss_length_mismatch():
    with pytest.raises(ValueError):
        waypoint_loss([(0, 0)] * 10, [(0, 0)] * 9)


def test_waypoint_loss_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p, t = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
        assert abs(waypoint_loss(p, t) - oracle_waypoint(p.tolist(), t.tolist())) < 1e-12


# --- density map ---

def test_prob_loss_examples():
    target = DensityMap.zeros(20)
    assert density_prob_loss(target, target) == 0.0
    pred = np.zeros((20, 20, 7))
    pred[..., 0] = 0.1
    assert density_prob_loss(DensityMap(pred), target) == pytest.approx(0.05, abs=1e-12)


def test_prob_loss_all_negative_is_half_mae():
    rng = np.random.default_rng(1)
    pred = np.zeros((20, 20, 7))
    pred[..., 0] = rng.uniform(size=(20, 20))
    assert density_prob_loss(DensityMap(pred), DensityMap.zeros(20)) == pytest.approx(
        0.5 * np.abs(pred[..., 0]).mean(), abs=1e-12)


def test_prob_loss_rejects_soft_target():
    target = np.zeros((4, 4, 7))
    target[0, 0, 0] = 0.5
    with pytest.raises(ValueError):
        density_prob_loss(DensityMap.zeros(4), DensityMap(target))
    with pytest.raises(ValueError):
        density_prob_loss(DensityMap.zeros(4), DensityMap.zeros(5))


def test_prob_loss_permutation_invariant():
    rng = np.random.default_rng(2)
    pred, target = _random_maps(rng)
    perm = rng.permutation(400)

    def shuffle(d):
        return DensityMap(d.cells.reshape(400, 7)[perm].reshape(20, 20, 7))

    assert density_prob_loss(shuffle(pred), shuffle(target)) == pytest.approx(
        density_prob_loss(pred, target), abs=1e-12)


def test_meta_loss_examples():
    target = np.zeros((20, 20, 7))
    target[3, 4] = (1, 0.1, -0.2, 0.3, 2.0, 1.0, 2.0)
    assert density_meta_loss(DensityMap(target), DensityMap(target)) == 0.0
    pred = target.copy()
    pred[3, 4, 1:] += 0.5
    assert density_meta_loss(DensityMap(pred), DensityMap(target)) == pytest.approx(3.0, abs=1e-12)
    assert density_meta_loss(DensityMap(pred), DensityMap.zeros(20)) == 0.0


def test_density_losses_match_oracles():
    rng = np.random.default_rng(3)
    for k in range(100):
        pred, target = _random_maps(rng, density=[0.0, 0.05, 0.3, 1.0][k % 4])
        pl, tl = pred.cells.tolist(), target.cells.tolist()
        assert abs(density_prob_loss(pred, target) - oracle_prob(pl, tl)) < 1e-12
        assert abs(density_meta_loss(pred, target) - oracle_meta(pl, tl)) < 1e-12


# --- traffic ---

def test_traffic_loss_perfect_prediction_within_clamp():
    for bits in [(0, 0, 0), (1, 0, 1), (1, 1, 1)]:
        s = TrafficState(*map(float, bits))
        assert 0.0 <= traffic_loss(s, s) < 1e-6


def test_traffic_loss_half_predictions():
    half = TrafficState(0.5, 0.5, 0.5)
    for bits in [(0, 0, 0), (1, 0, 1), (0, 1, 0)]:
        got = traffic_loss(half, TrafficState(*map(float, bits)), W)
        assert got == pytest.approx((0.2 + 0.01 + 0.1) * math.log(2), abs=1e-12)


def test_traffic_loss_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = tuple(rng.uniform(size=3))
        t = tuple(float(b) for b in rng.integers(0, 2, 3))
        w = LossWeights(*rng.uniform(0, 2, 6))
        got = traffic_loss(TrafficState(*p), TrafficState(*t), w)
        assert abs(got - oracle_traffic(p, t, w)) < 1e-12


def test_bce_clamps_extremes():
    assert binary_cross_entropy(0.0, 0.0) == pytest.approx(-math.log(1 - BCE_EPS))
    assert math.isfinite(binary_cross_entropy(0.0, 1.0))


# --- composite ---

def test_total_loss_examples():
    assert total_loss(LossParts(0, 0, 0, 0), W) == 0.0
    assert total_loss(LossParts(1, 1, 1, 1), W) == pytest.approx(2.2, abs=1e-12)


def test_total_loss_matches_arithmetic():
    rng = np.random.default_rng(5)
    for _ in range(100):
        parts = LossParts(*rng.uniform(0, 5, 4))
        w = LossWeights(*rng.uniform(0, 2, 6))
        expected = w.pt * parts.waypoint + w.map * (parts.prob + parts.meta) + w.tf * parts.traffic
        assert abs(total_loss(parts, w) - expected) < 1e-12


def test_evaluate_losses_zero_at_optimum():
    rng = np.random.default_rng(6)
    _, target = _random_maps(rng)
    wp = rng.normal(size=(10, 2))
    tf = TrafficState(1.0, 0.0, 1.0)
    parts, total = evaluate_losses(wp, wp, target, target, tf, tf)
    assert (parts.waypoint, parts.prob, parts.meta) == (0.0, 0.0, 0.0)
    assert 0.0 <= parts.traffic < 1e-6 and 0.0 <= total < 1e-6


def test_weights_and_states_validated():
    with pytest.raises(ValueError):
        LossWeights(pt=-1.0)
    with pytest.raises(ValueError):
        LossWeights(map=math.inf)
    with pytest.raises(ValueError):
        TrafficState(light_green=1.5)
