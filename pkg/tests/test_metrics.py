import numpy as np
import pytest

from lanefree import metrics
from lanefree.config import ConfigError, ScenarioConfig, TrainerConfig
from lanefree.maddpg import TRACE_COLUMNS, Maddpg, TrainingLog


def synthetic_trace(y, v_des, steps=8, x=None, v_lon=None):
    n = len(y)
    cols = {c: [] for c in TRACE_COLUMNS}
    for s in range(1, steps + 1):
        for i in range(n):
            row = dict.fromkeys(TRACE_COLUMNS, 0.0)
            row.update(episode=0, step=s, time=s * 0.25, id=i, y=y[i], v_des=v_des[i],
                       x=0.0 if x is None else x[i], v_lon=v_des[i] if v_lon is None else v_lon[i])
            for c in TRACE_COLUMNS:
                cols[c].append(row[c])
    return {c: np.array(v) for c, v in cols.items()}


# -- sorting score -----------------------------------------------------------------


def test_sorted_fixture_scores_one():
    t = synthetic_trace(np.linspace(-4, 4, 6), np.linspace(25, 35, 6))
    assert metrics.lateral_sorting_score(t) == pytest.approx(1.0)


def test_reverse_sorted_fixture_scores_minus_one():
    t = synthetic_trace(np.linspace(4, -4, 6), np.linspace(25, 35, 6))
    assert metrics.lateral_sorting_score(t) == pytest.approx(-1.0)


def test_equal_desired_speeds_is_missing():
    assert metrics.lateral_sorting_score(synthetic_trace([0.0, 1.0, 2.0], [30.0] * 3)) is None


def test_too_few_vehicles():
    with pytest.raises(ValueError):
        metrics.lateral_sorting_score(synthetic_trace([0.0, 1.0], [25.0, 30.0]))


def test_random_permutations_average_zero():
    rng = np.random.default_rng(0)
    v_des = np.linspace(25, 35, 12)
    scores = []
    for _ in range(10_000):
        y = rng.permutation(np.linspace(-4, 4, 12))
        t = {"id": np.arange(12), "y": y, "v_des": v_des}
        scores.append(metrics.lateral_sorting_score(t))
    assert abs(np.mean(scores)) < 0.05


# -- heatmap ----------------------------------------------------------------------


def test_strip_edges_for_default_width():
    t = synthetic_trace(np.linspace(-4, 4, 6), np.linspace(25, 35, 6))
    hm = metrics.heatmap(t, road_width=10.2)
    assert np.allclose(np.diff(hm.strip_edges), 1.7)
    assert hm.values.shape[1] == 6


def test_single_strip_when_all_share_y():
    t = synthetic_trace([0.5] * 4, [25.0, 28.0, 31.0, 34.0], steps=80)
    hm = metrics.heatmap(t, "desired", "time")
    assert np.all((hm.counts > 0).sum(axis=1) == 1)


def test_speed_increasing_with_y_gives_ordered_strips():
    y = np.linspace(-4.5, 4.5, 12)
    t = synthetic_trace(y, 25 + y)
    hm = metrics.heatmap(t, "desired", "time")
    assert np.all(np.diff(hm.values[0]) > 0)


def test_actual_mode_and_space_axis():
    y = np.array([-4.0, 0.0, 4.0])
    t = synthetic_trace(y, [30.0, 30.0, 30.0], x=[50.0, 150.0, 250.0], v_lon=[20.0, 25.0, 33.0])
    hm = metrics.heatmap(t, "actual", "space")
    assert len(hm.values) == 3
    assert hm.values[0, 0] == 20.0 and hm.values[2, 5] == 33.0


def test_heatmap_rejects_empty():
    with pytest.raises(ValueError):
        metrics.heatmap({c: np.zeros(0) for c in TRACE_COLUMNS})


def test_heatmap_csv_round_trip(tmp_path):
    y = np.linspace(-4.5, 4.5, 12)
    hm = metrics.heatmap(synthetic_trace(y, 25 + y))
    metrics.write_heatmap_csv(tmp_path / "h.csv", hm)
    back = metrics.read_heatmap_csv(tmp_path / "h.csv")
    assert np.array_equal(np.isnan(back), np.isnan(hm.values))
    assert np.allclose(np.nan_to_num(back), np.nan_to_num(hm.values), rtol=0, atol=0)


# -- windows and flow ---------------------------------------------------------------


def test_steady_window_drops_warmup():
    t = synthetic_trace([0.0, 1.0, 2.0], [25.0, 30.0, 35.0], steps=100)
    w = metrics.steady_window(t)
    assert w["step"].min() == 26
    assert metrics.final_window(t)["step"].min() == 76


def test_fd_point_units():
    # 8 vehicles on 400 m -> 20 veh/km; 20 m/s -> 72 km/h -> 1440 veh/h
    n, L = 8, 400.0
    steps = 200
    cols = {c: [] for c in TRACE_COLUMNS}
    for s in range(1, steps + 1):
        for i in range(n):
            cols["step"].append(s)
            cols["id"].append(i)
            cols["v_lon"].append(20.0)
            cols["x"].append((i * L / n + 20.0 * 0.25 * s) % L)
    trace = {k: np.array(v) for k, v in cols.items() if v}
    p = metrics.fd_point(trace, n, L, 0.25)
    assert p.density == 20.0
    assert p.flow == pytest.approx(1440.0)
    assert p.detector_flow == pytest.approx(p.flow, rel=0.05)


def test_fd_sweep_closure_and_shape():
    agents = Maddpg(1, TrainerConfig(actor_hidden=(8,), critic_hidden=(8,)), rng=np.random.default_rng(0))
    ring = ScenarioConfig(road_length=400.0, max_steps=60, terminate_on_collision=False)
    pts = metrics.fd_sweep(agents, ring, [8, 20], seed=0)
    assert [p.density for p in pts] == [20.0, 50.0]
    for p in pts:
        assert abs(p.flow - 3.6 * p.density * p.mean_speed) <= 0.02 * p.flow


def test_fd_sweep_rejects_empty_count():
    agents = Maddpg(1, TrainerConfig(actor_hidden=(8,), critic_hidden=(8,)), rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        metrics.fd_sweep(agents, ScenarioConfig(), [0])


def test_fd_csv_round_trip(tmp_path):
    pts = [metrics.FdPoint(8, 20.0, 2000.0, 27.7, 1980.0, 0), metrics.FdPoint(40, 100.0, 8000.1, 22.2, 7900.0, 3)]
    metrics.write_fd_csv(tmp_path / "fd.csv", pts)
    assert metrics.read_fd_csv(tmp_path / "fd.csv") == pts


def test_collision_bins():
    log = TrainingLog([{"collided": k % 3 == 0} for k in range(25)])
    bins = metrics.collision_bins(log)
    assert [b["collisions"] for b in bins] == [4, 3, 2]
    assert bins[-1]["bin_end"] == 24
