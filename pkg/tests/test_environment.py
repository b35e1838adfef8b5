import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanefree import geometry
from lanefree.config import ConfigError, FreewayConfig, ScenarioConfig
from lanefree.environment import (
    OBS_DIM,
    Action,
    LaneFreeEnv,
    RoadTopology,
    collision_check,
    ivgs,
    lateral_freedoms,
    ramp_protocol,
)
from lanefree.geometry import GeometryParams
from lanefree.vehicle import RampPhase, Route, VehicleState

P5 = GeometryParams(d0_lon=5.0, d0_lat=2.1)


def car(x, y, v=30.0, **kw):
    return VehicleState(id=kw.pop("id", 0), x=x, y=y, v_lon=v, **kw)


# -- reset -------------------------------------------------------------------


def test_ring_reset_spacing():
    env = LaneFreeEnv(ScenarioConfig(n_agents=6, road_length=400.0))
    obs = env.reset(seed=0)
    assert obs.shape == (6, OBS_DIM)
    assert np.allclose(np.diff(env.x), 400.0 / 6)


def test_reset_is_deterministic():
    a, b = LaneFreeEnv(ScenarioConfig()), LaneFreeEnv(ScenarioConfig())
    assert np.array_equal(a.reset(seed=3), b.reset(seed=3))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.v_des, b.v_des)


def test_empty_ring():
    env = LaneFreeEnv(ScenarioConfig(n_agents=0))
    assert env.reset().shape == (0, OBS_DIM)
    out = env.step(np.zeros((0, 2)))
    assert not out.done and not out.collided


def test_overfull_ring_rejected():
    with pytest.raises(ConfigError):
        LaneFreeEnv(ScenarioConfig(n_agents=130, road_length=400.0)).reset()


def test_initial_speeds_in_range():
    env = LaneFreeEnv(ScenarioConfig(n_agents=50, road_length=1000.0))
    env.reset(seed=1)
    for arr in (env.v, env.v_des):
        assert arr.min() >= 25.0 and arr.max() <= 35.0


# -- scalar helpers ------------------------------------------------------------


@pytest.mark.parametrize("v, expected", [(30.0, 20.0), (0.0, 5.0), (25.0, 17.5)])
def test_ivgs(v, expected):
    assert ivgs(v, P5) == pytest.approx(expected)


RING = RoadTopology("ring", 400.0, 10.2)


def test_freedoms_centered_no_leaders():
    assert lateral_freedoms(car(0, 0), [], RING, P5) == pytest.approx((4.2, 4.2))


def test_freedoms_leader_on_left():
    ego = car(0.0, 0.0)
    leader = car(10.0, 1.8 + 0.6, id=1)
    fr_l, fr_r = lateral_freedoms(ego, [leader], RING, P5)
    assert fr_l == pytest.approx(0.6) and fr_r == pytest.approx(4.2)


def test_freedoms_ignore_far_leader():
    assert lateral_freedoms(car(0, 0), [car(60.0, 2.4, id=1)], RING, P5) == pytest.approx((4.2, 4.2))


def test_collision_examples():
    assert collision_check([car(5, 0), car(5, 0, id=1)]) == [(0, 1)]
    # 0.1 m gaps both ways
    assert collision_check([car(0, 0), car(3.3, 1.9, id=1)]) == []
    assert collision_check([car(399.0, 0), car(1.0, 0, id=1)], ring_length=400.0) == [(0, 1)]


# -- kinematics ----------------------------------------------------------------


def single(v=30.0, y=0.0, **kw):
    env = LaneFreeEnv(ScenarioConfig(n_agents=1, **kw))
    env.reset(seed=0)
    env.v[:] = v
    env.y[:] = y
    env.v_prev[:] = v
    env._refresh()
    return env


def test_euler_step():
    env = single()
    x0 = env.x.copy()
    env.step([[0.0, 0.0]])
    assert env.x[0] - x0[0] == pytest.approx(7.5) and env.y[0] == 0.0


def test_lateral_step():
    env = single()
    env.step([[0.0, 1.5]])
    assert env.y[0] == pytest.approx(0.375)


def test_no_reverse_motion():
    env = single(v=0.5)
    env.step([[-4.0, 0.0]])
    assert env.v[0] == 0.0


def test_zero_action_preserves_state():
    env = LaneFreeEnv(ScenarioConfig(n_agents=6))
    env.reset(seed=2)
    v, y = env.v.copy(), env.y.copy()
    env.step(np.zeros((6, 2)))
    assert np.array_equal(env.v, v) and np.array_equal(env.y, y)


def test_boundary_clamp_flags_penalty():
    env = single(y=4.1)
    out = env.step([[0.0, 1.5]])
    assert env.y[0] == pytest.approx(4.2)
    assert out.boundary_clamped[0] and out.wrong_lateral[0]
    assert out.breakdown.r_pen[0] == -5.0


def test_action_bounds_checked():
    with pytest.raises(ValueError):
        Action(5.0, 0.0)
    env = LaneFreeEnv(ScenarioConfig(n_agents=2))
    env.reset()
    with pytest.raises(ValueError):
        env.step(np.zeros((3, 2)))
    with pytest.raises(KeyError):
        env.step({0: Action(0.0, 0.0)})


def test_dict_actions_match_array():
    a, b = LaneFreeEnv(ScenarioConfig(n_agents=3)), LaneFreeEnv(ScenarioConfig(n_agents=3))
    a.reset(seed=1), b.reset(seed=1)
    acts = np.array([[1.0, 0.5], [-2.0, 0.0], [0.0, -1.0]])
    ra = a.step(acts)
    rb = b.step({i: Action(*acts[i]) for i in range(3)})
    assert np.array_equal(ra.observations, rb.observations)


def test_collision_terminates():
    env = LaneFreeEnv(ScenarioConfig(n_agents=2, road_length=8.0))
    env.reset(seed=0)
    env.y[:] = 0.0
    env.x[1] = 2.0
    out = env.step(np.zeros((2, 2)))
    assert out.collided and out.done


def test_step_limit():
    env = LaneFreeEnv(ScenarioConfig(n_agents=2, max_steps=3))
    env.reset(seed=0)
    dones = [env.step(np.zeros((2, 2))).done for _ in range(3)]
    assert dones == [False, False, True]


# -- invariants under random actions ---------------------------------------------


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 10))
def test_random_rollout_invariants(seed, n):
    cfg = ScenarioConfig(n_agents=n, road_length=400.0, terminate_on_collision=False, max_steps=40)
    env = LaneFreeEnv(cfg)
    env.reset(seed=seed)
    rng = np.random.default_rng(seed)
    half = (cfg.road_width - cfg.veh_width) / 2
    for _ in range(40):
        acts = np.column_stack([rng.uniform(-4, 4, n), rng.uniform(-1.5, 1.5, n)])
        out = env.step(acts)
        obs = out.observations
        assert len(out.ids) == n
        assert np.all(np.abs(env.y) <= half + 1e-12)
        assert np.all(env.v >= 0)
        assert np.all(np.isfinite(obs)) and np.all(obs[:, 4:6] >= 0)
        assert np.all(out.rewards <= 0)
        # observation forces equal an independent scalar re-derivation
        cars = env.vehicles()
        for i, ego in enumerate(cars):
            reps, nuds = [], []
            for j, other in enumerate(cars):
                if i == j:
                    continue
                reps.append(geometry.pair_forces(ego, other, env.params, ring_length=400.0)[0])
                nuds.append(geometry.pair_forces(other, ego, env.params, ring_length=400.0)[1])
            fs = geometry.aggregate_forces(reps, nuds)
            assert obs[i, 6] == pytest.approx(fs.f_rep, abs=1e-9)
            assert obs[i, 7] == pytest.approx(fs.f_nud, abs=1e-9)
            fr = lateral_freedoms(ego, cars, env.topology, env.params)
            assert obs[i, 4:6] == pytest.approx(fr, abs=1e-12)


def test_step_sequence_is_deterministic():
    def run():
        env = LaneFreeEnv(ScenarioConfig(n_agents=5))
        env.reset(seed=4)
        rng = np.random.default_rng(0)
        return [env.step(np.column_stack([rng.uniform(-4, 4, 5), rng.uniform(-1.5, 1.5, 5)])).observations for _ in range(30)]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_collision_pairs_match_scalar_oracle():
    rng = np.random.default_rng(8)
    env = LaneFreeEnv(ScenarioConfig(n_agents=20, road_length=100.0, terminate_on_collision=False))
    env.reset(seed=8)
    for _ in range(20):
        env.step(np.column_stack([rng.uniform(-4, 4, 20), rng.uniform(-1.5, 1.5, 20)]))
        assert env.collision_pairs() == collision_check(env.vehicles(), 100.0)


# -- freeway and ramps -------------------------------------------------------------

FW = RoadTopology.from_config(ScenarioConfig(kind="freeway", road_length=4000.0))


def test_ramp_protocol_mainline():
    assert ramp_protocol(car(1000, 0), FW) == (0.0, 0.0, False)


def test_ramp_protocol_merging():
    v = car(1850, -5.1 - 1.7, route=Route.ENTERING, ramp_phase=RampPhase.ON_ACCEL_LANE)
    assert ramp_protocol(v, FW) == (0.5, 0.0, False)


def test_ramp_protocol_diverging_lead():
    start = FW.ramp("off").aux_lane_span[0]
    far = car(start - 800, 0, route=Route.EXITING)
    near = car(start - 600, 0, route=Route.EXITING)
    assert ramp_protocol(far, FW) == (0.0, 0.0, False)
    assert ramp_protocol(near, FW) == (0.0, 0.5, True)


def test_ramp_protocol_on_decel_lane():
    start = FW.ramp("off").aux_lane_span[0]
    v = car(start + 50, -5.1 - 1.7, route=Route.EXITING, ramp_phase=RampPhase.ON_DECEL_LANE)
    assert ramp_protocol(v, FW) == (0.0, 0.0, False)


def test_suppressed_left_move_keeps_y():
    cfg = ScenarioConfig(kind="freeway", road_length=4000.0, freeway=FreewayConfig(inflow_veh_h=0.0, onramp_inflow_veh_h=0.0))
    env = LaneFreeEnv(cfg)
    env.reset(seed=0)
    start = env.topology.ramp("off").aux_lane_span[0]
    env._append(np.array([start - 300.0]), np.array([1.0]), np.array([30.0]), np.array([30.0]),
                np.array([int(Route.EXITING)]), np.array([0]))
    env._update_phases()
    env._refresh()
    assert env.phase[0] == RampPhase.PRE_DIVERGE
    out = env.step([[0.0, 1.5]])
    assert env.y[0] == 1.0
    assert not out.wrong_lateral[0]
    assert env.observation()[0, 7] == 0.5


def test_freeway_spawns_and_removes():
    cfg = ScenarioConfig(kind="freeway", road_length=600.0, max_steps=400, terminate_on_collision=False,
                         freeway=FreewayConfig(offramp_gore=400.0, decel_length=100.0, onramp_gore=450.0,
                                               accel_length=100.0, pre_diverge_lead=200.0))
    env = LaneFreeEnv(cfg)
    env.reset(seed=0)
    assert env.n_vehicles == 0
    seen = set()
    for _ in range(400):
        out = env.step(np.zeros((env.n_vehicles, 2)))
        seen.update(int(i) for i in out.ids)
        assert len(set(out.removed) & set(int(i) for i in env.ids)) == 0
    assert len(seen) > 20 and len(env.exited) > 0
    assert env.observation().shape == (env.n_vehicles, OBS_DIM)
