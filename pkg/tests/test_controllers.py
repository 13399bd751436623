import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fluidnet.config import ScenarioConfig, derive_stream
from fluidnet.controllers import (
    AntennaState,
    ControlAction,
    Observation,
    action_table,
    apply_action,
    initial_state,
    make_controller,
    tick_latency,
)


@pytest.fixture
def cfg():
    return ScenarioConfig()


def state(port, latency=0, target=None, power=40.0):
    return AntennaState(port, port if target is None else target, 0.0, power, latency)


def test_action_table_layout(cfg):
    acts = action_table(cfg)
    assert len(acts) == 10
    assert acts[0] == ControlAction(0, 40.0)
    assert {a.power_level for a in acts} == {40.0, 37.0}
    assert sorted({a.port_delta for a in acts}) == [-2, -1, 0, 1, 2]


def test_step_cap_enforced():
    with pytest.raises(ValueError):
        ControlAction(3, 40.0)
    assert ControlAction(9, 40.0, retarget=True).port_delta == 9


def test_state_invariant_enforced():
    with pytest.raises(ValueError):
        AntennaState(3, 5, 0.0, 40.0, 0)
    with pytest.raises(ValueError):
        AntennaState(3, 3, 0.0, 40.0, 2)


def test_fab_constant(cfg):
    fab = make_controller("fab", cfg)
    for port in (0, 8, 15):
        assert fab.decide(0, Observation(0, state(port)), derive_stream(0, "controller")) == ControlAction(0, 40.0)
    assert initial_state(cfg, np.arange(16.0)).current_port == 8


def test_sdar_clamped_step(cfg):
    sdar = make_controller("sdar", cfg)
    rsrp = np.full(16, -90.0)
    rsrp[9] = -60.0
    obs = Observation(0, state(4), leading_user=3, probe=lambda u: rsrp)
    assert sdar.decide(0, obs, None) == ControlAction(2, 40.0)
    obs = Observation(0, state(10), leading_user=3, probe=lambda u: rsrp)
    assert sdar.decide(0, obs, None).port_delta == -1


def test_ras_uniform(cfg):
    ras = make_controller("ras", cfg)
    rng = derive_stream(1, "controller", 0)
    counts = np.zeros(16)
    for _ in range(100_000):
        a = ras.decide(0, Observation(0, state(5)), rng)
        counts[5 + a.port_delta] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 16) <= 0.005)
    assert stats.chisquare(counts).pvalue > 0.01


def test_unknown_controller(cfg):
    with pytest.raises(ValueError, match="unknown controller"):
        make_controller("greedy", cfg)


def test_apply_boundary_clamp(cfg):
    s = apply_action(state(0), ControlAction(-2, 40.0), cfg)
    assert (s.target_port, s.latency_remaining, s.cumulative_move_distance) == (0, 0, 0)


def test_apply_latency(cfg):
    s = apply_action(state(4), ControlAction(2, 40.0), cfg)
    assert (s.current_port, s.target_port, s.latency_remaining) == (4, 6, 2)
    assert s.cumulative_move_distance == 2


def test_power_only_change(cfg):
    s = apply_action(state(4), ControlAction(0, 37.0), cfg)
    assert s.latency_remaining == 0 and s.power_level == 37.0 and s.current_port == 4


def test_instant_reconfiguration(cfg):
    s = apply_action(state(4), ControlAction(-2, 40.0), cfg.replace(latency_slots_per_port=0))
    assert s.current_port == 2 and s.latency_remaining == 0


def test_power_above_max_rejected(cfg):
    with pytest.raises(ValueError):
        apply_action(state(4), ControlAction(0, 41.0), cfg)


def test_tick_counts_down(cfg):
    s = apply_action(state(4), ControlAction(2, 40.0), cfg)
    s = tick_latency(s)
    assert s.current_port == 4 and s.latency_remaining == 1
    s = tick_latency(s)
    assert s.current_port == 6 and s.latency_remaining == 0
    assert tick_latency(s) == s


def test_tick_updates_position(cfg):
    pos = np.arange(16) * 0.1
    s = apply_action(initial_state(cfg, pos), ControlAction(1, 40.0), cfg, pos)
    s = tick_latency(s, pos)
    assert s.position == pytest.approx(0.9)


@settings(max_examples=200, deadline=None)
@given(
    start=st.integers(0, 15),
    latency=st.integers(0, 5),
    moves=st.lists(st.tuples(st.integers(-2, 2), st.integers(0, 6)), max_size=30),
)
def test_state_machine_invariants(start, latency, moves):
    cfg = ScenarioConfig(latency_slots_per_port=latency)
    s = state(start)
    total = 0
    for delta, ticks in moves:
        if s.latency_remaining:
            s = tick_latency(s)
        prev = s.cumulative_move_distance
        s = apply_action(s, ControlAction(delta, 40.0), cfg)
        assert s.cumulative_move_distance >= prev
        total = s.cumulative_move_distance
        for _ in range(ticks):
            s = tick_latency(s)
            assert 0 <= s.current_port < 16 and 0 <= s.target_port < 16
            assert (s.latency_remaining > 0) == (s.current_port != s.target_port)
    assert s.cumulative_move_distance == total
