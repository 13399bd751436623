import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidnet.channel import Channel
from fluidnet.config import ScenarioConfig, dbm_to_watts, derive_stream
from fluidnet.link import (
    NONE,
    candidate_sinr,
    compute_slot,
    rsrp_dbm,
    rsrp_probe,
    schedule_pf,
    schedule_pf_cells,
    shannon_rate,
)
from fluidnet.topology import build_layout, drop_users

B = 10e6


def brute_force(channel, scheduled, ports, powers_w, m, noise):
    """Per-link loop over channel.gain; shares nothing with compute_slot."""
    c = len(scheduled)
    sinr = []
    for b in range(c):
        u = scheduled[b]
        sig = powers_w[b] * m * channel.gain(u, b, ports[b])
        intf = 0.0
        for bb in range(c):
            if bb != b:
                intf += powers_w[bb] * channel.gain(u, bb, ports[bb])
        sinr.append(sig / (intf + noise))
    return np.array(sinr)


@pytest.fixture(scope="module")
def world():
    cfg = ScenarioConfig()
    plan = build_layout(cfg)
    users = drop_users(plan, cfg, derive_stream(3, "drop"))
    ch = Channel(cfg, plan, users, derive_stream(3, "fading"), derive_stream(3, "shadowing"))
    return cfg, plan, users, ch


def test_pf_equal_averages_picks_max():
    avg = np.full(3, 50.0)
    assert schedule_pf([1.0, 7.0, 3.0], avg) == 1


def test_pf_ratio_example():
    assert schedule_pf([5.0, 1.0], np.array([10.0, 1.0])) == 1


def test_pf_cold_start():
    avg = np.zeros(3)
    assert schedule_pf([2.0, 9.0, 4.0], avg) == 1
    np.testing.assert_allclose(avg, [0.0, 0.09, 0.0])


def test_pf_empty_cell():
    assert schedule_pf([], np.zeros(0)) == NONE


def test_pf_average_update():
    avg = np.array([10.0, 20.0])
    schedule_pf([100.0, 1.0], avg)
    np.testing.assert_allclose(avg, [0.99 * 10 + 1.0, 0.99 * 20])


def test_pf_symmetric_share():
    avg = np.zeros(2)
    picks = np.zeros(2)
    for _ in range(10_000):
        picks[schedule_pf([5e6, 5e6], avg)] += 1
    assert abs(picks[0] / picks.sum() - 0.5) <= 0.05


def test_pf_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    inst = rng.uniform(1, 100, (7, 10))
    avg_a = rng.uniform(0, 50, (7, 10))
    avg_b = avg_a.copy()
    picks = schedule_pf_cells(inst, avg_a)
    for b in range(7):
        assert schedule_pf(inst[b], avg_b[b]) == picks[b]
    np.testing.assert_allclose(avg_a, avg_b, rtol=0, atol=1e-12)


def test_single_cell_snr_one():
    out = compute_slot(np.array([[1e-10]]), np.array([0]), np.array([1.0]), 1.0, 1e-10, B)
    assert out.sinr[0] == 1.0
    assert out.rate[0] == pytest.approx(10e6)


def test_sinr_three():
    assert shannon_rate(3.0, B) == pytest.approx(2 * B)


def test_idle_cell_is_silent():
    gains = np.array([[1e-9, 1e-9], [1e-9, 1e-9]])
    out = compute_slot(gains, np.array([0, NONE]), np.array([1.0, 1.0]), 1.0, 1e-12, B)
    assert out.interference[0] == 0.0
    assert out.rate[1] == 0.0 and out.caused[1] == 0.0


def test_sinr_matches_brute_force(world):
    cfg, plan, users, ch = world
    rng = np.random.default_rng(7)
    noise = cfg.noise_power_w
    for _ in range(200):
        ports = rng.integers(0, 16, 7)
        powers = dbm_to_watts(rng.choice([40.0, 37.0], 7))
        sched = np.arange(7) * 10 + rng.integers(0, 10, 7)
        out = compute_slot(ch.gain_matrix(ports), sched, powers, 4, noise, cfg.bandwidth)
        ref = brute_force(ch, sched, ports, powers, 4, noise)
        np.testing.assert_allclose(out.sinr, ref, rtol=1e-9, atol=0)
        np.testing.assert_allclose(out.sinr, out.signal / (out.interference + out.noise), rtol=1e-15)
        np.testing.assert_allclose(out.rate, cfg.bandwidth * np.log2(1 + out.sinr), rtol=1e-15)
        assert out.caused.sum() == pytest.approx(out.interference.sum(), rel=1e-12)


def test_candidate_sinr_matches_slot(world):
    # every non-empty cell transmits, so the candidate SINR is what the slot delivers
    cfg, plan, users, ch = world
    ports = np.full(7, 8)
    powers = dbm_to_watts(np.full(7, 40.0))
    gains = ch.gain_matrix(ports)
    cand = candidate_sinr(gains, users.serving, powers, 4, cfg.noise_power_w)
    sched = np.arange(7) * 10 + 3
    out = compute_slot(gains, sched, powers, 4, cfg.noise_power_w, cfg.bandwidth)
    np.testing.assert_allclose(cand[sched], out.sinr, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), cell=st.integers(0, 6), boost=st.floats(1.01, 10.0))
def test_power_monotonicity(seed, cell, boost):
    rng = np.random.default_rng(seed)
    gains = rng.exponential(1e-11, (7, 7))
    sched = np.arange(7)
    powers = rng.uniform(1.0, 10.0, 7)
    base = compute_slot(gains, sched, powers, 4, 1e-12, B)
    more = powers.copy()
    more[cell] *= boost
    up = compute_slot(gains, sched, more, 4, 1e-12, B)
    assert up.sinr[cell] >= base.sinr[cell]
    others = np.arange(7) != cell
    assert np.all(up.sinr[others] <= base.sinr[others])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), idle=st.lists(st.booleans(), min_size=7, max_size=7))
def test_ledger_conservation(seed, idle):
    rng = np.random.default_rng(seed)
    gains = rng.exponential(1e-11, (14, 7))
    sched = np.where(idle, NONE, np.arange(7) * 2)
    out = compute_slot(gains, sched, rng.uniform(1, 10, 7), 4, 1e-12, B)
    assert out.caused.sum() == pytest.approx(out.interference.sum(), rel=1e-12, abs=0)


def test_rsrp_examples():
    assert rsrp_dbm(1e-10, 40.0) == pytest.approx(-60.0)
    assert rsrp_dbm(2e-10, 40.0) - rsrp_dbm(1e-10, 40.0) == pytest.approx(3.0103, abs=1e-4)


def test_probe_is_pure(world):
    cfg, plan, users, ch = world
    before = ch.field.gains.copy()
    first = rsrp_probe(ch, 4, 2, 11)
    for _ in range(1000):
        assert rsrp_probe(ch, 4, 2, 11) == first
    np.testing.assert_array_equal(ch.field.gains, before)
