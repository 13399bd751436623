import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidnet.config import ScenarioConfig, derive_stream, dbm_to_watts, db_to_linear
from fluidnet.marl import (
    NUM_ACTIONS,
    STATE_DIMS,
    QTable,
    WindowStats,
    compute_reward,
    dump_policies,
    epsilon_at,
    featurize,
    load_bucket,
    parse_policies,
    port_bucket,
    select_action,
    update,
)

# toy chain: (state, action) -> (next state, reward), deterministic
TOY = {
    (0, 0): (0, 0.0),
    (0, 1): (1, 1.0),
    (1, 0): (0, 2.0),
    (1, 1): (1, 0.5),
}


def value_iteration(gamma, scale=1.0, tol=1e-13):
    q = np.zeros((2, 2))
    while True:
        new = np.array([[scale * TOY[s, a][1] + gamma * q[TOY[s, a][0]].max() for a in range(2)] for s in range(2)])
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


def train_toy(updates, alpha, gamma, scale=1.0, seed=0):
    q = QTable((2,), 2)
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, 2, size=(updates, 2))
    for s, a in pairs:
        s2, r = TOY[s, a]
        update(q, (s,), int(a), scale * r, (s2,), alpha, gamma)
    return q


@pytest.fixture
def cfg():
    return ScenarioConfig()


def stats_with(sinr_db=None, intf_dbm=None, users=10, slots=50):
    st_ = WindowStats(users, slots)
    if sinr_db is not None:
        st_.sinr_sum = slots * db_to_linear(sinr_db)
    if intf_dbm is not None:
        st_.interference_sum = slots * dbm_to_watts(intf_dbm)
    return st_


def test_table_size_bound():
    q = QTable()
    assert q.size == 4 * 6 * 6 * 3 * 10 == 4320
    assert STATE_DIMS == (4, 6, 6, 3)


@pytest.mark.parametrize("sinr, bucket", [(7.0, 2), (-12.0, 0), (-0.5, 0), (0.0, 1), (19.9, 4), (20.0, 5), (45.0, 5)])
def test_sinr_buckets(cfg, sinr, bucket):
    assert featurize(stats_with(sinr_db=sinr), 8, cfg).sinr_bucket == bucket


@pytest.mark.parametrize("intf, bucket", [(-120.0, 0), (-107.0, 1), (-92.0, 4), (-90.0, 5), (-60.0, 5)])
def test_interference_buckets(cfg, intf, bucket):
    assert featurize(stats_with(intf_dbm=intf), 8, cfg).intf_bucket == bucket


def test_empty_window_extreme_bins(cfg):
    s = featurize(WindowStats(10), 0, cfg)
    assert (s.sinr_bucket, s.intf_bucket) == (0, 0)


@pytest.mark.parametrize("users, bucket", [(1, 0), (5, 0), (6, 1), (10, 1), (15, 1), (16, 2), (40, 2)])
def test_load_buckets(users, bucket):
    assert load_bucket(users) == bucket


def test_port_buckets():
    assert [port_bucket(p, 16) for p in range(16)] == [0] * 4 + [1] * 4 + [2] * 4 + [3] * 4


@settings(max_examples=200, deadline=None)
@given(sinr=st.floats(-200, 200), intf=st.floats(-250, 50), users=st.integers(0, 500), port=st.integers(0, 15))
def test_featurize_total(sinr, intf, users, port):
    s = featurize(stats_with(sinr, intf, users), port, ScenarioConfig())
    assert all(0 <= v < d for v, d in zip(s, STATE_DIMS))


def test_greedy_tie_break():
    q = QTable()
    s = (0, 0, 0, 0)
    assert select_action(q, s, 0.0, derive_stream(0, "controller")) == 0
    q.values[s + (3,)] = 1.0
    assert select_action(q, s, 0.0, derive_stream(0, "controller")) == 3


def test_uniform_exploration():
    q = QTable()
    rng = derive_stream(2, "controller")
    counts = np.bincount([select_action(q, (1, 2, 3, 1), 1.0, rng) for _ in range(100_000)], minlength=10)
    assert np.all(np.abs(counts / 1e5 - 0.1) <= 0.005)


def test_bad_epsilon():
    with pytest.raises(ValueError):
        select_action(QTable(), (0, 0, 0, 0), 1.5, derive_stream(0, "controller"))


def test_isolated_cell_reward(cfg):
    w = WindowStats(1, 50, user_sinr_sum=np.array([50.0]))
    r = compute_reward(w, cfg)
    assert (r.utility, r.caused_interference, r.reward) == (1.0, 0.0, 1.0)


def test_penalized_reward(cfg):
    w = WindowStats(2, 10, user_sinr_sum=np.array([30.0, 30.0]), caused_sum=10 * cfg.noise_power_w)
    r = compute_reward(w, cfg)
    assert r.utility == pytest.approx(2.0)
    assert r.caused_interference == pytest.approx(1.0)
    assert r.reward == pytest.approx(1.5)


def test_zero_sinr_reward(cfg):
    w = WindowStats(3, 10, caused_sum=4e-12)
    r = compute_reward(w, cfg)
    assert r.utility == 0.0 and r.reward <= 0.0 and math.isfinite(r.reward)


def test_single_update():
    q = QTable()
    update(q, (0, 1, 2, 0), 4, 1.0, (0, 1, 2, 0), 0.1, 0.9)
    assert q.values[0, 1, 2, 0, 4] == pytest.approx(0.1)
    assert q.visits[0, 1, 2, 0, 4] == 1


def test_zero_reward_fixed_point():
    q = QTable()
    update(q, (1, 1, 1, 1), 2, 0.0, (2, 2, 2, 2), 0.1, 0.9)
    assert not q.values.any()


def test_toy_chain_value_iteration():
    oracle = value_iteration(0.9)
    q = train_toy(100_000, 0.1, 0.9)
    assert np.max(np.abs(q.values - oracle)) <= 0.05


@pytest.mark.parametrize("scale", [0.25, 3.0, 17.0])
def test_greedy_invariant_under_reward_scaling(scale):
    base = value_iteration(0.9)
    scaled = value_iteration(0.9, scale)
    np.testing.assert_array_equal(base.argmax(axis=1), scaled.argmax(axis=1))
    learned = train_toy(50_000, 0.1, 0.9, scale)
    np.testing.assert_array_equal(learned.values.argmax(axis=1), base.argmax(axis=1))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000), rmax=st.floats(0.1, 50.0))
def test_q_values_bounded(seed, rmax):
    rng = np.random.default_rng(seed)
    q = QTable((3,), 4)
    for _ in range(2000):
        update(q, (int(rng.integers(3)),), int(rng.integers(4)), float(rng.uniform(-rmax, rmax)),
               (int(rng.integers(3)),), 0.1, 0.9)
    assert np.all(np.abs(q.values) <= rmax / (1 - 0.9) + 1e-9)


def test_epsilon_schedule(cfg):
    d = cfg.training_decisions
    assert d == 2000
    assert epsilon_at(0, cfg) == 0.3
    assert epsilon_at(d - 1, cfg) == pytest.approx(0.02)
    assert epsilon_at(int(0.3 * d), cfg) == pytest.approx(0.16)
    assert epsilon_at(10 * d, cfg) == 0.02
    assert epsilon_at(5, cfg, evaluating=True) == 0.0


def test_epsilon_monotone(cfg):
    eps = [epsilon_at(k, cfg) for k in range(0, 3000, 7)]
    assert all(a >= b for a, b in zip(eps, eps[1:]))


def test_table_text_round_trip():
    rng = np.random.default_rng(3)
    q = QTable()
    for _ in range(500):
        s = tuple(int(rng.integers(d)) for d in STATE_DIMS)
        update(q, s, int(rng.integers(NUM_ACTIONS)), float(rng.normal()), s, 0.1, 0.9)
    back = QTable.parse(q.dump())
    np.testing.assert_array_equal(back.values, q.values)
    np.testing.assert_array_equal(back.visits, q.visits)


def test_policy_file_round_trip():
    tables = [QTable() for _ in range(3)]
    for b, q in enumerate(tables):
        update(q, (b, 0, 0, 0), b, 1.0 + b, (0, 0, 0, 0), 0.5, 0.9)
    back = parse_policies(dump_policies(tables), 3)
    for a, b in zip(tables, back):
        np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        parse_policies(dump_policies(tables), 7)


def test_bad_policy_line():
    with pytest.raises(ValueError, match="policy line 1"):
        QTable.parse("0,0,0\t1\tnope\t2")
