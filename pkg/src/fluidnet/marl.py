"""Independent tabular Q-learners, one per base station.

Each agent sees only its own cell's window statistics, picks one of the ten
joint (port step, power) actions epsilon-greedily and learns from its own
(s, a, r, s') transitions; cells couple only through the radio channel.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import RngStream, ScenarioConfig, linear_to_db, watts_to_dbm
from .controllers import ControlAction, Controller, Observation, action_table

PORT_BINS = 4
SINR_EDGES_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
INTF_EDGES_DBM = (-110.0, -105.0, -100.0, -95.0, -90.0)
LOAD_EDGES = (5, 15)
STATE_DIMS = (PORT_BINS, len(SINR_EDGES_DB), len(INTF_EDGES_DBM) + 1, len(LOAD_EDGES) + 1)
NUM_ACTIONS = 10


class LocalState(NamedTuple):
    port_bucket: int
    sinr_bucket: int
    intf_bucket: int
    load_bucket: int


@dataclass
class WindowStats:
    """Per-cell sums over one control interval, filled slot by slot."""

    num_users: int
    slots: int = 0
    sinr_sum: float = 0.0          # scheduled-user SINR, linear
    interference_sum: float = 0.0  # received by the scheduled user, W
    caused_sum: float = 0.0        # put onto other cells' scheduled users, W
    user_sinr_sum: np.ndarray = field(default=None)  # candidate SINR per user of the cell

    def __post_init__(self):
        if self.user_sinr_sum is None:
            self.user_sinr_sum = np.zeros(self.num_users)

    def reset(self) -> None:
        self.slots = 0
        self.sinr_sum = self.interference_sum = self.caused_sum = 0.0
        self.user_sinr_sum[:] = 0.0


def _bucket(value: float, upper_edges) -> int:
    # NaN / -inf land in bin 0
    if not value > -math.inf:
        return 0
    return int(np.searchsorted(np.asarray(upper_edges), value, side="right"))


def port_bucket(port: int, num_ports: int) -> int:
    return min(port * PORT_BINS // num_ports, PORT_BINS - 1)


def state_dims() -> tuple[int, ...]:
    return (PORT_BINS,) + STATE_DIMS[1:]


def load_bucket(users: int) -> int:
    if users <= LOAD_EDGES[0]:
        return 0
    if users <= LOAD_EDGES[1]:
        return 1
    return 2


def featurize(stats: WindowStats, current_port: int, config: ScenarioConfig) -> LocalState:
    slots = max(stats.slots, 1)
    sinr_db = float(linear_to_db(stats.sinr_sum / slots)) if stats.sinr_sum > 0 else -math.inf
    intf_dbm = float(watts_to_dbm(stats.interference_sum / slots)) if stats.interference_sum > 0 else -math.inf
    return LocalState(
        port_bucket(current_port, config.num_ports),
        _bucket(sinr_db, SINR_EDGES_DB[1:]),
        _bucket(intf_dbm, INTF_EDGES_DBM),
        load_bucket(stats.num_users),
    )


@dataclass
class RewardRecord:
    utility: float
    caused_interference: float
    reward: float


def compute_reward(stats: WindowStats, config: ScenarioConfig) -> RewardRecord:
    slots = max(stats.slots, 1)
    if stats.num_users:
        utility = float(np.mean(np.log2(1.0 + stats.user_sinr_sum / slots)))
    else:
        utility = 0.0
    caused = stats.caused_sum / slots / config.noise_power_w
    return RewardRecord(utility, caused, utility - config.reward_interference_weight * caused)


class QTable:
    """Dense Q-values and visit counts; unvisited pairs read 0."""

    def __init__(self, state_dims=STATE_DIMS, num_actions: int = NUM_ACTIONS):
        self.state_dims = tuple(state_dims)
        self.num_actions = num_actions
        self.values = np.zeros(self.state_dims + (num_actions,))
        self.visits = np.zeros(self.state_dims + (num_actions,), dtype=np.int64)

    @property
    def size(self) -> int:
        return self.values.size

    def __getitem__(self, state) -> np.ndarray:
        return self.values[tuple(state)]

    def dump(self) -> str:
        buf = io.StringIO()
        buf.write("# state\taction\tvalue\tvisits\n")
        for idx in zip(*np.nonzero(self.visits)):
            s, a = idx[:-1], idx[-1]
            buf.write(f"{','.join(str(int(i)) for i in s)}\t{int(a)}\t{float(self.values[idx])!r}\t{int(self.visits[idx])}\n")
        return buf.getvalue()

    @classmethod
    def parse(cls, text: str, state_dims=STATE_DIMS, num_actions: int = NUM_ACTIONS) -> "QTable":
        q = cls(state_dims, num_actions)
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                s, a, v, n = line.split("\t")
                idx = tuple(int(i) for i in s.split(",")) + (int(a),)
                q.values[idx] = float(v)
                q.visits[idx] = int(n)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"policy line {lineno}: {exc}") from None
        return q


def select_action(q: QTable, state, epsilon: float, rng: RngStream) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon outside [0, 1]")
    if epsilon > 0.0 and rng.gen.random() < epsilon:
        return int(rng.gen.integers(q.num_actions))
    return int(np.argmax(q[state]))


def update(q: QTable, s, a: int, r: float, s_next, alpha: float, gamma: float) -> QTable:
    idx = tuple(s) + (a,)
    target = r + gamma * float(np.max(q[s_next]))
    q.values[idx] += alpha * (target - q.values[idx])
    q.visits[idx] += 1
    return q


def epsilon_at(step: int, config: ScenarioConfig, evaluating: bool = False) -> float:
    if evaluating:
        return 0.0
    if step < 0:
        raise ValueError("step must be ≥ 0")
    horizon = config.epsilon_decay_fraction * config.training_decisions
    if step >= horizon:
        return config.epsilon_end
    frac = step / horizon
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


class MarlController(Controller):
    name = "marl"
    learns = True

    def __init__(self, config: ScenarioConfig, policies: list[QTable] | None = None, record_events: bool = False):
        super().__init__(config)
        self.actions = action_table(config)
        self.tables = policies if policies is not None else [QTable(state_dims()) for _ in range(config.num_cells)]
        if len(self.tables) != config.num_cells:
            raise ValueError("one Q-table per cell required")
        self.prev: list[tuple | None] = [None] * config.num_cells
        self.epsilon = config.epsilon_start
        self.evaluating = False
        self.updates = [0] * config.num_cells
        self.decisions = [0] * config.num_cells
        self.events: list[tuple] | None = [] if record_events else None
        self.rewards: list[list[float]] = [[] for _ in range(config.num_cells)]

    def _log(self, *event) -> None:
        if self.events is not None:
            self.events.append(event)

    def set_phase(self, decision_step: int, evaluating: bool) -> None:
        self.evaluating = evaluating
        self.epsilon = epsilon_at(decision_step, self.config, evaluating)

    def learn(self, cell: int, reward: RewardRecord, s_next: LocalState) -> None:
        """Close the previous window's transition for one agent."""
        if self.evaluating or self.prev[cell] is None:
            return
        s, a = self.prev[cell]
        self._log(cell, "reward", reward.reward)
        self._log(cell, "update", s, a, s_next)
        update(self.tables[cell], s, a, reward.reward, s_next, self.config.alpha, self.config.gamma)
        self.updates[cell] += 1
        self.rewards[cell].append(reward.reward)

    def decide(self, cell: int, observation: Observation, rng: RngStream) -> ControlAction:
        s = observation.local_state
        self._log(cell, "observe", s)
        a = select_action(self.tables[cell], s, self.epsilon, rng)
        self._log(cell, "select", a)
        self.prev[cell] = (s, a)
        self.decisions[cell] += 1
        return self.actions[a]


def dump_policies(tables: list[QTable]) -> str:
    """All agents' tables in one text file, one ``[cell b]`` section each."""
    parts = []
    for b, q in enumerate(tables):
        parts.append(f"[cell {b}]\n{q.dump()}")
    return "".join(parts)


def parse_policies(text: str, num_cells: int) -> list[QTable]:
    sections: dict[int, list[str]] = {}
    current = None
    for line in text.splitlines():
        head = line.strip()
        if head.startswith("[cell ") and head.endswith("]"):
            current = int(head[6:-1])
            sections[current] = []
        elif current is None:
            if head and not head.startswith("#"):
                raise ValueError("policy file: entry before the first [cell b] header")
        else:
            sections[current].append(line)
    if sorted(sections) != list(range(num_cells)):
        raise ValueError(f"policy file holds cells {sorted(sections)}, expected 0..{num_cells - 1}")
    return [QTable.parse("\n".join(sections[b]), state_dims()) for b in range(num_cells)]
