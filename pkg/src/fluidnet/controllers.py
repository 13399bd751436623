"""Antenna state machine and the controller contract with its three baselines.

FAB pins the port at the middle of the track, SDAR steps toward the port
with the strongest RSRP for the cell's PF-leading user, and RAS jumps to a
uniformly random port.  All three transmit at full power.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .config import RngStream, ScenarioConfig

MAX_STEP = 2
POWER_BACKOFF_DB = 3.0
PORT_DELTAS = (0, -1, 1, -2, 2)


@dataclass(frozen=True)
class AntennaState:
    current_port: int
    target_port: int
    position: float
    power_level: float  # dBm
    latency_remaining: int = 0
    cumulative_move_distance: int = 0

    def __post_init__(self):
        if (self.latency_remaining > 0) != (self.current_port != self.target_port):
            raise ValueError("latency_remaining > 0 must coincide with a pending port move")


@dataclass(frozen=True)
class ControlAction:
    port_delta: int
    power_level: float
    retarget: bool = False  # direct jump, exempt from the per-decision step cap

    def __post_init__(self):
        if not self.retarget and abs(self.port_delta) > MAX_STEP:
            raise ValueError(f"port_delta {self.port_delta} outside ±{MAX_STEP}")


def power_levels(config: ScenarioConfig) -> tuple[float, float]:
    return (config.tx_power_max, config.tx_power_max - POWER_BACKOFF_DB)


def action_table(config: ScenarioConfig) -> list[ControlAction]:
    """The 10 joint actions; index 0 is (stay, full power)."""
    return [ControlAction(d, p) for p in power_levels(config) for d in PORT_DELTAS]


def initial_state(config: ScenarioConfig, port_positions) -> AntennaState:
    port = config.num_ports // 2
    return AntennaState(port, port, float(port_positions[port]), config.tx_power_max)


def apply_action(state: AntennaState, action: ControlAction, config: ScenarioConfig,
                 port_positions=None) -> AntennaState:
    n = config.num_ports
    if action.power_level > config.tx_power_max:
        raise ValueError("power above tx_power_max")
    target = min(max(state.current_port + action.port_delta, 0), n - 1)
    moved = abs(target - state.current_port)
    latency = config.latency_slots_per_port * moved
    current = state.current_port
    if latency == 0:
        current = target
    position = state.position if port_positions is None else float(port_positions[current])
    return AntennaState(current, target, position, action.power_level, latency,
                        state.cumulative_move_distance + moved)


def tick_latency(state: AntennaState, port_positions=None) -> AntennaState:
    if state.latency_remaining <= 0:
        return state
    left = state.latency_remaining - 1
    if left > 0:
        return replace(state, latency_remaining=left)
    position = state.position if port_positions is None else float(port_positions[state.target_port])
    return replace(state, latency_remaining=0, current_port=state.target_port, position=position)


@dataclass
class Observation:
    """What a controller sees for one cell at a control boundary."""

    cell: int
    antenna: AntennaState
    local_state: Optional[tuple] = None
    leading_user: int = -1
    probe: Optional[Callable[[int], np.ndarray]] = None  # user -> RSRP dBm per port


class Controller:
    name = "base"
    learns = False

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.full_power = config.tx_power_max

    def decide(self, cell: int, observation: Observation, rng: RngStream) -> ControlAction:
        raise NotImplementedError


class FixedAntenna(Controller):
    name = "fab"

    def decide(self, cell, observation, rng):
        return ControlAction(0, self.full_power)


class SignalDriven(Controller):
    name = "sdar"

    def decide(self, cell, observation, rng):
        if observation.leading_user < 0 or observation.probe is None:
            return ControlAction(0, self.full_power)
        rsrp = observation.probe(observation.leading_user)
        best = int(np.argmax(rsrp))
        delta = int(np.clip(best - observation.antenna.current_port, -MAX_STEP, MAX_STEP))
        return ControlAction(delta, self.full_power)


class RandomSelection(Controller):
    name = "ras"

    def decide(self, cell, observation, rng):
        target = int(rng.gen.integers(self.config.num_ports))
        return ControlAction(target - observation.antenna.current_port, self.full_power, retarget=True)


BASELINES = {cls.name: cls for cls in (FixedAntenna, SignalDriven, RandomSelection)}
CONTROLLER_NAMES = ("fab", "sdar", "ras", "marl")


def make_controller(name: str, config: ScenarioConfig, **kwargs) -> Controller:
    if name == "marl":
        from .marl import MarlController
        return MarlController(config, **kwargs)
    try:
        return BASELINES[name](config)
    except KeyError:
        raise ValueError(f"unknown controller '{name}', expected one of {CONTROLLER_NAMES}") from None
