"""Slotted closed-loop simulation.

Per slot ``t`` the order is fixed:

1. fading-epoch boundary: move users, then evolve the fading field;
2. control boundary: freeze every cell's window statistics, featurize,
   (learner, training) reward + update for the window that just ended, then
   all cells decide on the same snapshot and their actions are applied;
3. reconfiguration latency ticks for every cell;
4. PF scheduling per cell and one joint SINR evaluation;
5. measurement, only in the evaluation phase.

Control boundaries start at the end of warm-up and recur every
``control_interval`` slots through training and evaluation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel import Channel
from .config import ScenarioConfig, dbm_to_watts, derive_stream, linear_to_db
from .controllers import Controller, Observation, apply_action, initial_state, make_controller, tick_latency
from .link import candidate_sinr, compute_slot, rsrp_all_ports, schedule_pf_cells, shannon_rate
from .marl import QTable, WindowStats, compute_reward, featurize
from .metrics import KPI_COLUMNS, Accumulator, KpiReport, finalize
from .topology import build_layout, drop_users, step_mobility

TRACE_COLUMNS = ("slot", "cell", "port", "scheduled_user", "sinr_db", "rate_bps")
WARMUP, TRAINING, EVALUATION = "warmup", "training", "evaluation"


@dataclass
class RunPhase:
    phase: str = WARMUP
    slot: int = 0
    decisions: int = 0


@dataclass
class RunResult:
    report: KpiReport
    controller: Controller
    drop_digest: str
    trace: Optional[list] = None
    decisions: int = 0

    @property
    def policies(self) -> Optional[list[QTable]]:
        return getattr(self.controller, "tables", None)


def phase_of(t: int, config: ScenarioConfig) -> str:
    if t < config.warmup_slots:
        return WARMUP
    if t < config.warmup_slots + config.training_slots:
        return TRAINING
    return EVALUATION


def run(config: ScenarioConfig, controller: str | Controller = "fab", seed: int | None = None, *,
        trace: bool = False, policies: list[QTable] | None = None, record_events: bool = False,
        slot_hook: Callable | None = None) -> RunResult:
    """Simulate one drop end to end and return its KPI report.

    All randomness is drawn from streams keyed by ``seed`` (default: the
    config's ``master_seed``) and a purpose label, never by controller, so
    different controllers on the same seed see the same users and fading.
    ``slot_hook(t, sim, outcome)`` is called after every measured slot.
    """
    if config.users_per_cell < 1:
        raise ValueError("users_per_cell must be ≥ 1 to run")
    seed = config.master_seed if seed is None else seed
    sim = _Simulation(config, seed, controller, policies, record_events)
    return sim.execute(trace, slot_hook)


class _Simulation:
    def __init__(self, config, seed, controller, policies, record_events):
        self.config = cfg = config
        self.plan = build_layout(cfg)
        self.users = drop_users(self.plan, cfg, derive_stream(seed, "drop"))
        self.digest = self.users.digest()
        self.mobility_rng = derive_stream(seed, "mobility")
        self.channel = Channel(cfg, self.plan, self.users, derive_stream(seed, "fading"),
                               derive_stream(seed, "shadowing"))
        if isinstance(controller, Controller):
            self.controller = controller
        elif controller == "marl":
            self.controller = make_controller("marl", cfg, policies=policies, record_events=record_events)
        else:
            self.controller = make_controller(controller, cfg)
        c = self.plan.num_cells
        self.ctrl_rngs = [derive_stream(seed, "controller", b) for b in range(c)]
        self.ports_pos = self.channel.grid.positions
        self.antennas = [initial_state(cfg, self.ports_pos) for _ in range(c)]
        self.k = cfg.users_per_cell
        self.offsets = np.arange(c) * self.k
        self.pf = self.users.pf_average.reshape(c, self.k)  # view: scheduler state lives on Users
        self.noise_w = cfg.noise_power_w
        self.phase = RunPhase()
        self._reset_window()
        self.dirty = True

    # -- helpers -----------------------------------------------------------

    @property
    def ports(self) -> np.ndarray:
        return np.array([a.current_port for a in self.antennas])

    @property
    def powers_w(self) -> np.ndarray:
        return dbm_to_watts([a.power_level for a in self.antennas])

    def _reset_window(self) -> None:
        c = self.plan.num_cells
        self.win_slots = 0
        self.win_sinr = np.zeros(c)
        self.win_intf = np.zeros(c)
        self.win_caused = np.zeros(c)
        self.win_user_sinr = np.zeros(c * self.k)

    def window_stats(self, b: int) -> WindowStats:
        sl = slice(b * self.k, (b + 1) * self.k)
        return WindowStats(self.k, self.win_slots, float(self.win_sinr[b]), float(self.win_intf[b]),
                           float(self.win_caused[b]), self.win_user_sinr[sl].copy())

    def refresh(self) -> None:
        cfg = self.config
        self.gains = self.channel.gain_matrix(self.ports)
        self.tx_w = self.powers_w
        self.cand = candidate_sinr(self.gains, self.users.serving, self.tx_w, cfg.array_gain_elements, self.noise_w)
        self.inst = shannon_rate(self.cand, cfg.bandwidth).reshape(-1, self.k)
        self.dirty = False
        self._last = None  # (schedule key, outcome) reusable until the next refresh

    def leading_users(self) -> np.ndarray:
        metric = self.inst / np.maximum(self.pf, 1.0)
        return np.argmax(metric, axis=1) + self.offsets

    # -- loop ----------------------------------------------------------------

    def control_boundary(self, rel: int) -> None:
        cfg = self.config
        ctrl = self.controller
        evaluating = rel >= cfg.training_slots
        step = rel // cfg.control_interval
        if self.dirty:
            self.refresh()
        c = self.plan.num_cells
        stats = [self.window_stats(b) for b in range(c)]
        states = [featurize(stats[b], self.antennas[b].current_port, cfg) for b in range(c)]
        if ctrl.learns:
            # the window that just closed is training data up to and including rel == training_slots
            ctrl.set_phase(step, rel > cfg.training_slots)
            for b in range(c):
                ctrl._log(b, "evolve")
                ctrl.learn(b, compute_reward(stats[b], cfg), states[b])
            ctrl.set_phase(step, evaluating)
        leaders = self.leading_users()
        probe = lambda b: (lambda u: rsrp_all_ports(self.channel, u, b))
        snapshot = [Observation(b, self.antennas[b], states[b], int(leaders[b]), probe(b)) for b in range(c)]
        actions = [ctrl.decide(b, snapshot[b], self.ctrl_rngs[b]) for b in range(c)]
        for b, action in enumerate(actions):
            before = self.antennas[b]
            after = apply_action(before, action, cfg, self.ports_pos)
            if evaluating:
                self.acc.port_moves += after.cumulative_move_distance - before.cumulative_move_distance
            if after.current_port != before.current_port or after.power_level != before.power_level:
                self.dirty = True
            self.antennas[b] = after
            if ctrl.learns:
                ctrl._log(b, "apply", action)
        self.phase.decisions += 1
        self._reset_window()

    def execute(self, trace: bool, slot_hook) -> RunResult:
        cfg = self.config
        users, plan = self.users, self.plan
        c = plan.num_cells
        total = cfg.warmup_slots + cfg.training_slots + cfg.eval_slots
        eval_start = cfg.warmup_slots + cfg.training_slots
        epoch, interval = cfg.fading_epoch, cfg.control_interval
        self.acc = Accumulator(len(users), c)
        rows = [] if trace else None
        cells = np.arange(c)
        m, bw = cfg.array_gain_elements, cfg.bandwidth
        for t in range(total):
            self.phase.slot = t
            if t and t % epoch == 0:
                step_mobility(users, plan, cfg, self.mobility_rng, cfg.epoch_seconds)
                self.channel.refresh_large_scale()
                self.channel.step()
                self.dirty = True
            rel = t - cfg.warmup_slots
            if rel >= 0 and rel % interval == 0:
                self.phase.phase = phase_of(t, cfg)
                self.control_boundary(rel)
            for b in range(c):
                a = self.antennas[b]
                if a.latency_remaining:
                    nxt = tick_latency(a, self.ports_pos)
                    if nxt.current_port != a.current_port:
                        self.dirty = True
                    self.antennas[b] = nxt
            if self.dirty:
                self.refresh()
            picks = schedule_pf_cells(self.inst, self.pf, offsets=self.offsets)
            scheduled = picks + self.offsets
            key = scheduled.tobytes()
            if self._last is not None and self._last[0] == key:
                out = self._last[1]  # same gains, powers and users: the outcome is identical
            else:
                out = compute_slot(self.gains, scheduled, self.tx_w, m, self.noise_w, bw)
                self._last = (key, out)
            self.win_slots += 1
            self.win_sinr += out.sinr
            self.win_intf += out.interference
            self.win_caused += out.caused
            self.win_user_sinr += self.cand
            if t >= eval_start:
                self.acc.record_slot(out)
                if rows is not None:
                    ports = self.ports
                    sinr_db = linear_to_db(out.sinr)
                    for b in cells:
                        rows.append((t, int(b), int(ports[b]), int(scheduled[b]), float(sinr_db[b]), float(out.rate[b])))
                if slot_hook is not None:
                    slot_hook(t, self, out)
        self.phase.phase = EVALUATION
        report = finalize(self.acc, cfg)
        return RunResult(report, self.controller, self.digest, rows, self.phase.decisions)


def trace_csv(rows) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    lines += [f"{t},{b},{p},{u},{s!r},{r!r}" for t, b, p, u, s, r in rows]
    return "\n".join(lines) + "\n"


# -- batches -------------------------------------------------------------------

class BatchError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def summarize(reports: list[KpiReport]) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation per KPI column."""
    out = {}
    for i, name in enumerate(KPI_COLUMNS):
        vals = np.array([_kpi_value(r, i) for r in reports])
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[name] = (mean, std)
    return out


def _kpi_value(report: KpiReport, i: int) -> float:
    return [report.aggregate_throughput, report.cell_edge_throughput, report.spectral_efficiency,
            report.jain_index, report.mean_intercell_interference, report.total_port_moves,
            report.slots_measured][i]


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("FLUIDNET_THREADS", "1")))
    except ValueError:
        return 1


def _run_job(job):
    config, controller, seed = job
    res = run(config, controller, seed)
    return res.report, res.drop_digest


def run_jobs(jobs: list[tuple], workers: int | None = None) -> list[tuple]:
    """Run (config, controller, seed) jobs, in parallel when allowed; results keep job order."""
    workers = max_workers() if workers is None else workers
    results: list = [None] * len(jobs)
    errors = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_job, j) for j in jobs]
            for i, f in enumerate(futures):
                try:
                    results[i] = f.result()
                except Exception as exc:  # noqa: BLE001 - reported with partial results
                    errors.append((i, exc))
    else:
        for i, j in enumerate(jobs):
            try:
                results[i] = _run_job(j)
            except Exception as exc:  # noqa: BLE001
                errors.append((i, exc))
    if errors:
        i, exc = errors[0]
        raise BatchError(f"{len(errors)} of {len(jobs)} runs failed; first: job {i}: {exc!r}", results)
    return results


def run_many(config: ScenarioConfig, controller: str, seeds: list[int], workers: int | None = None):
    if not seeds:
        raise ValueError("at least one seed required")
    ordered = sorted(set(int(s) for s in seeds))
    results = run_jobs([(config, controller, s) for s in ordered], workers)
    by_seed = {s: r[0] for s, r in zip(ordered, results)}
    reports = [by_seed[int(s)] for s in seeds]
    return reports, summarize([by_seed[s] for s in ordered])
