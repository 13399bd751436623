"""Measurement-window accumulation and the KPI report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ScenarioConfig, watts_to_dbm
from .link import SlotOutcome

KPI_COLUMNS = (
    "aggregate_throughput_bps",
    "cell_edge_throughput_bps",
    "spectral_efficiency_bps_hz_cell",
    "jain_index",
    "mean_intercell_interference_dbm",
    "total_port_moves",
    "slots_measured",
)
NA = "NA"


def percentile_5(values) -> float:
    """Nearest-rank 5th percentile: sorted[ceil(0.05 n) - 1]."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of an empty list")
    rank = max(math.ceil(0.05 * v.size), 1)
    return float(v[rank - 1])


def jain(values) -> float:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("Jain index of an empty list")
    if np.any(x < 0):
        raise ValueError("Jain index needs nonnegative values")
    top = float(x.max())
    if top == 0.0:
        raise ValueError("Jain index undefined when every value is zero")
    x = x / top  # scale-free, and keeps tiny values from underflowing when squared
    return float(np.sum(x)) ** 2 / (x.size * float(np.sum(x * x)))


@dataclass
class Accumulator:
    num_users: int
    num_cells: int
    slots: int = 0
    user_bits: np.ndarray = field(default=None)
    interference_sum: float = 0.0
    interference_samples: int = 0
    caused_total: float = 0.0
    received_total: float = 0.0
    port_moves: int = 0

    def __post_init__(self):
        if self.user_bits is None:
            self.user_bits = np.zeros(self.num_users)

    def record_slot(self, outcome: SlotOutcome) -> "Accumulator":
        active = outcome.scheduled >= 0
        # one user per cell, so the indices are distinct and plain fancy-add is exact
        self.user_bits[outcome.scheduled[active]] += outcome.rate[active]
        # interference is only sampled where another cell transmitted
        self.interference_sum += float(outcome.interference[active].sum())
        self.interference_samples += int(active.sum()) if self.num_cells > 1 else 0
        self.caused_total += float(outcome.caused.sum())
        self.received_total += float(outcome.interference[active].sum())
        self.slots += 1
        return self


def record_slot(acc: Accumulator, outcome: SlotOutcome) -> Accumulator:
    return acc.record_slot(outcome)


@dataclass
class KpiReport:
    aggregate_throughput: float
    cell_edge_throughput: float
    spectral_efficiency: float
    jain_index: float
    mean_intercell_interference: float  # dBm, -inf when nothing interferes
    user_throughput_cdf: list
    total_port_moves: int
    slots_measured: int

    def row(self) -> list[str]:
        intf = NA if not math.isfinite(self.mean_intercell_interference) else repr(self.mean_intercell_interference)
        return [repr(self.aggregate_throughput), repr(self.cell_edge_throughput), repr(self.spectral_efficiency),
                repr(self.jain_index), intf, str(self.total_port_moves), str(self.slots_measured)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(KPI_COLUMNS)
        w.writerow(self.row())
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.mean_intercell_interference):
            d["mean_intercell_interference"] = NA
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def cdf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("throughput_bps", "cumulative_fraction"))
        n = len(self.user_throughput_cdf)
        for i, x in enumerate(self.user_throughput_cdf, 1):
            w.writerow((repr(float(x)), repr(i / n)))
        return buf.getvalue()


def finalize(acc: Accumulator, config: ScenarioConfig) -> KpiReport:
    if acc.slots <= 0:
        raise ValueError("no slots measured")
    per_user = acc.user_bits / acc.slots
    aggregate = float(per_user.sum())
    if acc.interference_samples and acc.interference_sum > 0:
        intf = float(watts_to_dbm(acc.interference_sum / acc.interference_samples))
    else:
        intf = -math.inf
    return KpiReport(
        aggregate_throughput=aggregate,
        cell_edge_throughput=percentile_5(per_user),
        spectral_efficiency=aggregate / (config.bandwidth * acc.num_cells),
        jain_index=jain(per_user),
        mean_intercell_interference=intf,
        user_throughput_cdf=[float(x) for x in np.sort(per_user)],
        total_port_moves=acc.port_moves,
        slots_measured=acc.slots,
    )
