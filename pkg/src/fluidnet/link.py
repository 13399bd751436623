"""Per-slot link layer: PF user selection, joint SINR across cells, Shannon rates.

Every non-empty cell transmits in every slot, so the interference a user
would see is independent of which users the other cells pick.  That makes
the per-user candidate SINR exact rather than an estimate, and the PF
scheduler ranks on true instantaneous rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PF_WINDOW = 100
PF_FLOOR = 1.0
NONE = -1


@dataclass
class SlotOutcome:
    scheduled: np.ndarray     # (C,) user index or NONE
    signal: np.ndarray        # (C,) W, for the scheduled user of each cell
    interference: np.ndarray  # (C,) W received by that user
    noise: float              # W
    sinr: np.ndarray          # (C,)
    rate: np.ndarray          # (C,) bits/s
    caused: np.ndarray        # (C,) W this cell put onto other cells' scheduled users

    @property
    def active(self) -> np.ndarray:
        return self.scheduled != NONE


def shannon_rate(sinr, bandwidth: float):
    return bandwidth * np.log2(1.0 + np.asarray(sinr))


def candidate_sinr(gains: np.ndarray, serving: np.ndarray, powers_w: np.ndarray,
                   array_gain: float, noise_w: float, transmitting=None) -> np.ndarray:
    """SINR each user would get if its own cell scheduled it this slot.

    ``gains`` is the (U, C) linear gain matrix at the cells' current ports.
    """
    if transmitting is None:
        tx = powers_w
    else:
        tx = np.where(transmitting, powers_w, 0.0)
    rx = gains * tx
    rows = np.arange(len(serving))
    own = rx[rows, serving].copy()
    rx[rows, serving] = 0.0  # sum the interferers directly; total - own cancels at high SINR
    return array_gain * own / (rx.sum(axis=1) + noise_w)


def schedule_pf(inst_rates, averages, window: int = PF_WINDOW, floor: float = PF_FLOOR) -> int:
    """Pick one user by proportional fairness and update ``averages`` in place.

    Returns the chosen position within ``inst_rates`` or ``NONE`` for an empty
    cell.
    """
    inst = np.asarray(inst_rates, dtype=float)
    if inst.size == 0:
        return NONE
    pick = int(np.argmax(inst / np.maximum(averages, floor)))
    served = np.zeros_like(inst)
    served[pick] = inst[pick]
    averages *= 1.0 - 1.0 / window
    averages += served / window
    return pick


def schedule_pf_cells(inst_rates: np.ndarray, averages: np.ndarray, window: int = PF_WINDOW,
                      floor: float = PF_FLOOR, offsets=None) -> np.ndarray:
    """Vectorized :func:`schedule_pf` over a (C, K) block, one pick per row.

    ``averages`` must be C-contiguous; it is updated in place through a flat view.
    """
    c, k = inst_rates.shape
    picks = (inst_rates / np.maximum(averages, floor)).argmax(axis=1)
    idx = picks + (np.arange(c) * k if offsets is None else offsets)
    flat = averages.reshape(-1)
    flat *= 1.0 - 1.0 / window
    flat[idx] += inst_rates.reshape(-1)[idx] / window
    return picks


def compute_slot(gains: np.ndarray, scheduled: np.ndarray, powers_w: np.ndarray,
                 array_gain: float, noise_w: float, bandwidth: float) -> SlotOutcome:
    """Joint SINR for one slot given every cell's scheduled user.

    Cells with ``scheduled == NONE`` stay silent.  The serving link carries
    the array gain; interfering links do not.
    """
    scheduled = np.asarray(scheduled)
    c = len(scheduled)
    idle = scheduled < 0
    if idle.any():
        tx = np.where(idle, 0.0, powers_w)
        rx = gains[np.where(idle, 0, scheduled)] * tx
        rx[idle] = 0.0
    else:
        rx = gains[scheduled] * powers_w    # row: victim cell's user, column: source cell
    diag = np.arange(c)
    own = rx[diag, diag]
    rx[diag, diag] = 0.0
    interference = rx.sum(axis=1)
    caused = rx.sum(axis=0)
    signal = array_gain * own
    sinr = signal / (interference + noise_w)
    rate = bandwidth * np.log2(1.0 + sinr)
    if idle.any():
        sinr[idle] = 0.0
        rate[idle] = 0.0
    return SlotOutcome(scheduled.copy(), signal, interference, noise_w, sinr, rate, caused)


def rsrp_dbm(gain, tx_power_max_dbm: float):
    """Received power (dBm) at full power and no array gain for a link gain."""
    with np.errstate(divide="ignore"):
        return tx_power_max_dbm + 10.0 * np.log10(gain)


def rsrp_probe(channel, u: int, b: int, port: int) -> float:
    """RSRP of user ``u`` from site ``b`` if that site sat at ``port``. Read-only."""
    return float(rsrp_dbm(channel.gain(u, b, port), channel.config.tx_power_max))


def rsrp_all_ports(channel, u: int, b: int) -> np.ndarray:
    return rsrp_dbm(channel.port_gains(u, b), channel.config.tx_power_max)
