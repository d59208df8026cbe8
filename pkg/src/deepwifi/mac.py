"""Channel access, covert power control, and rate adaptation.

The scan policies consume one labeled snapshot of all channels per
slot.  The aware policy transmits on the first idle channel it scans,
backs off on busy WiFi, and falls back to the best jammed channel in
degraded mode; the baseline policy treats jammed channels as busy WiFi
and backs off on both.  Power control inverts the link gain to hit a
target SINR, and rate adaptation reads a zero-error threshold table
derived once by Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import waveform

PAYLOAD_CLASSES = (256, 512, 1024)
BACKOFF_K0 = 4
BACKOFF_K_CAP = 10
THRESHOLD_TRIALS = 200
SINR_GRID_DB = np.arange(-5.0, 41.0, 1.0)
GUARD_INTERVALS = ("800ns", "400ns")

THRESHOLD_CSV_HEADER = "payload_bytes,mcs_id,sinr_db_low_edge"


@dataclass
class ChannelView:
    """Snapshot of every channel as one user perceives it this slot."""

    labels: list
    sinr_db: np.ndarray
    authenticated: np.ndarray | None = None

    def __post_init__(self):
        self.sinr_db = np.asarray(self.sinr_db, dtype=np.float64)
        if len(self.labels) != len(self.sinr_db):
            raise ValueError("one label and one SINR per channel")
        if self.authenticated is None:
            self.authenticated = np.ones(len(self.labels), dtype=bool)
        self.authenticated = np.asarray(self.authenticated, dtype=bool)
        if len(self.authenticated) != len(self.labels):
            raise ValueError("one authentication flag per channel")


@dataclass
class BackoffState:
    counters: np.ndarray
    exponents: np.ndarray

    @classmethod
    def new(cls, n_channels, rng, k0=BACKOFF_K0):
        counters = rng.integers(0, 2 ** k0, size=n_channels)
        exponents = np.full(n_channels, k0, dtype=np.int64)
        return cls(counters=counters.astype(np.int64), exponents=exponents)


def _scan(view, backoff, rng, degraded):
    n = len(view.labels)
    start = int(rng.integers(n))
    jam_choice = None
    for offset in range(n):
        ch = (start + offset) % n
        label = view.labels[ch]
        if label == "I":
            return ch
        if degraded and label == "J":
            if jam_choice is None:
                jam_choice = ch
            else:
                # best SINR wins; ties go to the lowest channel index
                better = view.sinr_db[ch] > view.sinr_db[jam_choice]
                equal = view.sinr_db[ch] == view.sinr_db[jam_choice]
                if better or (equal and ch < jam_choice):
                    jam_choice = ch
    if jam_choice is not None:
        return jam_choice
    # every channel is effectively busy: run the backoff countdown
    expired = np.flatnonzero(backoff.counters == 0)
    for ch in expired:
        # the re-sensed label this slot is unchanged, so just widen
        k = int(backoff.exponents[ch])
        backoff.counters[ch] = int(rng.integers(0, 2 ** (k + 1)))
        backoff.exponents[ch] = min(k + 1, BACKOFF_K_CAP)
    ticking = backoff.counters > 0
    ticking[expired] = False
    backoff.counters[ticking] -= 1
    return None


def deepwifi_scan(view, backoff, rng):
    """First idle channel, else the best jammed channel, else wait."""
    return _scan(view, backoff, rng, degraded=True)


def baseline_scan(view, backoff, rng):
    """Idle channels only; jammed channels are avoided like busy ones."""
    return _scan(view, backoff, rng, degraded=False)


@dataclass
class LinkState:
    gain: float
    noise: float
    rate_mbps: float = 0.0
    sinr_db: float = float("nan")


def lpi_power(required_sinr_db, link, p_max, p_min=0.0):
    """Smallest transmit power meeting the SINR target at the receiver.

    Returns (power, degraded); degraded means even p_max falls short.
    """
    if link.gain <= 0.0:
        raise ValueError("link gain must be positive")
    if p_max <= 0.0:
        raise ValueError("power cap must be positive")
    need = link.noise * 10.0 ** (required_sinr_db / 10.0) / link.gain
    if need > p_max:
        return p_max, True
    return max(need, p_min), False


# ---------------------------------------------------------------------------
# Rate adaptation: zero-error SINR thresholds per payload class.


def _constellation_groups():
    groups = {}
    for mcs_id, (modulation, _, _, _) in waveform.MCS_TABLE.items():
        groups.setdefault(modulation, []).append(mcs_id)
    return groups


def _symbol_error_mask(modulation, n_syms, trials, sinr_db, rng):
    bps = waveform.BITS_PER_SYMBOL[modulation]
    bits = rng.integers(0, 2, size=trials * n_syms * bps)
    symbols = waveform.modulate_bits(bits, modulation)
    sigma = np.sqrt(0.5 / 10.0 ** (sinr_db / 10.0))
    noisy = symbols + sigma * (
        rng.standard_normal(symbols.shape)
        + 1j * rng.standard_normal(symbols.shape)
    )
    decided = waveform.demodulate_symbols(noisy, modulation)
    wrong = (decided != bits).reshape(trials, n_syms, bps)
    return wrong.any(axis=2)


def derive_thresholds(payloads=PAYLOAD_CLASSES, trials=THRESHOLD_TRIALS,
                      sinr_grid_db=SINR_GRID_DB, seed=0):
    """Per-payload, per-MCS SINR edges with zero packet errors.

    For each constellation the grid is scanned from the top; the edge
    is one grid step above the highest SINR that produced any symbol
    error inside the payload's symbol span over all trials.  Shorter
    payloads reuse the prefix of the same trials, which makes the
    payload ordering of the edges structural rather than statistical.
    """
    grid = np.sort(np.asarray(sinr_grid_db, dtype=np.float64))
    rng = np.random.default_rng(seed)
    payloads = sorted(payloads)
    table = {p: {} for p in payloads}
    for modulation, mcs_ids in _constellation_groups().items():
        bps = waveform.BITS_PER_SYMBOL[modulation]
        spans = {p: (8 * p) // bps for p in payloads}
        max_syms = spans[payloads[-1]]
        edges = {p: grid[0] for p in payloads}
        unresolved = set(payloads)
        for idx in range(len(grid) - 1, -1, -1):
            wrong = _symbol_error_mask(modulation, max_syms, trials,
                                       grid[idx], rng)
            for p in sorted(unresolved):
                if wrong[:, : spans[p]].any():
                    edge = grid[idx + 1] if idx + 1 < len(grid) else grid[idx]
                    edges[p] = edge
                    unresolved.discard(p)
            if not unresolved:
                break
        for p in payloads:
            for mcs_id in mcs_ids:
                table[p][mcs_id] = float(edges[p])
    return table


def _nearest_payload(table, payload_bytes):
    return min(table, key=lambda p: (abs(p - payload_bytes), p))


def rate_for(mcs_id, guard="800ns"):
    if guard not in GUARD_INTERVALS:
        raise ValueError(f"unknown guard interval {guard!r}")
    entry = waveform.MCS_TABLE[mcs_id]
    return entry[2] if guard == "800ns" else entry[3]


def mcs_select(sinr_db, payload_bytes, table, guard="800ns"):
    """Highest MCS whose threshold the SINR clears; floors at MCS 0."""
    cls = _nearest_payload(table, payload_bytes)
    eligible = [m for m, edge in table[cls].items() if sinr_db >= edge]
    mcs_id = max(eligible) if eligible else 0
    return mcs_id, rate_for(mcs_id, guard)


def save_thresholds(table, path):
    with open(path, "w") as fh:
        fh.write(THRESHOLD_CSV_HEADER + "\n")
        for payload in sorted(table):
            for mcs_id in sorted(table[payload]):
                fh.write(f"{payload},{mcs_id},{table[payload][mcs_id]!r}\n")


def load_thresholds(path):
    table = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != THRESHOLD_CSV_HEADER:
            raise ValueError("unrecognized threshold file header")
        for line in fh:
            payload, mcs_id, edge = line.strip().split(",")
            table.setdefault(int(payload), {})[int(mcs_id)] = float(edge)
    return table
