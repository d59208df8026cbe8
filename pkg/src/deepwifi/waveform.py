"""Synthetic I/Q waveform generation for a 20 MHz OFDM system.

Frames are complex baseband at 40 MHz sampling (2x oversampled), built
on a 64-subcarrier grid with 312.5 kHz spacing: 40 data, 8 pilot and 16
null subcarriers.  Three frame classes exist: background noise (I),
WiFi-style bursts (W) and band-matched Gaussian jamming (J).  Multipath
uses tapped delay lines parameterised per the indoor model table below.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE_HZ = 40e6
SUBCARRIER_SPACING_HZ = 312.5e3
FFT_SIZE = 64
OVERSAMPLE = 2
SYMBOL_LEN = FFT_SIZE * OVERSAMPLE  # 3.2 us at 40 MHz

# Guard interval lengths in samples at 40 MHz.
GI_SAMPLES = {800: 32, 400: 16}

NOISE_FLOOR_DB = (-100.0, -80.0)

LABELS = ("I", "W", "J")

# Subcarrier plan: 16 nulls (DC, band edges), 8 pilots, 40 data bins.
NULL_BINS = tuple([0, -32] + [k for a in range(25, 32) for k in (a, -a)])
PILOT_BINS = (-21, -14, -7, -3, 3, 7, 14, 21)
DATA_BINS = tuple(
    k
    for k in range(-32, 32)
    if k not in NULL_BINS and k not in PILOT_BINS
)
assert len(NULL_BINS) == 16 and len(PILOT_BINS) == 8 and len(DATA_BINS) == 40

BITS_PER_SYMBOL = {"BPSK": 1, "QPSK": 2, "16QAM": 4, "64QAM": 6, "256QAM": 8}

# MCS table: modulation, coding rate, data rate in Mb/s at 800/400 ns GI.
MCS_TABLE = {
    0: ("BPSK", "1/2", 6.5, 7.2),
    1: ("QPSK", "1/2", 13.0, 14.4),
    2: ("QPSK", "3/4", 19.5, 21.7),
    3: ("16QAM", "1/2", 26.0, 28.9),
    4: ("16QAM", "3/4", 39.0, 43.3),
    5: ("64QAM", "2/3", 52.0, 57.8),
    6: ("64QAM", "3/4", 58.5, 65.0),
    7: ("64QAM", "5/6", 65.0, 72.2),
    8: ("256QAM", "3/4", 78.0, 86.7),
}


@dataclass(frozen=True)
class ChannelModel:
    """Tapped-delay-line indoor channel parameters."""

    name: str
    n_taps: int
    rms_delay_ns: float
    max_delay_ns: float
    rician_k_db: float
    n_clusters: int
    breakpoint_m: float


CHANNEL_MODELS = {
    "A": ChannelModel("A", 1, 0.0, 0.0, 0.0, 1, 5.0),
    "B": ChannelModel("B", 9, 15.0, 80.0, 0.0, 2, 5.0),
    "C": ChannelModel("C", 14, 30.0, 200.0, 0.0, 2, 5.0),
    "D": ChannelModel("D", 18, 50.0, 390.0, 3.0, 3, 10.0),
    "E": ChannelModel("E", 18, 100.0, 730.0, 6.0, 4, 20.0),
    "F": ChannelModel("F", 18, 150.0, 1050.0, 6.0, 6, 30.0),
}


@dataclass
class OfdmGrid:
    """Subcarrier layout and guard interval choice."""

    fft_size: int = FFT_SIZE
    data_bins: tuple = DATA_BINS
    pilot_bins: tuple = PILOT_BINS
    null_bins: tuple = NULL_BINS
    guard_ns: int = 800

    def __post_init__(self):
        total = len(self.data_bins) + len(self.pilot_bins) + len(self.null_bins)
        if total != self.fft_size:
            raise ValueError("subcarrier plan must cover the whole grid")
        if self.guard_ns not in GI_SAMPLES:
            raise ValueError(f"guard interval must be one of {sorted(GI_SAMPLES)} ns")

    @property
    def guard_samples(self):
        return GI_SAMPLES[self.guard_ns]

    @property
    def symbol_samples(self):
        return SYMBOL_LEN + self.guard_samples


@dataclass
class IqFrame:
    """One sensed frame of complex baseband samples plus provenance."""

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    label: str | None = None
    channel_model: str | None = None
    snr_db: float | None = None
    mcs_id: int | None = None
    n_data_symbols: int = 0
    payload_bits: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")


# ---------------------------------------------------------------------------
# Constellations (Gray mapped, unit average energy)

_PAM_GRAY_2 = np.array([-1.0, 1.0])
_PAM_GRAY_4 = np.array([-3.0, -1.0, 3.0, 1.0])  # Gray order 00,01,10,11
_PAM_GRAY_8 = np.array([-7.0, -5.0, -1.0, -3.0, 7.0, 5.0, 1.0, 3.0])
_PAM_GRAY_16 = np.array(
    [-15.0, -13.0, -9.0, -11.0, -1.0, -3.0, -7.0, -5.0,
     15.0, 13.0, 9.0, 11.0, 1.0, 3.0, 7.0, 5.0]
)


def _pam_table(bits_per_axis):
    return {1: _PAM_GRAY_2, 2: _PAM_GRAY_4, 3: _PAM_GRAY_8, 4: _PAM_GRAY_16}[bits_per_axis]


def modulate_bits(bits, modulation):
    """Map a bit array to unit-energy constellation symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    bps = BITS_PER_SYMBOL[modulation]
    if bits.size % bps:
        raise ValueError("bit count not a multiple of bits per symbol")
    groups = bits.reshape(-1, bps)
    if modulation == "BPSK":
        return (2.0 * groups[:, 0] - 1.0).astype(np.complex128)
    half = bps // 2
    table = _pam_table(half)
    weights = 1 << np.arange(half - 1, -1, -1)
    i_idx = groups[:, :half] @ weights
    q_idx = groups[:, half:] @ weights
    scale = np.sqrt(2.0 * np.mean(table**2))
    return (table[i_idx] + 1j * table[q_idx]) / scale


def demodulate_symbols(symbols, modulation):
    """Hard-decision inverse of modulate_bits."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    bps = BITS_PER_SYMBOL[modulation]
    if modulation == "BPSK":
        return (symbols.real > 0).astype(np.int64)
    half = bps // 2
    table = _pam_table(half)
    scale = np.sqrt(2.0 * np.mean(table**2))
    out = np.empty((symbols.size, bps), dtype=np.int64)
    for axis, values in ((0, symbols.real * scale), (1, symbols.imag * scale)):
        idx = np.argmin(np.abs(values[:, None] - table[None, :]), axis=1)
        bit_block = ((idx[:, None] >> np.arange(half - 1, -1, -1)) & 1)
        out[:, axis * half:(axis + 1) * half] = bit_block
    return out.ravel()


# ---------------------------------------------------------------------------
# Training sequences: fixed published constants.

def _fixed_qpsk(bins, seed):
    rng = np.random.default_rng(seed)
    pts = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)
    return pts[rng.integers(0, 4, size=len(bins))]


_ACTIVE_BINS = tuple(sorted(PILOT_BINS + DATA_BINS))
STS_BIN_VALUES = _fixed_qpsk(_ACTIVE_BINS, seed=0xD5)
LTS_BIN_VALUES = (
    2.0 * np.random.default_rng(0x17).integers(0, 2, size=len(_ACTIVE_BINS)) - 1.0
).astype(np.complex128)


def _symbol_time(bin_values, bins):
    """Synthesize one 128-sample symbol from 64-grid bin values."""
    spec = np.zeros(SYMBOL_LEN, dtype=np.complex128)
    for value, k in zip(bin_values, bins):
        spec[k % SYMBOL_LEN] = value
    return np.fft.ifft(spec) * np.sqrt(SYMBOL_LEN)


STS_TIME = _symbol_time(STS_BIN_VALUES, _ACTIVE_BINS)
LTS_TIME = _symbol_time(LTS_BIN_VALUES, _ACTIVE_BINS)

# Frame layout offsets (samples): two short symbols, then a guarded long
# training symbol made of two identical halves, then guarded data symbols.
STS_REPEATS = 2
LTS_CP = 32
PREAMBLE_LEN = STS_REPEATS * SYMBOL_LEN + LTS_CP + 2 * SYMBOL_LEN


def preamble_samples():
    parts = [STS_TIME] * STS_REPEATS
    parts.append(LTS_TIME[-LTS_CP:])
    parts.extend([LTS_TIME, LTS_TIME])
    return np.concatenate(parts)


def max_data_symbols(frame_len, grid):
    return max(0, (frame_len - PREAMBLE_LEN) // grid.symbol_samples)


def pilot_polarity(symbol_index):
    # Simple published polarity schedule.
    return 1.0 if symbol_index % 2 == 0 else -1.0


def gen_wifi(mcs_id, payload_bytes, grid=None, rng=None, frame_len=2048):
    """A WiFi-style burst: preamble, pilots, modulated payload, idle tail.

    The active portion is normalized to unit average power.  Raises
    ValueError when the payload does not fit in the frame.
    """
    if mcs_id not in MCS_TABLE:
        raise ValueError(f"unknown MCS id {mcs_id}")
    grid = grid or OfdmGrid()
    rng = rng or np.random.default_rng()
    modulation = MCS_TABLE[mcs_id][0]
    bps = BITS_PER_SYMBOL[modulation]
    bits_per_ofdm = len(grid.data_bins) * bps
    n_bits = int(payload_bytes) * 8
    n_syms = int(np.ceil(n_bits / bits_per_ofdm)) if n_bits else 0
    if n_bits < 1:
        raise ValueError("payload must be at least one byte")
    if n_syms > max_data_symbols(frame_len, grid):
        raise ValueError("payload too large for configured frame length")

    bits = rng.integers(0, 2, size=n_bits)
    padded = np.zeros(n_syms * bits_per_ofdm, dtype=np.int64)
    padded[:n_bits] = bits
    symbols = modulate_bits(padded, modulation).reshape(n_syms, len(grid.data_bins))

    parts = [preamble_samples()]
    for s in range(n_syms):
        values = np.concatenate(
            [symbols[s], np.full(len(grid.pilot_bins), pilot_polarity(s), dtype=np.complex128)]
        )
        bins = tuple(grid.data_bins) + tuple(grid.pilot_bins)
        core = _symbol_time(values, bins)
        parts.append(core[-grid.guard_samples:])
        parts.append(core)
    active = np.concatenate(parts)
    active = active / np.sqrt(np.mean(np.abs(active) ** 2))
    samples = np.zeros(frame_len, dtype=np.complex128)
    samples[: active.size] = active
    return IqFrame(
        samples=samples,
        label="W",
        mcs_id=mcs_id,
        n_data_symbols=n_syms,
        payload_bits=bits,
    )


def demod_wifi(samples, mcs_id, n_data_symbols, n_bits, grid=None):
    """Recover payload bits from a frame aligned at sample zero.

    Equalizes per bin with the long-training-symbol channel estimate, so
    a clean frame round-trips exactly.
    """
    grid = grid or OfdmGrid()
    samples = np.asarray(samples, dtype=np.complex128)
    modulation = MCS_TABLE[mcs_id][0]
    lts_start = STS_REPEATS * SYMBOL_LEN + LTS_CP
    lts = 0.5 * (
        samples[lts_start : lts_start + SYMBOL_LEN]
        + samples[lts_start + SYMBOL_LEN : lts_start + 2 * SYMBOL_LEN]
    )
    spec = np.fft.fft(lts) / np.sqrt(SYMBOL_LEN)
    href = {}
    for value, k in zip(LTS_BIN_VALUES, _ACTIVE_BINS):
        href[k] = spec[k % SYMBOL_LEN] / value
    out_bits = []
    cursor = PREAMBLE_LEN
    for s in range(n_data_symbols):
        core = samples[cursor + grid.guard_samples : cursor + grid.symbol_samples]
        cursor += grid.symbol_samples
        sym_spec = np.fft.fft(core) / np.sqrt(SYMBOL_LEN)
        eq = np.array(
            [sym_spec[k % SYMBOL_LEN] / href[k] for k in grid.data_bins]
        )
        out_bits.append(demodulate_symbols(eq, modulation))
    bits = np.concatenate(out_bits) if out_bits else np.zeros(0, dtype=np.int64)
    return bits[:n_bits]


def gen_noise(n, rng, floor_db=NOISE_FLOOR_DB):
    """Background noise: per-bin uniform dB magnitudes, random phase."""
    low, high = floor_db
    mags = 10.0 ** (rng.uniform(low, high, size=n) / 20.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    spectrum = mags * np.exp(1j * phases)
    samples = np.fft.ifft(spectrum) * np.sqrt(n)
    return IqFrame(samples=samples, label="I")


def gen_jammer(n, rng):
    """Band-matched Gaussian jamming at unit sample variance."""
    spectrum = np.zeros(n, dtype=np.complex128)
    edge_hz = (max(abs(b) for b in _ACTIVE_BINS) + 0.5) * SUBCARRIER_SPACING_HZ
    freqs = np.fft.fftfreq(n, d=1.0 / SAMPLE_RATE_HZ)
    in_band = np.abs(freqs) <= edge_hz
    count = int(np.count_nonzero(in_band))
    spectrum[in_band] = (
        rng.normal(size=count) + 1j * rng.normal(size=count)
    ) / np.sqrt(2.0)
    samples = np.fft.ifft(spectrum) * np.sqrt(n)
    samples /= np.sqrt(np.mean(np.abs(samples) ** 2))
    return IqFrame(samples=samples, label="J")


def channel_taps(model, rng):
    """Draw tapped-delay-line gains for one channel realization.

    Taps sit evenly from zero to the maximum excess delay, rounded to
    the sample grid (coinciding taps merge their power).  Powers decay
    exponentially with the rms delay spread and sum to one; the first
    tap is Rician with the table's K factor, the rest are Rayleigh.
    """
    if isinstance(model, str):
        model = CHANNEL_MODELS[model]
    if model.n_taps == 1:
        delays_ns = np.array([0.0])
        powers = np.array([1.0])
    else:
        delays_ns = np.linspace(0.0, model.max_delay_ns, model.n_taps)
        powers = np.exp(-delays_ns / model.rms_delay_ns)
    idx = np.round(delays_ns * SAMPLE_RATE_HZ / 1e9).astype(int)
    merged = np.zeros(idx.max() + 1)
    for i, p in zip(idx, powers):
        merged[i] += p
    merged /= merged.sum()
    taps = np.zeros(merged.size, dtype=np.complex128)
    occupied = np.nonzero(merged)[0]
    k_lin = 10.0 ** (model.rician_k_db / 10.0)
    for order, i in enumerate(occupied):
        p = merged[i]
        scatter = (rng.normal() + 1j * rng.normal()) / np.sqrt(2.0)
        if order == 0:
            los = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
            taps[i] = np.sqrt(p) * (
                np.sqrt(k_lin / (k_lin + 1.0)) * los
                + np.sqrt(1.0 / (k_lin + 1.0)) * scatter
            )
        else:
            taps[i] = np.sqrt(p) * scatter
    return taps


def apply_channel(frame, model, rng):
    """Convolve a frame with a fresh channel realization."""
    taps = channel_taps(model, rng)
    out = np.convolve(frame.samples, taps)[: frame.samples.size]
    name = model if isinstance(model, str) else model.name
    return IqFrame(
        samples=out,
        sample_rate_hz=frame.sample_rate_hz,
        label=frame.label,
        channel_model=name,
        snr_db=frame.snr_db,
        mcs_id=frame.mcs_id,
        n_data_symbols=frame.n_data_symbols,
        payload_bits=frame.payload_bits,
    )


def add_awgn(frame, snr_db, rng):
    """Add complex white noise at the requested frame-average SNR."""
    power = np.mean(np.abs(frame.samples) ** 2)
    if power <= 0:
        raise ValueError("cannot set an SNR on an empty frame")
    noise_power = power / 10.0 ** (snr_db / 10.0)
    n = frame.samples.size
    noise = np.sqrt(noise_power / 2.0) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return IqFrame(
        samples=frame.samples + noise,
        sample_rate_hz=frame.sample_rate_hz,
        label=frame.label,
        channel_model=frame.channel_model,
        snr_db=snr_db,
        mcs_id=frame.mcs_id,
        n_data_symbols=frame.n_data_symbols,
        payload_bits=frame.payload_bits,
    )


# ---------------------------------------------------------------------------
# Dataset generation and the on-disk record format.

@dataclass
class DatasetConfig:
    n_frames: int = 1200
    frame_len: int = 2048
    snr_range_db: tuple = (5.0, 30.0)
    jam_to_signal_db: float = 0.0
    train_fraction: float = 0.8
    seed: int = 0
    guard_ns: int = 800


@dataclass
class Dataset:
    frames: list
    split: np.ndarray  # 0 = train, 1 = test
    config: DatasetConfig = None

    def subset(self, which):
        flag = 0 if which == "train" else 1
        return [f for f, s in zip(self.frames, self.split) if s == flag]


def _frame_plan(config):
    """Deterministic class/model assignment, classes exactly balanced."""
    per_class = config.n_frames // 3
    if per_class * 3 != config.n_frames:
        raise ValueError("n_frames must be divisible by 3 for class balance")
    models = sorted(CHANNEL_MODELS)
    plan = [("I", None)] * per_class
    for label in ("W", "J"):
        plan.extend((label, models[i % 6]) for i in range(per_class))
    return plan


def make_dataset(config=None):
    """Generate a balanced labelled frame set with an 80/20 split.

    W and J frames are stratified across channel models; W frames draw a
    random MCS and payload length, every burst rides a fresh channel
    realization plus AWGN at a uniform random SNR from the configured
    range.  The split is stratified per (label, model) group.
    """
    config = config or DatasetConfig()
    rng = np.random.default_rng(config.seed)
    grid = OfdmGrid(guard_ns=config.guard_ns)
    frames = []
    for label, model in _frame_plan(config):
        if label == "I":
            frames.append(gen_noise(config.frame_len, rng))
            continue
        snr = rng.uniform(*config.snr_range_db)
        if label == "W":
            mcs = int(rng.integers(0, len(MCS_TABLE)))
            bits_per_ofdm = len(grid.data_bins) * BITS_PER_SYMBOL[MCS_TABLE[mcs][0]]
            fit = max_data_symbols(config.frame_len, grid)
            if fit < 1:
                raise ValueError("frame_len too short for a WiFi burst")
            n_syms = int(rng.integers(min(3, fit), fit + 1))
            payload = n_syms * bits_per_ofdm // 8
            frame = gen_wifi(mcs, payload, grid, rng, frame_len=config.frame_len)
        else:
            frame = gen_jammer(config.frame_len, rng)
            frame.samples *= 10.0 ** (config.jam_to_signal_db / 20.0)
        frame = apply_channel(frame, model, rng)
        frame = add_awgn(frame, snr, rng)
        frames.append(frame)

    split = np.zeros(len(frames), dtype=np.uint8)
    groups = {}
    for i, f in enumerate(frames):
        groups.setdefault((f.label, f.channel_model), []).append(i)
    for members in groups.values():
        members = np.array(members)
        rng.shuffle(members)
        n_test = int(round(len(members) * (1.0 - config.train_fraction)))
        split[members[:n_test]] = 1
    return Dataset(frames=frames, split=split, config=config)


DATASET_MAGIC = b"DWDSET01"
_MODEL_CODE = {None: 255, "A": 0, "B": 1, "C": 2, "D": 3, "E": 4, "F": 5}
_MODEL_FROM_CODE = {v: k for k, v in _MODEL_CODE.items()}
_LABEL_CODE = {"I": 0, "W": 1, "J": 2}
_LABEL_FROM_CODE = {v: k for k, v in _LABEL_CODE.items()}


def save_dataset(dataset, path):
    """Binary record format: magic, count, then per-frame header + I/Q.

    Header layout (little endian): label u8, model u8, split u8, mcs u8,
    snr f64 (NaN when absent), n_samples u32.  Samples follow as
    interleaved float64 I/Q pairs.
    """
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", len(dataset.frames)))
        for frame, split in zip(dataset.frames, dataset.split):
            snr = np.nan if frame.snr_db is None else float(frame.snr_db)
            mcs = 255 if frame.mcs_id is None else int(frame.mcs_id)
            fh.write(
                struct.pack(
                    "<BBBBdI",
                    _LABEL_CODE[frame.label],
                    _MODEL_CODE[frame.channel_model],
                    int(split),
                    mcs,
                    snr,
                    frame.samples.size,
                )
            )
            interleaved = np.empty(frame.samples.size * 2, dtype=np.float64)
            interleaved[0::2] = frame.samples.real
            interleaved[1::2] = frame.samples.imag
            fh.write(interleaved.tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise ValueError("not a dataset file")
        (count,) = struct.unpack("<I", fh.read(4))
        frames, split = [], np.zeros(count, dtype=np.uint8)
        header = struct.Struct("<BBBBdI")
        for i in range(count):
            label_c, model_c, split_c, mcs, snr, n = header.unpack(fh.read(header.size))
            raw = np.frombuffer(fh.read(n * 16), dtype=np.float64)
            samples = raw[0::2] + 1j * raw[1::2]
            frames.append(
                IqFrame(
                    samples=samples,
                    label=_LABEL_FROM_CODE[label_c],
                    channel_model=_MODEL_FROM_CODE[model_c],
                    snr_db=None if np.isnan(snr) else snr,
                    mcs_id=None if mcs == 255 else mcs,
                )
            )
            split[i] = split_c
    return Dataset(frames=frames, split=split)
