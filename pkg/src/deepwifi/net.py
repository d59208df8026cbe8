"""Slotted network simulator: traffic, queues, routing, and the full loop.

Each slot runs four phases: (1) every channel is sensed and labeled,
(2) traffic arrives and neighbors exchange queue lengths so each user
can pick a (flow, next hop) by largest rate-weighted backlog
differential, (3) users scan channels and choose transmit power and
rate, (4) transmissions are resolved against jammers and collisions,
moving bits one hop along their route.

Bits are integers end to end, so queue conservation is exact.  Per
(user, flow) queues are FIFO chunk lists; a chunk keeps the source
sequence number it was born with.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import classifier as classifier_mod
from . import frontend, mac, waveform
from . import jammer as jammer_mod

SCHEMA_VERSION = 1
CSV_STAMP = f"# deepwifi-csv v{SCHEMA_VERSION}"

SUMMARY_HEADER = (
    "schema_version,policy,jammer_kind,p_j,post_jam_sinr_db,seed,slots,"
    "slot_seconds,delivered_mbits,offered_mbits,cumulative_mbps,"
    "avg_user_mbps,collision_rate,jam_on_rate,covert_rate"
)
SLOT_HEADER = ("slot,arrival_bits,delivered_bits,backlog_bits,"
               "n_tx,n_collisions,n_jam_on,n_trips")
POWER_HEADER = "slot,user,channel,power_w,covert"
USER_HEADER = "user,delivered_mbits,avg_mbps"

POLICIES = ("deepwifi", "baseline")
MODES = ("truth", "confusion", "classifier")


@dataclass
class ScenarioConfig:
    n_users: int = 9
    n_channels: int = 40
    n_flows: int = 5
    n_slots: int = 200
    slot_seconds: float = 5.484e-3
    policy: str = "deepwifi"
    jammer_kind: str = "random"
    p_j: float = 0.0
    jam_tau_db: float = 2.0
    jam_tau0_db: float = 1.0
    jam_delta: float = 0.5
    jam_window: int = 5
    post_jam_sinr_db: float = 30.0
    traffic_scale: float = 1.0
    area_m: float = 50.0
    pathloss_exp: float = 2.7
    pathloss_ref_db: float = 30.0
    noise_w: float = 1e-12
    p_max_w: float = 0.1
    p_min_w: float = 0.0
    lpi_margin_db: float = 1.0
    covert_backoff: float = 0.9
    jam_radius_factor: float = 2.0
    payload_bytes: int = 512
    guard: str = "800ns"
    min_sep_m: float = 10.0
    neighbor_sinr_db: float = 0.0
    mode: str = "truth"
    frame_len: int = 2048
    seed: int = 0

    def validate(self):
        if self.n_users < 2:
            raise ValueError("need at least two users")
        if self.n_channels < 1:
            raise ValueError("need at least one channel")
        if not 1 <= self.n_flows <= self.n_users * (self.n_users - 1):
            raise ValueError("flow count out of range for user count")
        if self.n_slots < 1:
            raise ValueError("need at least one slot")
        if self.slot_seconds <= 0:
            raise ValueError("slot duration must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.jammer_kind not in jammer_mod.KINDS:
            raise ValueError(f"unknown jammer kind {self.jammer_kind!r}")
        if not 0.0 <= self.p_j <= 1.0:
            raise ValueError("jamming probability must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown sensing mode {self.mode!r}")
        if self.traffic_scale < 0:
            raise ValueError("traffic scale must be nonnegative")
        if self.p_max_w <= 0 or self.noise_w <= 0:
            raise ValueError("powers must be positive")
        if not 0.0 < self.covert_backoff < 1.0:
            raise ValueError("covert backoff must sit strictly inside (0, 1)")
        if not 0.0 <= self.min_sep_m <= self.area_m / 2.0:
            raise ValueError("user separation must fit inside the area")
        return self


@dataclass(frozen=True)
class Flow:
    flow_id: int
    source: int
    dest: int

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError("flow endpoints must differ")


@dataclass
class Topology:
    positions: np.ndarray       # (n_users, 2) meters
    jam_positions: np.ndarray   # (n_channels, 2)
    gains: np.ndarray           # user -> user linear power gain
    jam_gains: np.ndarray       # (n_channels, n_users) jammer <-> user
    sensor_gains: np.ndarray    # user -> shared sensing point
    jam_sensor_gains: np.ndarray  # (n_channels,) jammer -> sensing point
    noise_w: float


def _pathloss_gain(distances, ref_db, exponent):
    d = np.maximum(distances, 1.0)
    loss_db = ref_db + 10.0 * exponent * np.log10(d)
    return 10.0 ** (-loss_db / 10.0)


def _drop_users(config, rng):
    """Uniform drops kept at least min_sep_m apart (rejection sampling).

    The separation floor caps the best possible link SNR, which keeps
    MCS headroom bounded; without it a colocated pair can out-run any
    jammer's interference budget.
    """
    users = []
    for _ in range(10000):
        cand = rng.uniform(0.0, config.area_m, size=2)
        if all(np.linalg.norm(cand - u) >= config.min_sep_m for u in users):
            users.append(cand)
            if len(users) == config.n_users:
                return np.array(users)
    raise ValueError("could not place users at the requested separation")


def build_topology(config, rng):
    """Separated user drops inside the service area; per-channel jammers
    sit on a surrounding ring, so jam gains vary with geometry but no
    jammer sits on top of a transmitter."""
    users = _drop_users(config, rng)
    sensor = np.array([config.area_m / 2.0, config.area_m / 2.0])
    angles = rng.uniform(0.0, 2.0 * np.pi, size=config.n_channels)
    radius = config.jam_radius_factor * config.area_m
    jams = sensor + radius * np.column_stack([np.cos(angles),
                                              np.sin(angles)])
    d_users = np.linalg.norm(users[:, None, :] - users[None, :, :], axis=2)
    d_jam = np.linalg.norm(jams[:, None, :] - users[None, :, :], axis=2)
    gains = _pathloss_gain(d_users, config.pathloss_ref_db,
                           config.pathloss_exp)
    np.fill_diagonal(gains, 0.0)
    return Topology(
        positions=users,
        jam_positions=jams,
        gains=gains,
        jam_gains=_pathloss_gain(d_jam, config.pathloss_ref_db,
                                 config.pathloss_exp),
        sensor_gains=_pathloss_gain(
            np.linalg.norm(users - sensor, axis=1),
            config.pathloss_ref_db, config.pathloss_exp),
        jam_sensor_gains=_pathloss_gain(
            np.linalg.norm(jams - sensor, axis=1),
            config.pathloss_ref_db, config.pathloss_exp),
        noise_w=config.noise_w,
    )


def link_snr_db(topology, p_w):
    """Clean link SNR matrix at a fixed transmit power."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p_w * topology.gains / topology.noise_w)


def neighbor_sets(topology, p_w, threshold_db=0.0):
    snr = link_snr_db(topology, p_w)
    ok = snr >= threshold_db
    np.fill_diagonal(ok, False)
    return [np.flatnonzero(row) for row in ok]


def make_flows(config, rng):
    pairs = [(i, j) for i in range(config.n_users)
             for j in range(config.n_users) if i != j]
    picks = rng.choice(len(pairs), size=config.n_flows, replace=False)
    return [Flow(flow_id=k, source=pairs[p][0], dest=pairs[p][1])
            for k, p in enumerate(sorted(int(v) for v in picks))]


def gen_traffic(flows, slot_seconds, rng, traffic_scale=1.0):
    """Per-flow arrivals this slot: uniform [0, 1] Mb/s, scaled, in bits."""
    if slot_seconds <= 0:
        raise ValueError("slot duration must be positive")
    if not flows:
        return np.zeros(0, dtype=np.int64)
    rates = rng.uniform(0.0, 1.0, size=len(flows)) * traffic_scale
    return np.rint(rates * 1e6 * slot_seconds).astype(np.int64)


def backpressure_select(q_self, q_neighbors, rates):
    """Largest rate-weighted positive backlog differential.

    q_self maps flow -> bits at this user; q_neighbors maps neighbor ->
    that neighbor's flow -> bits map; rates maps neighbor -> link rate.
    Ties break to the lowest flow id, then the lowest neighbor id.
    Returns (flow_id, next_hop) or None when every differential is
    nonpositive or no positive-rate neighbor exists.
    """
    best = None
    for j in sorted(q_neighbors):
        c = rates.get(j, 0.0)
        if c <= 0.0:
            continue
        q_j = q_neighbors[j]
        flow_pick = None
        for s in sorted(q_self):
            diff = q_self[s] - q_j.get(s, 0)
            if flow_pick is None or diff > flow_pick[1]:
                flow_pick = (s, diff)
        if flow_pick is None:
            continue
        utility = c * max(flow_pick[1], 0.0)
        if utility > 0.0 and (best is None or utility > best[0]):
            best = (utility, flow_pick[0], j)
    if best is None:
        return None
    return best[1], best[2]


# ---------------------------------------------------------------------------
# Engine


@dataclass
class _Chunk:
    seq: int
    bits: int


class World:
    """Mutable simulation state for one run."""

    def __init__(self, config, thresholds, dae=None, fnn=None,
                 confusion=None):
        config.validate()
        if config.mode == "classifier" and (dae is None or fnn is None):
            raise ValueError("classifier mode needs trained models")
        if config.mode == "confusion" and confusion is None:
            raise ValueError("confusion mode needs a confusion matrix")
        self.config = config
        self.thresholds = thresholds
        self.dae = dae
        self.fnn = fnn
        self.confusion = confusion
        root = np.random.default_rng(config.seed)
        seeds = root.integers(0, 2 ** 63, size=5)
        self.topo_rng = np.random.default_rng(seeds[0])
        self.arrival_rng = np.random.default_rng(seeds[1])
        self.jam_rng = np.random.default_rng(seeds[2])
        # MAC and sensing draws are keyed per (slot, user) and
        # (slot, channel) instead of running streams, so runs that share
        # a seed stay coupled sample-for-sample even after their
        # trajectories diverge (common random numbers across policies)
        self.mac_key = int(seeds[3])
        self.sense_key = int(seeds[4])

        self.topo = build_topology(config, self.topo_rng)
        self.flows = make_flows(config, self.topo_rng)
        self.neighbors = neighbor_sets(self.topo, config.p_max_w,
                                       config.neighbor_sinr_db)
        self.jam_power_w = self._calibrate_jam_power()

        n, f = config.n_users, config.n_flows
        self.chunks = [[deque() for _ in range(f)] for _ in range(n)]
        self.backlog = np.zeros((n, f), dtype=np.int64)
        self.next_seq = np.zeros(f, dtype=np.int64)
        self.backoffs = [
            mac.BackoffState.new(config.n_channels,
                                 np.random.default_rng([self.mac_key, u]))
            for u in range(n)]
        self.jammers = [
            jammer_mod.JammerState(
                kind=config.jammer_kind, channel_id=ch, p_j=config.p_j,
                power=self.jam_power_w,
                tau=(config.jam_tau0_db if config.jammer_kind == "adaptive"
                     else config.jam_tau_db),
                delta=config.jam_delta, window=config.jam_window,
            )
            for ch in range(config.n_channels)
        ]
        # channel occupancy observed by the sensor in the previous slot:
        # list of (user, power) per channel
        self.prev_tx = [[] for _ in range(config.n_channels)]
        self.prev_sensed_db = np.full(config.n_channels, -np.inf)

        self.slot = 0
        self.slot_rows = []
        self.power_rows = []
        self.jam_rows = []
        self.delivered_bits = 0
        self.offered_bits = 0
        self.delivered_per_user = np.zeros(n, dtype=np.int64)
        self.tx_count = 0
        self.collision_count = 0
        self.jam_on_count = 0
        self.covert_count = 0
        self.dest_seq_log = {}  # (flow, last_hop) -> seq list

    def _calibrate_jam_power(self):
        """Jam power that puts the median neighbor link at the target
        post-jam SINR when received through the median jammer gain."""
        c = self.config
        links = [(i, j) for i, js in enumerate(self.neighbors) for j in js]
        if not links:
            raise ValueError("topology has no usable links")
        sig = np.median([c.p_max_w * self.topo.gains[i, j] for i, j in links])
        jam_gain = float(np.median(self.topo.jam_gains))
        target = 10.0 ** (c.post_jam_sinr_db / 10.0)
        need = sig / target - c.noise_w
        return max(need, c.noise_w) / jam_gain

    # -- phase 1: sensing ---------------------------------------------------

    def _truth_labels(self, pre_jam):
        # carrier sense wins: a channel someone used last slot reads W
        # even while jammed, so degraded users rotate off each other
        labels = []
        for ch in range(self.config.n_channels):
            if self.prev_tx[ch]:
                labels.append("W")
            elif pre_jam[ch]:
                labels.append("J")
            else:
                labels.append("I")
        return labels

    def _sensed_frame(self, ch, truth, rng):
        c = self.config
        if truth == "I":
            return waveform.gen_noise(c.frame_len, rng)
        model = sorted(waveform.CHANNEL_MODELS)[
            int(rng.integers(len(waveform.CHANNEL_MODELS)))]
        if truth == "J":
            snr = self._jam_sensed_db(ch)
            frame = waveform.gen_jammer(c.frame_len, rng)
        else:
            user, power = self.prev_tx[ch][0]
            snr = _db_ratio(power * self.topo.sensor_gains[user], c.noise_w)
            mcs_id = int(rng.integers(0, len(waveform.MCS_TABLE)))
            frame = _burst(mcs_id, c.frame_len, rng)
        frame = waveform.apply_channel(frame, model, rng)
        return waveform.add_awgn(frame, min(snr, 40.0), rng)

    def _jam_sensed_db(self, ch):
        return _db_ratio(self.jam_power_w * self.topo.jam_sensor_gains[ch],
                         self.config.noise_w)

    def _sense_rng(self, ch):
        return np.random.default_rng([self.sense_key, self.slot, ch])

    def _labels(self, pre_jam):
        truth = self._truth_labels(pre_jam)
        mode = self.config.mode
        if mode == "truth":
            return truth
        if mode == "confusion":
            out = []
            for ch, t in enumerate(truth):
                row = self.confusion[classifier_mod.LABELS.index(t)]
                pick = self._sense_rng(ch).choice(len(row), p=row)
                out.append(classifier_mod.LABELS[pick])
            return out
        frames = [self._sensed_frame(ch, t, self._sense_rng(ch))
                  for ch, t in enumerate(truth)]
        x = frontend.frames_matrix(frames, input_scale=self.dae.input_scale,
                                   full_scale=self.dae.full_scale)
        z = frontend.encode(self.dae, x)
        return list(classifier_mod.predict(self.fnn, z))

    # -- phase 3 helpers ----------------------------------------------------

    def _view_sinr_db(self, user, dest, labels):
        """Per-channel SINR as the MAC sees it: true link gain, with jam
        power counted only on channels the stack has labeled J.  A jammed
        channel misread as idle therefore looks clean, and the MCS chosen
        from that estimate overshoots what the channel can carry."""
        c = self.config
        h = self.topo.gains[user, dest]
        sig = c.p_max_w * h
        out = np.empty(c.n_channels)
        for ch in range(c.n_channels):
            interference = 0.0
            if labels[ch] == "J":
                interference = self.jam_power_w * self.topo.jam_gains[ch, dest]
            out[ch] = _db_ratio(sig, c.noise_w + interference)
        return out

    def _pick_power(self, user, dest, ch, label, view_sinr_db):
        """Transmit power, MCS, and covert flag for one transmission."""
        c = self.config
        link = mac.LinkState(gain=self.topo.gains[user, dest],
                             noise=c.noise_w)
        lpi_active = (c.policy == "deepwifi"
                      and c.jammer_kind in ("static_sensing", "adaptive")
                      and label != "J")
        if lpi_active:
            g_jam = self.topo.jam_gains[ch, user]
            cap = (c.noise_w * 10.0 ** (c.jam_tau_db / 10.0) / g_jam
                   * c.covert_backoff)
            cap = min(cap, c.p_max_w)
            sinr_cap = _db_ratio(cap * link.gain, c.noise_w)
            mcs_id, rate = mac.mcs_select(sinr_cap - c.lpi_margin_db,
                                          c.payload_bytes, self.thresholds,
                                          c.guard)
            required = self.thresholds[mac._nearest_payload(
                self.thresholds, c.payload_bytes)][mcs_id] + c.lpi_margin_db
            power, degraded = mac.lpi_power(required, link, p_max=cap,
                                            p_min=c.p_min_w)
            if not degraded:
                return power, mcs_id, rate, True
        mcs_id, rate = mac.mcs_select(view_sinr_db, c.payload_bytes,
                                      self.thresholds, c.guard)
        return c.p_max_w, mcs_id, rate, False

    # -- the slot loop ------------------------------------------------------

    def step(self):
        c = self.config
        # phase 0/1: jammer pre-decisions and channel labels
        fallback = self.jam_rng.random(c.n_channels) < c.p_j
        pre_jam = []
        for ch, state in enumerate(self.jammers):
            on = bool(fallback[ch])
            if state.kind in ("static_sensing", "adaptive"):
                on = on or self.prev_sensed_db[ch] >= state.tau
            pre_jam.append(on)
        labels = self._labels(pre_jam)

        # phase 2: arrivals and routing picks
        arrivals = gen_traffic(self.flows, c.slot_seconds, self.arrival_rng,
                               c.traffic_scale)
        for flow, bits in zip(self.flows, arrivals):
            if bits > 0:
                seq = int(self.next_seq[flow.flow_id])
                self.next_seq[flow.flow_id] += 1
                self.chunks[flow.source][flow.flow_id].append(
                    _Chunk(seq=seq, bits=int(bits)))
                self.backlog[flow.source, flow.flow_id] += int(bits)
        self.offered_bits += int(arrivals.sum())

        snr = link_snr_db(self.topo, c.p_max_w)
        picks = {}
        for user in range(c.n_users):
            q_self = {f: int(self.backlog[user, f]) for f in range(c.n_flows)}
            q_nbrs = {}
            rates = {}
            for j in self.neighbors[user]:
                q_nbrs[int(j)] = {f: int(self.backlog[j, f])
                                  for f in range(c.n_flows)}
                rates[int(j)] = mac.mcs_select(snr[user, j], c.payload_bytes,
                                               self.thresholds, c.guard)[1]
            sel = backpressure_select(q_self, q_nbrs, rates)
            if sel is not None:
                picks[user] = sel

        # phase 3: channel access, power, and rate
        attempts = {}
        for user, (flow_id, dest) in picks.items():
            view_sinr = self._view_sinr_db(user, dest, labels)
            # channel selection sees a noisy estimate on jammed channels;
            # the jitter breaks argmax ties between users whose receivers
            # share a far-off jammer
            mac_rng = np.random.default_rng([self.mac_key, self.slot, user])
            scan_sinr = view_sinr.copy()
            jammed = np.array([lab == "J" for lab in labels])
            if jammed.any():
                scan_sinr[jammed] += mac_rng.uniform(
                    -2.0, 2.0, size=int(jammed.sum()))
            view = mac.ChannelView(labels=list(labels), sinr_db=scan_sinr)
            scan = (mac.deepwifi_scan if c.policy == "deepwifi"
                    else mac.baseline_scan)
            ch = scan(view, self.backoffs[user], mac_rng)
            if ch is None:
                continue
            power, mcs_id, rate, covert = self._pick_power(
                user, dest, ch, labels[ch], view_sinr[ch])
            if rate <= 0.0:
                continue
            floor_edge = self.thresholds[mac._nearest_payload(
                self.thresholds, c.payload_bytes)][0]
            if labels[ch] == "J" and view_sinr[ch] < floor_edge:
                continue  # degraded mode cannot sustain even the floor rate
            attempts.setdefault(ch, []).append(
                (user, dest, flow_id, power, mcs_id, rate, covert))

        # phase 4: jam resolution, collisions, and bit movement
        sensed_db = np.full(c.n_channels, -np.inf)
        for ch, txs in attempts.items():
            received = sum(power * self.topo.jam_gains[ch, user]
                           for user, _, _, power, _, _, _ in txs)
            sensed_db[ch] = _db_ratio(received, c.noise_w)

        delivered_now = 0
        n_collisions = 0
        n_trips = 0
        for ch in range(c.n_channels):
            state = self.jammers[ch]
            jam_on = pre_jam[ch]
            if state.kind in ("static_sensing", "adaptive"):
                trip = sensed_db[ch] >= state.tau
                if trip and not jam_on:
                    n_trips += 1
                jam_on = jam_on or trip
            if state.kind == "adaptive":
                state.r_window.append(float(max(sensed_db[ch], 0.0)))
                state.p_window.append(1.0 if jam_on else 0.0)
                state.tau_window.append(state.tau)
                if len(state.r_window) >= state.window:
                    g = jammer_mod.adaptive_utility(
                        state.r_window, state.p_window, state.tau_window,
                        state.w, state.window)
                    if state.g_prev is not None:
                        state.tau = jammer_mod.adaptive_update(
                            state.tau, state.g_prev, g, state.delta, state.t)
                        state.t += 1
                    state.g_prev = g
                    state.g_last = g
                    state.r_window.clear()
                    state.p_window.clear()
                    state.tau_window.clear()
            if jam_on:
                self.jam_on_count += 1
            self.jam_rows.append(jammer_mod.trace_row(
                self.slot, state,
                jammer_mod.JamDecision(jam_on,
                                       state.power if jam_on else 0.0)))

            txs = attempts.get(ch, [])
            if not txs:
                continue
            self.tx_count += len(txs)
            for user, dest, flow_id, power, mcs_id, rate, covert in txs:
                self.power_rows.append(
                    f"{self.slot},{user},{ch},{float(power)!r},{int(covert)}")
                if covert:
                    self.covert_count += 1
            if len(txs) > 1:
                n_collisions += len(txs)
                self.collision_count += len(txs)
                continue
            user, dest, flow_id, power, mcs_id, rate, covert = txs[0]
            interference = (self.jam_power_w * self.topo.jam_gains[ch, dest]
                            if jam_on else 0.0)
            actual_sinr = _db_ratio(power * self.topo.gains[user, dest],
                                    c.noise_w + interference)
            edge = self.thresholds[mac._nearest_payload(
                self.thresholds, c.payload_bytes)][mcs_id]
            if actual_sinr < edge:
                continue  # frame lost
            capacity = int(math.floor(rate * 1e6 * c.slot_seconds))
            delivered_now += self._transfer(user, dest, flow_id, capacity)

        for ch in range(c.n_channels):
            self.prev_tx[ch] = [(u, p) for u, _, _, p, _, _, _
                                in attempts.get(ch, [])]
        self.prev_sensed_db = sensed_db

        backlog_total = int(self.backlog.sum())
        self.slot_rows.append(
            f"{self.slot},{int(arrivals.sum())},{delivered_now},"
            f"{backlog_total},{sum(len(t) for t in attempts.values())},"
            f"{n_collisions},{sum(pre_jam)},{n_trips}")
        self.delivered_bits += delivered_now
        self.slot += 1
        return delivered_now

    def _transfer(self, user, dest, flow_id, capacity_bits):
        """Move up to capacity bits one hop; returns bits that reached
        the flow destination."""
        queue = self.chunks[user][flow_id]
        flow = self.flows[flow_id]
        moved = 0
        delivered = 0
        while queue and moved < capacity_bits:
            chunk = queue[0]
            take = min(chunk.bits, capacity_bits - moved)
            if take == chunk.bits:
                queue.popleft()
            else:
                chunk.bits -= take
            moved += take
            if dest == flow.dest:
                delivered += take
                self.delivered_per_user[dest] += take
                self.dest_seq_log.setdefault((flow_id, user), []).append(
                    chunk.seq)
            else:
                tail = self.chunks[dest][flow_id]
                if tail and tail[-1].seq == chunk.seq:
                    tail[-1].bits += take
                else:
                    tail.append(_Chunk(seq=chunk.seq, bits=take))
                self.backlog[dest, flow_id] += take
        self.backlog[user, flow_id] -= moved
        return delivered


def _burst(mcs_id, frame_len, rng):
    grid = waveform.OfdmGrid()
    fit = waveform.max_data_symbols(frame_len, grid)
    n_syms = int(rng.integers(min(3, fit), fit + 1))
    bits_per = len(grid.data_bins) * waveform.BITS_PER_SYMBOL[
        waveform.MCS_TABLE[mcs_id][0]]
    return waveform.gen_wifi(mcs_id, (n_syms * bits_per) // 8, grid, rng,
                             frame_len=frame_len)


def _db_ratio(power, reference):
    if power <= 0.0:
        return float("-inf")
    return 10.0 * math.log10(power / reference)


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: dict
    slot_rows: list
    power_rows: list
    jam_rows: list
    user_rows: list
    dest_seq_log: dict


def run(config, thresholds, dae=None, fnn=None, confusion=None):
    """Simulate one scenario; deterministic for a given config."""
    world = World(config, thresholds, dae=dae, fnn=fnn, confusion=confusion)
    for _ in range(config.n_slots):
        world.step()
    elapsed = config.n_slots * config.slot_seconds
    c = config
    summary = {
        "schema_version": SCHEMA_VERSION,
        "policy": c.policy,
        "jammer_kind": c.jammer_kind,
        "p_j": c.p_j,
        "post_jam_sinr_db": c.post_jam_sinr_db,
        "seed": c.seed,
        "slots": c.n_slots,
        "slot_seconds": c.slot_seconds,
        "delivered_mbits": world.delivered_bits / 1e6,
        "offered_mbits": world.offered_bits / 1e6,
        "cumulative_mbps": world.delivered_bits / 1e6 / elapsed,
        "avg_user_mbps": float(np.mean(
            world.delivered_per_user / 1e6 / elapsed)),
        "collision_rate": (world.collision_count / world.tx_count
                           if world.tx_count else 0.0),
        "jam_on_rate": world.jam_on_count / (c.n_slots * c.n_channels),
        "covert_rate": (world.covert_count / world.tx_count
                        if world.tx_count else 0.0),
    }
    user_rows = [
        f"{u},{float(world.delivered_per_user[u] / 1e6)!r},"
        f"{float(world.delivered_per_user[u] / 1e6 / elapsed)!r}"
        for u in range(c.n_users)
    ]
    return RunResult(config=config, summary=summary,
                     slot_rows=world.slot_rows, power_rows=world.power_rows,
                     jam_rows=world.jam_rows, user_rows=user_rows,
                     dest_seq_log=world.dest_seq_log)


def summary_line(summary):
    return ",".join(repr(summary[k]) if isinstance(summary[k], float)
                    else str(summary[k]) for k in SUMMARY_HEADER.split(","))


def save_run(result, outdir, stem="run"):
    """Write the four per-run CSV files; returns their paths."""
    import os

    os.makedirs(outdir, exist_ok=True)
    paths = {}

    def _write(name, header, rows):
        path = os.path.join(outdir, f"{stem}_{name}.csv")
        with open(path, "w") as fh:
            fh.write(CSV_STAMP + f" {name}\n")
            fh.write(header + "\n")
            for row in rows:
                fh.write(row + "\n")
        paths[name] = path

    _write("summary", SUMMARY_HEADER, [summary_line(result.summary)])
    _write("slots", SLOT_HEADER, result.slot_rows)
    _write("power", POWER_HEADER, result.power_rows)
    _write("jam", jammer_mod.TRACE_HEADER, result.jam_rows)
    _write("users", USER_HEADER, result.user_rows)
    return paths
