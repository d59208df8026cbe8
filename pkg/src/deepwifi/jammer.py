"""Jammer state machines: probabilistic, sensing, and threshold-adapting.

Each jammer owns one channel and is advanced once per slot.  The
probabilistic kind transmits with a fixed probability; the sensing kind
transmits whenever the power it receives on its channel reaches its
threshold, falling back to the probabilistic rule otherwise; the
adaptive kind is a sensing jammer that tunes its threshold on a 1/t
schedule to trade its own power consumption against channel denial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("random", "static_sensing", "adaptive")

DEFAULT_TAU = 1.0
DEFAULT_W = 1.0
DEFAULT_DELTA = 0.5

TRACE_HEADER = "slot,channel,on,tau,g"


@dataclass
class JamDecision:
    on: bool
    power: float

    def __post_init__(self):
        if not self.on and self.power != 0.0:
            raise ValueError("idle jammer cannot radiate")


@dataclass
class JammerState:
    """One jammer bound to one channel.

    The utility windows fill one entry per slot; every ``window`` slots
    the threshold update fires and the windows reset.
    """

    kind: str
    channel_id: int
    p_j: float = 0.0
    power: float = 1.0
    tau: float = DEFAULT_TAU
    w: float = DEFAULT_W
    delta: float = DEFAULT_DELTA
    window: int = 1
    t: int = 1
    g_prev: float | None = None
    g_last: float = float("nan")
    r_window: list = field(default_factory=list)
    p_window: list = field(default_factory=list)
    tau_window: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown jammer kind {self.kind!r}")
        if not 0.0 <= self.p_j <= 1.0:
            raise ValueError("jamming probability must lie in [0, 1]")
        if self.tau < 0.0:
            raise ValueError("sensing threshold must be nonnegative")
        if self.window < 1:
            raise ValueError("utility window must be at least one slot")
        if self.delta < 0.0:
            raise ValueError("threshold step must be nonnegative")
        if self.power <= 0.0:
            raise ValueError("transmit power must be positive")


def _decide(state, on):
    return JamDecision(on=bool(on), power=state.power if on else 0.0)


def random_step(state, rng):
    """Transmit with probability p_J, independent of the channel."""
    return _decide(state, rng.random() < state.p_j)


def sensing_step(state, received_power, rng):
    """Transmit when sensed power reaches tau, else fall back to p_J."""
    if received_power >= state.tau:
        return _decide(state, True)
    return _decide(state, rng.random() < state.p_j)


def adaptive_utility(r_window, p_window, tau_window, w, window=None):
    """Average per-slot payoff: channel-busy indicator plus w times the
    jammer's own transmit power."""
    r = np.asarray(r_window, dtype=np.float64)
    p = np.asarray(p_window, dtype=np.float64)
    tau = np.asarray(tau_window, dtype=np.float64)
    if not len(r) == len(p) == len(tau):
        raise ValueError("utility windows must have equal length")
    if window is not None and len(r) != window:
        raise ValueError("utility windows do not span the configured slots")
    if len(r) == 0:
        raise ValueError("utility windows are empty")
    return float(np.mean((r >= tau).astype(np.float64) + w * p))


def adaptive_update(tau, g_prev, g_cur, delta, t):
    """Raise the threshold by delta/t when utility dropped, else lower
    it, clipping at zero."""
    if t < 1:
        raise ValueError("update step counter starts at one")
    if g_prev > g_cur:
        return tau + delta / t
    return max(tau - delta / t, 0.0)


def adaptive_step(state, received_power, rng):
    """Sensing decision plus windowed threshold adaptation."""
    decision = sensing_step(state, received_power, rng)
    state.r_window.append(float(received_power))
    state.p_window.append(decision.power)
    state.tau_window.append(state.tau)
    if len(state.r_window) >= state.window:
        g = adaptive_utility(state.r_window, state.p_window,
                             state.tau_window, state.w, state.window)
        if state.g_prev is not None:
            state.tau = adaptive_update(state.tau, state.g_prev, g,
                                        state.delta, state.t)
            state.t += 1
        state.g_prev = g
        state.g_last = g
        state.r_window.clear()
        state.p_window.clear()
        state.tau_window.clear()
    return decision


def step(state, received_power, rng):
    """Advance one slot; the probabilistic kind ignores sensed power."""
    if state.kind == "random":
        return random_step(state, rng)
    if state.kind == "static_sensing":
        return sensing_step(state, received_power, rng)
    return adaptive_step(state, received_power, rng)


def trace_row(slot, state, decision):
    g = state.g_last
    return (f"{slot},{state.channel_id},{int(decision.on)},"
            f"{state.tau!r},{g!r}")
