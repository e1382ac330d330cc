"""Gilbert-Elliot channel model and belief arithmetic.

Channels are indexed from 0.  A belief is the conditional probability that a
channel is in the good state (1) given the sensing history.

Every belief reachable by the Bayes update is of the form
``omega_o + c * x**k`` with ``x = p11 - p01``; :class:`Deviation` stores that
form so comparisons between beliefs stay exact after the floating-point values
have all collapsed onto ``omega_o``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Correlation",
    "ChannelParams",
    "Deviation",
    "tau",
    "update_belief",
    "j_step_prob",
    "step_channel",
    "channel_path",
    "channel_stream",
    "compare_deviations",
]


class Correlation(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ZERO = "zero"


@dataclass(frozen=True)
class ChannelParams:
    """Transition probabilities of a two-state Markov channel.

    ``p01`` is bad -> good and ``p11`` is good -> good.  The frozen chain
    ``p01 = 0, p11 = 1`` is rejected since it has no stationary law.
    """

    p01: float
    p11: float

    def __post_init__(self):
        for name in ("p01", "p11"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "p01", float(self.p01))
        object.__setattr__(self, "p11", float(self.p11))
        if self.p01 == 0.0 and self.p11 == 1.0:
            raise ValueError("p01=0 and p11=1 freezes the channel; no stationary law")

    @property
    def p00(self) -> float:
        return 1.0 - self.p01

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def x(self) -> float:
        """Second eigenvalue ``p11 - p01`` of the transition matrix."""
        return self.p11 - self.p01

    @property
    def omega_o(self) -> float:
        return self.p01 / (self.p01 + self.p10)

    @property
    def corr(self) -> Correlation:
        if self.p11 > self.p01:
            return Correlation.POSITIVE
        if self.p11 < self.p01:
            return Correlation.NEGATIVE
        return Correlation.ZERO

    @property
    def positive(self) -> bool:
        """True when ``p11 >= p01``; the zero-correlation case goes here."""
        return self.p11 >= self.p01

    def prob_good(self, state: int) -> float:
        return self.p11 if state else self.p01

    def matrix(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])


def tau(omega: float, params: ChannelParams) -> float:
    """One-slot belief propagation of an unobserved channel."""
    return params.p01 + omega * (params.p11 - params.p01)


def update_belief(
    omega: Sequence[float], action: int, observed: int, params: ChannelParams
) -> np.ndarray:
    """Bayes update of the belief vector after sensing ``action``."""
    omega = np.asarray(omega, dtype=float)
    if not 0 <= action < omega.size:
        raise IndexError(f"action {action} out of range for {omega.size} channels")
    new = params.p01 + omega * (params.p11 - params.p01)
    new[action] = params.p11 if observed else params.p01
    return new


def j_step_prob(from_state: int, j: int, params: ChannelParams) -> float:
    """Probability of being good ``j`` slots after being in ``from_state``."""
    if j < 1:
        raise ValueError("j must be a positive integer")
    denom = params.p01 + params.p10
    if denom == 0.0:
        raise ValueError("degenerate chain: p01 = p10 = 0")
    xj = params.x ** j
    if from_state:
        return (params.p01 + params.p10 * xj) / denom
    return (params.p01 - params.p01 * xj) / denom


def step_channel(state: int, params: ChannelParams, rng: np.random.Generator) -> int:
    """Advance one channel by one slot, consuming a single uniform draw."""
    return int(rng.random() < params.prob_good(state))


def channel_stream(seed: int, replication: int, channel: int) -> np.random.Generator:
    """Random stream for one channel of one replication.

    The stream depends only on ``(seed, replication, channel)``, so a channel's
    trace does not change when more channels are added.
    """
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication, 0, channel)))
    )


def channel_path(
    initial_belief: float, params: ChannelParams, T: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``T`` slots of one channel, starting from Bernoulli(initial_belief).

    Draws the same uniforms as ``T`` sequential calls (one for the initial
    state, then :func:`step_channel` per slot), so the result equals the
    step-by-step trajectory exactly.  Returns a uint8 array.
    """
    u = rng.random(T)
    path = np.empty(T, dtype=np.uint8)
    path[0] = u[0] < initial_belief
    if T == 1:
        return path
    # Each slot is a map {0,1} -> {0,1}: constant when both branches agree,
    # identity or negation otherwise.
    from_good = u[1:] < params.p11
    from_bad = u[1:] < params.p01
    reset = from_good == from_bad
    negate = from_bad & ~from_good
    flips = np.cumsum(negate, dtype=np.int64)
    # index of the most recent reset at or before each step (-1 if none)
    idx = np.where(reset, np.arange(T - 1), -1)
    np.maximum.accumulate(idx, out=idx)
    base = np.where(idx >= 0, from_good[np.maximum(idx, 0)], path[0])
    flips_at_base = np.where(idx >= 0, flips[np.maximum(idx, 0)], 0)
    path[1:] = base ^ ((flips - flips_at_base) & 1).astype(bool)
    return path


@dataclass(frozen=True)
class Deviation:
    """Belief written as ``omega_o + coef * x**k``."""

    coef: float
    k: int

    @classmethod
    def observed(cls, state: int, params: ChannelParams, k: int = 1) -> "Deviation":
        wo = params.omega_o
        return cls(1.0 - wo if state else -wo, k)

    @classmethod
    def initial(cls, belief: float, params: ChannelParams) -> "Deviation":
        return cls(belief - params.omega_o, 0)

    def value(self, params: ChannelParams) -> float:
        if self.coef == 0.0:
            return params.omega_o
        return params.omega_o + self.coef * params.x ** self.k


def _signed_log(coef: float, k: int, x: float) -> tuple[int, float]:
    """Sign and log-magnitude of ``coef * x**k``."""
    if coef == 0.0 or (x == 0.0 and k > 0):
        return 0, -math.inf
    sign = 1 if coef > 0 else -1
    if x < 0 and k % 2:
        sign = -sign
    mag = math.log(abs(coef))
    if k:
        mag += k * math.log(abs(x))
    return sign, mag


def compare_deviations(a: Deviation, b: Deviation, x: float) -> int:
    """Three-way comparison of two beliefs sharing the same ``omega_o``."""
    sa, ma = _signed_log(a.coef, a.k, x)
    sb, mb = _signed_log(b.coef, b.k, x)
    if sa != sb:
        return 1 if sa > sb else -1
    if sa == 0 or ma == mb:
        return 0
    bigger = ma > mb
    if sa < 0:
        bigger = not bigger
    return 1 if bigger else -1
