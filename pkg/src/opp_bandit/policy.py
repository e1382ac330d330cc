"""Sensing policies for single-channel sensing over identical channels.

Slots are numbered from 1 in the structural rule (its order reverses on even
slots when ``p11 < p01``); channels are numbered from 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channel import (
    ChannelParams,
    Deviation,
    channel_path,
    channel_stream,
    compare_deviations,
)

__all__ = [
    "POLICIES",
    "CircularOrder",
    "StructuralPolicyState",
    "PolicyTrace",
    "BeliefTracker",
    "initial_order",
    "initial_state",
    "structural_next",
    "argmax_myopic",
    "last_visit_policy",
    "run_policy",
]

POLICIES = ("structural", "argmax", "last_visit", "random", "fixed")


@dataclass(frozen=True)
class CircularOrder:
    """Channels placed on a circle; equality ignores the starting point."""

    channels: tuple[int, ...]
    head: int = field(default=None, compare=False)

    def __post_init__(self):
        ch = tuple(int(c) for c in self.channels)
        if sorted(ch) != list(range(len(ch))):
            raise ValueError(f"not a permutation of 0..{len(ch) - 1}: {ch}")
        object.__setattr__(self, "channels", ch)
        if self.head is None:
            object.__setattr__(self, "head", ch[0])
        elif self.head not in ch:
            raise ValueError(f"head {self.head} not in order")

    def __len__(self):
        return len(self.channels)

    def _canonical(self) -> tuple[int, ...]:
        i = self.channels.index(0)
        return self.channels[i:] + self.channels[:i]

    def __eq__(self, other):
        if not isinstance(other, CircularOrder):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __hash__(self):
        return hash(self._canonical())

    def successor(self, channel: int) -> int:
        i = self.channels.index(channel)
        return self.channels[(i + 1) % len(self.channels)]

    def reversed(self) -> "CircularOrder":
        return CircularOrder(self.channels[::-1], self.head)

    def successor_table(self, reverse: bool = False) -> list[int]:
        """``table[c]`` is the channel after ``c`` (in the reversed order if asked)."""
        ch = self.channels[::-1] if reverse else self.channels
        table = [0] * len(ch)
        for i, c in enumerate(ch):
            table[c] = ch[(i + 1) % len(ch)]
        return table


@dataclass(frozen=True)
class StructuralPolicyState:
    order: CircularOrder  # the slot-1 order K(1)
    slot: int
    current: int

    def __post_init__(self):
        if self.current not in self.order.channels:
            raise ValueError("current channel is not in the order")

    def order_at(self, slot: int, params: ChannelParams) -> CircularOrder:
        if params.positive or slot % 2:
            return self.order
        return self.order.reversed()


@dataclass
class PolicyTrace:
    """Actions and observations of one run; ``states`` is filled only for oracle tests."""

    n_channels: int
    actions: np.ndarray
    observations: np.ndarray
    states: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)

    @property
    def rewards(self) -> np.ndarray:
        return self.observations

    def records(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(slot, action, observation, reward)`` with slots from 1."""
        for t, (a, s) in enumerate(zip(self.actions.tolist(), self.observations.tolist()), 1):
            yield t, a, s, s

    def head(self, t: int) -> "PolicyTrace":
        """The first ``t`` slots of the trace."""
        return PolicyTrace(self.n_channels, self.actions[:t], self.observations[:t])


def _descending(omega: Sequence[float]) -> list[int]:
    # stable sort keeps the lowest index first among equal beliefs
    return sorted(range(len(omega)), key=lambda i: -omega[i])


def initial_order(omega1: Sequence[float]) -> CircularOrder:
    if len(omega1) < 1:
        raise ValueError("need at least one channel")
    order = _descending(list(omega1))
    return CircularOrder(tuple(order), order[0])


def initial_state(omega1: Sequence[float]) -> StructuralPolicyState:
    order = initial_order(omega1)
    return StructuralPolicyState(order, 1, order.head)


def structural_next(
    state: StructuralPolicyState, observed: int, params: ChannelParams
) -> StructuralPolicyState:
    """Round-robin myopic rule: stay or move to the next channel of K(t+1)."""
    nxt = state.slot + 1
    switch = (not observed) if params.positive else bool(observed)
    if not switch:
        return StructuralPolicyState(state.order, nxt, state.current)
    target = state.order_at(nxt, params).successor(state.current)
    return StructuralPolicyState(state.order, nxt, target)


def argmax_myopic(omega: Sequence[float]) -> int:
    """Channel with the largest belief, lowest index on ties."""
    return int(np.argmax(np.asarray(omega, dtype=float)))


class BeliefTracker:
    """Belief vector kept in deviation form for exact argmax.

    Floating-point beliefs of long-unobserved channels all round to
    ``omega_o``; comparing ``coef * x**k`` in log space keeps their true order.
    """

    def __init__(self, omega1: Sequence[float], params: ChannelParams):
        self.params = params
        self.devs = [Deviation.initial(float(w), params) for w in omega1]
        self._obs = (Deviation.observed(0, params), Deviation.observed(1, params))

    def values(self) -> np.ndarray:
        return np.array([d.value(self.params) for d in self.devs])

    def argmax(self) -> int:
        x = self.params.x
        best = 0
        for i in range(1, len(self.devs)):
            if compare_deviations(self.devs[i], self.devs[best], x) > 0:
                best = i
        return best

    def update(self, action: int, observed: int) -> None:
        self.devs = [
            self._obs[observed] if i == action else Deviation(d.coef, d.k + 1)
            for i, d in enumerate(self.devs)
        ]


def last_visit_policy(history: PolicyTrace, params: ChannelParams) -> int:
    """Switch target for the slot after ``history`` from last-visit times alone.

    Lags count slots from the last visit to the slot being decided.
    """
    n = history.n_channels
    t = len(history)
    last = [-1] * n
    for i, a in enumerate(history.actions.tolist()):
        last[a] = i
    if min(last) < 0:
        missing = [c for c in range(n) if last[c] < 0]
        raise ValueError(f"channels never visited: {missing}")
    current = int(history.actions[-1])
    lags = {c: t - last[c] for c in range(n) if c != current}
    if not lags:
        return current
    oldest = max(lags, key=lags.get)
    if params.positive:
        return oldest
    even = [c for c, lag in lags.items() if lag % 2 == 0]
    if even:
        return min(even, key=lags.get)
    return oldest


def _policy_stream(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication, 1)))
    )


def run_policy(
    policy: str,
    params: ChannelParams,
    omega1: Sequence[float],
    T: int,
    seed: int = 0,
    replication: int = 0,
    fixed_channel: int = 0,
    record_states: bool = False,
) -> PolicyTrace:
    """Run one policy for ``T`` slots.

    Channel ``i`` starts good with probability ``omega1[i]`` and is driven by
    its own stream from :func:`channel_stream`, so traces are reproducible
    from ``(seed, replication)``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    n = len(omega1)
    paths = [
        channel_path(float(omega1[c]), params, T, channel_stream(seed, replication, c))
        for c in range(n)
    ]
    rows = [p.tobytes() for p in paths]
    actions = np.empty(T, dtype=np.int16)
    obs = bytearray(T)

    if policy == "structural":
        _run_structural(params, omega1, rows, actions, obs)
    elif policy == "last_visit":
        _run_last_visit(params, omega1, rows, actions, obs)
    elif policy == "argmax":
        tracker = BeliefTracker(omega1, params)
        for t in range(T):
            a = tracker.argmax()
            s = rows[a][t]
            actions[t] = a
            obs[t] = s
            tracker.update(a, s)
    elif policy == "random":
        picks = _policy_stream(seed, replication).integers(n, size=T)
        actions[:] = picks
        for t, a in enumerate(picks.tolist()):
            obs[t] = rows[a][t]
    else:
        if not 0 <= fixed_channel < n:
            raise IndexError(f"fixed channel {fixed_channel} out of range")
        actions[:] = fixed_channel
        obs[:] = rows[fixed_channel]

    states = np.vstack(paths) if record_states else None
    return PolicyTrace(n, actions, np.frombuffer(bytes(obs), dtype=np.uint8), states)


def _run_structural(params, omega1, rows, actions, obs):
    order = initial_order(omega1)
    fwd = order.successor_table()
    rev = order.successor_table(reverse=True)
    positive = params.positive
    cur = order.head
    for t in range(len(actions)):
        s = rows[cur][t]
        actions[t] = cur
        obs[t] = s
        if positive:
            if not s:
                cur = fwd[cur]
        elif s:
            # slot t+2 (1-based) uses K(1) when odd, -K(1) when even
            cur = fwd[cur] if t % 2 else rev[cur]


def _run_last_visit(params, omega1, rows, actions, obs):
    # Defers to the structural rule until every channel has been visited.
    n = len(rows)
    state = initial_state(omega1)
    last = [-1] * n
    unvisited = n
    positive = params.positive
    cur = state.current
    for t in range(len(actions)):
        s = rows[cur][t]
        actions[t] = cur
        obs[t] = s
        if last[cur] < 0:
            unvisited -= 1
        last[cur] = t
        if unvisited:
            state = structural_next(state, s, params)
            cur = state.current
            continue
        switch = (not s) if positive else s
        if not switch or n == 1:
            continue
        lags = [(t + 1 - last[c], c) for c in range(n) if c != cur]
        if positive:
            cur = max(lags)[1]
        else:
            even = [lc for lc in lags if lc[0] % 2 == 0]
            cur = min(even)[1] if even else max(lags)[1]
