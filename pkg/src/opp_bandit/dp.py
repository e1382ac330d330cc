"""Exact finite-horizon dynamic programming over reachable beliefs.

A belief reachable from ``omega1`` is encoded per channel as a descriptor
``(tag, payload, k)``:

* ``(INITIAL, w, k)``: never sensed, initial belief ``w``, ``k`` slots elapsed;
  decodes to ``tau^k(w)``.
* ``(OBSERVED, s, k)``: last sensed ``k >= 1`` slots ago in state ``s``;
  decodes to the ``k``-step probability of being good from ``s``.

Channels are identical, so a belief vector is canonicalized by sorting its
descriptors.  Values are memoized on ``(slots remaining, canonical vector)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelParams, Deviation, compare_deviations, j_step_prob

__all__ = [
    "INITIAL",
    "OBSERVED",
    "DEFAULT_CAP",
    "VALUE_TOL",
    "DPSizeError",
    "BeliefDP",
    "OptimalResult",
    "DeviationReport",
    "Counterexample",
    "decode",
    "advance",
    "encode_initial",
    "estimate_size",
    "optimal_value",
    "myopic_value",
    "one_step_deviation_check",
    "counterexample_search",
]

INITIAL = 0
OBSERVED = 1
DEFAULT_CAP = 10**7
VALUE_TOL = 1e-9

Descriptor = tuple  # (tag, payload, k)


class DPSizeError(RuntimeError):
    """The reachable belief set would exceed the memo cap."""


def encode_initial(omega1: Sequence[float], params: ChannelParams) -> tuple[Descriptor, ...]:
    out = []
    for w in omega1:
        w = float(w)
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"belief {w} outside [0, 1]")
        out.append((INITIAL, w, 0))
    return tuple(out)


def decode(d: Descriptor, params: ChannelParams) -> float:
    tag, payload, k = d
    if tag == OBSERVED:
        return j_step_prob(payload, k, params)
    return Deviation(payload - params.omega_o, k).value(params)


def _deviation(d: Descriptor, params: ChannelParams) -> Deviation:
    tag, payload, k = d
    if tag == OBSERVED:
        return Deviation.observed(payload, params, k)
    return Deviation(payload - params.omega_o, k)


def advance(
    desc: Sequence[Descriptor], action: int, observed: int, params: ChannelParams
) -> tuple[Descriptor, ...]:
    """Descriptor form of the Bayes update (not canonicalized)."""
    wo = params.omega_o
    out = []
    for i, (tag, payload, k) in enumerate(desc):
        if i == action:
            out.append((OBSERVED, int(observed), 1))
        elif tag == INITIAL and payload == wo:
            out.append((tag, payload, 0))  # tau fixes omega_o
        else:
            out.append((tag, payload, k + 1))
    return tuple(out)


def estimate_size(N: int, T: int) -> int:
    """Upper bound on memo entries: at slot t each channel has at most 2(t-1)+1 tags."""
    return sum((2 * (t - 1) + 1) ** N for t in range(1, T + 1))


@dataclass(frozen=True)
class OptimalResult:
    value: float
    action: int


@dataclass
class DeviationReport:
    holds: bool
    worst_violation: float
    witness: tuple | None = None  # (slot, beliefs, action)
    checked: int = 0


@dataclass(frozen=True)
class Counterexample:
    p01: float
    p11: float
    T: int
    omega1: tuple[float, ...]
    v_optimal: float
    v_myopic: float
    gap: float

    @property
    def rel_gap(self) -> float:
        return self.gap / self.v_optimal if self.v_optimal else 0.0


class BeliefDP:
    """Memoized optimal and myopic value functions for one parameter pair.

    The memo is shared across horizons, so evaluating ``T = 1..10`` on the same
    instance costs little more than ``T = 10`` alone.
    """

    def __init__(self, params: ChannelParams, N: int, cap: int = DEFAULT_CAP):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.params = params
        self.N = N
        self.cap = cap
        self._memo = ({}, {})  # optimal, myopic
        self._belief: dict = {}
        self._dev: dict = {}

    def _check(self, T: int):
        est = estimate_size(self.N, T)
        if est > self.cap:
            raise DPSizeError(f"N={self.N}, T={T}: estimated {est} memo entries > cap {self.cap}")

    def belief(self, d: Descriptor) -> float:
        v = self._belief.get(d)
        if v is None:
            v = self._belief[d] = decode(d, self.params)
        return v

    def myopic_action(self, desc: Sequence[Descriptor]) -> int:
        x = self.params.x
        devs = self._dev
        best = 0
        best_dev = devs.get(desc[0]) or devs.setdefault(desc[0], _deviation(desc[0], self.params))
        for i in range(1, len(desc)):
            d = devs.get(desc[i]) or devs.setdefault(desc[i], _deviation(desc[i], self.params))
            if compare_deviations(d, best_dev, x) > 0:
                best, best_dev = i, d
        return best

    def _successor(self, desc, action, observed):
        return tuple(sorted(advance(desc, action, observed, self.params)))

    def q_value(self, h: int, desc: Sequence[Descriptor], action: int, myopic: bool = True) -> float:
        """Expected reward of ``action`` now, then the chosen policy for ``h - 1`` slots."""
        w = self.belief(desc[action])
        if h == 1:
            return w
        good = self.value(h - 1, self._successor(desc, action, 1), myopic)
        bad = self.value(h - 1, self._successor(desc, action, 0), myopic)
        return w + w * good + (1.0 - w) * bad

    def value(self, h: int, desc: Sequence[Descriptor], myopic: bool = False) -> float:
        """Value with ``h`` slots remaining; ``desc`` must be canonical (sorted)."""
        memo = self._memo[myopic]
        key = (h, desc)
        v = memo.get(key)
        if v is not None:
            return v
        if h == 1:
            v = max(self.belief(d) for d in desc)
        elif myopic:
            v = self.q_value(h, desc, self.myopic_action(desc), True)
        else:
            v = -math.inf
            seen = set()
            for a, d in enumerate(desc):
                if d in seen:
                    continue
                seen.add(d)
                v = max(v, self.q_value(h, desc, a, False))
        if len(memo) >= self.cap:
            raise DPSizeError(f"memo exceeded cap {self.cap}")
        memo[key] = v
        return v

    def solve(self, T: int, omega1: Sequence[float], myopic: bool = False) -> OptimalResult:
        if T < 1:
            raise ValueError("T must be >= 1")
        if len(omega1) != self.N:
            raise ValueError(f"expected {self.N} beliefs, got {len(omega1)}")
        self._check(T)
        root = encode_initial(omega1, self.params)
        if myopic:
            a = self.myopic_action(root)
            return OptimalResult(self._root_q(T, root, a, True), a)
        best, best_a = -math.inf, 0
        for a in range(self.N):
            q = self._root_q(T, root, a, False)
            if q > best + VALUE_TOL:
                best, best_a = q, a
        return OptimalResult(best, best_a)

    def _root_q(self, T, root, a, myopic):
        # the root itself is left unsorted so the action keeps its channel index
        return self.q_value(T, root, a, myopic)

    def reachable(self, T: int, omega1: Sequence[float]) -> list[set]:
        """Canonical belief vectors reachable at slots ``1..T`` under any actions."""
        self._check(T)
        level = {tuple(sorted(encode_initial(omega1, self.params)))}
        levels = [level]
        for _ in range(T - 1):
            nxt = set()
            for desc in level:
                for a in range(self.N):
                    for s in (0, 1):
                        nxt.add(self._successor(desc, a, s))
            levels.append(nxt)
            level = nxt
        return levels


def optimal_value(
    params: ChannelParams, N: int, T: int, omega1: Sequence[float], cap: int = DEFAULT_CAP
) -> OptimalResult:
    return BeliefDP(params, N, cap).solve(T, omega1)


def myopic_value(
    params: ChannelParams, N: int, T: int, omega1: Sequence[float], cap: int = DEFAULT_CAP
) -> float:
    return BeliefDP(params, N, cap).solve(T, omega1, myopic=True).value


def one_step_deviation_check(
    params: ChannelParams,
    N: int,
    T: int,
    omega1: Sequence[float],
    cap: int = DEFAULT_CAP,
    n_samples: int = 0,
    seed: int = 0,
    dp: BeliefDP | None = None,
) -> DeviationReport:
    """Check that no single-slot deviation from the myopic policy helps.

    Covers every belief vector reachable from ``omega1`` under any action
    sequence, plus ``n_samples`` random beliefs drawn from the post-update
    belief range ``[min(p01, p11), max(p01, p11)]^N`` at every horizon.
    """
    dp = dp or BeliefDP(params, N, cap)
    report = DeviationReport(True, -math.inf)

    def visit(slot, h, desc):
        base = dp.value(h, desc, myopic=True)
        for a in range(N):
            gap = dp.q_value(h, desc, a, myopic=True) - base
            report.checked += 1
            if gap > report.worst_violation:
                report.worst_violation = gap
                report.witness = (slot, tuple(dp.belief(d) for d in desc), a)

    for t, level in enumerate(dp.reachable(T, omega1), 1):
        for desc in sorted(level):
            visit(t, T - t + 1, desc)

    if n_samples:
        rng = np.random.default_rng(seed)
        lo, hi = sorted((params.p01, params.p11))
        for _ in range(n_samples):
            omega = rng.uniform(lo, hi, size=N)
            desc = tuple(sorted(encode_initial(omega, params)))
            for h in range(1, T + 1):
                visit(T - h + 1, h, desc)

    report.holds = report.worst_violation <= VALUE_TOL
    return report


def counterexample_search(
    grid: Iterable[tuple[float, float]],
    N: int,
    T_max: int,
    T_min: int = 1,
    omega1: Sequence[float] | None = None,
    cap: int = DEFAULT_CAP,
) -> list[Counterexample]:
    """Grid points where the myopic value falls short of the optimum.

    ``omega1`` defaults to every channel at the stationary probability.
    """
    found = []
    for p01, p11 in grid:
        params = ChannelParams(p01, p11)
        start = tuple(omega1) if omega1 is not None else (params.omega_o,) * N
        dp = BeliefDP(params, N, cap)
        for T in range(T_min, T_max + 1):
            v_opt = dp.solve(T, start).value
            v_my = dp.solve(T, start, myopic=True).value
            if v_my < v_opt - VALUE_TOL:
                found.append(Counterexample(params.p01, params.p11, T, start, v_opt, v_my, v_opt - v_my))
    return found
