"""Seeded Monte Carlo simulation of the sensing system.

Replication ``r`` of a run with master seed ``s`` drives channel ``c`` from
``SeedSequence(s, spawn_key=(r, 0, c))`` and the random baseline from
``SeedSequence(s, spawn_key=(r, 1))``; streams never overlap across
replications or channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .channel import ChannelParams
from .policy import POLICIES, run_policy

__all__ = [
    "PRESETS",
    "BATCH_SLOTS",
    "SimConfig",
    "SimResult",
    "TpStatistics",
    "resolve_omega1",
    "simulate",
    "tp_statistics",
    "tp_lengths",
    "batch_stderr",
]

PRESETS = ("stationary", "all-good", "all-bad")
BATCH_SLOTS = 1000
BATCH_TPS = 100


def resolve_omega1(omega1, params: ChannelParams, N: int) -> tuple[float, ...]:
    if isinstance(omega1, str):
        if omega1 == "stationary":
            return (params.omega_o,) * N
        if omega1 == "all-good":
            return (1.0,) * N
        if omega1 == "all-bad":
            return (0.0,) * N
        raise ValueError(f"unknown preset {omega1!r}; expected one of {PRESETS}")
    omega1 = tuple(float(w) for w in omega1)
    if len(omega1) != N:
        raise ValueError(f"expected {N} initial beliefs, got {len(omega1)}")
    if not all(0.0 <= w <= 1.0 for w in omega1):
        raise ValueError("initial beliefs must lie in [0, 1]")
    return omega1


@dataclass(frozen=True)
class SimConfig:
    params: ChannelParams
    N: int
    T: int
    policy: str = "structural"
    seed: int = 0
    omega1: Union[str, Sequence[float]] = "stationary"
    replications: int = 1
    fixed_channel: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimResult:
    config: SimConfig
    mean: float
    stderr: float
    totals: np.ndarray  # total reward per replication
    tp_lengths: np.ndarray  # completed TPs, first and last of each replication dropped
    tp_histogram: np.ndarray = field(init=False)  # tp_histogram[l] = number of TPs of length l

    def __post_init__(self):
        top = int(self.tp_lengths.max()) if self.tp_lengths.size else 0
        self.tp_histogram = np.bincount(self.tp_lengths, minlength=top + 1)

    def __eq__(self, other):
        if not isinstance(other, SimResult):
            return NotImplemented
        same_stderr = (self.stderr == other.stderr) or (np.isnan(self.stderr) and np.isnan(other.stderr))
        return (
            self.config == other.config
            and self.mean == other.mean
            and same_stderr
            and np.array_equal(self.totals, other.totals)
            and np.array_equal(self.tp_lengths, other.tp_lengths)
        )


def batch_stderr(batch_means: np.ndarray) -> float:
    if batch_means.size < 2:
        return float("nan")
    return float(batch_means.std(ddof=1) / np.sqrt(batch_means.size))


def tp_lengths(actions: np.ndarray) -> np.ndarray:
    """Lengths of the completed TPs, excluding the first and the censored last one."""
    starts = np.flatnonzero(actions[1:] != actions[:-1]) + 1
    return np.diff(starts).astype(np.int64)


def _check_switch_rewards(actions, rewards, params: ChannelParams):
    switch = np.flatnonzero(actions[1:] != actions[:-1])
    expected = 0 if params.positive else 1
    bad = switch[rewards[switch] != expected]
    if bad.size:
        raise RuntimeError(
            f"switch at slot {int(bad[0]) + 1} had reward {int(rewards[bad[0]])}, expected {expected}"
        )


def simulate(cfg: SimConfig) -> SimResult:
    """Run all replications and pool slot rewards and TP lengths.

    The standard error uses batch means over blocks of ``BATCH_SLOTS`` slots
    (the whole horizon when shorter), pooled across replications.
    """
    params = cfg.params
    omega1 = resolve_omega1(cfg.omega1, params, cfg.N)
    block = min(BATCH_SLOTS, cfg.T)
    nb = cfg.T // block
    totals = np.empty(cfg.replications, dtype=np.int64)
    batches = []
    lengths = []
    checked = cfg.policy in ("structural", "last_visit") or (
        cfg.policy == "argmax" and params.x != 0.0
    )
    for r in range(cfg.replications):
        trace = run_policy(cfg.policy, params, omega1, cfg.T, seed=cfg.seed,
                           replication=r, fixed_channel=cfg.fixed_channel)
        rewards = trace.rewards
        if checked:
            _check_switch_rewards(trace.actions, rewards, params)
        totals[r] = int(rewards.sum(dtype=np.int64))
        batches.append(rewards[: nb * block].reshape(nb, block).mean(axis=1))
        lengths.append(tp_lengths(trace.actions))
    mean = float(totals.sum() / (cfg.T * cfg.replications))
    stderr = batch_stderr(np.concatenate(batches))
    return SimResult(cfg, mean, stderr, totals, np.concatenate(lengths))


@dataclass(frozen=True)
class TpStatistics:
    pmf: np.ndarray  # pmf[l - 1] = empirical probability of TP length l
    mean_length: float
    stderr: float
    count: int
    throughput: float  # 1 - 1/L or 1/L by correlation sign


def tp_statistics(result: SimResult) -> TpStatistics:
    L = result.tp_lengths
    if L.size == 0:
        raise ValueError("no completed transmission periods; increase T")
    counts = result.tp_histogram[1:]
    pmf = counts / counts.sum()
    mean = float(L.mean())
    nb = L.size // BATCH_TPS
    if nb >= 2:
        stderr = batch_stderr(L[: nb * BATCH_TPS].reshape(nb, BATCH_TPS).mean(axis=1))
    else:
        stderr = float(L.std(ddof=1) / np.sqrt(L.size)) if L.size > 1 else float("nan")
    U = 1.0 - 1.0 / mean if result.config.params.positive else 1.0 / mean
    return TpStatistics(pmf, mean, stderr, int(L.size), U)
