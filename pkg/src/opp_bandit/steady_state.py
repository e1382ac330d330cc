"""Steady-state throughput of the myopic policy.

Three routes to the same number: the stationary law of the ``2^N`` ordered
channel-state chain, the transmission-period (TP) length chain, and closed
forms (exact for two channels, bounds for more).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import mpmath
import numpy as np
from scipy.sparse.csgraph import connected_components

from .channel import ChannelParams, j_step_prob

__all__ = [
    "TP_VARIANTS",
    "DEFAULT_L_MAX",
    "OrderedStateChain",
    "TpChain",
    "TpThroughput",
    "ThroughputReport",
    "RateRow",
    "stationary_distribution",
    "build_ordered_chain",
    "throughput_exact",
    "tp_chain",
    "tp_throughput",
    "tp_stationary_closed",
    "closed_form_throughput_n2",
    "bounds_throughput",
    "throughput_report",
    "rate_check",
]

TP_VARIANTS = ("exact_N2", "lower_caseA", "upper_caseB_hypo", "lower_caseB_hypo")
DEFAULT_L_MAX = 200
MAX_DENSE_N = 20
DEFAULT_MAX_N = 12


def stationary_distribution(Q: np.ndarray, method: str = "solve", tol: float = 1e-14,
                            max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary row vector of an irreducible stochastic matrix.

    ``solve`` replaces one balance equation by the normalization and solves
    directly; ``power`` iterates ``pi <- pi Q`` from the uniform law.
    """
    n = Q.shape[0]
    if method == "solve":
        A = Q.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular balance equations; chain is reducible") from exc
    elif method == "power":
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            nxt = pi @ Q
            if np.abs(nxt - pi).sum() < tol:
                pi = nxt
                break
            pi = nxt
        else:
            raise RuntimeError("power iteration did not converge")
    else:
        raise ValueError(f"unknown method {method!r}")
    return pi / pi.sum()


def _bit(idx: np.ndarray, k: int, N: int) -> np.ndarray:
    # position k in 1..N; position 1 is the most significant bit
    return (idx >> (N - k)) & 1


def _permutation(N: int, source: list[int]) -> np.ndarray:
    """Column map ``j -> j'`` with ``j'_k = j_{source[k-1]}``."""
    j = np.arange(2**N)
    out = np.zeros_like(j)
    for k in range(1, N + 1):
        out |= _bit(j, source[k - 1], N) << (N - k)
    return out


@dataclass
class OrderedStateChain:
    """Channel states listed in the myopic circular order from the current channel.

    State ``i`` packs ``[S^(1), ..., S^(N)]`` big-endian, so states whose
    first entry is 1 are exactly ``i >= 2^(N-1)``.
    """

    N: int
    params: ChannelParams
    Q: np.ndarray

    def is_irreducible(self) -> bool:
        n, _ = connected_components(self.Q > 0, directed=True, connection="strong")
        return n == 1

    def stationary(self, method: str = "solve") -> np.ndarray:
        return stationary_distribution(self.Q, method)


def build_ordered_chain(params: ChannelParams, N: int, max_n: int = DEFAULT_MAX_N) -> OrderedStateChain:
    if N < 2:
        raise ValueError("ordered chain needs N >= 2")
    if N > min(max_n, MAX_DENSE_N):
        raise ValueError(f"N={N} exceeds dense matrix cap {min(max_n, MAX_DENSE_N)}")
    P = params.matrix()
    K = P
    for _ in range(N - 1):
        K = np.kron(K, P)
    if params.positive:
        # good: order kept; bad: head moves to the back
        keep = np.arange(2**N)
        rotate = _permutation(N, [N] + list(range(1, N)))
        perm_good, perm_bad = keep, rotate
    else:
        # good: whole order reversed; bad: head stays, tail reversed
        perm_good = _permutation(N, [N - k + 1 for k in range(1, N + 1)])
        perm_bad = _permutation(N, [1] + [N - k + 2 for k in range(2, N + 1)])
    half = 2 ** (N - 1)
    Q = np.empty_like(K)
    Q[:half] = K[:half][:, perm_bad]
    Q[half:] = K[half:][:, perm_good]
    return OrderedStateChain(N, params, Q)


def throughput_exact(chain: OrderedStateChain, method: str = "solve") -> float:
    """Stationary mass of the states whose first entry is good."""
    if not chain.is_irreducible():
        raise ValueError("ordered chain is reducible; throughput depends on the start")
    pi = chain.stationary(method)
    return float(pi[2 ** (chain.N - 1):].sum())


@dataclass
class TpChain:
    """Truncated TP-length chain on lengths ``1..L_max``.

    The last state lumps every length ``>= L_max``.  Length laws are geometric
    beyond 2, so the lumped mass is exact and its mean length is
    ``L_max + rho / (1 - rho)``.
    """

    variant: str
    params: ChannelParams
    N: int
    L_max: int
    R: np.ndarray
    lengths: np.ndarray
    lumped: np.ndarray  # per-row mass folded into the last state
    lam: np.ndarray = field(default=None)

    @property
    def tail(self) -> float:
        return float(self.lumped.max())


def _switch_belief(variant: str, params: ChannelParams, N: int, i: int) -> float:
    """Good-state probability of the channel entered after a TP of length ``i``."""
    if variant == "exact_N2":
        return j_step_prob(0 if params.positive else 1, i + 1, params)
    if variant == "lower_caseA":
        return j_step_prob(0, N + i - 1, params)
    if i % 2:
        return j_step_prob(1, i + 1, params)
    if variant == "upper_caseB_hypo":
        return j_step_prob(1, i + 4, params)
    return j_step_prob(1, i + 2 * N - 3, params)


def tp_chain(params: ChannelParams, variant: str = "exact_N2", N: int = 2,
             L_max: int = DEFAULT_L_MAX) -> TpChain:
    if variant not in TP_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if L_max < 3:
        raise ValueError("L_max must be >= 3")
    if variant == "lower_caseA" and not params.positive:
        raise ValueError("lower_caseA needs p11 >= p01")
    if variant.endswith("caseB_hypo") and params.positive:
        raise ValueError(f"{variant} needs p11 < p01")
    positive = params.positive
    rho = params.p11 if positive else params.p00
    if rho >= 1.0:
        raise ValueError("TP length is infinite when the staying probability is 1")
    exit_prob = params.p10 if positive else params.p01
    geo = rho ** np.arange(L_max - 2) * exit_prob  # lengths 2..L_max-1
    R = np.empty((L_max, L_max))
    for i in range(1, L_max + 1):
        w = _switch_belief(variant, params, N, i)
        stay = w if positive else 1.0 - w  # probability the TP lasts beyond one slot
        R[i - 1, 0] = 1.0 - stay
        R[i - 1, 1:L_max - 1] = stay * geo[:L_max - 2]
    lumped = 1.0 - R[:, :L_max - 1].sum(axis=1)
    R[:, L_max - 1] = lumped
    lengths = np.arange(1, L_max + 1, dtype=float)
    lengths[-1] = L_max + rho / (1.0 - rho)
    tp = TpChain(variant, params, N, L_max, R, lengths, lumped)
    tp.lam = stationary_distribution(R)
    return tp


@dataclass(frozen=True)
class TpThroughput:
    U: float
    mean_length: float
    tail_mass: float
    truncation_warning: bool


def tp_throughput(tp: TpChain, params: ChannelParams | None = None) -> TpThroughput:
    """Throughput from the mean TP length: ``1 - 1/L`` or ``1/L`` by correlation sign."""
    params = params or tp.params
    if tp.lam is None:
        raise ValueError("stationary law not computed")
    mean = float(tp.lam @ tp.lengths)
    U = 1.0 - 1.0 / mean if params.positive else 1.0 / mean
    tail = float(tp.lam[-1])
    return TpThroughput(U, mean, tail, tail > 1e-10)


def tp_stationary_closed(params: ChannelParams, L_max: int = DEFAULT_L_MAX) -> np.ndarray:
    """Closed-form TP-length law for two channels, lumped like :func:`tp_chain`."""
    rep = closed_form_throughput_n2(params)
    lam = np.empty(L_max)
    if params.positive:
        wbar, rho, exit_prob = rep.constants["omega_bar"], params.p11, params.p10
        lam[0] = 1.0 - wbar
        stay = wbar
    else:
        wbar, rho, exit_prob = rep.constants["omega_bar_prime"], params.p00, params.p01
        lam[0] = wbar
        stay = 1.0 - wbar
    k = np.arange(2, L_max)
    lam[1:L_max - 1] = stay * rho ** (k - 2) * exit_prob
    lam[-1] = stay * rho ** (L_max - 2)
    return lam


@dataclass
class ThroughputReport:
    p01: float
    p11: float
    N: int
    U_exact: float | None = None
    U_closed: float | None = None
    U_lower: float | None = None
    U_upper: float | None = None
    constants: dict = field(default_factory=dict)

    @property
    def rel_gap(self) -> float | None:
        if self.U_lower is None or self.U_upper is None or self.U_upper == 0:
            return None
        return (self.U_upper - self.U_lower) / self.U_upper


def closed_form_throughput_n2(params: ChannelParams) -> ThroughputReport:
    p01, p11, p00, p10 = params.p01, params.p11, params.p00, params.p10
    if p01 + p10 == 0:
        raise ValueError("degenerate chain")
    rep = ThroughputReport(p01, p11, 2)
    if params.positive:
        p01_2 = p00 * p01 + p01 * p11
        A = p01 / (1 + p01 - p11) * (1 - (p11 - p01) ** 3 * (1 - p11) / (1 - p11**2 + p11 * p01))
        omega_bar = p01_2 / (1 + p01_2 - A)
        rep.U_closed = 1 - (1 - p11) / (1 + omega_bar - p11)
        rep.constants.update(p01_2=p01_2, A=A, omega_bar=omega_bar)
    else:
        p11_2 = p10 * p01 + p11 * p11
        B = p01 / (1 + p01 - p11) * (1 + (p11 - p01) ** 3 * (1 - p11) / (1 - (1 - p01) * (p11 - p01)))
        omega_bar_prime = B / (1 - p11_2 + B)
        rep.U_closed = p01 / (1 - omega_bar_prime + p01)
        rep.constants.update(p11_2=p11_2, B=B, omega_bar_prime=omega_bar_prime)
    return rep


def _bound_constants(params: ChannelParams, N: int, limit: bool = False) -> dict:
    p01, p11, p00, p10 = params.p01, params.p11, params.p00, params.p10
    wo = params.omega_o
    if params.positive:
        xN = 0.0 if limit else (p11 - p01) ** N
        xN1 = 0.0 if limit else (p11 - p01) ** (N + 1)
        C = wo * (1 - xN)
        D = wo * (1 - xN1 * (1 - p11) / (1 - p11**2 + p11 * p01))
        return dict(omega_o=wo, C=C, D=D)
    p10_2 = p10 * p00 + p11 * p10
    den = 1 - (p11 - p01) ** 2 * (1 - p01) ** 2
    F = (1 - p01) * (1 - wo) * (1 / (2 - p01) - p01 * (p11 - p01) ** 4 / den)
    E = p10_2 * (1 + p01) + p01 * (1 - F)
    G = (1 - wo) * (1 / (2 - p01) - p01 * (p11 - p01) ** 6 / den)
    x2N1 = 0.0 if limit else (p11 - p01) ** (2 * N - 1)
    H = (1 - wo) * (1 / (2 - p01) - p01 * x2N1 / den)
    return dict(omega_o=wo, p10_2=p10_2, E=E, F=F, G=G, H=H)


def _bounds_from(params: ChannelParams, k: dict) -> tuple[float, float]:
    if params.positive:
        C, D, wo, p11 = k["C"], k["D"], k["omega_o"], params.p11
        return C / (C + (1 - D + C) * (1 - p11)), wo / (1 - p11 + wo)
    p10_2, E, G, H, p01 = k["p10_2"], k["E"], k["G"], k["H"], params.p01
    return 1 - p10_2 / (E - p01 * H), 1 - p10_2 / (E - p01 * G)


def bounds_throughput(params: ChannelParams, N: int) -> tuple[float, float]:
    """Lower and upper throughput bounds for ``N`` channels (also evaluable at 2)."""
    if N < 2:
        raise ValueError("bounds need N >= 2")
    return _bounds_from(params, _bound_constants(params, N))


def throughput_report(params: ChannelParams, N: int, exact: bool = True,
                      max_n: int = DEFAULT_MAX_N) -> ThroughputReport:
    rep = closed_form_throughput_n2(params) if N == 2 else ThroughputReport(params.p01, params.p11, N)
    rep.N = N
    k = _bound_constants(params, N)
    rep.constants.update(k)
    rep.U_lower, rep.U_upper = _bounds_from(params, k)
    if exact and N <= max_n:
        rep.U_exact = throughput_exact(build_ordered_chain(params, N, max_n))
    return rep


@dataclass(frozen=True)
class RateRow:
    N: int
    lower: float
    upper: float
    limit: float
    gap_upper: float
    gap_limit: float
    ratio: float


class _HighPrecision:
    """Stand-in for ChannelParams carrying mpmath values."""

    def __init__(self, params: ChannelParams):
        self.p01 = mpmath.mpf(params.p01)
        self.p11 = mpmath.mpf(params.p11)
        self.p00 = 1 - self.p01
        self.p10 = 1 - self.p11
        self.omega_o = self.p01 / (self.p01 + self.p10)
        self.positive = params.positive


def rate_check(params: ChannelParams, N_range: Iterable[int], dps: int = 60) -> list[RateRow]:
    """Scaled distance of the lower bound from its limit, per ``N``.

    ``ratio`` is ``gap / x^N`` when ``p11 > p01`` and ``gap / x^(2N)`` when
    ``p11 < p01``, with ``x = |p11 - p01|`` and ``gap`` measured to the limit of
    the lower bound (for ``p11 > p01`` that limit is the upper bound).  The
    bounds are evaluated in ``dps``-digit arithmetic since the gaps fall below
    double precision long before ``N`` gets large.
    """
    rows = []
    with mpmath.workdps(dps):
        hp = _HighPrecision(params)
        x = abs(hp.p11 - hp.p01)
        limit, _ = _bounds_from(hp, _bound_constants(hp, 2, limit=True))
        for N in N_range:
            if N < 2:
                raise ValueError("bounds need N >= 2")
            lower, upper = _bounds_from(hp, _bound_constants(hp, N))
            if x == 0:
                rows.append(RateRow(N, float(lower), float(upper), float(limit), 0.0, 0.0, 0.0))
                continue
            gap_limit = abs(limit - lower)
            scale = x**N if params.positive else x ** (2 * N)
            rows.append(RateRow(N, float(lower), float(upper), float(limit), float(upper - lower),
                                float(gap_limit), float(gap_limit / scale)))
    return rows
