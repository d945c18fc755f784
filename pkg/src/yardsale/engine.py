"""Yard-Sale exchange dynamics on a network.

One timestep ("sweep") lets every agent initiate one exchange, in a fresh
uniform random permutation, with a uniformly chosen neighbor; on average
each agent takes part in two exchanges per sweep. The stake is
``f * min(w_i, w_j)`` and the poorer agent wins with probability ``p``.

The hot loop is a numba kernel operating on the CSR adjacency of a
:class:`~yardsale.networks.Network`. Numba's ``np.random.Generator``
support is bit-compatible with NumPy, so a pure-Python replay consuming
the same draws reproduces a kernel trajectory exactly; the tests use this
to cross-check the kernel. RNG consumption order per sweep:

1. Fisher-Yates shuffle of the initiator order, starting from the
   identity permutation: ``int(random() * (i+1))`` for i = n-1 .. 1.
2. Per initiator: ``int(random() * degree)`` neighbor pick, one
   ``random()`` coin only on an exact wealth tie, then one ``random()``
   for the bet outcome.

Bounded ints come from ``floor(random() * k)`` rather than
``integers``: the bias is at most k * 2^-53 and the draw is an order of
magnitude faster in the compiled kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from numba import njit

from .networks import Network
from . import theory

__all__ = [
    "ExchangeParams",
    "WealthState",
    "Observer",
    "RunRecord",
    "StopResult",
    "exchange_pair",
    "designate_poorer",
    "sweep",
    "run_sweeps",
    "run_history",
    "run_until_condensed",
    "run_until_frozen",
    "history_rng",
]


@dataclass(frozen=True)
class ExchangeParams:
    """Win probability of the poorer agent and bet fraction."""

    p: float
    f: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0.0 < self.f <= 1.0:
            raise ValueError(f"f must be in (0, 1], got {self.f}")

    @property
    def theta(self) -> float:
        """Instability rate; requires f < 1."""
        return theory.theta(self.p, self.f)

    @property
    def p_star(self) -> float:
        """Critical probability at this f; requires f < 1."""
        return theory.p_star(self.f)


@dataclass
class WealthState:
    """Wealth vector plus sweep counter. Total wealth is conserved."""

    wealth: np.ndarray
    t: int = 0

    @classmethod
    def even(cls, n: int, w_per_agent: float = 1.0) -> "WealthState":
        return cls(wealth=np.full(n, w_per_agent, dtype=np.float64), t=0)

    @property
    def n(self) -> int:
        return self.wealth.size

    @property
    def total(self) -> float:
        return float(self.wealth.sum())

    def copy(self) -> "WealthState":
        return WealthState(wealth=self.wealth.copy(), t=self.t)


def exchange_pair(w_a: float, w_b: float, f: float,
                  poorer_wins: bool) -> tuple[float, float]:
    """Apply one bet to a pair, returning updated wealths in input order.

    The poorer wealth is multiplied by (1+f) on a win, (1-f) on a loss;
    the richer side moves by the stake f*min(w_a, w_b). Equal wealths
    treat ``a`` as the poorer side (callers that need a fair tie-break
    use :func:`designate_poorer` first).
    """
    if w_a < 0 or w_b < 0:
        raise ValueError("wealths must be nonnegative")
    if not 0.0 < f <= 1.0:
        raise ValueError(f"f must be in (0, 1], got {f}")
    if w_a <= w_b:
        stake = f * w_a
        if poorer_wins:
            return w_a * (1.0 + f), w_b - stake
        return w_a * (1.0 - f), w_b + stake
    stake = f * w_b
    if poorer_wins:
        return w_a - stake, w_b * (1.0 + f)
    return w_a + stake, w_b * (1.0 - f)


def designate_poorer(w_a: float, w_b: float, rng: np.random.Generator) -> int:
    """Index (0 or 1) of the agent playing the poorer role; fair coin on ties."""
    if w_a < w_b:
        return 0
    if w_b < w_a:
        return 1
    return 0 if rng.random() < 0.5 else 1


@njit(cache=True)
def _run_sweeps(wealth, offsets, neighbors, p, f, n_sweeps, rng):
    n = wealth.shape[0]
    perm = np.empty(n, dtype=np.int64)
    for _ in range(n_sweeps):
        for i in range(n):
            perm[i] = i
        for i in range(n - 1, 0, -1):
            j = int(rng.random() * (i + 1))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        for k in range(n):
            a = perm[k]
            deg = offsets[a + 1] - offsets[a]
            b = neighbors[offsets[a] + int(rng.random() * deg)]
            wa = wealth[a]
            wb = wealth[b]
            if wa < wb:
                poor, rich = a, b
            elif wb < wa:
                poor, rich = b, a
            elif rng.random() < 0.5:
                poor, rich = a, b
            else:
                poor, rich = b, a
            wp = wealth[poor]
            stake = f * wp
            if rng.random() < p:
                wealth[poor] = wp * (1.0 + f)
                wealth[rich] = wealth[rich] - stake
            else:
                wealth[poor] = wp * (1.0 - f)
                wealth[rich] = wealth[rich] + stake


@njit(cache=True)
def _top_two(wealth):
    first = -1.0
    second = -1.0
    for w in wealth:
        if w > first:
            second = first
            first = w
        elif w > second:
            second = w
    return first, second


@njit(cache=True)
def _frozen_status(wealth, offsets, neighbors, ratio_threshold):
    """1 if every locally rich agent out-owns its richest neighbor by the
    required factor, 0 if not, -1 if there is no locally rich agent."""
    n = wealth.shape[0]
    n_lra = 0
    for i in range(n):
        wi = wealth[i]
        richest_nbr = -1.0
        for k in range(offsets[i], offsets[i + 1]):
            wn = wealth[neighbors[k]]
            if wn > richest_nbr:
                richest_nbr = wn
        if wi > richest_nbr:
            n_lra += 1
            if richest_nbr > ratio_threshold * wi:
                return 0
    if n_lra == 0:
        return -1
    return 1


@njit(cache=True)
def _run_until_ratio(wealth, offsets, neighbors, p, f, threshold,
                     max_sweeps, check_every, rng):
    t = 0
    first, second = _top_two(wealth)
    if first > 0.0 and second <= threshold * first:
        return 0
    while t < max_sweeps:
        step = min(check_every, max_sweeps - t)
        _run_sweeps(wealth, offsets, neighbors, p, f, step, rng)
        t += step
        first, second = _top_two(wealth)
        if first > 0.0 and second <= threshold * first:
            return t
    return -1


@njit(cache=True)
def _run_until_frozen(wealth, offsets, neighbors, p, f, ratio_threshold,
                      max_sweeps, check_every, rng):
    t = 0
    if _frozen_status(wealth, offsets, neighbors, ratio_threshold) == 1:
        return 0
    while t < max_sweeps:
        step = min(check_every, max_sweeps - t)
        _run_sweeps(wealth, offsets, neighbors, p, f, step, rng)
        t += step
        if _frozen_status(wealth, offsets, neighbors, ratio_threshold) == 1:
            return t
    return -1


def sweep(state: WealthState, net: Network, params: ExchangeParams,
          rng: np.random.Generator) -> WealthState:
    """One timestep; returns a new state with t incremented."""
    if state.n != net.n:
        raise ValueError(f"state has {state.n} agents, network has {net.n}")
    out = state.copy()
    _run_sweeps(out.wealth, net.offsets, net.neighbors,
                params.p, params.f, 1, rng)
    out.t += 1
    return out


def run_sweeps(state: WealthState, net: Network, params: ExchangeParams,
               n_sweeps: int, rng: np.random.Generator) -> None:
    """Advance ``state`` in place by ``n_sweeps`` timesteps."""
    if state.n != net.n:
        raise ValueError(f"state has {state.n} agents, network has {net.n}")
    if n_sweeps < 0:
        raise ValueError("n_sweeps must be >= 0")
    if n_sweeps:
        _run_sweeps(state.wealth, net.offsets, net.neighbors,
                    params.p, params.f, n_sweeps, rng)
        state.t += n_sweeps


def history_rng(seed: int, history: int = 0) -> np.random.Generator:
    """Independent sub-stream for history k of an experiment seeded by ``seed``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(history,)))


@dataclass
class Observer:
    """Named sampling callback invoked every ``cadence`` sweeps (and at t=0)."""

    name: str
    fn: Callable[[WealthState], Any]
    cadence: int = 1


@dataclass
class RunRecord:
    """Sampled observable series for one history, plus the final state."""

    times: dict[str, list[int]] = field(default_factory=dict)
    values: dict[str, list[Any]] = field(default_factory=dict)
    final: WealthState | None = None


def run_history(net: Network, params: ExchangeParams, n_sweeps: int,
                seed: int, observers: Sequence[Observer] = (),
                history: int = 0) -> RunRecord:
    """Run one history from even initial wealth (w_i = 1, W_T = N).

    Fully deterministic given (seed, history); observers are sampled at
    t = 0 and then every ``cadence`` sweeps.
    """
    if n_sweeps < 0:
        raise ValueError("n_sweeps must be >= 0")
    rng = history_rng(seed, history)
    state = WealthState.even(net.n)
    record = RunRecord()
    for obs in observers:
        record.times[obs.name] = []
        record.values[obs.name] = []

    def sample(t: int) -> None:
        for obs in observers:
            if t % obs.cadence == 0:
                record.times[obs.name].append(t)
                record.values[obs.name].append(obs.fn(state))

    sample(0)
    t = 0
    while t < n_sweeps:
        if observers:
            # advance to the next time any observer is due
            step = min(obs.cadence - t % obs.cadence for obs in observers)
        else:
            step = n_sweeps - t
        step = min(step, n_sweeps - t)
        run_sweeps(state, net, params, step, rng)
        t += step
        sample(t)
    record.final = state
    return record


@dataclass
class StopResult:
    """Outcome of a run-to-stop-rule history."""

    t_stop: int
    state: WealthState
    capped: bool


def run_until_condensed(net: Network, params: ExchangeParams, seed: int,
                        ratio_threshold: float = 1e-4,
                        max_sweeps: int = 10_000_000,
                        check_every: int = 1,
                        history: int = 0) -> StopResult:
    """Run until the second/first wealth ratio drops to ``ratio_threshold``.

    This is the full-mixture condensation criterion; on the cap the result
    is flagged rather than raising.
    """
    rng = history_rng(seed, history)
    state = WealthState.even(net.n)
    t = _run_until_ratio(state.wealth, net.offsets, net.neighbors,
                         params.p, params.f, ratio_threshold,
                         max_sweeps, check_every, rng)
    capped = t < 0
    state.t = max_sweeps if capped else int(t)
    return StopResult(t_stop=state.t, state=state, capped=capped)


def run_until_frozen(net: Network, params: ExchangeParams, seed: int,
                     ratio_threshold: float = 1e-4,
                     max_sweeps: int = 10_000_000,
                     check_every: int = 1,
                     history: int = 0) -> StopResult:
    """Run until every locally rich agent out-owns its richest neighbor by
    at least 1/ratio_threshold (the network freezing criterion)."""
    rng = history_rng(seed, history)
    state = WealthState.even(net.n)
    t = _run_until_frozen(state.wealth, net.offsets, net.neighbors,
                          params.p, params.f, ratio_threshold,
                          max_sweeps, check_every, rng)
    capped = t < 0
    state.t = max_sweeps if capped else int(t)
    return StopResult(t_stop=state.t, state=state, capped=capped)
