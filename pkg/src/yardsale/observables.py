"""Measurements on simulation state.

Correlation functions of excess wealth, condensation indicators (the
second/first wealth ratio and the participation moment W2), ranked
wealths, the locally-rich-agent census, and freezing detection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import WealthState, ExchangeParams, _run_sweeps
from .networks import Network

__all__ = [
    "DegenerateInputError",
    "InsufficientDataError",
    "NotApplicableError",
    "CorrelationEstimate",
    "LraReport",
    "Histogram",
    "correlation",
    "measure_correlation",
    "condensation_ratio",
    "w2",
    "ranked_wealths",
    "find_lras",
    "is_frozen",
    "wealth_histogram",
]

FREEZE_RATIO = 1e-4


class DegenerateInputError(ValueError):
    """Input carries no usable signal (all-zero wealth, no fluctuations)."""


class InsufficientDataError(ValueError):
    """Not enough samples for the requested estimate."""


class NotApplicableError(ValueError):
    """Measurement undefined for this state (e.g. freezing with no LRA)."""


@dataclass
class CorrelationEstimate:
    """Normalized excess-wealth correlation c(tau) = C(tau)/C(0)."""

    taus: np.ndarray
    c: np.ndarray
    t_window: int


def correlation(trajectory: np.ndarray, max_lag: int,
                t_window: int | None = None) -> CorrelationEstimate:
    """Estimate c(tau) from unit-spaced wealth snapshots.

    ``trajectory`` has shape (n_snapshots, N); origins are averaged over
    ``t_window`` snapshots, so at least ``max_lag + t_window`` are needed.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2:
        raise ValueError("trajectory must be 2d (snapshots x agents)")
    n_snap, n = traj.shape
    if t_window is None:
        t_window = n_snap - max_lag
    if n_snap < max_lag + t_window or t_window < 1:
        raise InsufficientDataError(
            f"need >= {max_lag + max(t_window, 1)} snapshots, got {n_snap}")
    wbar = traj[0].sum() / n
    delta = traj - wbar
    c = np.empty(max_lag + 1)
    for tau in range(max_lag + 1):
        c[tau] = np.einsum("ti,ti->", delta[:t_window],
                           delta[tau:tau + t_window]) / (n * t_window)
    if c[0] <= 0.0:
        raise DegenerateInputError("zero wealth fluctuations, C(0) = 0")
    return CorrelationEstimate(taus=np.arange(max_lag + 1),
                               c=c / c[0], t_window=t_window)


@njit(cache=True)
def _correlation_kernel(wealth, offsets, neighbors, p, f, lags,
                        t_window, origin_stride, rng):
    n = wealth.shape[0]
    wbar = wealth.sum() / n
    max_lag = lags[-1]
    buf_len = max_lag + 1
    buf = np.empty((buf_len, n))
    acc = np.zeros(lags.shape[0])
    counts = np.zeros(lags.shape[0], dtype=np.int64)
    for i in range(n):
        buf[0, i] = wealth[i] - wbar
    for t in range(0, t_window + max_lag + 1):
        if t > 0:
            _run_sweeps(wealth, offsets, neighbors, p, f, 1, rng)
            row = t % buf_len
            for i in range(n):
                buf[row, i] = wealth[i] - wbar
        else:
            row = 0
        for k in range(lags.shape[0]):
            origin = t - lags[k]
            if origin >= 0 and origin < t_window and origin % origin_stride == 0:
                orow = origin % buf_len
                s = 0.0
                for i in range(n):
                    s += buf[orow, i] * buf[row, i]
                acc[k] += s
                counts[k] += 1
    return acc, counts


def measure_correlation(state: WealthState, net: Network,
                        params: ExchangeParams, rng: np.random.Generator,
                        max_lag: int, t_window: int | None = None,
                        lag_stride: int = 1,
                        origin_stride: int = 1) -> CorrelationEstimate:
    """Measure c(tau) online while advancing ``state`` in place.

    Runs ``t_window + max_lag`` sweeps past the (equilibrated) input
    state, keeping only a rolling buffer of snapshots. ``lag_stride``
    thins the lag grid, ``origin_stride`` decimates the time average.
    """
    if state.n != net.n:
        raise ValueError(f"state has {state.n} agents, network has {net.n}")
    if t_window is None:
        t_window = 10 * max_lag
    if t_window < 1 or max_lag < 1:
        raise InsufficientDataError("max_lag and t_window must be >= 1")
    lags = np.arange(0, max_lag + 1, lag_stride, dtype=np.int64)
    if lags[-1] != max_lag:
        lags = np.append(lags, np.int64(max_lag))
    acc, counts = _correlation_kernel(
        state.wealth, net.offsets, net.neighbors, params.p, params.f,
        lags, t_window, origin_stride, rng)
    state.t += t_window + max_lag
    c = acc / (net.n * counts)
    if c[0] <= 0.0:
        raise DegenerateInputError("zero wealth fluctuations, C(0) = 0")
    return CorrelationEstimate(taus=lags, c=c / c[0], t_window=t_window)


def condensation_ratio(state: WealthState) -> float:
    """Second-largest wealth over largest; 1 when even, 0 when condensed."""
    w = state.wealth
    if w.size < 2:
        raise ValueError("need at least two agents")
    top2 = np.partition(w, w.size - 2)[-2:]
    if top2[1] <= 0.0:
        raise DegenerateInputError("all wealths are zero")
    return float(top2[0] / top2[1])


def w2(state: WealthState) -> float:
    """Participation moment sum(w^2)/sum(w)^2; 1/N when even, 1 when condensed."""
    w = state.wealth
    total = w.sum()
    if total <= 0.0:
        raise DegenerateInputError("all wealths are zero")
    shares = w / total  # normalize before squaring so tiny totals don't underflow
    return float(np.dot(shares, shares))


def ranked_wealths(state: WealthState, ranks) -> np.ndarray:
    """Wealths at the requested 1-based ranks (descending, ties by agent index)."""
    w = state.wealth
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size and (ranks.min() < 1 or ranks.max() > w.size):
        raise IndexError(f"ranks must lie in [1, {w.size}]")
    order = np.lexsort((np.arange(w.size), -w))
    return w[order[ranks - 1]]


@dataclass
class LraReport:
    """Census of locally rich agents (strict local wealth maxima)."""

    lra_indices: np.ndarray
    lra_wealths: np.ndarray
    rho: float
    n_type1: int  # wealth >= global mean
    n_type2: int  # wealth < global mean
    frozen: bool


def _lra_mask(state: WealthState, net: Network) -> tuple[np.ndarray, np.ndarray]:
    nbr_wealth = state.wealth[net.neighbors]
    richest_nbr = np.maximum.reduceat(nbr_wealth, net.offsets[:-1])
    return state.wealth > richest_nbr, richest_nbr


def find_lras(state: WealthState, net: Network,
              ratio_threshold: float = FREEZE_RATIO,
              split_on_lra_mean: bool = False) -> LraReport:
    """All agents strictly richer than every neighbor, with the type split.

    The type-1/type-2 boundary defaults to the global mean W_T/N;
    ``split_on_lra_mean`` switches it to the mean over LRAs only. Ties at
    the boundary count as type 1.
    """
    if state.n != net.n:
        raise ValueError(f"state has {state.n} agents, network has {net.n}")
    mask, richest_nbr = _lra_mask(state, net)
    idx = np.flatnonzero(mask)
    wealths = state.wealth[idx]
    if split_on_lra_mean and idx.size:
        boundary = wealths.mean()
    else:
        boundary = state.wealth.sum() / state.n
    n_type1 = int(np.count_nonzero(wealths >= boundary))
    frozen = bool(idx.size) and bool(
        np.all(richest_nbr[idx] <= ratio_threshold * wealths))
    report = LraReport(lra_indices=idx, lra_wealths=wealths,
                       rho=idx.size / state.n, n_type1=n_type1,
                       n_type2=idx.size - n_type1, frozen=frozen)
    assert _is_independent_set(net, idx), "LRA set must be an independent set"
    return report


def _is_independent_set(net: Network, idx: np.ndarray) -> bool:
    members = np.zeros(net.n, dtype=bool)
    members[idx] = True
    for i in idx:
        if members[net.neighbors_of(int(i))].any():
            return False
    return True


def is_frozen(state: WealthState, net: Network,
              ratio_threshold: float = FREEZE_RATIO) -> bool:
    """True iff every LRA out-owns its richest neighbor by >= 1/ratio_threshold.

    On the complete graph with a single LRA this reduces to the
    condensation criterion r(t) <= ratio_threshold.
    """
    mask, richest_nbr = _lra_mask(state, net)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NotApplicableError("no locally rich agent in this state")
    return bool(np.all(richest_nbr[idx] <= ratio_threshold * state.wealth[idx]))


@dataclass
class Histogram:
    """Normalized density of w/<w>, with <w> the mean of the input values."""

    edges: np.ndarray
    density: np.ndarray
    scale: str
    n_dropped_zeros: int = 0

    @property
    def centers(self) -> np.ndarray:
        if self.scale == "log":
            return np.sqrt(self.edges[:-1] * self.edges[1:])
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def wealth_histogram(values, scale: str = "linear",
                     n_bins: int = 30) -> Histogram:
    """Histogram of wealths rescaled by their mean.

    Log binning drops exact zeros and reports how many were dropped.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DegenerateInputError("empty input")
    if scale not in ("linear", "log"):
        raise ValueError(f"scale must be 'linear' or 'log', got {scale!r}")
    mean = v.mean()
    if mean <= 0.0:
        raise DegenerateInputError("mean wealth is not positive")
    x = v / mean
    if scale == "linear":
        density, edges = np.histogram(x, bins=n_bins, density=True)
        return Histogram(edges=edges, density=density, scale=scale)
    positive = x[x > 0]
    n_dropped = x.size - positive.size
    if positive.size == 0:
        raise DegenerateInputError("no positive values for log binning")
    lo, hi = positive.min(), positive.max()
    if lo == hi:
        lo, hi = lo * 0.5, hi * 2.0
    edges = np.geomspace(lo, hi, n_bins + 1)
    density, edges = np.histogram(positive, bins=edges, density=True)
    return Histogram(edges=edges, density=density, scale=scale,
                     n_dropped_zeros=n_dropped)
