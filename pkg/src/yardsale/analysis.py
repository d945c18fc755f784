"""Fits of the model's functional forms to measured data.

Exponential decay of the wealth correlation function, power-law
divergence of timescales at the critical line, and the doubling protocol
that picks an equilibration length in the stable phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import ExchangeParams, WealthState, history_rng, run_sweeps
from .networks import Network
from .observables import (CorrelationEstimate, InsufficientDataError,
                          NotApplicableError, measure_correlation)

__all__ = [
    "FitResult",
    "FitFailureError",
    "NonConvergenceError",
    "CorrelationProbe",
    "fit_exponential_decay",
    "fit_critical_divergence",
    "equilibration_length",
]


class FitFailureError(RuntimeError):
    """The model family cannot be fitted to the data."""


class NonConvergenceError(RuntimeError):
    """Iterative protocol hit its cap without converging."""


@dataclass
class FitResult:
    """Named parameters with OLS uncertainties and the data window used."""

    params: dict[str, float]
    stderr: dict[str, float]
    residual: float
    window: tuple[float, float]


def _ols(x: np.ndarray, y: np.ndarray):
    """Straight-line least squares; returns (intercept, slope), stderrs, SSR."""
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, res, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    ssr = float(np.sum((y - fitted) ** 2))
    dof = max(x.size - 2, 1)
    cov = ssr / dof * np.linalg.inv(design.T @ design)
    return coef, np.sqrt(np.diag(cov)), ssr


def fit_exponential_decay(corr: CorrelationEstimate,
                          window: tuple[float, float] = (0.05, 0.8),
                          min_points: int = 8) -> FitResult:
    """Fit c(tau) = c0 exp(-tau/tau0) by linear least squares on ln c.

    Only points with c inside ``window`` enter the fit, excluding the
    non-asymptotic small-tau regime and the noise floor.
    """
    c = np.asarray(corr.c, dtype=np.float64)
    taus = np.asarray(corr.taus, dtype=np.float64)
    mask = (c > 0) & (c >= window[0]) & (c <= window[1])
    if np.count_nonzero(mask) < min_points:
        raise InsufficientDataError(
            f"only {np.count_nonzero(mask)} usable points in window {window}, "
            f"need {min_points}")
    x, y = taus[mask], np.log(c[mask])
    coef, err, ssr = _ols(x, y)
    if coef[1] >= 0.0:
        raise FitFailureError("correlation does not decay in the fit window")
    tau0 = -1.0 / coef[1]
    c0 = float(np.exp(coef[0]))
    return FitResult(
        params={"tau0": tau0, "c0": c0},
        stderr={"tau0": float(err[1] * tau0 * tau0), "c0": float(c0 * err[0])},
        residual=ssr,
        window=(float(x.min()), float(x.max())))


def fit_critical_divergence(points, side: str | None = None,
                            resolution: float = 1e-4,
                            n_grid: int = 101) -> FitResult:
    """Fit y = A |p - p_c|^(-z) by scanning candidate p_c values.

    For each candidate, ln y vs ln|p - p_c| is fitted linearly; the
    candidate minimizing the residual wins, with the scan grid refined
    down to ``resolution`` in p_c. ``side`` is 'below' when the
    divergence lies below the data (condensation times measured at
    p < p_c use 'above'); by default it is inferred from which data edge
    carries the largest y.
    """
    pts = sorted((float(p), float(y)) for p, y in points)
    if len(pts) < 5:
        raise InsufficientDataError(f"need >= 5 points, got {len(pts)}")
    p = np.array([q for q, _ in pts])
    y = np.array([v for _, v in pts])
    if np.any(y <= 0):
        raise ValueError("y values must be positive")
    if side is None:
        side = "below" if y[0] > y[-1] else "above"
    if side not in ("below", "above"):
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    span = p[-1] - p[0]
    if span <= 0:
        raise ValueError("points must span a range of p")
    logy = np.log(y)

    def ssr_at(pc: float) -> float:
        d = p - pc if side == "below" else pc - p
        _, _, ssr = _ols(np.log(d), logy)
        return ssr

    edge = p[0] if side == "below" else p[-1]
    sign = -1.0 if side == "below" else 1.0
    # candidates between just past the data edge and one data-span away
    near = edge + sign * max(resolution, 1e-9)
    far = edge + sign * span
    grid = np.linspace(near, far, n_grid)
    ssrs = np.array([ssr_at(pc) for pc in grid])
    best = int(np.argmin(ssrs))
    if best == n_grid - 1:
        raise FitFailureError(
            "no interior residual minimum; data too far from criticality")
    step = abs(grid[1] - grid[0])
    pc = float(grid[best])
    while step > resolution:
        lo, hi = pc - step, pc + step
        if side == "below":
            hi = min(hi, edge - max(resolution, 1e-9) * 0.5)
        else:
            lo = max(lo, edge + max(resolution, 1e-9) * 0.5)
        grid = np.linspace(lo, hi, n_grid)
        ssrs = np.array([ssr_at(pc_) for pc_ in grid])
        best = int(np.argmin(ssrs))
        pc = float(grid[best])
        step = abs(grid[1] - grid[0])
    # polish by golden-section so noiseless data fits to machine precision
    lo, hi = pc - step, pc + step
    if side == "below":
        hi = min(hi, edge - 1e-12)
    else:
        lo = max(lo, edge + 1e-12)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = ssr_at(c1), ssr_at(c2)
    while b - a > 1e-12:
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = ssr_at(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = ssr_at(c2)
    pc = float(0.5 * (a + b))
    d = p - pc if side == "below" else pc - p
    coef, err, ssr = _ols(np.log(d), logy)
    z = -float(coef[1])
    amplitude = float(np.exp(coef[0]))
    return FitResult(
        params={"p_c": pc, "z": z, "A": amplitude},
        stderr={"p_c": float(step), "z": float(err[1]),
                "A": float(amplitude * err[0])},
        residual=ssr,
        window=(float(p[0]), float(p[-1])))


@dataclass
class CorrelationProbe:
    """Settings for one c(tau) measurement."""

    max_lag: int
    t_window: int | None = None  # defaults to 10 * max_lag
    lag_stride: int = 1
    origin_stride: int = 1


def equilibration_length(net: Network, params: ExchangeParams,
                         probe: CorrelationProbe, seed: int = 0,
                         tol: float = 0.02,
                         cap: int = 10_000_000) -> int:
    """Equilibration sweeps by doubling until c(tau) stops changing.

    Starts at 10 N sweeps and doubles until the max pointwise difference
    between successive c(tau) estimates drops to ``tol``. Only defined in
    the stable phase.
    """
    if params.f >= 1.0 or params.p <= params.p_star:
        raise NotApplicableError(
            "equilibration is defined in the stable phase (p > p*(f)) only")
    t_eq = 10 * net.n
    prev = None
    stage = 0
    while t_eq <= cap:
        state = WealthState.even(net.n)
        rng = history_rng(seed, stage)
        run_sweeps(state, net, params, t_eq, rng)
        est = measure_correlation(state, net, params, rng,
                                  max_lag=probe.max_lag,
                                  t_window=probe.t_window,
                                  lag_stride=probe.lag_stride,
                                  origin_stride=probe.origin_stride)
        if prev is not None and np.max(np.abs(est.c - prev)) <= tol:
            return t_eq
        prev = est.c
        t_eq *= 2
        stage += 1
    raise NonConvergenceError(f"c(tau) still drifting at T_eq cap {cap}")
