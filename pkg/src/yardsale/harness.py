"""Experiment drivers: parameter grids, ensembles, CSV persistence.

One config reproduces one figure-style dataset. All drivers are
deterministic for a fixed config and master seed: history k of any grid
point uses the independent sub-stream (seed, k), so results do not depend
on execution order or degree of parallelism.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .analysis import (CorrelationProbe, FitFailureError, FitResult,
                       equilibration_length, fit_critical_divergence,
                       fit_exponential_decay)
from .engine import (ExchangeParams, WealthState, history_rng, run_sweeps,
                     run_until_condensed, run_until_frozen)
from .networks import (Network, make_complete, make_erdos_renyi, make_ring,
                       make_square_lattice)
from .observables import (InsufficientDataError, find_lras,
                          measure_correlation, ranked_wealths, w2)

__all__ = [
    "ExperimentConfig",
    "build_network",
    "drive_stable_phase",
    "drive_condensation",
    "drive_lra_census",
    "drive_ranked_traces",
    "write_csv",
]

FREEZE_RATIO = 1e-4


@dataclass
class ExperimentConfig:
    """One experiment: a topology, a (p, f) grid, and run settings.

    ``topology`` is ``{"kind": ..., "n": ...}`` with kind one of ``ring``,
    ``lattice2d`` (uses ``side`` or a square ``n``), ``erdos_renyi``
    (``gamma`` may be a list for coordination sweeps), or ``complete``.
    """

    topology: dict
    p_values: list[float]
    f_values: list[float]
    n_histories: int = 1
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    # stop rule for unstable-phase drivers
    ratio_threshold: float = FREEZE_RATIO
    max_sweeps: int | None = None  # default: 1000 * N / theta
    check_every: int = 1
    # stable-phase settings
    t_eq: int | str = "heuristic"  # sweeps, or "heuristic" / "protocol"
    max_lag: int | None = None  # initial lag horizon; adapted upward if needed
    origin_stride: int = 4
    fit_window: tuple[float, float] = (0.05, 0.8)
    # ranked-trace settings
    ranks: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 10, 20])
    n_sweeps: int | None = None
    cadence: int = 100
    track_types: bool = False

    def __post_init__(self):
        if self.n_histories < 1:
            raise ValueError("n_histories must be >= 1")
        if not self.p_values or not self.f_values:
            raise ValueError("p_values and f_values must be nonempty")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def gammas(self) -> list[float | None]:
        g = self.topology.get("gamma")
        if g is None:
            return [None]
        return list(g) if isinstance(g, (list, tuple)) else [g]


def build_network(topology: dict, seed: int, gamma: float | None = None) -> Network:
    """Construct the network named by a config topology block."""
    kind = topology["kind"]
    if kind == "ring":
        return make_ring(topology["n"])
    if kind == "lattice2d":
        side = topology.get("side")
        if side is None:
            side = math.isqrt(topology["n"])
            if side * side != topology["n"]:
                raise ValueError("lattice2d needs a square n or an explicit side")
        return make_square_lattice(side)
    if kind == "complete":
        return make_complete(topology["n"])
    if kind == "erdos_renyi":
        if gamma is None:
            gamma = topology["gamma"]
        return make_erdos_renyi(topology["n"], gamma, seed)
    raise ValueError(f"unknown topology kind {kind!r}")


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Plain UTF-8 CSV with '.' decimals; floats in shortest round-trip form."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):  # includes np.float64
        return repr(float(v))
    return str(v)


def _provenance(net: Network, p: float, f: float,
                cfg: ExperimentConfig) -> list:
    gamma_or_dl = net.link_density if net.topology == "erdos_renyi" \
        else net.mean_degree
    return [net.topology, net.n, float(gamma_or_dl), float(p), float(f),
            cfg.seed, cfg.n_histories]

PROVENANCE_HEADER = ["topology", "n", "gamma_or_dl", "p", "f", "seed",
                     "n_histories"]


def _pmap(fn, args_list, threads: int):
    if threads <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args_list))


def _default_cap(net: Network, params: ExchangeParams,
                 cfg: ExperimentConfig) -> int:
    if cfg.max_sweeps is not None:
        return cfg.max_sweeps
    if params.f < 1.0 and params.p < params.p_star:
        return int(1000 * net.n / params.theta)
    return 10_000_000


# ---------------------------------------------------------------------------
# stable phase: tau0 measurement and the critical line
# ---------------------------------------------------------------------------

def _measure_corr_worker(args):
    net, params, cfg, t_eq, max_lag, t_window, history = args
    rng = history_rng(cfg.seed, history)
    state = WealthState.even(net.n)
    run_sweeps(state, net, params, t_eq, rng)
    est = measure_correlation(state, net, params, rng, max_lag=max_lag,
                              t_window=t_window,
                              lag_stride=max(1, max_lag // 200),
                              origin_stride=cfg.origin_stride)
    return est.c


def _adapt_lag(net, params, cfg, t_eq, max_lag) -> tuple[int, int]:
    """Grow the lag horizon (and the equilibration length with it) until a
    cheap single-history probe sees c decay below 0.05 within the horizon."""
    probe_history = 1_000_000  # independent of the measurement sub-streams
    grow_teq = cfg.t_eq in ("heuristic", "protocol")
    for _ in range(8):
        if grow_teq:
            t_eq = max(t_eq, 6 * max_lag)
        c = _measure_corr_worker(
            (net, params, cfg, t_eq, max_lag, 3 * max_lag, probe_history))
        if c[-1] < 0.05:
            break
        max_lag *= 2
    if grow_teq:
        t_eq = max(t_eq, 6 * max_lag)
    return t_eq, max_lag


def measure_tau0(net: Network, params: ExchangeParams,
                 cfg: ExperimentConfig) -> FitResult:
    """Ensemble-averaged c(tau) for one grid point, fitted to exp decay."""
    theta_abs = abs(params.theta)
    max_lag = cfg.max_lag or max(20, int(4.0 / theta_abs))
    if cfg.t_eq == "protocol":
        probe = CorrelationProbe(max_lag=max_lag,
                                 lag_stride=max(1, max_lag // 200),
                                 origin_stride=cfg.origin_stride)
        t_eq = equilibration_length(net, params, probe, seed=cfg.seed)
    elif cfg.t_eq == "heuristic":
        t_eq = max(10 * net.n, int(20.0 / theta_abs))
    else:
        t_eq = int(cfg.t_eq)
    t_eq, max_lag = _adapt_lag(net, params, cfg, t_eq, max_lag)
    t_window = 10 * max_lag
    results = _pmap(_measure_corr_worker,
                    [(net, params, cfg, t_eq, max_lag, t_window, h)
                     for h in range(cfg.n_histories)],
                    cfg.threads)
    c = np.mean(results, axis=0)
    stride = max(1, max_lag // 200)
    taus = np.arange(0, max_lag + 1, stride, dtype=np.int64)
    if taus[-1] != max_lag:
        taus = np.append(taus, np.int64(max_lag))
    from .observables import CorrelationEstimate
    return fit_exponential_decay(CorrelationEstimate(
        taus=taus, c=c, t_window=t_window), window=tuple(cfg.fit_window))


def drive_stable_phase(cfg: ExperimentConfig) -> dict[str, Path]:
    """Measure tau0 over the grid and fit the critical line per f.

    Writes ``tau0.csv`` (one row per grid point) and ``critical_line.csv``
    (one row per f, with the full-mixture prediction for comparison).
    """
    out = Path(cfg.out_dir)
    tau_rows = []
    line_rows = []
    for gamma in cfg.gammas():
        net = build_network(cfg.topology, cfg.seed, gamma)
        for f in cfg.f_values:
            points = []
            for p in cfg.p_values:
                params = ExchangeParams(p=p, f=f)
                if params.theta >= 0.0:
                    raise ValueError(
                        f"stable-phase driver needs p > p*(f); "
                        f"got p={p}, f={f} (p*={params.p_star:.6f})")
                try:
                    fit = measure_tau0(net, params, cfg)
                except (InsufficientDataError, FitFailureError) as exc:
                    tau_rows.append(_provenance(net, p, f, cfg)
                                    + [math.nan, math.nan, f"{exc}"])
                    continue
                tau0 = fit.params["tau0"]
                tau_rows.append(_provenance(net, p, f, cfg)
                                + [tau0, fit.stderr["tau0"], ""])
                points.append((p, tau0))
            if len(points) >= 5:
                try:
                    line = fit_critical_divergence(points, side="below")
                    line_rows.append(
                        [net.topology, net.n, float(f), line.params["p_c"],
                         line.params["z"], line.stderr["z"],
                         theory.p_star(f), cfg.seed, cfg.n_histories])
                except FitFailureError:
                    line_rows.append([net.topology, net.n, float(f),
                                      math.nan, math.nan, math.nan,
                                      theory.p_star(f), cfg.seed,
                                      cfg.n_histories])
    paths = {
        "tau0": out / "tau0.csv",
        "critical_line": out / "critical_line.csv",
    }
    write_csv(paths["tau0"], PROVENANCE_HEADER + ["tau0", "tau0_err", "note"],
              tau_rows)
    write_csv(paths["critical_line"],
              ["topology", "n", "f", "p_c", "z", "z_err", "p_star_theory",
               "seed", "n_histories"],
              line_rows)
    return paths


# ---------------------------------------------------------------------------
# unstable phase: condensation times
# ---------------------------------------------------------------------------

def _condense_worker(args):
    net, params, cfg, cap, history = args
    runner = run_until_condensed if net.topology == "complete" \
        else run_until_frozen
    res = runner(net, params, cfg.seed,
                 ratio_threshold=cfg.ratio_threshold, max_sweeps=cap,
                 check_every=cfg.check_every, history=history)
    return res.t_stop, res.capped


def condensation_times(net: Network, params: ExchangeParams,
                       cfg: ExperimentConfig) -> tuple[np.ndarray, int]:
    """Stop times over the ensemble, plus how many runs hit the cap."""
    cap = _default_cap(net, params, cfg)
    results = _pmap(_condense_worker,
                    [(net, params, cfg, cap, h)
                     for h in range(cfg.n_histories)],
                    cfg.threads)
    times = np.array([t for t, capped in results if not capped], dtype=float)
    n_capped = sum(1 for _, capped in results if capped)
    return times, n_capped


def drive_condensation(cfg: ExperimentConfig) -> dict[str, Path]:
    """Condensation/freezing time t0 over the grid; writes ``t0.csv``.

    Complete graphs stop at the r <= threshold condensation criterion,
    every other topology at the LRA freezing criterion. Rows flagged
    ``capped > 0`` hit the sweep cap in some histories.
    """
    out = Path(cfg.out_dir)
    rows = []
    for gamma in cfg.gammas():
        net = build_network(cfg.topology, cfg.seed, gamma)
        for f in cfg.f_values:
            for p in cfg.p_values:
                params = ExchangeParams(p=p, f=f)
                p_star = theory.p_star(f) if f < 1.0 else math.nan
                times, n_capped = condensation_times(net, params, cfg)
                if times.size:
                    t0 = float(times.mean())
                    sem = float(times.std(ddof=1) / math.sqrt(times.size)) \
                        if times.size > 1 else 0.0
                else:
                    t0, sem = math.nan, math.nan
                rows.append(_provenance(net, p, f, cfg)
                            + [p_star, p_star - p if f < 1.0 else math.nan,
                               t0, sem, t0 / net.mean_degree, n_capped])
    path = out / "t0.csv"
    write_csv(path, PROVENANCE_HEADER
              + ["p_star", "delta", "t0", "t0_sem", "t0_over_gamma",
                 "capped"],
              rows)
    return {"t0": path}


# ---------------------------------------------------------------------------
# unstable phase: LRA census
# ---------------------------------------------------------------------------

def _census_worker(args):
    net, params, cfg, cap, history = args
    res = run_until_frozen(net, params, cfg.seed,
                           ratio_threshold=cfg.ratio_threshold,
                           max_sweeps=cap, check_every=cfg.check_every,
                           history=history)
    report = find_lras(res.state, net, ratio_threshold=cfg.ratio_threshold)
    return (res.t_stop, res.capped, report.rho, report.n_type1,
            report.n_type2, w2(res.state), report.lra_wealths)


def _types_vs_time(net, params, cfg, cap):
    """Type-1/type-2 counts sampled along history 0 until frozen."""
    rng = history_rng(cfg.seed, 0)
    state = WealthState.even(net.n)
    rows = []
    while state.t < cap:
        run_sweeps(state, net, params, min(cfg.cadence, cap - state.t), rng)
        report = find_lras(state, net, ratio_threshold=cfg.ratio_threshold)
        rows.append([state.t, report.n_type1, report.n_type2, report.rho])
        if report.frozen:
            break
    return rows


def drive_lra_census(cfg: ExperimentConfig) -> dict[str, Path]:
    """Run every grid point to the frozen state and census the LRAs.

    Writes ``census.csv`` (density, type split, W2 at freezing, with the
    Bethe-lattice coalescence prediction as an overlay column) and pooled
    LRA wealth histograms in ``lra_hist.csv``; with ``track_types`` also
    ``types_vs_time.csv`` for history 0 of each point.
    """
    from .observables import wealth_histogram
    out = Path(cfg.out_dir)
    census_rows = []
    hist_rows = []
    type_rows = []
    for gamma in cfg.gammas():
        net = build_network(cfg.topology, cfg.seed, gamma)
        for f in cfg.f_values:
            for p in cfg.p_values:
                params = ExchangeParams(p=p, f=f)
                p_star = theory.p_star(f) if f < 1.0 else math.nan
                cap = _default_cap(net, params, cfg)
                results = _pmap(_census_worker,
                                [(net, params, cfg, cap, h)
                                 for h in range(cfg.n_histories)],
                                cfg.threads)
                ok = [r for r in results if not r[1]]
                n_capped = len(results) - len(ok)
                if ok:
                    t0 = float(np.mean([r[0] for r in ok]))
                    rho = np.array([r[2] for r in ok])
                    t1 = float(np.mean([r[3] for r in ok]))
                    t2 = float(np.mean([r[4] for r in ok]))
                    w2f = np.array([r[5] for r in ok])
                    rho_mean = float(rho.mean())
                    rho_sem = float(rho.std(ddof=1) / math.sqrt(rho.size)) \
                        if rho.size > 1 else 0.0
                    w2_mean = float(w2f.mean())
                else:
                    t0 = rho_mean = rho_sem = t1 = t2 = w2_mean = math.nan
                abad = theory.abad_density(1.0, net.mean_degree) \
                    if net.mean_degree >= 2.0 else math.nan
                census_rows.append(
                    _provenance(net, p, f, cfg)
                    + [p_star, p_star - p if f < 1.0 else math.nan, t0,
                       rho_mean, rho_sem, t1, t2, w2_mean,
                       net.link_density, abad, n_capped])
                pooled = np.concatenate([r[6] for r in ok]) if ok else \
                    np.empty(0)
                if pooled.size:
                    for scale in ("linear", "log"):
                        hist = wealth_histogram(pooled, scale=scale)
                        for lo, hi, dens in zip(hist.edges[:-1],
                                                hist.edges[1:],
                                                hist.density):
                            hist_rows.append(
                                _provenance(net, p, f, cfg)
                                + [scale, float(lo), float(hi), float(dens),
                                   hist.n_dropped_zeros])
                if cfg.track_types:
                    for row in _types_vs_time(net, params, cfg, cap):
                        type_rows.append(_provenance(net, p, f, cfg) + row)
    paths = {"census": out / "census.csv", "lra_hist": out / "lra_hist.csv"}
    write_csv(paths["census"], PROVENANCE_HEADER
              + ["p_star", "delta", "t0", "rho", "rho_sem", "n_type1",
                 "n_type2", "w2_at_freeze", "d_l", "abad_rho", "capped"],
              census_rows)
    write_csv(paths["lra_hist"], PROVENANCE_HEADER
              + ["scale", "bin_lo", "bin_hi", "density", "dropped_zeros"],
              hist_rows)
    if cfg.track_types:
        paths["types_vs_time"] = out / "types_vs_time.csv"
        write_csv(paths["types_vs_time"], PROVENANCE_HEADER
                  + ["t", "n_type1", "n_type2", "rho"], type_rows)
    return paths


# ---------------------------------------------------------------------------
# unstable phase: ranked-wealth traces
# ---------------------------------------------------------------------------

def _ranked_worker(args):
    net, params, cfg, n_sweeps, history = args
    rng = history_rng(cfg.seed, history)
    state = WealthState.even(net.n)
    n_samples = n_sweeps // cfg.cadence
    out = np.empty((n_samples + 1, len(cfg.ranks)))
    out[0] = ranked_wealths(state, cfg.ranks)
    for s in range(1, n_samples + 1):
        run_sweeps(state, net, params, cfg.cadence, rng)
        out[s] = ranked_wealths(state, cfg.ranks)
    return out


def ranked_trace_ensemble(net: Network, params: ExchangeParams,
                          cfg: ExperimentConfig,
                          n_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-mean w_R(t)/W_T at the config cadence; returns (times, traces)."""
    results = _pmap(_ranked_worker,
                    [(net, params, cfg, n_sweeps, h)
                     for h in range(cfg.n_histories)],
                    cfg.threads)
    mean = np.mean(results, axis=0) / net.n  # W_T = N for unit initial wealth
    times = np.arange(mean.shape[0]) * cfg.cadence
    return times, mean


def drive_ranked_traces(cfg: ExperimentConfig) -> dict[str, Path]:
    """Ensemble ranked-wealth traces at one unstable (p, f) point.

    Writes ``ranked.csv`` with one column per rank plus, on the complete
    graph, the full-mixture ranked-wealth prediction as overlay columns.
    """
    if len(cfg.p_values) != 1 or len(cfg.f_values) != 1:
        raise ValueError("ranked-trace driver takes exactly one (p, f) point")
    out = Path(cfg.out_dir)
    net = build_network(cfg.topology, cfg.seed, cfg.gammas()[0])
    p, f = cfg.p_values[0], cfg.f_values[0]
    params = ExchangeParams(p=p, f=f)
    if f < 1.0 and params.theta <= 0.0:
        raise ValueError("ranked-trace driver needs the unstable phase")
    if cfg.n_sweeps is not None:
        n_sweeps = cfg.n_sweeps
    else:
        n_sweeps = int(3 * theory.condensation_time_mf(net.n, params.theta))
    times, traces = ranked_trace_ensemble(net, params, cfg, n_sweeps)
    header = PROVENANCE_HEADER + ["t"] + [f"w_rank{r}" for r in cfg.ranks]
    overlay = net.topology == "complete" and f < 1.0
    if overlay:
        header += [f"theory_rank{r}" for r in cfg.ranks]
    rows = []
    for ti, tval in enumerate(times):
        row = _provenance(net, p, f, cfg) + [int(tval)] \
            + [float(x) for x in traces[ti]]
        if overlay:
            row += [theory.ranked_wealth(r, float(tval), params.theta,
                                         net.n, w_total=1.0)
                    for r in cfg.ranks]
        rows.append(row)
    path = out / "ranked.csv"
    write_csv(path, header, rows)
    return {"ranked": path}
