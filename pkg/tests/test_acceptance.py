"""End-to-end physics acceptance suite.

Each test re-derives one headline result of the model from scratch at a
fixed seed and prints a PASS line with the measured numbers. These runs
are CPU-heavy (tens of minutes total, single core) but fully
deterministic, so the asserted tolerances are reproducible.
"""

import numpy as np
import pytest

import yardsale as ys
from yardsale import theory
from yardsale.analysis import _ols, fit_critical_divergence
from yardsale.engine import (ExchangeParams, Observer, WealthState,
                             history_rng, run_history, run_sweeps,
                             run_until_condensed, run_until_frozen)
from yardsale.harness import ExperimentConfig, measure_tau0
from yardsale.observables import (condensation_ratio, find_lras,
                                  measure_correlation, ranked_wealths, w2)
from conftest import reference_sweep

_capture = None


@pytest.fixture(autouse=True)
def _report_channel(capfd):
    # stash the capture fixture so report() can print around fd capture
    global _capture
    _capture = capfd
    yield
    _capture = None


def report(criterion: str, detail: str) -> None:
    # suspend pytest capture so every criterion leaves one visible line
    with _capture.disabled():
        print(f"[acceptance] PASS {criterion}: {detail}")


def mean_stop_time(net, params, seed, n_hist, check_every=4,
                   max_sweeps=10_000_000):
    runner = run_until_condensed if net.topology == "complete" \
        else run_until_frozen
    ts = []
    for h in range(n_hist):
        res = runner(net, params, seed, check_every=check_every,
                     max_sweeps=max_sweeps, history=h)
        assert not res.capped
        ts.append(res.t_stop)
    return float(np.mean(ts))


def mean_lra_density(net, params, seed, n_hist):
    rhos = []
    for h in range(n_hist):
        res = run_until_frozen(net, params, seed, check_every=4,
                               max_sweeps=2_000_000, history=h)
        assert not res.capped
        rhos.append(find_lras(res.state, net).rho)
    return float(np.mean(rhos))


def test_criterion_1_critical_line():
    """Fitted p_c(f) within +-0.01 of the closed form, complete graph
    and ring, N=400, f in {0.1, 0.2, 0.3, 0.5}."""
    deltas = (0.02, 0.03, 0.045, 0.065, 0.09, 0.12)
    details = []
    for topo in ("complete", "ring"):
        net = ys.make_complete(400) if topo == "complete" else ys.make_ring(400)
        n_hist = 6 if topo == "complete" else 24
        window = (0.05, 0.8) if topo == "complete" else (0.05, 0.4)
        for f in (0.1, 0.2, 0.3, 0.5):
            p_star = theory.p_star(f)
            cfg = ExperimentConfig(topology={"kind": topo, "n": 400},
                                   p_values=[1], f_values=[f],
                                   n_histories=n_hist, seed=42,
                                   fit_window=window)
            points = []
            for d in deltas:
                fit = measure_tau0(net, ExchangeParams(p_star + d, f), cfg)
                points.append((p_star + d, fit.params["tau0"]))
            line = fit_critical_divergence(points, side="below")
            err = line.params["p_c"] - p_star
            details.append(f"{topo} f={f}: err={err:+.4f}")
            assert abs(err) <= 0.01, \
                f"{topo} f={f}: p_c={line.params['p_c']:.4f} vs {p_star:.4f}"
    report("criterion 1 (critical line)", "; ".join(details))


def fit_z_fixed_pstar(deltas, t0s):
    """Exponent of t0 ~ delta^-z with the divergence pinned at p*."""
    coef, _, _ = _ols(np.log(np.asarray(deltas)), np.log(np.asarray(t0s)))
    return -float(coef[1])


def r_decay_time(net, params, seed, n_hist, n_sweeps, cadence):
    """Timescale of r(t) = w_2nd/w_1st ~ exp(-t/t0): median over the
    ensemble of per-history fits on the window r in (0.5, 1e-3).

    Per-history fitting avoids the tail bias of averaging ln r across
    histories, where early condensers drag the ensemble mean down."""
    fits = []
    for h in range(n_hist):
        rec = run_history(net, params, n_sweeps, seed=seed,
                          observers=[Observer("r", condensation_ratio,
                                              cadence)],
                          history=h)
        log_r = np.log(np.clip(rec.values["r"], 1e-300, None))
        times = np.array(rec.times["r"], dtype=float)
        mask = (log_r < np.log(0.5)) & (log_r > np.log(1e-3))
        coef, _, _ = _ols(times[mask], log_r[mask])
        fits.append(-1.0 / float(coef[1]))
    return float(np.median(fits))


def test_criterion_2_mf_condensation_scaling():
    """Complete-graph condensation times: z = 1.00 +- 0.15 against the
    known p*, and t0/N collapse between N=400 and N=900 within 15%."""
    f = 0.1
    p_star = theory.p_star(f)
    pgrid = [0.30, 0.35, 0.40, 0.45, 0.50]
    per_n = {}
    for n, base_hist in ((400, 10), (900, 6)):
        net = ys.make_complete(n)
        vals = []
        for p in pgrid:
            # per-history t0 scatter grows near p*; double the ensemble
            n_hist = base_hist if p < 0.425 else 2 * base_hist
            n_sweeps = int(5.0 * n / theory.theta(p, f))
            vals.append(r_decay_time(net, ExchangeParams(p, f), seed=7,
                                     n_hist=n_hist, n_sweeps=n_sweeps,
                                     cadence=max(1, n_sweeps // 400)) / n)
        per_n[n] = vals
    deltas = [p_star - p for p in pgrid]
    zs = {n: fit_z_fixed_pstar(deltas, per_n[n]) for n in per_n}
    for n, z in zs.items():
        assert 0.85 <= z <= 1.15, f"N={n}: z={z:.3f}"
    # curve-level collapse: geometric-mean offset between the t0/N curves
    # (single points carry ~10% ensemble noise at these history counts)
    ratios = np.array(per_n[900]) / np.array(per_n[400])
    gmean = float(np.exp(np.mean(np.log(ratios))))
    assert abs(np.log(gmean)) <= np.log(1.15), f"collapse offset {gmean:.3f}"
    report("criterion 2 (MF condensation scaling)",
           f"z400={zs[400]:.3f} z900={zs[900]:.3f} "
           f"collapse gmean={gmean:.3f} "
           f"ratios={[round(float(r), 3) for r in ratios]}")


def test_criterion_3_network_condensation_scaling():
    """Ring and square-lattice freezing times diverge with exponent in
    the band 1.15 +- 0.20."""
    pgrid = [0.30, 0.35, 0.40, 0.45, 0.50]
    details = []
    for label, net in (("ring-400", ys.make_ring(400)),
                       ("ring-900", ys.make_ring(900)),
                       ("lattice-400", ys.make_square_lattice(20)),
                       ("lattice-900", ys.make_square_lattice(30))):
        points = []
        for p in pgrid:
            t0 = mean_stop_time(net, ExchangeParams(p, 0.1), seed=7, n_hist=6)
            points.append((p, t0 / net.mean_degree))
        fit = fit_critical_divergence(points, side="above")
        z = fit.params["z"]
        details.append(f"{label}: z={z:.3f}")
        assert 0.95 <= z <= 1.35, f"{label}: z={z:.3f}"
    report("criterion 3 (network condensation scaling)", "; ".join(details))


def test_criterion_4_lra_density():
    """LRA density at freezing: ~0.40 and flat on the ring, between 0.25
    and 0.35 on the square lattice."""
    ring = ys.make_ring(400)
    details = []
    for f in (0.1, 0.2):
        ps = [0.0, 0.1, 0.2, 0.3, 0.4, theory.p_star(f) - 0.05]
        rhos = [mean_lra_density(ring, ExchangeParams(p, f), seed=11,
                                 n_hist=6) for p in ps]
        details.append(f"1d f={f}: rho in [{min(rhos):.3f}, {max(rhos):.3f}]")
        for rho in rhos:
            assert 0.35 <= rho <= 0.45, f"1d f={f}: rho={rho:.3f}"
        assert max(rhos) - min(rhos) < 0.05
    lattice = ys.make_square_lattice(20)
    for p in (0.0, 0.2, 0.4):
        rho = mean_lra_density(lattice, ExchangeParams(p, 0.1), seed=11,
                               n_hist=6)
        details.append(f"2d p={p}: rho={rho:.3f}")
        assert 0.25 < rho < 0.35, f"2d p={p}: rho={rho:.3f}"
    report("criterion 4 (LRA density)", "; ".join(details))


def test_criterion_5_abad_comparison():
    """Random-graph LRA density within 25% of the coalescence closed form
    at gamma in {10, 20, 100}, N in {400, 900}, and insensitive to (p, f)."""
    n_hist = 16
    details = []
    baseline = {}
    for n in (400, 900):
        for g in (10, 20, 100):
            net = ys.make_erdos_renyi(n, g, seed=3)
            rho = mean_lra_density(net, ExchangeParams(0.5, 1.0), seed=11,
                                   n_hist=n_hist)
            ref = theory.abad_density(1.0, net.mean_degree)
            if n == 400:
                baseline[g] = rho
            details.append(f"N={n} g={g}: {rho / ref:.3f}x")
            assert abs(rho / ref - 1.0) <= 0.25, \
                f"N={n} gamma={g}: rho={rho:.4f} vs {ref:.4f}"
    for p, f in ((0.0, 0.1), (0.0, 0.6)):
        for g in (10, 100):
            net = ys.make_erdos_renyi(400, g, seed=3)
            rho = mean_lra_density(net, ExchangeParams(p, f), seed=11,
                                   n_hist=n_hist)
            change = abs(rho / baseline[g] - 1.0)
            details.append(f"(p={p},f={f}) g={g}: {change:.1%} shift")
            assert change < 0.25, \
                f"(p={p}, f={f}) gamma={g}: rho moved {change:.1%}"
    report("criterion 5 (coalescence density)", "; ".join(details))


def test_criterion_6_w2_vs_link_density():
    """W2 at freezing on random graphs grows linearly with link density,
    slope within a factor 2 of 1, R^2 >= 0.9."""
    details = []
    for p in (0.0, 0.45):
        xs, w2s = [], []
        for dl in (0.1, 0.2, 0.3, 0.45, 0.6, 0.75, 0.9):
            net = ys.make_erdos_renyi(200, dl * 199, seed=5)
            vals = []
            for h in range(6):
                res = run_until_frozen(net, ExchangeParams(p, 0.1), seed=13,
                                       check_every=4, max_sweeps=2_000_000,
                                       history=h)
                assert not res.capped
                vals.append(w2(res.state))
            xs.append(net.link_density)
            w2s.append(float(np.mean(vals)))
        coef, _, ssr = _ols(np.array(xs), np.array(w2s))
        slope = float(coef[1])
        r2 = 1.0 - ssr / float(np.sum((np.array(w2s) - np.mean(w2s)) ** 2))
        details.append(f"p={p}: slope={slope:.3f} R2={r2:.3f}")
        assert r2 >= 0.9, f"p={p}: R^2={r2:.3f}"
        assert 0.5 <= slope <= 2.0, f"p={p}: slope={slope:.3f}"
    report("criterion 6 (W2 vs link density)", "; ".join(details))


def quadratic_peak(times, trace, half_width=4):
    """Vertex of a local quadratic around the argmax of a flat-topped trace."""
    i = int(np.argmax(trace))
    lo, hi = max(i - half_width, 0), min(i + half_width + 1, trace.size)
    a, b, c = np.polyfit(times[lo:hi], trace[lo:hi], 2)
    if a >= 0:
        return float(times[i])
    return float(np.clip(-b / (2 * a), times[lo], times[hi - 1]))


def test_criterion_7_ranked_wealth_law():
    """Rank-R traces on the complete graph peak near t0 ln(R/(R-1)) with
    t0 fitted from the same ensemble's r(t) decay; rank 1 condenses."""
    net = ys.make_complete(400)
    params = ExchangeParams(0.425, 0.1)
    ranks = [1, 2, 3, 4]
    cadence = 250
    n_sweeps = 84_000
    observers = [Observer("ranked", lambda s: ranked_wealths(s, ranks),
                          cadence),
                 Observer("r", condensation_ratio, cadence)]
    traces, rvals = [], []
    for h in range(100):
        rec = run_history(net, params, n_sweeps, seed=21,
                          observers=observers, history=h)
        traces.append(rec.values["ranked"])
        rvals.append(rec.values["r"])
        times = np.array(rec.times["ranked"], dtype=float)
    mean_trace = np.mean(traces, axis=0)
    # geometric ensemble mean of r(t); exponential decay sets t0
    log_r = np.mean(np.log(np.asarray(rvals)), axis=0)
    mask = (log_r < np.log(0.5)) & (log_r > np.log(1e-3))
    coef, _, _ = _ols(times[mask], log_r[mask])
    t0 = -1.0 / float(coef[1])
    details = [f"t0={t0:.0f}"]
    for k, rank in enumerate(ranks):
        if rank == 1:
            continue
        t_peak = quadratic_peak(times, mean_trace[:, k])
        t_theory = theory.rank_peak_time(rank, t0)
        ratio = t_peak / t_theory
        details.append(f"R={rank}: {t_peak:.0f}/{t_theory:.0f}={ratio:.2f}")
        assert 0.8 <= ratio <= 1.2, \
            f"rank {rank}: peak {t_peak:.0f} vs {t_theory:.0f}"
    rank1_final = mean_trace[-1, 0] / 400.0
    details.append(f"rank1 final share={rank1_final:.4f}")
    assert rank1_final >= 0.99
    report("criterion 7 (ranked-wealth law)", "; ".join(details))


def test_criterion_8_property_suite():
    """Always-on invariants: conservation, LRA independence, W2 bounds,
    correlation normalization, the critical-line identity, and coalescence
    against a brute-force replay."""
    # conservation: 2.5k sweeps x 400 agents = 2e6 exchanges
    net = ys.make_ring(400)
    state = WealthState.even(400)
    run_sweeps(state, net, ExchangeParams(0.45, 0.3), 2_500, history_rng(1))
    drift = abs(state.total - 400.0) / 400.0
    assert drift <= 2e-9  # <= 1e-9 per 1e6 exchanges
    assert np.all(state.wealth >= 0.0)

    # LRA census yields independent sets, W2 stays in [1/N, 1]
    for h in range(5):
        res = run_until_frozen(ys.make_ring(100), ExchangeParams(0.3, 0.2),
                               seed=2, check_every=4, history=h)
        rep = find_lras(res.state, ys.make_ring(100))
        members = set(rep.lra_indices.tolist())
        for i in members:
            assert not members & {(i - 1) % 100, (i + 1) % 100}
        assert 0.01 - 1e-12 <= w2(res.state) <= 1.0 + 1e-12

    # c(0) = 1 on a measured correlation
    st2 = WealthState.even(100)
    rng = history_rng(4)
    run_sweeps(st2, ys.make_ring(100), ExchangeParams(0.7, 0.1), 1000, rng)
    est = measure_correlation(st2, ys.make_ring(100), ExchangeParams(0.7, 0.1),
                              rng, max_lag=20, t_window=100)
    assert est.c[0] == 1.0

    # theta vanishes on the critical line over a 1000-point f grid
    for f in np.linspace(1e-3, 1.0 - 1e-3, 1000):
        assert abs(theory.theta(theory.p_star(f), f)) < 1e-12

    # coalescence: positive-agent count non-increasing, kernel == replay
    cnet = ys.make_ring(50)
    cstate = WealthState.even(50)
    ref = cstate.wealth.copy()
    rng_k, rng_r = np.random.default_rng(6), np.random.default_rng(6)
    prev = 50
    for _ in range(40):
        run_sweeps(cstate, cnet, ExchangeParams(0.5, 1.0), 1, rng_k)
        reference_sweep(ref, cnet, 0.5, 1.0, rng_r)
        assert np.array_equal(cstate.wealth, ref)
        now = int(np.count_nonzero(ref > 0.0))
        assert 1 <= now <= prev
        prev = now
    report("criterion 8 (property suite)",
           f"drift={drift:.2e}; coalescence count {50}->{prev}")


def test_criterion_9_fitter_oracles():
    """Both fitters recover synthetic ground truth: noiseless to residual
    < 1e-10, and within the stated bands at 1-2% noise."""
    from yardsale.analysis import fit_exponential_decay
    from yardsale.observables import CorrelationEstimate

    taus = np.arange(301, dtype=float)
    exact = fit_exponential_decay(CorrelationEstimate(
        taus=taus, c=0.8 * np.exp(-taus / 50.0), t_window=0))
    assert exact.residual < 1e-10
    assert exact.params["tau0"] == pytest.approx(50.0, rel=1e-10)

    ps = np.arange(0.60, 0.901, 0.05)
    line = fit_critical_divergence([(p, 1.0 / (p - 0.525)) for p in ps])
    assert line.residual < 1e-10
    assert line.params["p_c"] == pytest.approx(0.525, abs=1e-6)
    assert line.params["z"] == pytest.approx(1.0, abs=1e-6)

    rng = np.random.default_rng(0)
    tau_errs, pc_errs = [], []
    for _ in range(20):
        c = 0.8 * np.exp(-taus / 50.0) * (1 + 0.01 * rng.standard_normal(301))
        tau_errs.append(fit_exponential_decay(CorrelationEstimate(
            taus=taus, c=c, t_window=0)).params["tau0"] - 50.0)
        grid = np.linspace(0.55, 0.80, 12)
        y = 3.0 * (grid - 0.525042) ** -1.15 \
            * (1 + 0.02 * rng.standard_normal(grid.size))
        pc_errs.append(fit_critical_divergence(list(zip(grid, y)),
                                               side="below").params["p_c"]
                       - 0.525042)
    assert np.median(np.abs(tau_errs)) < 2.0
    assert np.median(np.abs(pc_errs)) < 0.003
    report("criterion 9 (fitter oracles)",
           f"noiseless residuals {exact.residual:.1e}/{line.residual:.1e}; "
           f"median noisy errors {np.median(np.abs(tau_errs)):.2f}/"
           f"{np.median(np.abs(pc_errs)):.4f}")
