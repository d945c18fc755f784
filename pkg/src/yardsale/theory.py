"""Closed-form reference results for the Yard-Sale model.

Pure functions used as oracles by the tests and as overlays in driver
output: the instability rate, the critical line, the ranked-wealth law in
the full-mixture unstable phase, and the Bethe-lattice coalescence
density used to predict the number of locally rich agents.
"""

from __future__ import annotations

import math

__all__ = [
    "theta",
    "p_star",
    "ranked_wealth",
    "rank_peak_time",
    "condensation_time_mf",
    "abad_density",
]


def theta(p: float, f: float) -> float:
    """Instability rate -[p ln(1+f) + (1-p) ln(1-f)].

    Positive in the wealth-appropriation (unstable) phase, negative in the
    wealth-sharing (stable) phase.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if not 0.0 < f < 1.0:
        raise ValueError(f"f must be in (0, 1), got {f}")
    return -(p * math.log1p(f) + (1.0 - p) * math.log1p(-f))


def p_star(f: float) -> float:
    """Critical win probability: theta(p_star(f), f) == 0."""
    if not 0.0 < f < 1.0:
        raise ValueError(f"f must be in (0, 1), got {f}")
    la = math.log1p(f)
    lb = math.log1p(-f)
    return lb / (lb - la)


def ranked_wealth(rank: int, t: float, theta_rate: float, n: int,
                  w_total: float = 1.0) -> float:
    """Typical wealth of the rank-R agent at time t in the unstable phase.

    Exponential in rank; valid at long times once ranks have stopped
    changing. The normalization is approximate at finite N, so only
    limits and monotonicity are guaranteed, not an exact sum.
    """
    if theta_rate <= 0.0:
        raise ValueError("ranked_wealth requires theta > 0 (unstable phase)")
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, {n}], got {rank}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return w_total / n
    x = t * theta_rate
    # expm1 keeps the prefactor accurate for small x
    prefactor = math.expm1(-x / n) / math.expm1(-x)
    return w_total * prefactor * math.exp(-x * (rank - 1) / (n - 1))


def rank_peak_time(rank: int, t0: float) -> float:
    """Time at which the rank-R trace peaks before going bankrupt: t0 ln(R/(R-1))."""
    if rank < 2:
        raise ValueError("rank 1 never peaks; rank must be >= 2")
    return t0 * math.log(rank / (rank - 1.0))


def condensation_time_mf(n: int, theta_rate: float) -> float:
    """Full-mixture condensation timescale N/theta."""
    if theta_rate <= 0.0:
        raise ValueError("condensation time requires theta > 0")
    return n / theta_rate


def abad_density(rho0: float, gamma: float) -> float:
    """Final active-site density for coalescence of immobile reactants.

    Bethe-lattice closed form; gamma = 2 is evaluated as its analytic
    limit rho0 * exp(-rho0).
    """
    if not 0.0 < rho0 <= 1.0:
        raise ValueError(f"rho0 must be in (0, 1], got {rho0}")
    if gamma < 2.0:
        raise ValueError(f"gamma must be >= 2, got {gamma}")
    if math.isclose(gamma, 2.0, rel_tol=0.0, abs_tol=1e-12):
        return rho0 * math.exp(-rho0)
    return rho0 * (1.0 + 0.5 * (gamma - 2.0) * rho0) ** (-gamma / (gamma - 2.0))
