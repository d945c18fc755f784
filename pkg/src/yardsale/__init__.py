"""Yard-Sale wealth exchange on networks.

Monte Carlo engine, closed-form reference results, observables, fitters,
and experiment drivers for the conservative multiplicative exchange model
with stable (wealth-sharing) and unstable (wealth-appropriation) phases.
"""

from .networks import (Network, make_complete, make_erdos_renyi, make_ring,
                       make_square_lattice)
from .engine import (ExchangeParams, WealthState, exchange_pair, run_history,
                     run_until_condensed, run_until_frozen, sweep)
from .theory import (abad_density, condensation_time_mf, p_star,
                     rank_peak_time, ranked_wealth, theta)
from .observables import (condensation_ratio, find_lras, is_frozen,
                          ranked_wealths, w2, wealth_histogram)
from .analysis import fit_critical_divergence, fit_exponential_decay

__version__ = "0.1.0"
