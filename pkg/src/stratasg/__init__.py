"""Two-type population model with selection, pairwise interaction and
mutation: ODE, Moran model and genealogical dual processes."""

from .params import ModelParams, ParameterError, drift, critical_rates, sigma
from .ode import equilibria, integrate, long_term_limit, uniqueness_criterion, y_at
from .wtt import DELTA, PITCHSTAR, format_wtt, hs_exact, parse_wtt
from .easg import MarkedTree, grow_easg, h_exact, mc_duality_easg, propagate_types
from .pruning import haircut, prune_step, regions, stratify, total_pruning
from .sasg import (apply_beneficial, apply_branch, apply_deleterious, apply_ternary,
                   catalan_series, estimate_w1_d1, mc_duality_sasg, simulate_sasg)
from .ancestral import g_asymptotic, g_closed, g_equilibrium, g_quadrature, mc_ancestral
from .moran import MoranState, lln_gap, simulate as simulate_moran, transition_rates

__version__ = "0.1.0"
