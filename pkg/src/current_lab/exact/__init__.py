"""Exact small-graph engines: spin sums and collapsed current sums."""

from .checks import (
    ExactModel,
    Relation,
    coarse_switching_sides,
    current_state_sum,
    has_subcurrent,
    is_pairable,
    lebowitz,
    ursell4_exact,
    verify_connectivity_identities,
    verify_disentangling,
    verify_normalization,
    verify_orgaf,
    verify_prop2b,
    verify_simon,
    verify_switching,
    verify_tree_bound,
)
from .currents import ParityError, SizeLimitError, TraceSpace, collapsed_state_sum, integer_current_sum
from .spins import SpinOracle, spin_correlation_bruteforce

__all__ = [
    "ExactModel", "ParityError", "Relation", "SizeLimitError", "SpinOracle", "TraceSpace",
    "coarse_switching_sides", "collapsed_state_sum", "current_state_sum", "has_subcurrent",
    "integer_current_sum", "is_pairable", "lebowitz", "spin_correlation_bruteforce",
    "ursell4_exact", "verify_connectivity_identities", "verify_disentangling",
    "verify_normalization", "verify_orgaf", "verify_prop2b", "verify_simon",
    "verify_switching", "verify_tree_bound",
]
