"""Myopic sensing over independent, identical Gilbert-Elliot channels."""
from .channel import ChannelParams, Correlation, j_step_prob, step_channel, tau, update_belief
from .dp import counterexample_search, myopic_value, one_step_deviation_check, optimal_value
from .monte_carlo import SimConfig, SimResult, simulate, tp_statistics
from .policy import argmax_myopic, initial_order, last_visit_policy, run_policy, structural_next
from .steady_state import (
    bounds_throughput,
    build_ordered_chain,
    closed_form_throughput_n2,
    rate_check,
    throughput_exact,
    tp_chain,
    tp_throughput,
)

__version__ = "0.1.0"
