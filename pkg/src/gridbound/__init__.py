"""Chance-constrained locational bid bounds for energy storage.

A power-market simulation toolkit: DC economic dispatch (hindsight,
single-period, and chance-constrained variants) with full dual extraction,
storage bid caps derived from stored-energy duals or risk-aware nodal
prices, stochastic-DP bidding agents, and an agent-based day-ahead /
real-time market experiment with property verifiers.
"""

from .agent import (BidCurve, ValueFunction, WithholdingProfile, bids_from_value,
                    realize_dispatch, solve_value_function, withholding_sigma)
from .bounds import (BidBounds, bid_bounds_table, bounds_from_ced, bounds_from_lmp,
                     cap_bids, deterministic_bounds_table, deterministic_default_bound,
                     write_bounds_csv)
from .dispatch import (DispatchProblem, DispatchSolution, DualBundle, build_ced,
                       build_oed, build_sed, compute_lmp, export_lp,
                       hindsight_marginal_cost, resolve_complementarity, solve)
from .grid import (Bus, CostFunction, Generator, Line, Network, Storage,
                   compute_ptdf, discrete_second_derivative, load_network,
                   save_network, validate_network)
from .sim import (AgentSpec, ExperimentConfig, MetricsReport, TrialRecord,
                  clear_day_ahead, generate_scenarios, load_config, run_experiment,
                  run_realtime_day, verify_coverage, verify_monotonicity)
from .uncertainty import (Empirical, Gaussian, NetloadForecast, Robust, ScenarioSet,
                          UncertaintyModel, Versatile, empirical_quantile,
                          fit_versatile, inverse_cdf, load_forecast_csv,
                          load_samples_csv, parse_model, sample_netload)

__version__ = "0.1.0"
