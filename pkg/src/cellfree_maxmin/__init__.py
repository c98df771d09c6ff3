"""Joint DL-UL max-min beamforming for cell-free massive MIMO.

Library plus CLI simulator: seeded scenario generation, exact link metrics,
the alternating BS/UE convex-approximation updates under ideal or pilot-
trained CSI, and a Monte Carlo harness with overhead-aware effective rates.
"""

from .config import SimConfig, SolverParams, TrainingParams, load_config
from .metrics import (BeamformerSet, RateSummary, SinrTable, compute_rates,
                      compute_sinr, effective_rate, power_audit)
from .orchestrator import (ALL_SCHEMES, MonteCarloResult, RunResult, emit_csv,
                           monte_carlo, run_scheme, run_separate)
from .scenario import (ChannelSet, NetworkGeometry, ScenarioConfig, draw_channels,
                       generate_geometry, pathloss_linear)
from .training import (OverheadModel, PilotBook, PilotObservations,
                       default_overhead_model, dl_pilot_phase, ls_estimate,
                       make_pilots, overhead_slots, ul_pilot_phase)

__all__ = [
    "ALL_SCHEMES", "BeamformerSet", "ChannelSet", "MonteCarloResult",
    "NetworkGeometry", "OverheadModel", "PilotBook", "PilotObservations",
    "RateSummary", "RunResult", "ScenarioConfig", "SimConfig", "SinrTable",
    "SolverParams", "TrainingParams", "compute_rates", "compute_sinr",
    "default_overhead_model", "dl_pilot_phase", "draw_channels", "effective_rate",
    "emit_csv", "generate_geometry", "load_config", "ls_estimate", "make_pilots",
    "monte_carlo", "overhead_slots", "pathloss_linear", "power_audit",
    "run_scheme", "run_separate", "ul_pilot_phase",
]

__version__ = "0.1.0"
