"""Performance-modeling toolkit for speculative-decoding offloaded inference."""

__version__ = "0.1.0"

from .acceptance import AcceptanceModel, expected_accepted, pmf, sample_accepted
from .costmodel import CostBreakdown, evaluate
from .errors import SpecPipeError
from .estimator import ThroughputEstimator
from .planner import RankedPolicies, SearchSpace, ablation_report, calibrate, search
from .presets import preset, preset_names
from .simulator import SimEvent, SimResult, export_trace, simulate_decoding, simulate_prefill
from .types import HardwareProfile, ModelSpec, Policy, Workload, validate_profile

__all__ = [
    "AcceptanceModel",
    "CostBreakdown",
    "HardwareProfile",
    "ModelSpec",
    "Policy",
    "RankedPolicies",
    "SearchSpace",
    "SimEvent",
    "SimResult",
    "SpecPipeError",
    "ThroughputEstimator",
    "Workload",
    "ablation_report",
    "calibrate",
    "evaluate",
    "expected_accepted",
    "export_trace",
    "pmf",
    "preset",
    "preset_names",
    "sample_accepted",
    "search",
    "simulate_decoding",
    "simulate_prefill",
    "validate_profile",
]
