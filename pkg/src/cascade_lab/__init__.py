"""Threshold cascades on networks.

Deterministic fragility models, mean-field phase diagrams, stochastic
failure and recovery, and Eisenberg-Noe clearing, plus a small CLI for
running configured experiments.
"""

from .clearing import ClearingResult, FinancialSystem, fictitious_default, validate_system
from .meanfield import Method, ThresholdDistribution, phase_diagram
from .models import ModelSpec
from .network import (
    CascadeDidNotTerminate, CascadeTrace, Network, NodeState, build_network, run_cascade,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeDidNotTerminate", "CascadeTrace", "ClearingResult", "FinancialSystem", "Method",
    "ModelSpec", "Network", "NodeState", "ThresholdDistribution", "build_network",
    "fictitious_default", "phase_diagram", "run_cascade", "validate_system",
]
