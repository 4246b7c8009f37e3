"""Network-optimised spiking (NOS) units: node model, graph coupling,
stochastic drive, stability and bifurcation analysis, network simulation,
queueing baselines, forecasting evaluation and spike statistics."""

__version__ = "0.1.0"

from .model import NodeParams, ResetSpec, ThresholdSpec
from .graph import CouplingGraph, LinkGateSpec
from .drive import Amplitude, DriveSpec
from .simulator import SimConfig, run_simulation

__all__ = [
    "Amplitude",
    "CouplingGraph",
    "DriveSpec",
    "LinkGateSpec",
    "NodeParams",
    "ResetSpec",
    "SimConfig",
    "ThresholdSpec",
    "run_simulation",
]
