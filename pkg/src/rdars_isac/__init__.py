"""RDARS-aided integrated sensing and communication: simulator and optimizer."""

from .channel import ChannelSet, RdarsState, assemble_composites, synthesize_channels
from .metrics import Beamformer, radar_snr, user_sinr
from .optimizer import JointSolution, OptimizerOptions, run_joint_optimization
from .scenario import SystemConfig, default_config, derive_geometry, desk_config, load_config
from .schemes import SCHEMES, apply_scheme, get_scheme

__all__ = [
    "ChannelSet", "RdarsState", "assemble_composites", "synthesize_channels",
    "Beamformer", "radar_snr", "user_sinr",
    "JointSolution", "OptimizerOptions", "run_joint_optimization",
    "SystemConfig", "default_config", "derive_geometry", "desk_config", "load_config",
    "SCHEMES", "apply_scheme", "get_scheme",
]

__version__ = "0.1.0"
