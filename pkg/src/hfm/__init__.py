"""Hyperbolic flow matching on the Lorentz model.

Submodules: :mod:`~hfm.lorentz` (manifold primitives), :mod:`~hfm.alignment`
(prototype/feature alignment), :mod:`~hfm.velocity` (the velocity network),
:mod:`~hfm.training`, :mod:`~hfm.inference`, :mod:`~hfm.data`,
:mod:`~hfm.diagnostics` and :mod:`~hfm.experiment`.

Set ``HFM_DISABLE_NUMBA=1`` to run every kernel through its numpy path.
"""
from .alignment import AlignedEmbedding, AlignmentConfig, StratificationScales, run_alignment
from .config import ConfigError, ExperimentConfig, load_config
from .data import FeatureDataset, SyntheticConfig, generate_synthetic, read_feature_file, split_k_shot, write_feature_file
from .errors import DegenerateInputError, FeatureFormatError, HFMError, InvalidArgumentError, TrainingFailure
from .experiment import run_experiment
from .inference import Trajectory, classify, euler_step, semantic_diameter, stopping_threshold, transport_with_stopping
from .prototypes import PrototypeSet
from .training import FlowTrainConfig, train_euclidean_baseline, train_flow
from .velocity import VelocityNetParams

__version__ = "0.1.0"

__all__ = [
    "AlignedEmbedding", "AlignmentConfig", "ConfigError", "DegenerateInputError", "ExperimentConfig",
    "FeatureDataset", "FeatureFormatError", "FlowTrainConfig", "HFMError", "InvalidArgumentError",
    "PrototypeSet", "StratificationScales", "SyntheticConfig", "Trajectory", "TrainingFailure",
    "VelocityNetParams", "classify", "euler_step", "generate_synthetic", "load_config", "read_feature_file",
    "run_alignment", "run_experiment", "semantic_diameter", "split_k_shot", "stopping_threshold",
    "train_euclidean_baseline", "train_flow", "transport_with_stopping", "write_feature_file",
]
