"""Decentralized generalized approximate message passing over tree networks,
with matching scalar state evolution and an experiment harness."""

from .channel import (Channel, MeasurementInstance, SignalPrior,
                      apply_channel, sample_instance, sample_matrix,
                      sample_signal)
from .denoiser import (InnerDenoiser, OuterDenoiser, bayes_denoisers, f_in,
                       f_in_prime, f_in_second_moment, f_out_clip,
                       f_out_linear, f_out_prime, inverse_mills,
                       posterior_z_oracle)
from .errors import (ConfigInvalid, CycleDetected, DgampError,
                     DimensionMismatch, Disconnected, DivergenceError,
                     DuplicateEdge, GampRuntimeError, InvalidDensity,
                     InvalidThreshold, NoConvergence, NonPositiveSigma2,
                     NonPositiveVariance, QuadratureNonConvergence,
                     QuadratureToleranceExceeded, SelfLoop, TopologyError,
                     ZeroXiOut)
from .gamp import (ConsensusBuffers, NodeState, Schedule, Trajectory,
                   consensus_exchange, inner_step, outer_step, run_centralized,
                   run_dgamp, run_naive)
from .harness import (ExperimentConfig, compare_se, load_configs, main,
                      presets, run, run_se, run_trial, write_csv)
from .network import (EdgeStore, TreeNetwork, chain, cp_aggregate, cp_sweep,
                      load_topology, random_tree, tree8, validate_tree)
from .se import (SeTrajectory, fixed_point, inner_moments, outer_moments,
                 se_centralized, se_consensus, se_dgamp, se_naive)

__version__ = "0.1.0"

__all__ = [
    "Channel", "MeasurementInstance", "SignalPrior", "apply_channel",
    "sample_instance", "sample_matrix", "sample_signal",
    "InnerDenoiser", "OuterDenoiser", "bayes_denoisers", "f_in",
    "f_in_prime", "f_in_second_moment", "f_out_clip", "f_out_linear",
    "f_out_prime", "inverse_mills", "posterior_z_oracle",
    "ConfigInvalid", "CycleDetected", "DgampError", "DimensionMismatch",
    "Disconnected", "DivergenceError", "DuplicateEdge", "GampRuntimeError",
    "InvalidDensity", "InvalidThreshold", "NoConvergence",
    "NonPositiveSigma2", "NonPositiveVariance", "QuadratureNonConvergence",
    "QuadratureToleranceExceeded", "SelfLoop", "TopologyError", "ZeroXiOut",
    "ConsensusBuffers", "NodeState", "Schedule", "Trajectory",
    "consensus_exchange", "inner_step", "outer_step", "run_centralized",
    "run_dgamp", "run_naive",
    "ExperimentConfig", "compare_se", "load_configs", "main", "presets",
    "run", "run_se", "run_trial", "write_csv",
    "EdgeStore", "TreeNetwork", "chain", "cp_aggregate", "cp_sweep",
    "load_topology", "random_tree", "tree8", "validate_tree",
    "SeTrajectory", "fixed_point", "inner_moments", "outer_moments",
    "se_centralized", "se_consensus", "se_dgamp", "se_naive",
]
