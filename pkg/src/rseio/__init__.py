"""Robust state estimation with intermittent observations.

Estimator, pseudo-covariance recursion, convergence diagnostics and a
Monte Carlo harness for uncertain linear plants observed over a lossy
channel.
"""

from .analysis import (
    DropoutPattern,
    HamiltonianClass,
    build_Cn,
    build_Ob,
    classify_hamiltonian,
    sufficient_conditions,
    estimate_contraction,
    estimate_expected_log_lipschitz,
    product_membership,
    rank_full,
    riemannian_distance,
)
from .channel import ArrivalSequence, Bernoulli, Markov, log_sequence_probability, sample_sequence
from .errors import (
    ConfigError,
    DomainError,
    NumericError,
    RseioError,
    SingularMatrixError,
    TransformUndefinedError,
    UnsupportedConfigError,
    UsageError,
)
from .estimator import (
    AdjustedMatrices,
    EstimatorKind,
    EstimatorState,
    adjust_matrices,
    kalman_step,
    rseio_step,
    run_filter,
)
from .pcm import (
    HamiltonianBlock,
    TildeMatrices,
    build_phi,
    homographic,
    riccati_step_augmented,
    pcm_via_product,
    tilde_matrices,
)
from .plant import PlantModel, SensitivityPair, benchmark_plant, sensitivity_matrices, simulate_truth
from .sim import SimConfig, SimReport, empirical_mse, epdf, run_experiment, stationarity_metric

__version__ = "0.1.0"
