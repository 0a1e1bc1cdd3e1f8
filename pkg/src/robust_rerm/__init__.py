"""Robust regularized ERM and minmax median-of-means estimation."""
from ._accel import BACKEND
from .datagen import (BlockPartition, Dataset, DesignSpec, NoiseSpec, contaminate,
                      make_regression_dataset, make_rng, partition_blocks)
from .losses import DomainError, LossSpec, empirical_risk, lipschitz_constant, loss_eval, loss_subgradient
from .penalties import PenaltySpec, penalty_eval, penalty_prox
from .rkhs import KernelModel, KernelSpec, gram_matrix, predict_kernel, rkhs_norm_sq
from .solvers import (LepskiState, Model, SolverConfig, SolverError, fit_mom_minmax, fit_rerm,
                      lepski_select, mom_of_increments)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlockPartition", "Dataset", "DesignSpec", "DomainError", "KernelModel", "KernelSpec",
    "LepskiState", "LossSpec", "Model", "NoiseSpec", "PenaltySpec", "SolverConfig", "SolverError",
    "contaminate", "empirical_risk", "fit_mom_minmax", "fit_rerm", "gram_matrix", "lepski_select",
    "lipschitz_constant", "loss_eval", "loss_subgradient", "make_regression_dataset", "make_rng",
    "mom_of_increments", "partition_blocks", "penalty_eval", "penalty_prox", "predict_kernel",
    "rkhs_norm_sq",
]
