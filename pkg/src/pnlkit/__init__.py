"""Removal of unknown per-channel distortions from post-nonlinear mixtures.

The central object is a tall linear mixture pushed through an invertible
scalar nonlinearity on every output channel. Because the mixing matrix is
tall, its transpose has a nontrivial null space; forcing the projection
of learned per-channel features onto a candidate null basis to vanish
recovers the inverse distortions up to affine maps. The package bundles
the synthetic generative model, the alternating trainer, rank-based
identifiability diagnostics, evaluation metrics, and experiment drivers.
"""

__version__ = "0.1.0"

from .errors import (BasisDensityWarning, DegenerateSpectrumWarning,
                     DomainError, NumericFailure, PnlError, ValidationError)
from .model import (LatentSpec, MixtureDataset, Nonlinearity, PnlModel,
                    generate, identity_nonlinearity, sample_model)
from .nets import (AdamState, ChannelNet, adam_step, backward, forward,
                   forward_batch, identity_net, init_net)
from .trainer import (NullBasis, TrainConfig, TrainResult, TrainTrace,
                      loss, train, update_q)
from .identifiability import (BoundInputs, IdentReport, build_b_matrix,
                              check_condition, finite_sample_bound,
                              khatri_rao, kruskal_rank, rademacher_bound,
                              verify_rank)
from .metrics import (AffineFitResult, SubspaceDistanceResult, affine_fit,
                      subspace_distance)

__all__ = [
    "AdamState", "AffineFitResult", "BasisDensityWarning", "BoundInputs",
    "ChannelNet", "DegenerateSpectrumWarning", "DomainError", "IdentReport",
    "LatentSpec", "MixtureDataset", "Nonlinearity", "NullBasis",
    "NumericFailure", "PnlError", "PnlModel", "SubspaceDistanceResult",
    "TrainConfig", "TrainResult", "TrainTrace", "ValidationError",
    "adam_step", "affine_fit", "backward", "build_b_matrix",
    "check_condition", "finite_sample_bound", "forward", "forward_batch",
    "generate", "identity_net", "identity_nonlinearity", "init_net",
    "khatri_rao", "kruskal_rank", "loss", "rademacher_bound", "sample_model",
    "subspace_distance", "train", "update_q", "verify_rank",
]
