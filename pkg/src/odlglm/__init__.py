"""Online debiased lasso for high-dimensional GLMs on streaming batches."""

from .batch import Batch, read_batches, write_batches
from .engine import EngineConfig, OnlineDebiasedLasso, initial_lambda, select_lambda
from .errors import (BatchFormatError, DegenerateProjection, DimensionError, DomainError,
                     ODLError, SchemaError, SnapshotError, SolverDivergence)
from .family import (BERNOULLI, GAUSSIAN, POISSON, Family, FamilyKind, batch_information,
                     batch_score, get_family, link_derivative, link_mean)
from .inference import InferenceRecord, VarianceMode
from .offline import irls_mle, offline_debiased, offline_lasso
from .prox import ProxConfig, prox_solve, soft_threshold

__all__ = [
    "BERNOULLI", "GAUSSIAN", "POISSON", "Batch", "BatchFormatError", "DegenerateProjection",
    "DimensionError", "DomainError", "EngineConfig", "Family", "FamilyKind",
    "InferenceRecord", "ODLError", "OnlineDebiasedLasso", "ProxConfig", "SchemaError",
    "SnapshotError", "SolverDivergence", "VarianceMode", "batch_information", "batch_score",
    "get_family", "initial_lambda", "irls_mle", "link_derivative", "link_mean",
    "offline_debiased", "offline_lasso", "prox_solve", "read_batches", "select_lambda",
    "soft_threshold", "write_batches",
]
