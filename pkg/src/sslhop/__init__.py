"""Successive subspace learning: PixelHop++ feature trees with a least-squares head."""
__version__ = "0.1.0"

from .errors import SSLError
from .kernels import BACKEND
from .linalg import SymEigResult, covariance, project, sym_eig
from .llsr import LLSRModel, fit_llsr, predict, predict_batch
from .pixelhop import (ChannelNode, HopConfig, HopTree, HopUnit, Status, describe, extract_patches, fit_hoptree, max_pool,
                       receptive_fields, transform, transform_batch)
from .saab import SaabKernels, apply_saab, energy_ratios, fit_saab

__all__ = [
    "BACKEND", "ChannelNode", "HopConfig", "HopTree", "HopUnit", "LLSRModel", "SSLError",
    "SaabKernels", "Status", "SymEigResult", "apply_saab", "covariance", "describe",
    "energy_ratios", "extract_patches", "fit_hoptree", "max_pool", "fit_llsr", "fit_saab", "predict", "predict_batch",
    "project", "receptive_fields", "sym_eig", "transform", "transform_batch",
]
