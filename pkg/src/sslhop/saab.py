"""Single Saab transform: a constant DC kernel plus PCA kernels of the DC-removed residuals."""
from dataclasses import dataclass

import numpy as np

from .errors import SSLError
from .kernels import lex_order
from .linalg import as_patch_matrix, covariance, project, sym_eig

RANK_EPSILON = 1e-9
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True, eq=False)
class SaabKernels:
    """Kernels and energies of one fitted unit.

    ``ac_kernels`` is a ``(k, dim)`` array, one unit-norm kernel per row in
    descending energy order. ``energies[0]`` belongs to the DC kernel.
    """

    dim: int
    dc_kernel: np.ndarray
    ac_kernels: np.ndarray
    residual_mean: np.ndarray
    energies: np.ndarray

    @property
    def n_kernels(self):
        return 1 + self.ac_kernels.shape[0]


def dc_kernel(dim):
    return np.full(dim, 1.0 / np.sqrt(dim))


def canonical_order(x):
    """Lexicographic row order; makes fitting independent of patch order."""
    return lex_order(x)


def _noise_floor(x):
    # variance level produced by rounding alone when removing the DC part
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    return (8.0 * x.shape[1] * _EPS * scale) ** 2


def fit_saab(patches):
    x = as_patch_matrix(patches)
    n, dim = x.shape
    if dim == 0:
        raise SSLError("empty patch")
    if n < 2:
        raise SSLError("insufficient samples")
    x = x[canonical_order(x)]
    floor = _noise_floor(x)

    dc = dc_kernel(dim)
    dc_resp = x @ dc
    residuals = x - np.outer(dc_resp, dc)
    residual_mean, cov = covariance(residuals)
    eig = sym_eig(cov)

    top = eig.eigenvalues[0] if dim > 1 else 0.0
    if top > floor:
        keep = eig.eigenvalues > RANK_EPSILON * top
        keep[dim - 1 :] = False
    else:
        keep = np.zeros(dim, dtype=bool)
    ac = np.ascontiguousarray(eig.eigenvectors[:, keep].T)

    dc_energy = float(np.var(dc_resp, ddof=1))
    if dc_energy <= floor:
        dc_energy = 0.0
    energies = np.concatenate([[dc_energy], np.maximum(eig.eigenvalues[keep], 0.0)])
    return SaabKernels(dim, dc, ac, residual_mean, energies)


def apply_saab(patches, kernels, keep):
    """Responses of ``patches`` on the selected channels (0 = DC, k = AC kernel k-1)."""
    x = as_patch_matrix(patches)
    if x.shape[1] != kernels.dim:
        raise SSLError("shape mismatch")
    keep = [int(k) for k in keep]
    for k in keep:
        if not 0 <= k < kernels.n_kernels:
            raise SSLError("unknown channel")
    out = np.empty((x.shape[0], len(keep)))
    if not keep:
        return out
    ac_cols = [j for j, k in enumerate(keep) if k > 0]
    dc_cols = [j for j, k in enumerate(keep) if k == 0]
    if ac_cols:
        basis = kernels.ac_kernels[[keep[j] - 1 for j in ac_cols]]
        out[:, ac_cols] = project(x, basis, kernels.residual_mean)
    if dc_cols:
        out[:, dc_cols] = (x @ kernels.dc_kernel)[:, None]
    return out


def energy_ratios(kernels):
    energies = np.asarray(kernels.energies if isinstance(kernels, SaabKernels) else kernels, dtype=np.float64)
    total = energies.sum()
    if not total > 0:
        raise SSLError("degenerate unit")
    return energies / total
