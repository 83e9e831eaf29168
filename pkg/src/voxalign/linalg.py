"""Dense numeric kernels every other module builds on.

All operations are pure functions over float64 arrays; inputs are
validated and never mutated.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ._arrays import as_matrix, as_vector
from .errors import DegenerateInput, NumericalFailure, ShapeMismatch


def gram_linear(features) -> np.ndarray:
    """Linear-kernel Gram matrix ``K = F F^T`` with samples as rows.

    The result is symmetric positive semidefinite by construction.
    """
    f = as_matrix(features, "features")
    return f @ f.T


def apply_centering(kernel) -> np.ndarray:
    """Double-center a square kernel: ``H K H`` with ``H = I - (1/m) 11^T``.

    Computed by subtracting row means and column means and adding back the
    grand mean, which is O(m^2) and never materializes H. Row and column
    sums of the result vanish, and the map is idempotent.
    """
    k = as_matrix(kernel, "kernel")
    m = k.shape[0]
    if k.shape[1] != m:
        raise ShapeMismatch(f"kernel must be square, got shape {k.shape}")
    if m < 2:
        raise DegenerateInput("centering requires at least a 2x2 kernel")
    row_means = k.mean(axis=1, keepdims=True)
    col_means = k.mean(axis=0, keepdims=True)
    grand_mean = k.mean()
    return k - row_means - col_means + grand_mean


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length vectors, clipped to [-1, 1]."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ShapeMismatch(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    if xv.shape[0] < 2:
        raise DegenerateInput("pearson requires at least 2 samples")
    if np.all(xv == xv[0]):
        raise DegenerateInput("x has zero variance")
    if np.all(yv == yv[0]):
        raise DegenerateInput("y has zero variance")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    if ssx <= 0.0 or ssy <= 0.0:
        raise DegenerateInput("zero variance after centering")
    r = float(xc @ yc) / np.sqrt(ssx * ssy)
    return float(np.clip(r, -1.0, 1.0))


def fractional_ranks(x) -> np.ndarray:
    """Ranks starting at 1; tied values receive the average of their ranks."""
    xv = as_vector(x, "x")
    n = xv.shape[0]
    order = np.argsort(xv, kind="stable")
    sorted_x = xv[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson over fractional ranks."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ShapeMismatch(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    if xv.shape[0] < 2:
        raise DegenerateInput("spearman requires at least 2 samples")
    if np.all(xv == xv[0]) or np.all(yv == yv[0]):
        raise DegenerateInput("all-equal input has no rank ordering")
    return pearson(fractional_ranks(xv), fractional_ranks(yv))


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clipped to [-1, 1]."""
    uv = as_vector(u, "u")
    vv = as_vector(v, "v")
    if uv.shape[0] != vv.shape[0]:
        raise ShapeMismatch(f"length mismatch: {uv.shape[0]} vs {vv.shape[0]}")
    nu = float(np.linalg.norm(uv))
    nv = float(np.linalg.norm(vv))
    if nu == 0.0:
        raise DegenerateInput("u is a zero vector")
    if nv == 0.0:
        raise DegenerateInput("v is a zero vector")
    return float(np.clip(float(uv @ vv) / (nu * nv), -1.0, 1.0))


def ridge_solve(x, y, lam: float) -> np.ndarray:
    """Ridge regression weights minimizing ``||XW - Y||^2 + lam ||W||^2``.

    Solved through a Cholesky factorization of ``X^T X + lam I``; a
    factorization failure (matrix not positive definite after
    regularization) raises :class:`NumericalFailure`.
    """
    xm = as_matrix(x, "X")
    ym = as_matrix(y, "Y")
    if xm.shape[0] != ym.shape[0]:
        raise ShapeMismatch(f"row mismatch: X has {xm.shape[0]}, Y has {ym.shape[0]}")
    lam = float(lam)
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    p = xm.shape[1]
    gram = xm.T @ xm
    if lam > 0.0:
        gram = gram + lam * np.eye(p)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Cholesky factorization failed: {exc}") from exc
    return scipy.linalg.cho_solve(factor, xm.T @ ym, check_finite=False)
