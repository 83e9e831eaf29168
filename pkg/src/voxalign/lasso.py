"""L1-penalized regression by cyclic coordinate descent, and the
feature-to-voxel back-projection built on it.

The solver minimizes ``(1/2n) ||y - X b||^2 + lam ||b||_1`` on internally
standardized columns (zero mean, unit population variance), where each
coordinate update is an exact soft-threshold step. Iteration stops when
the largest coordinate change in a sweep falls below 1e-8 or after 10000
sweeps; non-convergence is reported in the result, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._arrays import as_matrix, as_vector
from .data import RegionMask
from .errors import DegenerateInput, ShapeMismatch

MAX_SWEEPS = 10_000
TOLERANCE = 1e-8


@dataclass(frozen=True)
class LassoResult:
    """Coordinate-descent solution.

    ``beta`` is expressed against the original columns; ``beta_std``
    against the standardized ones (the scale in which the KKT conditions
    hold). ``converged`` is False when the sweep budget ran out.
    """

    beta: np.ndarray
    beta_std: np.ndarray
    intercept: float
    converged: bool
    sweeps: int
    lam: float


def _standardize(x: np.ndarray):
    means = x.mean(axis=0)
    centered = x - means
    scales = np.sqrt((centered * centered).mean(axis=0))
    flat = np.where(scales == 0.0)[0]
    if flat.size:
        raise DegenerateInput(f"predictor column {int(flat[0])} is constant")
    return centered / scales, means, scales


def soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lasso_fit(x, y, lam: float) -> LassoResult:
    """Fit one lasso problem; see module docstring for the exact objective."""
    xm = as_matrix(x, "X")
    yv = as_vector(y, "y")
    n, p = xm.shape
    if yv.shape[0] != n:
        raise ShapeMismatch(f"X has {n} rows, y has {yv.shape[0]}")
    if n < 2:
        raise DegenerateInput("lasso_fit requires at least 2 samples")
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError("lam must be positive")

    x_std, means, scales = _standardize(xm)
    y_mean = yv.mean()
    y_centered = yv - y_mean

    # Covariance-form updates: with unit-variance columns the coordinate
    # update is beta_j <- soft(c_j - (G beta)_j + beta_j, lam).
    c = x_std.T @ y_centered / n
    gram = x_std.T @ x_std / n
    beta = np.zeros(p)
    gram_beta = np.zeros(p)

    sweeps = 0
    converged = False
    while sweeps < MAX_SWEEPS:
        sweeps += 1
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            rho = c[j] - gram_beta[j] + gram[j, j] * old
            new = soft_threshold(rho, lam) / gram[j, j]
            if new != old:
                beta[j] = new
                gram_beta += (new - old) * gram[:, j]
                max_change = max(max_change, abs(new - old))
        if max_change < TOLERANCE:
            converged = True
            break

    beta_original = beta / scales
    intercept = float(y_mean - means @ beta_original)
    return LassoResult(
        beta=beta_original,
        beta_std=beta.copy(),
        intercept=intercept,
        converged=converged,
        sweeps=sweeps,
        lam=lam,
    )


def kkt_violation(x, y, result: LassoResult) -> float:
    """Largest KKT residual of a solution, in the standardized problem.

    Active coordinates must satisfy ``x_j^T r / n = lam * sign(beta_j)``;
    inactive ones ``|x_j^T r / n| <= lam``. Returns the worst violation.
    """
    xm = as_matrix(x, "X")
    yv = as_vector(y, "y")
    x_std, _, _ = _standardize(xm)
    y_centered = yv - yv.mean()
    residual = y_centered - x_std @ result.beta_std
    grad = x_std.T @ residual / xm.shape[0]
    worst = 0.0
    for j in range(xm.shape[1]):
        if result.beta_std[j] != 0.0:
            worst = max(worst, abs(grad[j] - result.lam * np.sign(result.beta_std[j])))
        else:
            worst = max(worst, max(0.0, abs(grad[j]) - result.lam))
    return float(worst)


@dataclass(frozen=True)
class BackprojectResult:
    """Per-voxel predictive weight of a feature set, aggregated by region."""

    per_voxel_mean_abs_beta: np.ndarray
    region_means: dict
    n_unconverged: int


def backproject(features, voxels, mask: RegionMask, lam: float) -> BackprojectResult:
    """Map branch features back to voxel space with one lasso per feature dim.

    Every feature dimension is regressed on the voxels (features as
    responses, voxels as predictors); the absolute coefficients are
    averaged over feature dimensions per voxel and then averaged within
    the low-level and high-level regions.
    """
    f = as_matrix(features, "features")
    v = as_matrix(voxels, "voxels")
    if f.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"features have {f.shape[0]} rows, voxels {v.shape[0]}")
    if v.shape[1] != mask.n_detail:
        raise ShapeMismatch(
            f"voxels have {v.shape[1]} columns, mask lists {mask.n_detail}"
        )
    abs_sum = np.zeros(v.shape[1])
    n_unconverged = 0
    for k in range(f.shape[1]):
        try:
            result = lasso_fit(v, f[:, k], lam)
        except DegenerateInput as exc:
            raise DegenerateInput(f"feature dimension {k}: {exc}") from exc
        abs_sum += np.abs(result.beta)
        if not result.converged:
            n_unconverged += 1
    per_voxel = abs_sum / f.shape[1]
    region_means = {
        "low_level": float(per_voxel[mask.low_indices].mean()) if mask.n_low else 0.0,
        "high_level": float(per_voxel[mask.high_indices].mean()),
    }
    return BackprojectResult(per_voxel, region_means, n_unconverged)
