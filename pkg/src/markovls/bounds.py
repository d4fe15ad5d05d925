"""Finite-sample bound constants and variance comparison quantities."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError
from .estimators import WeightingOperator

__all__ = [
    "BoundInputs",
    "BoundReport",
    "ols_bound_constants",
    "wls_bound_constants",
    "error_bound",
    "evaluate_bounds",
    "variance_gap",
]

# Largest vectorized parameter dimension for which variance matrices are
# formed densely; beyond this the request is refused instead of approximated.
VARIANCE_DESK_LIMIT = 200


@dataclass(frozen=True)
class BoundInputs:
    """Everything the closed-form bound constants depend on."""

    n_u: int
    n_y: int
    horizon: int
    delta: float
    h_norm: float = 1.0
    sigma_u: float = 1.0
    sigma_e: float = 1.0
    n_rollouts: int = 1

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly between 0 and 1")
        if self.h_norm < 1.0:
            raise ValueError("h_norm is the norm of a matrix with an identity "
                             "block, so it cannot be below 1")
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")
        if self.horizon < 1 or self.n_u < 1 or self.n_y < 1:
            raise ValueError("dimensions must be positive")


def ols_bound_constants(inp: BoundInputs) -> tuple[float, float]:
    """Rollout threshold and scale constant of the plain least-squares bound.

    Natural logarithms throughout.
    """
    T, d, nu, ny = inp.horizon, inp.delta, inp.n_u, inp.n_y
    n_min = 8.0 * nu * T + 4.0 * (nu + ny + 4.0) * math.log(2.0 * T / d)
    poly = (2.0 * T**3 + 3.0 * T**2 + T) / 3.0
    c = 16.0 * inp.h_norm * math.sqrt(poly * (nu + ny) * math.log(18.0 * T / d))
    return n_min, c


def wls_bound_constants(inp: BoundInputs) -> tuple[float, float]:
    """Rollout threshold and scale constant of the optimally weighted bound."""
    T, d, nu, ny = inp.horizon, inp.delta, inp.n_u, inp.n_y
    n_min = 8.0 * nu * T + 2.0 * (nu + ny + 8.0) * math.log(2.0 * T / d)
    poly = (T**3 + T**2) / 2.0
    c = 16.0 * inp.h_norm * math.sqrt(poly * (nu + ny) * math.log(18.0 * T / d))
    return n_min, c


def error_bound(c: float, sigma_e: float, sigma_u: float, n_rollouts: int) -> float:
    """High-probability error level at a given rollout count."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    return (sigma_e / sigma_u) * c * math.sqrt(1.0 / n_rollouts)


@dataclass(frozen=True)
class BoundReport:
    """Both estimators' thresholds, constants and (when feasible) bound values."""

    n_min_ols: float
    n_min_wls: float
    c_ols: float
    c_wls: float
    n_rollouts: int
    feasible_ols: bool
    feasible_wls: bool
    bound_ols: float | None
    bound_wls: float | None

    def to_dict(self) -> dict:
        return {
            "n_min_ols": self.n_min_ols,
            "n_min_wls": self.n_min_wls,
            "c_ols": self.c_ols,
            "c_wls": self.c_wls,
            "n_rollouts": self.n_rollouts,
            "feasible_ols": self.feasible_ols,
            "feasible_wls": self.feasible_wls,
            "bound_ols": self.bound_ols,
            "bound_wls": self.bound_wls,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate_bounds(inp: BoundInputs) -> BoundReport:
    """Evaluate both bounds at the given configuration.

    Thresholds are reported as real numbers; feasibility is the plain
    comparison ``n_rollouts >= n_min`` and bound values are only filled in
    when feasible.
    """
    n_ols, c_ols = ols_bound_constants(inp)
    n_wls, c_wls = wls_bound_constants(inp)
    feas_ols = inp.n_rollouts >= n_ols
    feas_wls = inp.n_rollouts >= n_wls
    b_ols = error_bound(c_ols, inp.sigma_e, inp.sigma_u, inp.n_rollouts) if feas_ols else None
    b_wls = error_bound(c_wls, inp.sigma_e, inp.sigma_u, inp.n_rollouts) if feas_wls else None
    return BoundReport(n_min_ols=n_ols, n_min_wls=n_wls, c_ols=c_ols, c_wls=c_wls,
                       n_rollouts=inp.n_rollouts, feasible_ols=feas_ols,
                       feasible_wls=feas_wls, bound_ols=b_ols, bound_wls=b_wls)


def variance_gap(input_stack: np.ndarray, weighting: WeightingOperator,
                 sigma_e: float):
    """Conditional covariance of both estimators and the gap's smallest eigenvalue.

    Treats the inverse of the weighting block as the per-rollout noise
    covariance, forms both covariance matrices of the vectorized estimate
    explicitly, and returns ``(var_plain, var_weighted, lambda_min)`` where
    ``lambda_min`` is the smallest eigenvalue of their difference. The
    difference is positive semi-definite for any admissible weighting.
    """
    U = np.asarray(input_stack, dtype=float)
    T, n_y = weighting.horizon, weighting.n_y
    if U.ndim != 2 or U.shape[0] % T or U.shape[1] % T:
        raise ValueError("input stack shape is inconsistent with the weighting horizon")
    n_u = U.shape[0] // T
    n = U.shape[1] // T
    dim = T * n_u * n_y
    if dim > VARIANCE_DESK_LIMIT:
        raise ValueError(
            f"variance matrices of dimension {dim} exceed the desk-scale "
            f"limit {VARIANCE_DESK_LIMIT}; refusing to form them")
    weighting.validate()

    gram = U @ U.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError("input Gram matrix", float(cond))

    u3 = U.reshape(T * n_u, n, T).transpose(1, 0, 2)
    w4 = weighting.block.reshape(T, n_y, T, n_y)
    winv4 = weighting.inverse_block().reshape(T, n_y, T, n_y)
    normal_w = np.einsum("ipa,agbd,iqb->pgqd", u3, w4, u3,
                         optimize=True).reshape(dim, dim)
    normal_cov = np.einsum("ipa,agbd,iqb->pgqd", u3, winv4, u3,
                           optimize=True).reshape(dim, dim)
    gram_vec = np.kron(gram, np.eye(n_y))

    gram_inv = np.linalg.inv(gram_vec)
    var_plain = sigma_e**2 * gram_inv @ normal_cov @ gram_inv
    var_weighted = sigma_e**2 * np.linalg.inv(normal_w)
    diff = var_plain - var_weighted
    lam_min = float(np.linalg.eigvalsh((diff + diff.T) / 2.0)[0])
    return var_plain, var_weighted, lam_min
