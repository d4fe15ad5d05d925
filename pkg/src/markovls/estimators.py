"""Least-squares estimators of Markov parameters, plain and weighted."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from sklearn.base import BaseEstimator

from . import extraction
from .errors import ConfigError, IllConditionedError, RankDeficiencyError
from .model import MarkovSequence, StateSpaceModel, markov_input, markov_noise
from .rollout import PredictorRegression, RolloutDataset, assemble_predictor

__all__ = [
    "CONDITION_LIMIT",
    "WeightingOperator",
    "EstimateReport",
    "ols",
    "wls",
    "wls_estimated",
    "optimal_weighting",
    "estimated_weighting",
    "predictor_ls",
    "projection_hk",
    "siso_wls_error_paths",
    "check_rollout_arrays",
    "MarkovOLS",
    "MarkovWLS",
    "PredictorLS",
]

# Hard budget for every Gram solve; beyond this the estimator fails loudly
# rather than regularize, so that estimator comparisons stay untouched.
CONDITION_LIMIT = 1e12


def _checked_gram_solve(gram: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(what, float(cond), CONDITION_LIMIT)
    return cho_solve(cho_factor(gram), rhs)


@dataclass(frozen=True)
class WeightingOperator:
    """Per-rollout weighting block, applied implicitly as ``I_N (x) block``.

    ``block`` has one row/column per stacked output sample of a single
    rollout, i.e. size ``horizon * n_y``; the full weighting over all
    rollouts is never materialized.
    """

    block: np.ndarray
    horizon: int
    n_y: int

    def __post_init__(self):
        block = np.array(self.block, dtype=float)  # private copy, frozen below
        d = self.horizon * self.n_y
        if block.shape != (d, d):
            raise ValueError(f"weighting block must be {d}x{d}, got {block.shape}")
        object.__setattr__(self, "block", block)
        block.setflags(write=False)

    @classmethod
    def identity(cls, horizon: int, n_y: int) -> "WeightingOperator":
        return cls(block=np.eye(horizon * n_y), horizon=horizon, n_y=n_y)

    def validate(self) -> None:
        """Reject blocks that are visibly asymmetric or not positive definite."""
        block = self.block
        scale = max(1.0, float(np.abs(block).max()))
        if np.abs(block - block.T).max() > 1e-12 * scale:
            raise ValueError("weighting block is not symmetric")
        try:
            np.linalg.cholesky((block + block.T) / 2.0)
        except np.linalg.LinAlgError:
            raise ValueError("weighting block is not positive definite") from None

    def inverse_block(self) -> np.ndarray:
        inv = _checked_gram_solve(self.block, np.eye(self.block.shape[0]),
                                  "weighting block")
        return (inv + inv.T) / 2.0


@dataclass(frozen=True)
class EstimateReport:
    """One estimator run: the estimate itself plus accuracy and timing."""

    method: str
    markov: np.ndarray
    spectral_error: float | None
    relative_error: float | None
    frobenius_error: float | None
    relative_frobenius_error: float | None
    wall_time_ms: float
    n_rollouts: int
    horizon: int
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "relative_error": self.relative_error,
            "spectral_error": self.spectral_error,
            "frobenius_error": self.frobenius_error,
            "relative_frobenius_error": self.relative_frobenius_error,
            "wall_time_ms": self.wall_time_ms,
            "N": self.n_rollouts,
            "T": self.horizon,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _finish_report(method: str, estimate: np.ndarray, data: RolloutDataset,
                   t_start: float) -> EstimateReport:
    wall_ms = (time.perf_counter() - t_start) * 1e3
    spectral = relative = frob = rel_frob = None
    if data.system is not None:
        truth = markov_input(data.system, data.horizon).matrix
        diff = estimate - truth
        spectral = float(np.linalg.norm(diff, 2))
        frob = float(np.linalg.norm(diff, "fro"))
        relative = spectral / float(np.linalg.norm(truth, 2))
        rel_frob = frob / float(np.linalg.norm(truth, "fro"))
    seed = data.config.seed if data.config is not None else None
    return EstimateReport(method=method, markov=estimate, spectral_error=spectral,
                          relative_error=relative, frobenius_error=frob,
                          relative_frobenius_error=rel_frob, wall_time_ms=wall_ms,
                          n_rollouts=data.n_rollouts, horizon=data.horizon, seed=seed)


def ols(data: RolloutDataset) -> EstimateReport:
    """Plain least-squares fit of the stacked data equation.

    Solves the normal equations through a Cholesky factorization of the
    input Gram matrix, with a hard condition-number check.
    """
    t0 = time.perf_counter()
    U = data.input_stack
    gram = U @ U.T
    sol = _checked_gram_solve(gram, U @ data.output_stack.T, "input Gram matrix")
    return _finish_report("ols", sol.T, data, t0)


def wls(data: RolloutDataset, weighting: WeightingOperator,
        method_tag: str = "wls-optimal") -> EstimateReport:
    """Weighted least-squares fit with a per-rollout weighting block.

    The normal equations are accumulated rollout by rollout on the
    column-stacked outputs of each rollout, so the ``N``-fold weighting is
    never formed. With an identity block this reproduces :func:`ols`; with
    the optimal block it is the minimum-variance linear estimator.
    """
    t0 = time.perf_counter()
    if weighting.horizon != data.horizon or weighting.n_y != data.n_y:
        raise ValueError("weighting block does not match the dataset dimensions")
    weighting.validate()
    T, n_y, n_u = data.horizon, data.n_y, data.n_u
    u3 = data.input_blocks                    # (N, T*n_u, T)
    w4 = weighting.block.reshape(T, n_y, T, n_y)
    normal = np.einsum("ipa,agbd,iqb->pgqd", u3, w4, u3, optimize=True)
    rhs = np.einsum("ipa,agbd,ibd->pg", u3, w4, data.y, optimize=True)
    d = T * n_u * n_y
    coeffs = _checked_gram_solve(normal.reshape(d, d), rhs.reshape(d),
                                 "weighted input Gram matrix")
    estimate = coeffs.reshape(T * n_u, n_y).T
    return _finish_report(method_tag, estimate, data, t0)


def _weight_from_noise_blocks(blocks) -> np.ndarray:
    """Inverse covariance block of one rollout's stacked noise.

    The stacked noise of a rollout is the lower block-triangular Toeplitz
    matrix of the noise Markov blocks applied to the raw innovations, so
    its covariance factor is that triangular matrix and the weight is the
    inverse of its outer product, computed by triangular solves.
    """
    T = len(blocks)
    m = blocks[0].shape[0]
    lower = np.zeros((T * m, T * m))
    for r in range(T):
        for c in range(r + 1):
            lower[r * m:(r + 1) * m, c * m:(c + 1) * m] = blocks[r - c]
    inv = solve_triangular(lower, np.eye(T * m), lower=True)
    weight = inv.T @ inv
    return (weight + weight.T) / 2.0


def optimal_weighting(sys: StateSpaceModel, horizon: int) -> WeightingOperator:
    """Optimal weighting block computed from the true noise Markov parameters."""
    blocks = markov_noise(sys, horizon).blocks
    return WeightingOperator(block=_weight_from_noise_blocks(blocks),
                             horizon=horizon, n_y=sys.n_y)


def estimated_weighting(noise_markov_hat: MarkovSequence, method: str,
                        n_x: int | None = None) -> WeightingOperator:
    """Weighting block built from estimated predictor-form noise parameters.

    The input sequence is in the regression layout (oldest lag first,
    trailing structural zero); it is reversed here to the increasing-power
    order the extraction algorithms work in.
    """
    if noise_markov_hat.kind != "predictor-noise":
        raise ValueError("expected a predictor-noise Markov sequence")
    if method not in ("recursive", "ho-kalman"):
        raise ValueError(f"method must be 'recursive' or 'ho-kalman', got {method!r}")
    pred_blocks = list(noise_markov_hat.blocks[:-1])[::-1]
    if method == "recursive":
        open_loop = extraction.recursive_extract(pred_blocks)
    else:
        if n_x is None:
            raise ConfigError("ho-kalman extraction needs the state dimension n_x")
        open_loop = extraction.ho_kalman_extract(pred_blocks, n_x)
    n_y = noise_markov_hat.block_shape[0]
    blocks = [np.eye(n_y), *open_loop]
    return WeightingOperator(block=_weight_from_noise_blocks(blocks),
                             horizon=len(blocks), n_y=n_y)


def predictor_ls(reg: PredictorRegression):
    """Joint least-squares fit of the one-step predictor regression.

    Returns the estimated input-side and noise-side predictor Markov
    sequences in the regression layout. In strict mode the noise sequence
    is padded with the structural zero block so both modes hand the same
    layout downstream.
    """
    Z = np.vstack([reg.input_regressor, reg.output_regressor])
    rows = Z.shape[0]
    if reg.n_rollouts <= rows:
        raise RankDeficiencyError(
            f"predictor regression needs more than {rows} rollouts, "
            f"got {reg.n_rollouts}")
    gram = Z @ Z.T
    sol = _checked_gram_solve(gram, Z @ reg.target.T, "predictor Gram matrix").T
    n_u, n_y, T = reg.n_u, reg.n_y, reg.horizon
    g_part = sol[:, :T * n_u]
    h_part = sol[:, T * n_u:]
    g_blocks = [g_part[:, j * n_u:(j + 1) * n_u] for j in range(T)]
    h_blocks = [h_part[:, j * n_y:(j + 1) * n_y] for j in range(reg.output_lags)]
    if reg.mode == "strict":
        h_blocks.append(np.zeros((n_y, n_y)))
    return (MarkovSequence(tuple(g_blocks), "predictor-input"),
            MarkovSequence(tuple(h_blocks), "predictor-noise"))


def projection_hk(reg: PredictorRegression) -> MarkovSequence:
    """Noise-side predictor fit via projection onto the input complement.

    Algebraically identical to the noise part of :func:`predictor_ls` (block
    matrix inversion); the projector is applied through a thin QR of the
    transposed input regressor instead of forming an ``N x N`` matrix.
    """
    rows = reg.input_regressor.shape[0] + reg.output_regressor.shape[0]
    if reg.n_rollouts <= rows:
        raise RankDeficiencyError(
            f"predictor regression needs more than {rows} rollouts, "
            f"got {reg.n_rollouts}")
    q, _ = np.linalg.qr(reg.input_regressor.T)
    y_t = reg.output_regressor.T
    proj_y = y_t - q @ (q.T @ y_t)            # complement projection of y^T
    gram = proj_y.T @ proj_y
    num = reg.target @ proj_y
    sol = _checked_gram_solve(gram, num.T, "projected output Gram matrix").T
    n_y = reg.n_y
    blocks = [sol[:, j * n_y:(j + 1) * n_y] for j in range(reg.output_lags)]
    if reg.mode == "strict":
        blocks.append(np.zeros((n_y, n_y)))
    return MarkovSequence(tuple(blocks), "predictor-noise")


def wls_estimated(data: RolloutDataset, method: str = "recursive",
                  n_x: int | None = None, mode: str = "strict") -> EstimateReport:
    """Full estimated-weighting pipeline: predictor fit, extraction, weighted fit."""
    t0 = time.perf_counter()
    reg = assemble_predictor(data, mode=mode)
    _, noise_hat = predictor_ls(reg)
    if method == "ho-kalman" and n_x is None and data.system is not None:
        n_x = data.system.n_x
    weighting = estimated_weighting(noise_hat, method=method, n_x=n_x)
    report = wls(data, weighting)
    tag = "wls-estimated-hokalman" if method == "ho-kalman" else "wls-estimated-recursive"
    wall_ms = (time.perf_counter() - t0) * 1e3
    return replace(report, method=tag, wall_time_ms=wall_ms)


def siso_wls_error_paths(data: RolloutDataset):
    """Evaluate the optimal-weighting estimation error along both algebraic routes.

    Diagnostic for scalar systems only: the defining route goes through the
    weighted normal equations, the simplified route rides on the
    commutativity of scalar triangular Toeplitz matrices. Requires recorded
    innovations and the true system.
    """
    if data.n_u != 1 or data.n_y != 1:
        raise ValueError("the simplified error route only exists for SISO systems")
    if data.system is None or data.innovation_stack is None:
        raise ValueError("needs a synthetic dataset with recorded innovations")
    T = data.horizon
    t_noise = np.zeros((T, T))
    blocks = markov_noise(data.system, T).blocks
    for r in range(T):
        for c in range(r, T):
            t_noise[r, c] = blocks[c - r][0, 0]
    t_inv = solve_triangular(t_noise, np.eye(T), lower=False)
    weight = t_inv @ t_inv.T
    u3 = data.input_blocks                    # (N, T, T) since n_u = 1
    e2 = data.innovation_stack.reshape(data.n_rollouts, T)
    weighted_gram = np.einsum("ipa,ab,iqb->pq", u3, weight, u3, optimize=True)
    cross = np.einsum("it,st,ips->p", e2, t_inv, u3, optimize=True)
    defining = np.linalg.solve(weighted_gram.T, cross).reshape(1, T)
    U = data.input_stack
    simplified = (data.innovation_stack @ U.T) @ np.linalg.solve(U @ U.T, t_noise)
    return defining, simplified


def check_rollout_arrays(u, y):
    """Validate and convert raw rollout arrays for the estimator classes."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    if y.ndim == 2:
        y = y[:, :, None]
    if u.ndim != 3 or y.ndim != 3:
        raise ValueError("u and y must have shape (n_rollouts, horizon[, channels])")
    if u.shape[:2] != y.shape[:2]:
        raise ValueError(f"u and y disagree on (n_rollouts, horizon): "
                         f"{u.shape[:2]} vs {y.shape[:2]}")
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(y)):
        raise ValueError("rollout arrays contain non-finite values")
    return u, y


class _MarkovRegressorBase(BaseEstimator):
    """Shared fit bookkeeping and prediction for the estimator classes."""

    def _store_fit(self, data: RolloutDataset, report: EstimateReport):
        self.markov_ = report.markov
        self.report_ = report
        self.horizon_ = data.horizon
        self.n_u_ = data.n_u
        self.n_y_ = data.n_y
        return self

    def predict(self, u):
        """Noise-free response of the fitted Markov parameters to new inputs."""
        if not hasattr(self, "markov_"):
            raise RuntimeError("estimator is not fitted")
        u = np.asarray(u, dtype=float)
        if u.ndim == 2:
            u = u[:, :, None]
        if u.shape[1] != self.horizon_ or u.shape[2] != self.n_u_:
            raise ValueError(f"inputs must have shape (N, {self.horizon_}, {self.n_u_})")
        from .rollout import _block_toeplitz_stack
        stacked = _block_toeplitz_stack(u)
        response = self.markov_ @ stacked
        n = u.shape[0]
        return response.reshape(self.n_y_, n, self.horizon_).transpose(1, 2, 0)


class MarkovOLS(_MarkovRegressorBase):
    """Ordinary least-squares Markov parameter estimator.

    Fit on raw rollout arrays ``u`` of shape ``(N, T, n_u)`` and ``y`` of
    shape ``(N, T, n_y)``; the fitted ``markov_`` attribute holds the
    ``n_y x (T*n_u)`` estimate. Passing the true ``system`` makes the fit
    report estimation errors.
    """

    def __init__(self, system: StateSpaceModel | None = None):
        self.system = system

    def fit(self, u, y):
        u, y = check_rollout_arrays(u, y)
        data = RolloutDataset.from_sequences(u, y, system=self.system)
        return self._store_fit(data, ols(data))


class MarkovWLS(_MarkovRegressorBase):
    """Weighted least-squares Markov parameter estimator.

    ``weighting`` selects how the per-rollout weighting block is obtained:
    ``"optimal"`` (needs the true ``system``), ``"recursive"`` or
    ``"ho-kalman"`` (estimated from the data through the predictor
    regression), ``"identity"``, or a ready :class:`WeightingOperator`.
    """

    def __init__(self, weighting="optimal", system: StateSpaceModel | None = None,
                 n_x: int | None = None, predictor_mode: str = "strict"):
        self.weighting = weighting
        self.system = system
        self.n_x = n_x
        self.predictor_mode = predictor_mode

    def fit(self, u, y):
        u, y = check_rollout_arrays(u, y)
        data = RolloutDataset.from_sequences(u, y, system=self.system)
        if isinstance(self.weighting, WeightingOperator):
            self.weighting_ = self.weighting
            report = wls(data, self.weighting_, method_tag="wls")
        elif self.weighting == "optimal":
            if self.system is None:
                raise ConfigError("optimal weighting needs the true model")
            self.weighting_ = optimal_weighting(self.system, data.horizon)
            report = wls(data, self.weighting_)
        elif self.weighting == "identity":
            self.weighting_ = WeightingOperator.identity(data.horizon, data.n_y)
            report = wls(data, self.weighting_, method_tag="wls")
        elif self.weighting in ("recursive", "ho-kalman"):
            reg = assemble_predictor(data, mode=self.predictor_mode)
            _, noise_hat = predictor_ls(reg)
            n_x = self.n_x
            if n_x is None and self.system is not None:
                n_x = self.system.n_x
            self.weighting_ = estimated_weighting(noise_hat, method=self.weighting,
                                                  n_x=n_x)
            report = wls(data, self.weighting_)
            tag = ("wls-estimated-hokalman" if self.weighting == "ho-kalman"
                   else "wls-estimated-recursive")
            report = replace(report, method=tag)
        else:
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        return self._store_fit(data, report)


class PredictorLS(BaseEstimator):
    """Least-squares fit of the one-step predictor regression.

    Fitted attributes are the two predictor Markov sequences (regression
    layout) plus their concatenated matrices.
    """

    def __init__(self, mode: str = "strict"):
        self.mode = mode

    def fit(self, u, y):
        u, y = check_rollout_arrays(u, y)
        data = RolloutDataset.from_sequences(u, y)
        reg = assemble_predictor(data, mode=self.mode)
        g_seq, h_seq = predictor_ls(reg)
        self.predictor_input_ = g_seq
        self.predictor_noise_ = h_seq
        self.input_markov_ = g_seq.matrix
        self.noise_markov_ = h_seq.matrix
        self.horizon_ = data.horizon
        return self
