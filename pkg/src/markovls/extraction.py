"""Recover open-loop noise Markov blocks from predictor-form blocks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError

__all__ = [
    "HankelBlock",
    "Realization",
    "IllSeparatedRankWarning",
    "recursive_extract",
    "ho_kalman_extract",
]

# Both extractors take the predictor-form noise blocks in increasing-power
# order (gain response first, then one extra closed-loop step per block)
# and return the open-loop blocks in the same order.


class IllSeparatedRankWarning(UserWarning):
    """The singular-value gap at the requested order is nearly flat."""


def _check_blocks(blocks) -> list[np.ndarray]:
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    if not blocks:
        raise ValueError("need at least one predictor block")
    shape = blocks[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"predictor noise blocks must be square, got {shape}")
    for i, b in enumerate(blocks):
        if b.shape != shape:
            raise ValueError(f"block {i} has shape {b.shape}, expected {shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError(f"block {i} contains non-finite entries")
    return blocks


@dataclass(frozen=True)
class HankelBlock:
    """Block Hankel matrix over a block sequence.

    Block ``(i, j)`` (zero-based) holds sequence element ``i + j + shift``;
    the anti-diagonal structure is what ties consecutive lags together.
    """

    block_rows: int
    block_cols: int
    shift: int
    entries: np.ndarray

    @classmethod
    def from_sequence(cls, blocks, block_rows: int, block_cols: int,
                      shift: int = 0) -> "HankelBlock":
        blocks = _check_blocks(blocks)
        need = block_rows + block_cols - 1 + shift
        if need > len(blocks):
            raise ValueError(
                f"{block_rows}x{block_cols} Hankel with shift {shift} needs "
                f"{need} blocks, only {len(blocks)} available")
        entries = np.block([[blocks[i + j + shift] for j in range(block_cols)]
                            for i in range(block_rows)])
        return cls(block_rows=block_rows, block_cols=block_cols, shift=shift,
                   entries=entries)


@dataclass(frozen=True)
class Realization:
    """State-space factors recovered from a block Hankel matrix."""

    output_map: np.ndarray          # n_y x n_x
    predictor_dynamics: np.ndarray  # n_x x n_x, closed-loop
    dynamics: np.ndarray            # n_x x n_x, open-loop
    gain: np.ndarray                # n_x x n_y
    singular_values_retained: np.ndarray
    singular_values_discarded: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {
            "singular_values_retained": self.singular_values_retained.tolist(),
            "singular_values_discarded": self.singular_values_discarded.tolist(),
            "residual": self.residual,
        }


def recursive_extract(pred_blocks, count: int | None = None) -> list[np.ndarray]:
    """Convert predictor-form noise blocks to open-loop ones, one lag at a time.

    Each open-loop block is the matching predictor block plus the
    convolution of earlier predictor blocks with already-recovered
    open-loop blocks, so the whole pass costs O(count^2) block products.
    """
    pred_blocks = _check_blocks(pred_blocks)
    if count is None:
        count = len(pred_blocks)
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > len(pred_blocks):
        raise ValueError(f"cannot produce {count} blocks from {len(pred_blocks)} inputs")
    out: list[np.ndarray] = []
    for i in range(count):
        acc = pred_blocks[i].copy()
        for j in range(i):
            acc += pred_blocks[j] @ out[i - 1 - j]
        out.append(acc)
    return out


def ho_kalman_extract(pred_blocks, n_x: int, count: int | None = None,
                      return_realization: bool = False):
    """Convert predictor-form noise blocks via a rank-truncated realization.

    A maximally square block Hankel matrix is factored by SVD into balanced
    observability/controllability maps, the closed-loop dynamics come from
    the one-step-shifted Hankel matrix, and the open-loop dynamics follow by
    adding the recovered gain-output product. The output blocks are then
    regenerated from the realization, which makes them independent of the
    (arbitrary) state basis.
    """
    pred_blocks = _check_blocks(pred_blocks)
    m = len(pred_blocks)
    if n_x < 1:
        raise ValueError("n_x must be >= 1")
    if m < 2 * n_x:
        raise ValueError(f"need at least {2 * n_x} blocks for order {n_x}, got {m}")
    if count is None:
        count = m
    n_y = pred_blocks[0].shape[0]

    p = (m + 1) // 2
    q = m - p
    hankel = HankelBlock.from_sequence(pred_blocks, p, q, shift=0)
    shifted = HankelBlock.from_sequence(pred_blocks, p, q, shift=1)

    u_svd, svals, vt_svd = np.linalg.svd(hankel.entries, full_matrices=False)
    if svals[0] == 0.0 or svals[n_x - 1] <= 1e-13 * svals[0]:
        raise RankDeficiencyError(
            f"Hankel matrix has numerical rank below the requested order {n_x}")
    if n_x < svals.size and svals[n_x] / svals[n_x - 1] > 0.99:
        warnings.warn(
            f"singular values {n_x} and {n_x + 1} differ by less than 1%; "
            "the realization order is poorly separated",
            IllSeparatedRankWarning, stacklevel=2)

    sqrt_s = np.sqrt(svals[:n_x])
    observability = u_svd[:, :n_x] * sqrt_s
    controllability = sqrt_s[:, None] * vt_svd[:n_x]
    a_pred = np.linalg.pinv(observability) @ shifted.entries @ np.linalg.pinv(controllability)
    c_r = observability[:n_y]
    k_r = controllability[:, :n_y]
    a_r = a_pred + k_r @ c_r

    residual = 0.0
    acc = k_r.copy()
    for blk in pred_blocks:
        residual = max(residual, float(np.linalg.norm(c_r @ acc - blk, "fro")))
        acc = a_pred @ acc

    out: list[np.ndarray] = []
    acc = k_r.copy()
    for _ in range(count):
        out.append(c_r @ acc)
        acc = a_r @ acc

    if return_realization:
        realization = Realization(
            output_map=c_r, predictor_dynamics=a_pred, dynamics=a_r, gain=k_r,
            singular_values_retained=svals[:n_x].copy(),
            singular_values_discarded=svals[n_x:].copy(),
            residual=residual)
        return out, realization
    return out
