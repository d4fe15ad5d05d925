"""Benchmark systems used throughout the tests and the experiment harness."""

from __future__ import annotations

import numpy as np

from .model import StateSpaceModel

__all__ = ["siso_paper", "mimo_paper", "resolve_system", "PRESET_NAMES"]

PRESET_NAMES = ("siso-paper", "mimo-paper")


def siso_paper(gain: np.ndarray | None = None) -> StateSpaceModel:
    """Marginally stable two-state SISO benchmark.

    The output gain is fixed to ``[1, -2]`` by default so results are
    reproducible; pass ``gain`` to override (the benchmark harness can draw
    it from small integers per trial).
    """
    K = np.array([[1.0], [-2.0]]) if gain is None else np.asarray(gain, dtype=float).reshape(2, 1)
    return StateSpaceModel(
        A=[[1.0, 0.2], [0.0, 1.0]],
        B=[[0.0], [1.0]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        K=K,
    )


def mimo_paper() -> StateSpaceModel:
    """Stable four-state, two-input/two-output benchmark."""
    return StateSpaceModel(
        A=[[0.67, 0.67, 0.0, 0.0],
           [-0.67, 0.67, 0.0, 0.0],
           [0.0, 0.0, -0.67, -0.67],
           [0.0, 0.0, 0.67, -0.67]],
        B=[[0.65, -0.52],
           [1.96, 0.48],
           [4.31, -0.48],
           [-2.64, -0.34]],
        C=[[-0.37, 0.07, -0.52, 0.58],
           [-0.89, 0.75, 0.11, 0.09]],
        D=[[0.0, 0.0], [0.0, 0.0]],
        K=[[-0.69, -0.14],
           [0.17, 0.56],
           [0.64, -0.46],
           [-0.94, 0.10]],
    )


def resolve_system(source) -> StateSpaceModel:
    """Turn a preset name, matrix dict or model instance into a model."""
    if isinstance(source, StateSpaceModel):
        return source
    if isinstance(source, str):
        if source == "siso-paper":
            return siso_paper()
        if source == "mimo-paper":
            return mimo_paper()
        raise ValueError(f"unknown system preset {source!r}; expected one of {PRESET_NAMES}")
    if isinstance(source, dict):
        return StateSpaceModel(A=source["A"], B=source["B"], C=source["C"],
                               D=source["D"], K=source["K"])
    raise TypeError(f"cannot interpret {type(source).__name__} as a system")
