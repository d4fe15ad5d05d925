"""State-space models, their Markov parameters and Toeplitz operators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StateSpaceModel",
    "PredictorModel",
    "MarkovSequence",
    "ToeplitzStack",
    "markov_input",
    "markov_noise",
    "to_predictor",
    "recompose",
    "predictor_markov",
    "toeplitz_stack",
    "noise_toeplitz",
    "system_to_json",
    "system_from_json",
]

MARKOV_KINDS = ("input", "noise", "predictor-input", "predictor-noise")


def _as_matrix(name: str, value, shape: tuple[int, int]) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time LTI system driven by inputs and one-step prediction errors.

    The dynamics are ``x[t+1] = A x[t] + B u[t] + K e[t]`` with output
    ``y[t] = C x[t] + D u[t] + e[t]``, so the output noise enters both the
    output equation and, through the gain ``K``, the state.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n_x = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n_x:
            raise ValueError(f"B must have {n_x} rows, got shape {B.shape}")
        n_u = B.shape[1]
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != n_x:
            raise ValueError(f"C must have {n_x} columns, got shape {C.shape}")
        n_y = C.shape[0]
        object.__setattr__(self, "A", _as_matrix("A", A, (n_x, n_x)))
        object.__setattr__(self, "B", _as_matrix("B", B, (n_x, n_u)))
        object.__setattr__(self, "C", _as_matrix("C", C, (n_y, n_x)))
        object.__setattr__(self, "D", _as_matrix("D", self.D, (n_y, n_u)))
        object.__setattr__(self, "K", _as_matrix("K", self.K, (n_x, n_y)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def is_siso(self) -> bool:
        return self.n_u == 1 and self.n_y == 1


@dataclass(frozen=True)
class PredictorModel:
    """One-step-ahead predictor form of a :class:`StateSpaceModel`.

    Holds ``A_K = A - K C`` and ``B_K = B - K D`` next to the unchanged
    ``C``, ``D`` and ``K``; the state is then driven by past inputs and
    past outputs instead of the unobserved innovations.
    """

    A_K: np.ndarray
    B_K: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        n_x = np.asarray(self.A_K).shape[0]
        n_u = np.asarray(self.B_K).shape[1]
        n_y = np.asarray(self.C).shape[0]
        object.__setattr__(self, "A_K", _as_matrix("A_K", self.A_K, (n_x, n_x)))
        object.__setattr__(self, "B_K", _as_matrix("B_K", self.B_K, (n_x, n_u)))
        object.__setattr__(self, "C", _as_matrix("C", self.C, (n_y, n_x)))
        object.__setattr__(self, "D", _as_matrix("D", self.D, (n_y, n_u)))
        object.__setattr__(self, "K", _as_matrix("K", self.K, (n_x, n_y)))

    @property
    def n_x(self) -> int:
        return self.A_K.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_K.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class MarkovSequence:
    """Ordered impulse-response blocks of one noise or input channel."""

    blocks: tuple
    kind: str

    def __post_init__(self):
        if self.kind not in MARKOV_KINDS:
            raise ValueError(f"kind must be one of {MARKOV_KINDS}, got {self.kind!r}")
        blocks = tuple(_as_matrix(f"block {i}", b, np.asarray(b).shape)
                       for i, b in enumerate(self.blocks))
        if not blocks:
            raise ValueError("a MarkovSequence needs at least one block")
        shape = blocks[0].shape
        if any(b.shape != shape for b in blocks):
            raise ValueError("all blocks must share one shape")
        object.__setattr__(self, "blocks", blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.blocks[0].shape

    @property
    def matrix(self) -> np.ndarray:
        """All blocks concatenated side by side, in sequence order."""
        return np.hstack(self.blocks)

    def validate_structure(self, atol: float = 0.0) -> None:
        """Check the kind-specific head/tail blocks (identity head for the
        noise side, zero tail for the predictor noise side).

        Only exact sequences satisfy these; estimated ones may not.
        """
        n_y = self.block_shape[0]
        if self.kind == "noise":
            if not np.allclose(self.blocks[0], np.eye(n_y), atol=atol, rtol=0.0):
                raise ValueError("noise sequence must start with the identity block")
        if self.kind == "predictor-noise":
            if not np.allclose(self.blocks[-1], 0.0, atol=atol, rtol=0.0):
                raise ValueError("predictor noise sequence must end with the zero block")


@dataclass(frozen=True)
class ToeplitzStack:
    """Unit block upper-triangular Toeplitz matrix built from noise blocks.

    Block ``(i, j)`` equals ``base.blocks[j - i]`` for ``j >= i`` and zero
    below the diagonal; the identity head of the base sequence makes the
    dense matrix unit-triangular, hence always invertible.
    """

    base: MarkovSequence
    horizon: int
    dense: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dense.setflags(write=False)

    @property
    def block_size(self) -> int:
        return self.base.block_shape[0]


def markov_input(sys: StateSpaceModel, horizon: int) -> MarkovSequence:
    """Input-side Markov parameters ``[D, CB, CAB, ...]`` up to ``horizon`` blocks.

    Powers of ``A`` are accumulated as a running product ``A^k B`` so no
    explicit matrix power is ever formed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    blocks = [sys.D]
    acc = sys.B
    for _ in range(horizon - 1):
        blocks.append(sys.C @ acc)
        acc = sys.A @ acc
    return MarkovSequence(tuple(blocks), "input")


def markov_noise(sys: StateSpaceModel, horizon: int) -> MarkovSequence:
    """Noise-side Markov parameters ``[I, CK, CAK, ...]`` up to ``horizon`` blocks."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    blocks = [np.eye(sys.n_y)]
    acc = sys.K
    for _ in range(horizon - 1):
        blocks.append(sys.C @ acc)
        acc = sys.A @ acc
    return MarkovSequence(tuple(blocks), "noise")


def to_predictor(sys: StateSpaceModel) -> PredictorModel:
    """Rewrite the system in predictor form (``A_K = A - KC``, ``B_K = B - KD``)."""
    return PredictorModel(
        A_K=sys.A - sys.K @ sys.C,
        B_K=sys.B - sys.K @ sys.D,
        C=sys.C,
        D=sys.D,
        K=sys.K,
    )


def recompose(pred: PredictorModel) -> StateSpaceModel:
    """Invert :func:`to_predictor` exactly."""
    return StateSpaceModel(
        A=pred.A_K + pred.K @ pred.C,
        B=pred.B_K + pred.K @ pred.D,
        C=pred.C,
        D=pred.D,
        K=pred.K,
    )


def predictor_markov(pred: PredictorModel, horizon: int):
    """Markov parameters of the predictor form, oldest lag first.

    Returns the pair of sequences whose blocks multiply the stacked inputs
    ``[u_0; ...; u_{T-1}]`` and outputs ``[y_0; ...; y_{T-1}]`` in the
    one-step regression for ``y_{T-1}``: the input side ends with the
    feedthrough ``D`` and the output side ends with a structural zero
    block (the newest output never feeds back into itself).
    """
    if horizon < 2:
        raise ValueError("horizon must be >= 2 for the predictor regression")
    g_rev = [pred.D]
    h_rev = [np.zeros((pred.n_y, pred.n_y))]
    acc_b = pred.B_K
    acc_k = pred.K
    for _ in range(horizon - 1):
        g_rev.append(pred.C @ acc_b)
        h_rev.append(pred.C @ acc_k)
        acc_b = pred.A_K @ acc_b
        acc_k = pred.A_K @ acc_k
    g_seq = MarkovSequence(tuple(reversed(g_rev)), "predictor-input")
    h_seq = MarkovSequence(tuple(reversed(h_rev)), "predictor-noise")
    return g_seq, h_seq


def toeplitz_stack(noise_seq: MarkovSequence, horizon: int | None = None) -> ToeplitzStack:
    """Assemble the dense unit upper-triangular Toeplitz matrix of a noise sequence."""
    if noise_seq.kind != "noise":
        raise ValueError(f"expected a noise-kind sequence, got {noise_seq.kind!r}")
    T = len(noise_seq) if horizon is None else horizon
    if T != len(noise_seq):
        raise ValueError(f"sequence has {len(noise_seq)} blocks, expected {T}")
    noise_seq.validate_structure(atol=0.0)
    m = noise_seq.block_shape[0]
    dense = np.zeros((T * m, T * m))
    for r in range(T):
        for c in range(r, T):
            dense[r * m:(r + 1) * m, c * m:(c + 1) * m] = noise_seq.blocks[c - r]
    return ToeplitzStack(base=noise_seq, horizon=T, dense=dense)


def noise_toeplitz(sys: StateSpaceModel, horizon: int) -> ToeplitzStack:
    """Shorthand for ``toeplitz_stack(markov_noise(sys, horizon))``."""
    return toeplitz_stack(markov_noise(sys, horizon))


def system_to_json(sys: StateSpaceModel) -> str:
    """Serialize a system to JSON with row-major nested arrays."""
    doc = {name: getattr(sys, name).tolist() for name in ("A", "B", "C", "D", "K")}
    return json.dumps(doc, indent=2)


def system_from_json(text: str) -> StateSpaceModel:
    """Parse the document produced by :func:`system_to_json`."""
    doc = json.loads(text)
    missing = [k for k in ("A", "B", "C", "D", "K") if k not in doc]
    if missing:
        raise ValueError(f"system document is missing fields: {missing}")
    return StateSpaceModel(A=doc["A"], B=doc["B"], C=doc["C"], D=doc["D"], K=doc["K"])
