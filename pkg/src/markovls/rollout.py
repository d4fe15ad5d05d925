"""Seeded multi-rollout simulation and the stacked regression matrices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SimulationOverflowError
from .model import StateSpaceModel

__all__ = [
    "SimConfig",
    "RolloutDataset",
    "PredictorRegression",
    "simulate",
    "assemble_predictor",
]


@dataclass(frozen=True)
class SimConfig:
    """How many rollouts to run, for how long, and with which noise levels."""

    n_rollouts: int
    horizon: int
    sigma_u: float = 1.0
    sigma_e: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.sigma_u > 0:
            raise ValueError("sigma_u must be > 0")
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return {
            "n_rollouts": self.n_rollouts,
            "horizon": self.horizon,
            "sigma_u": self.sigma_u,
            "sigma_e": self.sigma_e,
            "seed": self.seed,
        }


def _block_toeplitz_stack(seqs: np.ndarray) -> np.ndarray:
    """Stack per-rollout upper-triangular Toeplitz matrices side by side.

    ``seqs`` has shape ``(N, T, m)``; the result has shape ``(T*m, N*T)``
    where column ``i*T + t`` holds ``[s_t; s_{t-1}; ...; s_0; 0; ...]`` for
    rollout ``i``.
    """
    n, T, m = seqs.shape
    blocks = np.zeros((n, T * m, T))
    for r in range(T):
        blocks[:, r * m:(r + 1) * m, r:] = seqs[:, :T - r, :].transpose(0, 2, 1)
    return blocks.transpose(1, 0, 2).reshape(T * m, n * T)


@dataclass(frozen=True)
class RolloutDataset:
    """Raw input/output/innovation sequences plus their stacked forms.

    The stacked input matrix keeps one upper-triangular Toeplitz block per
    rollout so that the one-shot data equation holds column by column; the
    innovations are kept both in that Toeplitz form and as a flat row-stack.
    Innovations are ``None`` for datasets loaded from measured files.
    """

    u: np.ndarray
    y: np.ndarray
    e: np.ndarray | None
    output_stack: np.ndarray
    input_stack: np.ndarray
    innovation_block_stack: np.ndarray | None
    innovation_stack: np.ndarray | None
    config: SimConfig | None = None
    system: StateSpaceModel | None = None

    def __post_init__(self):
        for arr in (self.u, self.y, self.e, self.output_stack, self.input_stack,
                    self.innovation_block_stack, self.innovation_stack):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_sequences(cls, u, y, e=None, config: SimConfig | None = None,
                       system: StateSpaceModel | None = None) -> "RolloutDataset":
        # copy so freezing the dataset never touches caller-owned arrays
        u = np.array(u, dtype=float)
        y = np.array(y, dtype=float)
        if u.ndim != 3 or y.ndim != 3:
            raise ValueError("u and y must have shape (n_rollouts, horizon, channels)")
        if u.shape[:2] != y.shape[:2]:
            raise ValueError(f"u and y disagree on (n_rollouts, horizon): "
                             f"{u.shape[:2]} vs {y.shape[:2]}")
        n, T = u.shape[:2]
        out_stack = y.transpose(2, 0, 1).reshape(y.shape[2], n * T).copy()
        in_stack = _block_toeplitz_stack(u)
        e_arr = None if e is None else np.array(e, dtype=float)
        if e_arr is not None and e_arr.shape != y.shape:
            raise ValueError("innovations must match the output shape")
        e_block = None if e_arr is None else _block_toeplitz_stack(e_arr)
        e_stack = (None if e_arr is None
                   else e_arr.transpose(2, 0, 1).reshape(y.shape[2], n * T).copy())
        return cls(u=u, y=y, e=e_arr, output_stack=out_stack, input_stack=in_stack,
                   innovation_block_stack=e_block, innovation_stack=e_stack,
                   config=config, system=system)

    @property
    def n_rollouts(self) -> int:
        return self.u.shape[0]

    @property
    def horizon(self) -> int:
        return self.u.shape[1]

    @property
    def n_u(self) -> int:
        return self.u.shape[2]

    @property
    def n_y(self) -> int:
        return self.y.shape[2]

    def input_block(self, i: int) -> np.ndarray:
        """Toeplitz block of rollout ``i`` inside the stacked input matrix."""
        T = self.horizon
        return self.input_stack[:, i * T:(i + 1) * T]

    @property
    def input_blocks(self) -> np.ndarray:
        """View of the stacked inputs as one ``(N, T*n_u, T)`` array."""
        T, n = self.horizon, self.n_rollouts
        return self.input_stack.reshape(-1, n, T).transpose(1, 0, 2)

    def manifest_dict(self) -> dict:
        doc = {
            "n_rollouts": self.n_rollouts,
            "horizon": self.horizon,
            "n_u": self.n_u,
            "n_y": self.n_y,
            "has_innovations": self.e is not None,
        }
        if self.config is not None:
            doc["config"] = self.config.to_dict()
            doc["seed"] = self.config.seed
        return doc

    def to_csv(self, path, include_innovations: bool = False) -> None:
        """Write one row per (rollout, step); floats keep full precision."""
        if include_innovations and self.e is None:
            raise ValueError("dataset has no recorded innovations")
        header = (["rollout", "t"]
                  + [f"u{k}" for k in range(self.n_u)]
                  + [f"y{k}" for k in range(self.n_y)])
        if include_innovations:
            header += [f"e{k}" for k in range(self.n_y)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(self.n_rollouts):
                for t in range(self.horizon):
                    row = [i, t] + [repr(float(v)) for v in self.u[i, t]] \
                        + [repr(float(v)) for v in self.y[i, t]]
                    if include_innovations:
                        row += [repr(float(v)) for v in self.e[i, t]]
                    writer.writerow(row)

    @classmethod
    def from_csv(cls, path, config: SimConfig | None = None) -> "RolloutDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        n_u = sum(1 for h in header if h.startswith("u"))
        n_y = sum(1 for h in header if h.startswith("y"))
        n_e = sum(1 for h in header if h.startswith("e"))
        idx = np.array([[int(r[0]), int(r[1])] for r in rows])
        n = idx[:, 0].max() + 1
        T = idx[:, 1].max() + 1
        if len(rows) != n * T:
            raise ValueError(f"expected {n * T} rows, found {len(rows)}")
        vals = np.array([[float(v) for v in r[2:]] for r in rows])
        order = np.lexsort((idx[:, 1], idx[:, 0]))
        vals = vals[order]
        u = vals[:, :n_u].reshape(n, T, n_u)
        y = vals[:, n_u:n_u + n_y].reshape(n, T, n_y)
        e = vals[:, n_u + n_y:].reshape(n, T, n_y) if n_e else None
        return cls.from_sequences(u, y, e, config=config)

    def write_files(self, out_dir, include_innovations: bool = False) -> dict:
        """Write ``dataset.csv`` and ``manifest.json`` under ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "dataset.csv"
        self.to_csv(csv_path, include_innovations=include_innovations)
        manifest_path = out / "manifest.json"
        manifest_path.write_text(json.dumps(self.manifest_dict(), indent=2) + "\n")
        return {"dataset": str(csv_path), "manifest": str(manifest_path)}


def simulate(sys: StateSpaceModel, cfg: SimConfig) -> RolloutDataset:
    """Run ``cfg.n_rollouts`` independent rollouts from a zero initial state.

    Each rollout draws its inputs and innovations from its own random
    stream, derived from ``(cfg.seed, rollout index)``, inputs first and
    time-ordered within each block. The result is therefore reproducible
    and independent of any parallel scheduling of the rollouts.

    Raises
    ------
    SimulationOverflowError
        At the first non-finite output; nothing is clamped.
    """
    n, T = cfg.n_rollouts, cfg.horizon
    n_x, n_u, n_y = sys.n_x, sys.n_u, sys.n_y
    u = np.empty((n, T, n_u))
    e = np.empty((n, T, n_y))
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(i,)))
        u[i] = cfg.sigma_u * rng.standard_normal((T, n_u))
        e[i] = cfg.sigma_e * rng.standard_normal((T, n_y))

    y = np.empty((n, T, n_y))
    x = np.zeros((n, n_x))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            y[:, t] = x @ sys.C.T + u[:, t] @ sys.D.T + e[:, t]
            x = x @ sys.A.T + u[:, t] @ sys.B.T + e[:, t] @ sys.K.T

    if not np.all(np.isfinite(y)):
        i, t, _ = np.argwhere(~np.isfinite(y))[0]
        raise SimulationOverflowError(rollout=int(i), step=int(t))
    return RolloutDataset.from_sequences(u, y, e, config=cfg, system=sys)


@dataclass(frozen=True)
class PredictorRegression:
    """Per-rollout regression of the last output on past inputs and outputs.

    In ``"strict"`` mode the output regressor stops one step before the
    target; in ``"paper-literal"`` mode it includes the target itself,
    whose true coefficient block is the structural zero. Note that the
    literal variant is degenerate under plain least-squares: the target
    lies in the regressor span, so the fit returns the identity map on the
    newest output instead of the dynamic coefficients.
    """

    target: np.ndarray
    input_regressor: np.ndarray
    output_regressor: np.ndarray
    mode: str
    horizon: int
    n_u: int
    n_y: int

    def __post_init__(self):
        for arr in (self.target, self.input_regressor, self.output_regressor):
            arr.setflags(write=False)

    @property
    def n_rollouts(self) -> int:
        return self.target.shape[1]

    @property
    def output_lags(self) -> int:
        return self.output_regressor.shape[0] // self.n_y


def assemble_predictor(data: RolloutDataset, mode: str = "strict") -> PredictorRegression:
    """Build the one-step regression from a dataset, one column per rollout.

    Assembly itself works for any number of rollouts; solvers downstream
    check that there are enough columns for a full-rank Gram matrix.
    """
    if mode not in ("strict", "paper-literal"):
        raise ValueError(f"mode must be 'strict' or 'paper-literal', got {mode!r}")
    n, T = data.n_rollouts, data.horizon
    if T < 2:
        raise ValueError("the predictor regression needs horizon >= 2")
    lags = T if mode == "paper-literal" else T - 1
    target = data.y[:, T - 1, :].T.copy()
    input_reg = data.u.reshape(n, T * data.n_u).T.copy()
    output_reg = data.y[:, :lags, :].reshape(n, lags * data.n_y).T.copy()
    return PredictorRegression(target=target, input_regressor=input_reg,
                               output_regressor=output_reg, mode=mode,
                               horizon=T, n_u=data.n_u, n_y=data.n_y)
