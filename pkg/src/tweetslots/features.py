"""Feature extraction: marker hidden states -> classifier input vector.

Four strategies over the last four encoder layers, all reading the hidden
row at the ``<E>`` marker position:

- LAST: the final layer's row (dim H).
- SUM4: elementwise sum of the last four layers' rows (dim H).
- CONCAT4: the four rows concatenated oldest-to-newest (dim 4H).
- PROJ4: each of the four rows through its own affine projection to H/4,
  concatenated oldest-to-newest (dim H). The projections are trainable and
  live alongside the encoder parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np


class FeatureError(ValueError):
    """Invalid strategy configuration or extraction input."""


class StrategyKind(Enum):
    LAST = "last"
    SUM4 = "sum4"
    CONCAT4 = "concat4"
    PROJ4 = "proj4"

    @classmethod
    def parse(cls, text: str) -> "StrategyKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise FeatureError(f"unknown feature strategy {text!r} (expected one of: {valid})") from None


@dataclass
class Proj4Params:
    w: np.ndarray  # (4, H, H // 4)
    b: np.ndarray  # (4, H // 4)


@dataclass
class FeatureStrategy:
    kind: StrategyKind
    proj: Proj4Params | None = None

    def __post_init__(self):
        if self.kind is StrategyKind.PROJ4 and self.proj is None:
            raise FeatureError("proj4 strategy requires projection parameters")
        if self.kind is not StrategyKind.PROJ4 and self.proj is not None:
            raise FeatureError(f"{self.kind.value} strategy carries no projections")

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        if self.proj is not None:
            yield "proj.w", self.proj.w
            yield "proj.b", self.proj.b

    def copy(self) -> "FeatureStrategy":
        proj = None if self.proj is None else Proj4Params(self.proj.w.copy(), self.proj.b.copy())
        return FeatureStrategy(self.kind, proj)


def init_proj4(hidden_size: int, rng: np.random.Generator) -> Proj4Params:
    """Uniform +-1/sqrt(H) weights, zero biases; one projection per layer."""
    q = hidden_size // 4
    scale = 1.0 / np.sqrt(hidden_size)
    return Proj4Params(
        w=rng.uniform(-scale, scale, size=(4, hidden_size, q)),
        b=np.zeros((4, q)),
    )


def init_strategy(kind: StrategyKind, hidden_size: int, rng: np.random.Generator) -> FeatureStrategy:
    proj = init_proj4(hidden_size, rng) if kind is StrategyKind.PROJ4 else None
    return FeatureStrategy(kind, proj)


def feature_dim(kind: StrategyKind, hidden_size: int) -> int:
    if kind is StrategyKind.CONCAT4:
        return 4 * hidden_size
    return hidden_size


def _marker_rows(hidden: Sequence[np.ndarray], marker_pos: np.ndarray) -> np.ndarray:
    """Stack the last four layers' marker rows, oldest first: (4, B, H)."""
    if len(hidden) < 4:
        raise FeatureError(f"need >= 4 encoder layers, got {len(hidden)}")
    b = marker_pos.shape[0]
    t = hidden[-1].shape[1]
    if marker_pos.size and (marker_pos.min() < 0 or marker_pos.max() >= t):
        raise FeatureError(f"marker position outside [0, {t})")
    rows = np.arange(b)
    return np.stack([layer[rows, marker_pos] for layer in hidden[-4:]])


def extract_batch(strategy: FeatureStrategy, hidden: Sequence[np.ndarray], marker_pos: np.ndarray) -> np.ndarray:
    """Feature matrix (B, dim) from batched layer states (each (B, T, H))."""
    marker_pos = np.asarray(marker_pos, dtype=np.int64)
    rows = _marker_rows(hidden, marker_pos)  # (4, B, H)
    kind = strategy.kind
    if kind is StrategyKind.LAST:
        return rows[3].copy()
    if kind is StrategyKind.SUM4:
        return rows.sum(axis=0)
    if kind is StrategyKind.CONCAT4:
        return np.concatenate([rows[j] for j in range(4)], axis=1)
    pieces = [rows[j] @ strategy.proj.w[j] + strategy.proj.b[j] for j in range(4)]
    return np.concatenate(pieces, axis=1)


def extract(strategy: FeatureStrategy, hidden: Sequence[np.ndarray], marker_pos: int) -> np.ndarray:
    """Single-instance convenience wrapper over (T, H) layer states."""
    batched = [layer[None, :, :] for layer in hidden]
    return extract_batch(strategy, batched, np.asarray([marker_pos]))[0]


def extract_backward_batch(
    strategy: FeatureStrategy,
    hidden: Sequence[np.ndarray],
    marker_pos: np.ndarray,
    upstream: np.ndarray,
) -> tuple[np.ndarray, Proj4Params | None]:
    """Adjoint of extract_batch.

    Returns (row_grads, proj_grads) where row_grads is (4, B, H) — the
    gradient w.r.t. the last four layers' marker rows, oldest first — and
    proj_grads carries PROJ4 parameter gradients (None otherwise).
    """
    marker_pos = np.asarray(marker_pos, dtype=np.int64)
    b = marker_pos.shape[0]
    h = hidden[-1].shape[2]
    kind = strategy.kind
    if upstream.shape != (b, feature_dim(kind, h)):
        raise FeatureError(f"upstream shape {upstream.shape} != {(b, feature_dim(kind, h))}")
    row_grads = np.zeros((4, b, h))
    if kind is StrategyKind.LAST:
        row_grads[3] = upstream
        return row_grads, None
    if kind is StrategyKind.SUM4:
        row_grads[:] = upstream
        return row_grads, None
    if kind is StrategyKind.CONCAT4:
        for j in range(4):
            row_grads[j] = upstream[:, j * h:(j + 1) * h]
        return row_grads, None
    rows = _marker_rows(hidden, marker_pos)
    q = h // 4
    proj_grads = Proj4Params(w=np.zeros_like(strategy.proj.w), b=np.zeros_like(strategy.proj.b))
    for j in range(4):
        g = upstream[:, j * q:(j + 1) * q]  # (B, q)
        row_grads[j] = g @ strategy.proj.w[j].T
        proj_grads.w[j] = rows[j].T @ g
        proj_grads.b[j] = g.sum(axis=0)
    return row_grads, proj_grads
