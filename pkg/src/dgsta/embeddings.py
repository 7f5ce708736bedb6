"""Fixed sinusoidal position tables for joint identity and node position."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .graph import GraphShape


@dataclass(frozen=True, eq=False)
class PositionTable:
    values: np.ndarray

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _check_dim(dim: int) -> None:
    if dim < 2 or dim % 2:
        raise ParameterError(f"embedding width must be even and >= 2, got {dim}")


def _table(positions: np.ndarray, dim: int) -> np.ndarray:
    _check_dim(dim)
    k = np.arange(dim // 2, dtype=np.float64)
    freq = 1.0 / np.power(10000.0, 2.0 * k / dim)
    arg = positions.astype(np.float64)[:, None] * freq[None, :]
    out = np.empty((positions.shape[0], dim))
    out[:, 0::2] = np.sin(arg)
    out[:, 1::2] = np.cos(arg)
    out.flags.writeable = False
    return out


def sinusoid(pos: int, dim: int) -> np.ndarray:
    """``e[2k] = sin(pos / 10000^(2k/dim))``, ``e[2k+1] = cos(...)``."""
    return _table(np.array([pos]), dim)[0]


def build_spe(N: int, dim: int) -> PositionTable:
    """One row per joint identity."""
    return PositionTable(_table(np.arange(N), dim))


def build_tpe(shape: GraphShape, dim: int) -> PositionTable:
    """One row per node; node (t, i) uses position t*N + i so all T*N rows differ."""
    return PositionTable(_table(np.arange(shape.nodes), dim))


def node_spe(shape: GraphShape, dim: int) -> np.ndarray:
    """S-PE expanded to node order, (T*N, dim): row t*N+i is joint i's vector."""
    out = build_spe(shape.N, dim).values[shape.joint_of()]
    out.flags.writeable = False
    return out
