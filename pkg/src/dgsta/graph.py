"""Skeleton graph node indexing and attention masks.

Nodes are ordered frame-major: node ``t * N + i`` is joint `i` at frame `t`,
so the spatial mask is block diagonal. Every mask is a dense 0/1 uint8
matrix with ones on the diagonal (self edges are always kept).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .errors import ParameterError

MaskKind = Literal["spatial", "temporal", "ssg", "full", "ssg_spatial", "ssg_temporal"]

WRIST, PALM = 0, 1

# DHG-14/28 / SHREC'17 22-joint hand: wrist(0), palm(1), then thumb, index,
# middle, ring and pinky as 4-joint chains (base -> tip) hanging off the palm.
HAND_BONES: tuple[tuple[int, int], ...] = ((WRIST, PALM),) + tuple(
    pair
    for base in range(2, 22, 4)
    for pair in ((PALM, base), (base, base + 1), (base + 1, base + 2), (base + 2, base + 3))
)


@dataclass(frozen=True)
class GraphShape:
    T: int
    N: int = 22

    def __post_init__(self):
        if self.T < 1 or self.N < 1:
            raise ParameterError(f"graph needs T >= 1 and N >= 1, got T={self.T}, N={self.N}")

    @property
    def nodes(self) -> int:
        return self.T * self.N

    def frame_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.T), self.N)

    def joint_of(self) -> np.ndarray:
        return np.tile(np.arange(self.N), self.T)


@dataclass(frozen=True, eq=False)
class AttentionMask:
    bits: np.ndarray
    kind: str
    shape: GraphShape
    _fill_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    def fill_terms(self, eta: float, dtype) -> tuple[np.ndarray, np.ndarray]:
        """The mask and ``(1 - mask) * eta`` as arrays of `dtype`, cached."""
        key = (float(eta), np.dtype(dtype).str)
        if key not in self._fill_cache:
            m = self.bits.astype(dtype)
            fill = (1 - m) * np.dtype(dtype).type(eta)
            m.flags.writeable = False
            fill.flags.writeable = False
            self._fill_cache[key] = (m, fill)
        return self._fill_cache[key]

    def to_ascii(self) -> str:
        return "\n".join("".join("#" if b else "." for b in row) for row in self.bits)

    def to_pgm(self) -> bytes:
        """Binary PGM, white for kept edges."""
        n = self.size
        header = f"P5\n{n} {n}\n255\n".encode()
        return header + (self.bits.astype(np.uint8) * 255).tobytes()


def flatten_index(t: int, i: int, shape: GraphShape) -> int:
    if not (0 <= t < shape.T and 0 <= i < shape.N):
        raise IndexError(f"node (t={t}, i={i}) outside graph T={shape.T}, N={shape.N}")
    return t * shape.N + i


def unflatten_index(node: int, shape: GraphShape) -> tuple[int, int]:
    if not 0 <= node < shape.nodes:
        raise IndexError(f"node {node} outside graph with {shape.nodes} nodes")
    return divmod(node, shape.N)


def _finish(bits: np.ndarray, kind: str, shape: GraphShape) -> AttentionMask:
    np.fill_diagonal(bits, 1)
    bits = bits.astype(np.uint8)
    bits.flags.writeable = False
    return AttentionMask(bits=bits, kind=kind, shape=shape)


def build_spatial_mask(shape: GraphShape) -> AttentionMask:
    f = shape.frame_of()
    return _finish(f[:, None] == f[None, :], "spatial", shape)


def build_temporal_mask(shape: GraphShape, same_joint_only: bool = False) -> AttentionMask:
    """Edges between different frames (plus self edges).

    With `same_joint_only` a temporal edge also requires the same joint.
    """
    f, j = shape.frame_of(), shape.joint_of()
    bits = f[:, None] != f[None, :]
    if same_joint_only:
        bits &= j[:, None] == j[None, :]
    return _finish(bits, "temporal", shape)


def _bone_matrix(N: int, bones: Iterable[tuple[int, int]]) -> np.ndarray:
    adj = np.zeros((N, N), dtype=bool)
    for a, b in bones:
        if not (0 <= a < N and 0 <= b < N):
            raise ParameterError(f"bone ({a}, {b}) references a joint outside 0..{N - 1}")
        adj[a, b] = adj[b, a] = True
    return adj


def build_ssg_mask(
    shape: GraphShape,
    bones: Iterable[tuple[int, int]] = HAND_BONES,
    part: Literal["both", "spatial", "temporal"] = "both",
) -> AttentionMask:
    """Sparse skeleton graph: bone edges within a frame, same joint across
    consecutive frames, and self edges.

    `part` keeps only the within-frame ("spatial") or across-frame
    ("temporal") half, which is what the two attention stages consume.
    """
    adj = _bone_matrix(shape.N, bones)
    f, j = shape.frame_of(), shape.joint_of()
    same_frame = f[:, None] == f[None, :]
    spatial = same_frame & adj[j[:, None], j[None, :]]
    temporal = (np.abs(f[:, None] - f[None, :]) == 1) & (j[:, None] == j[None, :])
    if part == "spatial":
        return _finish(spatial, "ssg_spatial", shape)
    if part == "temporal":
        return _finish(temporal, "ssg_temporal", shape)
    return _finish(spatial | temporal, "ssg", shape)


def build_full_mask(shape: GraphShape) -> AttentionMask:
    n = shape.nodes
    return _finish(np.ones((n, n), dtype=bool), "full", shape)


def build_mask(kind: str, shape: GraphShape, *, bones=HAND_BONES, same_joint_only: bool = False) -> AttentionMask:
    if kind == "spatial":
        return build_spatial_mask(shape)
    if kind == "temporal":
        return build_temporal_mask(shape, same_joint_only)
    if kind == "full":
        return build_full_mask(shape)
    if kind == "ssg":
        return build_ssg_mask(shape, bones)
    if kind == "ssg_spatial":
        return build_ssg_mask(shape, bones, "spatial")
    if kind == "ssg_temporal":
        return build_ssg_mask(shape, bones, "temporal")
    raise ParameterError(f"unknown mask kind {kind!r}")


def load_bone_list(path: str | Path) -> list[tuple[int, int]]:
    """Read ``i j`` pairs, one per line; ``#`` starts a comment."""
    bones = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParameterError(f"{path}:{lineno}: expected two joint indices, got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParameterError(f"{path}:{lineno}: joint indices must be integers, got {raw!r}") from None
        if a < 0 or b < 0:
            raise ParameterError(f"{path}:{lineno}: negative joint index in {raw!r}")
        bones.append((a, b))
    return bones
