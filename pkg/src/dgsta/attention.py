"""Masked multi-head attention over skeleton-graph nodes.

Two implementations of the same computation:

* the batched path (`masked_weights`, `attend`, `multi_head`) scores every
  node pair with one matrix product, overwrites forbidden pairs with `eta`
  through the 0/1 mask and row-softmaxes;
* the loop path (`naive_attention_weights`, `naive_multi_head`) projects one
  node at a time and only ever visits the partners a mask permits.

The batched path runs on `Tensor` and is differentiable; the loop path is a
plain-numpy reference used by the tests and the benchmark.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .graph import AttentionMask
from .tensor import (
    Tensor,
    apply_mask,
    as_tensor,
    linear,
    matmul,
    merge_heads,
    reshape,
    scale,
    softmax_rows,
    transpose,
)

ETA = -9e15


@dataclass(frozen=True)
class AttentionConfig:
    d: int = 32
    H: int = 8
    eta: float = ETA
    bias: bool = True

    def __post_init__(self):
        if self.d < 1 or self.H < 1:
            raise ParameterError(f"need d >= 1 and H >= 1, got d={self.d}, H={self.H}")
        if not self.eta < -1e6:
            raise ParameterError(f"eta must be a large negative number, got {self.eta}")


@dataclass
class HeadParams:
    """One head's projections; weights are (D_in, d), applied as ``f @ w + b``."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    b_q: np.ndarray | None = None
    b_k: np.ndarray | None = None
    b_v: np.ndarray | None = None

    def __post_init__(self):
        shapes = {self.w_q.shape, self.w_k.shape, self.w_v.shape}
        if len(shapes) != 1 or self.w_q.ndim != 2:
            raise ShapeError(f"head weights must share one (D_in, d) shape, got {sorted(shapes)}")


class MultiHeadParams:
    """H independent heads, stored stacked as (H, D_in, d) weights and (H, 1, d) biases.

    Each slice ``w_q.data[h]`` is head h's own matrix; stacking only lets all
    heads run through one batched matmul.
    """

    def __init__(self, w_q: Tensor, w_k: Tensor, w_v: Tensor, b_q=None, b_k=None, b_v=None):
        self.w_q, self.w_k, self.w_v = w_q, w_k, w_v
        self.b_q, self.b_k, self.b_v = b_q, b_k, b_v
        if not (w_q.shape == w_k.shape == w_v.shape) or w_q.ndim != 3:
            raise ShapeError(f"stacked head weights must share (H, D_in, d), got {w_q.shape}, {w_k.shape}, {w_v.shape}")

    @classmethod
    def from_heads(cls, heads: list[HeadParams], requires_grad: bool = False) -> "MultiHeadParams":
        if not heads:
            raise ParameterError("need at least one head")

        def stack(attr, bias=False):
            arrs = [getattr(h, attr) for h in heads]
            if any(a is None for a in arrs):
                return None
            a = np.stack([np.asarray(x).reshape(1, -1) if bias else np.asarray(x) for x in arrs])
            return Tensor(a, requires_grad=requires_grad)

        return cls(stack("w_q"), stack("w_k"), stack("w_v"), stack("b_q", True), stack("b_k", True), stack("b_v", True))

    @property
    def H(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_q.shape[1]

    @property
    def d(self) -> int:
        return self.w_q.shape[2]

    def head(self, h: int) -> HeadParams:
        def b(t):
            return None if t is None else t.data[h, 0]

        return HeadParams(self.w_q.data[h], self.w_k.data[h], self.w_v.data[h], b(self.b_q), b(self.b_k), b(self.b_v))

    @property
    def heads(self) -> list[HeadParams]:
        return [self.head(h) for h in range(self.H)]

    def tensors(self) -> dict[str, Tensor]:
        out = {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v}
        for name in ("b_q", "b_k", "b_v"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


def project_qkv(features, head: HeadParams) -> tuple[Tensor, Tensor, Tensor]:
    """Query, key and value matrices (rows = nodes) for one head."""
    f = as_tensor(features)
    if f.shape[-1] != head.w_q.shape[0]:
        raise ShapeError(f"features of width {f.shape[-1]} vs head input width {head.w_q.shape[0]}")
    q = linear(f, head.w_q, head.b_q)
    k = linear(f, head.w_k, head.b_k)
    v = linear(f, head.w_v, head.b_v)
    return q, k, v


def _check_mask(n: int, mask: AttentionMask) -> None:
    if mask.size != n:
        raise ShapeError(f"mask of size {mask.size} for {n} nodes")


def masked_weights(Q, K, mask: AttentionMask, cfg: AttentionConfig = AttentionConfig()) -> Tensor:
    """Row-softmax of the masked, scaled score matrix ``Q K^T / sqrt(d)``.

    Leading axes of Q and K are batch/head axes. The 1/sqrt(d) factor is
    applied to Q before the product.
    """
    Q, K = as_tensor(Q), as_tensor(K)
    if Q.shape[-1] != K.shape[-1] or Q.shape[-2] != K.shape[-2]:
        raise ShapeError(f"Q {Q.shape} and K {K.shape} must both be (nodes, d)")
    _check_mask(Q.shape[-2], mask)
    d = Q.shape[-1]
    m, fill = mask.fill_terms(cfg.eta, Q.dtype)
    scores = matmul(scale(Q, 1.0 / math.sqrt(d)), transpose(K))
    return softmax_rows(apply_mask(scores, m, cfg.eta, fill))


def attend(weights, V) -> Tensor:
    """Weighted sum of value rows: ``weights @ V``."""
    weights, V = as_tensor(weights), as_tensor(V)
    if weights.shape[-1] != V.shape[-2]:
        raise ShapeError(f"weights {weights.shape} cannot combine values {V.shape}")
    return matmul(weights, V)


def multi_head(features, params: MultiHeadParams, mask: AttentionMask, cfg: AttentionConfig = AttentionConfig()) -> Tensor:
    """All heads at once; (..., nodes, D_in) -> (..., nodes, H*d)."""
    f = as_tensor(features)
    if f.ndim < 2 or f.shape[-1] != params.d_in:
        raise ShapeError(f"features {f.shape} vs head input width {params.d_in}")
    _check_mask(f.shape[-2], mask)
    # (..., 1, nodes, D_in) so the (H, D_in, d) weights broadcast over heads
    x = reshape(f, f.shape[:-2] + (1,) + f.shape[-2:])
    q = linear(x, params.w_q, params.b_q)
    k = linear(x, params.w_k, params.b_k)
    v = linear(x, params.w_v, params.b_v)
    return merge_heads(attend(masked_weights(q, k, mask, cfg), v))


# ---------------------------------------------------------------------------
# per-edge loop reference


def _partners(mask: AttentionMask) -> list[np.ndarray]:
    return [np.flatnonzero(row) for row in mask.bits]


def _row_weights(q_a: np.ndarray, K: np.ndarray, partners: np.ndarray, d: int) -> np.ndarray:
    root = math.sqrt(d)
    u = [float(np.dot(q_a, K[b])) / root for b in partners]
    top = max(u)
    e = [math.exp(x - top) for x in u]
    total = math.fsum(e)
    return np.array([x / total for x in e])


def naive_attention_weights(Q, K, mask: AttentionMask, cfg: AttentionConfig = AttentionConfig()) -> np.ndarray:
    """Attention weights built edge by edge; entries outside the mask stay 0."""
    Q, K = np.asarray(Q, dtype=np.float64), np.asarray(K, dtype=np.float64)
    if Q.ndim != 2 or Q.shape != K.shape:
        raise ShapeError(f"Q {Q.shape} and K {K.shape} must both be (nodes, d)")
    _check_mask(Q.shape[0], mask)
    n, d = Q.shape
    out = np.zeros((n, n))
    for a, partners in enumerate(_partners(mask)):
        out[a, partners] = _row_weights(Q[a], K, partners, d)
    return out


def naive_multi_head(features, params: MultiHeadParams, mask: AttentionMask, cfg: AttentionConfig = AttentionConfig()) -> np.ndarray:
    """Per-node projections, per-edge scores and sums, heads concatenated in order."""
    F = np.asarray(features.data if isinstance(features, Tensor) else features, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != params.d_in:
        raise ShapeError(f"features {F.shape} vs head input width {params.d_in}")
    _check_mask(F.shape[0], mask)
    n = F.shape[0]
    partners = _partners(mask)
    blocks = []
    for head in params.heads:
        d = head.w_q.shape[1]
        zero = np.zeros(d)
        b_q = zero if head.b_q is None else head.b_q
        b_k = zero if head.b_k is None else head.b_k
        b_v = zero if head.b_v is None else head.b_v
        Q = np.array([F[a] @ head.w_q + b_q for a in range(n)])
        K = np.array([F[a] @ head.w_k + b_k for a in range(n)])
        V = np.array([F[a] @ head.w_v + b_v for a in range(n)])
        out = np.zeros((n, d))
        for a in range(n):
            alpha = _row_weights(Q[a], K, partners[a], d)
            acc = np.zeros(d)
            for w, b in zip(alpha, partners[a]):
                acc += w * V[b]
            out[a] = acc
        blocks.append(out)
    return np.concatenate(blocks, axis=1)
