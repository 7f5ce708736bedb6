"""Dense array operations with reverse-mode gradients.

Every op works on the trailing two axes as a matrix (rows x cols) and treats
any leading axes as a batch, which is how the network pushes a minibatch and
all attention heads through one call. Gradients are recorded on a `Tape`:

    with Tape() as tape:
        loss = cross_entropy(linear(x, w, b), label)
    tape.backward(loss)
    w.grad

Outside an active tape the ops are plain forward computations.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "as_tensor",
    "matmul",
    "transpose",
    "add",
    "scale",
    "apply_mask",
    "softmax_rows",
    "layer_norm",
    "linear",
    "dropout",
    "mean_pool_rows",
    "cross_entropy",
    "reshape",
    "merge_heads",
]


class Tensor:
    """A numpy array plus an accumulated gradient.

    Op outputs are read-only so a value seen by a recorded backward rule
    cannot change underneath it. Parameters are updated by rebinding `data`.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of ops; `backward` replays it in reverse.

    A tape belongs to one thread and one training step.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        self.records.append((out, tuple(inputs), backward))

    def backward(self, output: Tensor, grad: np.ndarray | None = None) -> None:
        """Accumulate d(output)/d(input) into `.grad` of every tensor that requires it."""
        if grad is None:
            if output.data.size != 1:
                raise ShapeError(f"backward from non-scalar output {output.shape} needs an explicit grad")
            grad = np.ones_like(output.data)
        output.grad = np.asarray(grad, dtype=output.dtype)
        for out, inputs, rule in reversed(self.records):
            if out.grad is None:
                continue
            in_grads = rule(out.grad)
            for t, g in zip(inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g


def _emit(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    value.flags.writeable = False
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def _check_matmul(a: np.ndarray, b: np.ndarray, what: str = "matmul") -> None:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"{what} needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"{what}: inner dimensions differ, a{a.shape} x b{b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"{what}: batch dimensions of a{a.shape} and b{b.shape} do not broadcast") from None


def _rhs_grad(A: np.ndarray, g: np.ndarray, b_shape: tuple[int, ...]) -> np.ndarray:
    """Gradient of ``A @ B`` wrt B, summing broadcast batch axes inside one product.

    Batch axes that B lacks are folded into the row axis, so (B, 1, R, D) inputs
    against (H, D, d) weights cost one (R*B, D) x (R*B, d) product per head
    instead of B separate ones followed by a sum.
    """
    k = len(b_shape) - 2
    lead = g.shape[:-2]
    e = len(lead) - k
    if e <= 0:
        return _unbroadcast(_swap(A) @ g, b_shape)
    R = g.shape[-2]
    A = A.reshape((1,) * (len(lead) + 2 - A.ndim) + A.shape)
    A = np.broadcast_to(A, lead[:e] + A.shape[e:])
    order = tuple(range(e, e + k)) + tuple(range(e)) + (e + k, e + k + 1)
    rows = int(np.prod(lead[:e], dtype=np.int64)) * R
    At = A.transpose(order).reshape(A.shape[e:e + k] + (rows, A.shape[-1]))
    gt = g.transpose(order).reshape(lead[e:] + (rows, g.shape[-1]))
    return _unbroadcast(_swap(At) @ gt, b_shape)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    _check_matmul(a.data, b.data)
    A, B = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ _swap(B), A.shape) if a.requires_grad else None
        gb = _rhs_grad(A, g, B.shape) if b.requires_grad else None
        return ga, gb

    return _emit(A @ B, (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose needs a matrix, got shape {a.shape}")
    return _emit(np.ascontiguousarray(_swap(a.data)), (a,), lambda g: (_swap(g),))


def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting (used for bias and embedding tables)."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), backward)


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    f = a.dtype.type(factor)
    return _emit(a.data * f, (a,), lambda g: (g * f,))


def apply_mask(w, mask: np.ndarray, eta: float, fill: np.ndarray | None = None) -> Tensor:
    """Compute ``w * mask + (1 - mask) * eta`` with `mask` a 0/1 matrix.

    `fill` may carry a precomputed ``(1 - mask) * eta`` in the right dtype.
    """
    w = as_tensor(w)
    m = np.asarray(mask, dtype=w.dtype)
    if w.shape[-2:] != m.shape:
        raise ShapeError(f"apply_mask: scores {w.shape} vs mask {m.shape}")
    if fill is None:
        fill = (1 - m) * w.dtype.type(eta)
    out = w.data * m
    out += fill
    return _emit(out, (w,), lambda g: (g * m,))


def softmax_rows(m) -> Tensor:
    """Row-wise softmax with per-row max subtraction."""
    m = as_tensor(m)
    y = m.data - m.data.max(axis=-1, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=-1, keepdims=True)

    def backward(g):
        t = g * y
        s = t.sum(axis=-1, keepdims=True)
        np.subtract(g, s, out=t)
        t *= y
        return (t,)

    return _emit(y, (m,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean, unit (biased) variance, then apply gain/bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    D = x.shape[-1]
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {D}")
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    X = x.data
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    G = gain.data

    def backward(g):
        dxhat = g * G
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, D)
        dgain = (flat_g * xhat.reshape(-1, D)).sum(axis=0)
        dbias = flat_g.sum(axis=0)
        return dx, dgain, dbias

    return _emit(xhat * G + bias.data, (x, gain, bias), backward)


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b``. `w` may carry leading axes (one weight matrix per head)."""
    x, w = as_tensor(x), as_tensor(w)
    _check_matmul(x.data, w.data, "linear")
    out = x.data @ w.data
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        try:
            np.broadcast_shapes(out.shape, b.shape)
        except ValueError:
            raise ShapeError(f"linear: bias {b.shape} does not broadcast onto {out.shape}") from None
        out = out + b.data
        inputs.append(b)
    X, W = x.data, w.data

    def backward(g):
        gx = _unbroadcast(g @ _swap(W), X.shape) if x.requires_grad else None
        gw = _rhs_grad(X, g, W.shape) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, _unbroadcast(g, b.shape)

    return _emit(out, inputs, backward)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate)."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    m = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return _emit(x.data * m, (x,), lambda g: (g * m,))


def mean_pool_rows(x) -> Tensor:
    """Column-wise mean over the row axis: (..., R, D) -> (..., D)."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] == 0:
        raise ShapeError(f"mean_pool_rows needs at least one row, got shape {x.shape}")
    R = x.shape[-2]

    def backward(g):
        return (np.broadcast_to(g[..., None, :] / R, x.shape).copy(),)

    return _emit(x.data.mean(axis=-2), (x,), backward)


def cross_entropy(logits, label) -> Tensor:
    """Softmax cross-entropy.

    A single logit vector with an int label gives ``-log softmax(logits)[label]``;
    a (B, C) batch with B labels gives the batch mean.
    """
    logits = as_tensor(logits)
    Z = logits.data
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    labels = np.atleast_1d(np.asarray(label))
    if Z.ndim != 2 or labels.shape != (Z.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    C = Z.shape[1]
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= C:
        raise ParameterError(f"labels must be integers in [0, {C}), got {labels.tolist()}")
    shifted = Z - Z.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(Z.shape[0])
    loss = -log_p[rows, labels].mean()

    def backward(g):
        d = np.exp(log_p)
        d[rows, labels] -= 1.0
        d *= g / Z.shape[0]
        return (d[0] if single else d,)

    return _emit(np.asarray(loss, dtype=Z.dtype), (logits,), backward)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {src} to {shape}") from None
    return _emit(y, (x,), lambda g: (g.reshape(src),))


def merge_heads(x) -> Tensor:
    """(..., H, R, d) -> (..., R, H*d): concatenate per-head features, head 0 first."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"merge_heads needs (..., H, R, d), got {x.shape}")
    *lead, H, R, d = x.shape
    y = np.moveaxis(x.data, -3, -2).reshape(*lead, R, H * d)

    def backward(g):
        return (np.moveaxis(g.reshape(*lead, R, H, d), -2, -3),)

    return _emit(y, (x,), backward)
