"""Optimizer, preprocessing/augmentation and the evaluation protocols."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal

import numpy as np

from .data import Dataset, SkeletonSequence
from .errors import DataError, ParameterError, TrainingError
from .graph import PALM
from .network import ModelConfig, ModelParams, forward, init_params
from .tensor import Tape, cross_entropy


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _group(name: str) -> str:
    return name.split(".", 1)[0]


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter group {_group(name)!r} ({name})")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ParameterError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------------------
# preprocessing


def sample_indices(L: int, T: int, rng: np.random.Generator | None = None, training: bool = False) -> np.ndarray:
    """Frame indices for uniform sampling of T out of L frames.

    Eval: ``floor(k*L/T)``. Training: one uniform draw from each stratum
    ``[floor(k*L/T), floor((k+1)*L/T))``; an empty stratum (L < T) keeps its
    start index, which repeats frames in order.
    """
    if L < 1:
        raise DataError("cannot sample frames from an empty sequence")
    k = np.arange(T)
    lo = (k * L) // T
    if not training:
        return lo
    if rng is None:
        raise ParameterError("training-mode frame sampling needs an rng")
    hi = np.maximum(((k + 1) * L) // T, lo + 1)
    return np.minimum(rng.integers(lo, hi), L - 1)


def sample_frames(seq: SkeletonSequence, T: int = 8, rng: np.random.Generator | None = None, training: bool = False) -> SkeletonSequence:
    return seq.replace(seq.frames[sample_indices(len(seq), T, rng, training)])


def palm_align(seq: SkeletonSequence, palm: int = PALM) -> SkeletonSequence:
    """Translate so the first frame's palm joint sits at the origin."""
    return seq.replace(seq.frames - seq.frames[0, palm])


@dataclass(frozen=True)
class AugmentConfig:
    scale: bool = True
    scale_range: tuple[float, float] = (0.8, 1.2)
    shift: bool = True
    shift_range: float = 0.1
    interpolate: bool = True
    interp_range: tuple[float, float] = (0.8, 1.2)
    noise: bool = True
    noise_sigma: float = 0.001
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ParameterError(f"scale range must be positive, got {self.scale_range}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        if not 0 < self.interp_range[0] <= self.interp_range[1]:
            raise ParameterError(f"interpolation range must be positive, got {self.interp_range}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(scale=False, shift=False, interpolate=False, noise=False)


def resample_linear(frames: np.ndarray, length: int) -> np.ndarray:
    """Linearly interpolate a (L, J, 3) sequence to `length` frames with the same endpoints."""
    L = frames.shape[0]
    if length == L:
        return frames.copy()
    if L == 1:
        return np.repeat(frames, length, axis=0)
    pos = np.linspace(0.0, L - 1, length)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, L - 1)
    w = (pos - i0)[:, None, None]
    return frames[i0] * (1 - w) + frames[i1] * w


def augment(seq: SkeletonSequence, cfg: AugmentConfig, rng: np.random.Generator) -> SkeletonSequence:
    """Random global scale, global shift, time stretch and coordinate noise, each switchable."""
    x = seq.frames
    if cfg.scale:
        x = x * rng.uniform(*cfg.scale_range)
    if cfg.shift:
        x = x + rng.uniform(-cfg.shift_range, cfg.shift_range, size=3)
    if cfg.interpolate:
        L = x.shape[0]
        new_len = max(1, int(round(L * rng.uniform(*cfg.interp_range))))
        x = resample_linear(x, new_len)
    if cfg.noise and cfg.noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
    return seq.replace(x)


def prepare(
    seqs: list[SkeletonSequence],
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    aug: AugmentConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Align, optionally augment, sample T frames; returns (B, T, N, 3) coords and labels."""
    out = []
    for s in seqs:
        s = palm_align(s)
        if training and aug is not None:
            s = augment(s, aug, rng)
        out.append(sample_frames(s, cfg.frames, rng, training).frames)
    x = np.stack(out).astype(cfg.dtype)
    y = np.array([s.label for s in seqs], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldSpec:
    protocol: Literal["loso", "fixed_split", "none"]
    subject: int | None = None

    def split(self, data: Dataset) -> tuple[list[SkeletonSequence], list[SkeletonSequence]]:
        seqs = data.sequences
        if self.protocol == "loso":
            train = [s for s in seqs if s.subject != self.subject]
            test = [s for s in seqs if s.subject == self.subject]
        elif self.protocol == "fixed_split":
            train = [s for s in seqs if s.split == "train"]
            test = [s for s in seqs if s.split == "test"]
        else:
            train, test = list(seqs), list(seqs)
        if not train or not test:
            raise DataError(f"fold {self} leaves an empty train or test set")
        return train, test


def make_folds(data: Dataset, protocol: str) -> list[FoldSpec]:
    if protocol == "loso":
        return [FoldSpec("loso", s) for s in data.subjects()]
    if protocol == "fixed_split":
        return [FoldSpec("fixed_split")]
    if protocol == "none":
        return [FoldSpec("none")]
    raise ParameterError(f"unknown protocol {protocol!r}")


# ---------------------------------------------------------------------------
# training loop


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def batch_loss_and_grads(params: ModelParams, cfg: ModelConfig, x: np.ndarray, y: np.ndarray, rng=None, training=True):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    params.zero_grad()
    with Tape() as tape:
        loss = cross_entropy(forward(params, cfg, x, training, rng), y)
    tape.backward(loss)
    grads = {k: t.grad if t.grad is not None else np.zeros_like(t.data) for k, t in params.items()}
    return float(loss.data), grads


def train_epoch(
    params: ModelParams,
    state: AdamState,
    cfg: ModelConfig,
    seqs: list[SkeletonSequence],
    rng: np.random.Generator,
    batch_size: int = 32,
    aug: AugmentConfig | None = None,
) -> float:
    """One shuffled pass with Adam updates; returns the sample-weighted mean batch loss."""
    total, count = 0.0, 0
    for idx in make_batches(len(seqs), batch_size, rng):
        x, y = prepare([seqs[i] for i in idx], cfg, True, rng, aug)
        loss, grads = batch_loss_and_grads(params, cfg, x, y, rng)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at optimizer step {state.step + 1}")
        adam_step(params, grads, state)
        total += loss * len(idx)
        count += len(idx)
    return total / count


def predict_all(params: ModelParams, cfg: ModelConfig, seqs: list[SkeletonSequence], batch_size: int = 64) -> np.ndarray:
    preds = []
    for i in range(0, len(seqs), batch_size):
        x, _ = prepare(seqs[i:i + batch_size], cfg)
        preds.append(np.argmax(forward(params, cfg, x).data, axis=-1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def accuracy(params: ModelParams, cfg: ModelConfig, seqs: list[SkeletonSequence]) -> float:
    if not seqs:
        return float("nan")
    pred = predict_all(params, cfg, seqs)
    return float(np.mean(pred == np.array([s.label for s in seqs])))


def confusion_matrix(labels: Iterable[int], preds: Iterable[int], classes: int) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=np.int64)
    for t, p in zip(labels, preds):
        cm[t, p] += 1
    return cm


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float


@dataclass
class FoldResult:
    fold: FoldSpec
    accuracy: float
    best_accuracy: float
    best_epoch: int
    final_accuracy: float
    final_train_accuracy: float
    n_train: int
    n_test: int
    history: list[EpochRecord]
    params: ModelParams
    best_params: dict[str, np.ndarray]


@dataclass(frozen=True)
class FoldStreams:
    """Independent generators for one fold, split from one seed sequence."""

    init: np.random.Generator
    train: np.random.Generator

    @classmethod
    def from_seed(cls, seed: np.random.SeedSequence | int) -> "FoldStreams":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        a, b = ss.spawn(2)
        return cls(np.random.default_rng(a), np.random.default_rng(b))


def fit(
    params: ModelParams,
    cfg: ModelConfig,
    train: list[SkeletonSequence],
    test: list[SkeletonSequence] | None,
    epochs: int,
    rng: np.random.Generator,
    *,
    batch_size: int = 32,
    lr: float = 1e-3,
    aug: AugmentConfig | None = None,
    train_eval: bool = True,
    callback: Callable[[EpochRecord], bool | None] | None = None,
) -> list[EpochRecord]:
    """Train for up to `epochs`; `callback` returning True stops early."""
    state = AdamState(lr=lr)
    history = []
    for epoch in range(1, epochs + 1):
        loss = train_epoch(params, state, cfg, train, rng, batch_size, aug)
        tr = accuracy(params, cfg, train) if train_eval else float("nan")
        te = accuracy(params, cfg, test) if test is not None else float("nan")
        rec = EpochRecord(epoch, loss, tr, te)
        history.append(rec)
        if callback is not None and callback(rec):
            break
    return history


def run_fold(
    data: Dataset,
    fold: FoldSpec,
    cfg: ModelConfig,
    epochs: int,
    seed: np.random.SeedSequence | int,
    *,
    batch_size: int = 32,
    lr: float = 1e-3,
    aug: AugmentConfig | None = None,
    csv_path: str | Path | None = None,
) -> FoldResult:
    """Fresh init, train, evaluate on the held-out side.

    `accuracy` is the held-out accuracy of the best epoch (best-checkpoint
    selection on the held-out set); `final_accuracy` is the last epoch's.
    With zero epochs both are the untrained model's accuracy.
    """
    if cfg.classes != data.classes:
        raise ParameterError(f"model has {cfg.classes} classes, dataset {data.classes}")
    train, test = fold.split(data)
    streams = FoldStreams.from_seed(seed)
    params = init_params(cfg, streams.init)
    best_acc = accuracy(params, cfg, test)
    best_epoch = 0
    best = {k: v.copy() for k, v in params.arrays().items()}
    writer = fh = None
    if csv_path is not None:
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "test_acc"])

    def on_epoch(rec: EpochRecord):
        nonlocal best_acc, best_epoch, best
        if writer is not None:
            writer.writerow([rec.epoch, repr(rec.loss), repr(rec.train_acc), repr(rec.test_acc)])
            fh.flush()
        if rec.test_acc > best_acc:
            best_acc, best_epoch = rec.test_acc, rec.epoch
            best = {k: v.copy() for k, v in params.arrays().items()}

    try:
        history = fit(params, cfg, train, test, epochs, streams.train, batch_size=batch_size, lr=lr, aug=aug, callback=on_epoch)
    finally:
        if fh is not None:
            fh.close()
    final = history[-1].test_acc if history else best_acc
    final_train = history[-1].train_acc if history else accuracy(params, cfg, train)
    return FoldResult(fold, best_acc, best_acc, best_epoch, final, final_train, len(train), len(test), history, params, best)
