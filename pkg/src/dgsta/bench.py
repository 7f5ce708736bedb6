"""Timing of the per-edge loop attention against the masked matrix form."""
from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .attention import AttentionConfig, MultiHeadParams, multi_head, naive_multi_head
from .graph import HAND_BONES, GraphShape, build_mask
from .tensor import Tensor

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


class BenchmarkMismatch(RuntimeError):
    """The two attention paths disagree, so their timings mean nothing."""


@dataclass
class TimingStats:
    min: float
    median: float


@dataclass
class BenchReport:
    T: int
    N: int
    d: int
    H: int
    mask: str
    repetitions: int
    warmup: int
    seed: int
    naive: TimingStats
    masked: TimingStats
    speedup: float
    percent_reduction: float
    max_abs_deviation: float
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"T={self.T} N={self.N} d={self.d} H={self.H} mask={self.mask} reps={self.repetitions}\n"
            f"  naive  median {self.naive.median * 1e3:9.3f} ms  (min {self.naive.min * 1e3:.3f})\n"
            f"  masked median {self.masked.median * 1e3:9.3f} ms  (min {self.masked.min * 1e3:.3f})\n"
            f"  speedup {self.speedup:.1f}x  -> computation time reduced by {self.percent_reduction:.2f}%\n"
            f"  max |naive - masked| = {self.max_abs_deviation:.3e}"
        )


def random_heads(D_in: int, d: int, H: int, rng: np.random.Generator, bias: bool = True) -> MultiHeadParams:
    bound = np.sqrt(1.0 / D_in)
    w = [Tensor(rng.uniform(-bound, bound, size=(H, D_in, d))) for _ in range(3)]
    b = [Tensor(rng.uniform(-0.1, 0.1, size=(H, 1, d))) if bias else None for _ in range(3)]
    return MultiHeadParams(*w, *b)


def _time(fn, reps: int, warmup: int) -> list[float]:
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def run_benchmark(
    T: int = 8,
    N: int = 22,
    d: int = 32,
    H: int = 8,
    D_in: int = 128,
    reps: int = 30,
    warmup: int = 3,
    mask: str = "spatial",
    seed: int = 0,
    tol: float = 1e-9,
) -> BenchReport:
    """Time both paths on the same random input at 64-bit, single-threaded.

    Raises BenchmarkMismatch before any timing if outputs differ by more than `tol`.
    """
    if reps < 10:
        raise ValueError(f"need at least 10 repetitions, got {reps}")
    rng = np.random.default_rng(seed)
    shape = GraphShape(T, N)
    m = build_mask(mask, shape, bones=HAND_BONES if N == 22 else ())
    cfg = AttentionConfig(d=d, H=H)
    params = random_heads(D_in, d, H, rng)
    x = rng.normal(size=(shape.nodes, D_in))

    def naive():
        return naive_multi_head(x, params, m, cfg)

    def masked():
        return multi_head(x, params, m, cfg).data

    limiter = threadpool_limits(limits=1) if threadpool_limits is not None else None
    try:
        dev = float(np.abs(naive() - masked()).max())
        if not dev <= tol:
            raise BenchmarkMismatch(f"paths disagree by {dev:.3e} (> {tol:g}) at T={T}, N={N}, d={d}, H={H}, mask={mask}")
        t_naive = _time(naive, reps, warmup)
        t_masked = _time(masked, reps, warmup)
    finally:
        if limiter is not None:
            limiter.unregister()
    med_n, med_m = statistics.median(t_naive), statistics.median(t_masked)
    speedup = med_n / med_m
    return BenchReport(
        T, N, d, H, mask, reps, warmup, seed,
        TimingStats(min(t_naive), med_n),
        TimingStats(min(t_masked), med_m),
        speedup,
        100.0 * (1.0 - med_m / med_n),
        dev,
        tol,
    )
