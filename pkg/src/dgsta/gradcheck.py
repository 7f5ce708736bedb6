"""Central finite-difference checks of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelConfig, ModelParams, forward, init_params
from .tensor import Tape, Tensor, cross_entropy

TINY = ModelConfig(joints=3, frames=2, feat_dim=8, heads=2, head_dim=4, classes=3, dropout=0.0, bones=((0, 1), (1, 2)))


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|a|, max|n|), with a floor of 1e-12 on the denominator."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences; `f` maps an array shaped like x to a scalar."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def check_op(op, inputs: list[np.ndarray], probe: np.ndarray | None = None, h: float = 1e-5) -> list[float]:
    """Relative error of each input's gradient of ``sum(op(*inputs) * probe)``."""
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in inputs]
    with Tape() as tape:
        out = op(*tensors)
    if probe is None:
        probe = np.ones(out.shape)
    tape.backward(out, probe)
    errs = []
    for k, t in enumerate(tensors):

        def f(xk, k=k):
            args = [Tensor(a) for a in inputs]
            args[k] = Tensor(xk)
            return float(np.sum(op(*args).data * probe))

        num = numeric_grad(f, inputs[k], h)
        analytic = t.grad if t.grad is not None else np.zeros_like(num)
        errs.append(rel_error(analytic, num))
    return errs


@dataclass
class GroupReport:
    group: str
    size: int
    rel_error: float
    passed: bool


@dataclass
class GradcheckReport:
    seed: int
    tolerance: float
    groups: list[GroupReport]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def failed_groups(self) -> list[str]:
        return [g.group for g in self.groups if not g.passed]

    def table(self) -> str:
        lines = [f"{'group':<14} {'params':>7} {'max rel err':>12}  status"]
        for g in self.groups:
            lines.append(f"{g.group:<14} {g.size:>7} {g.rel_error:>12.3e}  {'ok' if g.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "groups": [{"group": g.group, "size": g.size, "rel_error": g.rel_error, "passed": g.passed} for g in self.groups],
        }


def model_gradcheck(
    cfg: ModelConfig = TINY, seed: int = 0, batch: int = 2, h: float = 1e-5, tol: float = 1e-4
) -> GradcheckReport:
    """Compare tape gradients of the batch loss with central differences, per parameter group.

    The check runs at float64 with dropout off regardless of `cfg`.
    """
    import dataclasses

    cfg = dataclasses.replace(cfg, dtype="float64", dropout=0.0)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng)
    # perturb biases and gains off their init values so their gradients are generic
    for name, t in params.items():
        if not name.endswith((".w", ".w_q", ".w_k", ".w_v")):
            t.data = t.data + rng.uniform(-0.3, 0.3, size=t.shape)
    x = rng.uniform(-1, 1, size=(batch, cfg.frames, cfg.joints, 3))
    y = rng.integers(0, cfg.classes, size=batch)

    params.zero_grad()
    with Tape() as tape:
        loss = cross_entropy(forward(params, cfg, x), y)
    tape.backward(loss)
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}

    def loss_with(name: str, value: np.ndarray) -> float:
        saved = params[name].data
        params[name].data = value
        try:
            return float(cross_entropy(forward(params, cfg, x), y).data)
        finally:
            params[name].data = saved

    # one scale per group: some tensors (e.g. key biases) have exactly zero gradient
    reports = []
    for group, names in params.groups().items():
        a = np.concatenate([analytic[n].ravel() for n in names])
        num = np.concatenate(
            [numeric_grad(lambda v, n=n: loss_with(n, v), params[n].data, h).ravel() for n in names]
        )
        err = rel_error(a, num)
        reports.append(GroupReport(group, a.size, err, err <= tol))
    return GradcheckReport(seed, tol, reports)
