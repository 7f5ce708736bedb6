"""The DG-STA classifier and its two ablation variants.

dgsta:  coords -> embed(3->F) + S-PE -> LN -> dropout -> spatial attention (H*d)
        -> LN -> mid(H*d->F) + T-PE -> LN -> dropout -> temporal attention (H*d)
        -> LN -> mean over nodes -> classifier
ssg:    same pipeline, attention restricted to bone edges within a frame and
        same-joint edges between consecutive frames
gat:    coords -> embed + S-PE + T-PE -> LN -> dropout -> one full-graph
        attention -> LN -> mean over nodes -> classifier
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import ETA, AttentionConfig, MultiHeadParams, multi_head
from .embeddings import build_tpe, node_spe
from .errors import ParameterError, ShapeError
from .graph import HAND_BONES, AttentionMask, GraphShape, build_mask
from .tensor import Tensor, add, dropout, layer_norm, linear, mean_pool_rows, reshape

VARIANTS = ("dgsta", "gat", "ssg")


@dataclass(frozen=True)
class ModelConfig:
    joints: int = 22
    frames: int = 8
    feat_dim: int = 128
    heads: int = 8
    head_dim: int = 32
    classes: int = 14
    dropout: float = 0.2
    variant: str = "dgsta"
    temporal_same_joint_only: bool = False
    attn_bias: bool = True
    eta: float = ETA
    ln_eps: float = 1e-5
    dtype: str = "float64"
    bones: tuple[tuple[int, int], ...] = field(default=HAND_BONES)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.feat_dim % 2:
            raise ParameterError(f"feat_dim must be even for the position tables, got {self.feat_dim}")
        if self.classes < 2:
            raise ParameterError(f"need at least 2 classes, got {self.classes}")
        if self.dtype not in ("float64", "float32"):
            raise ParameterError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")
        object.__setattr__(self, "bones", tuple(tuple(int(v) for v in b) for b in self.bones))

    @property
    def attn_out(self) -> int:
        return self.heads * self.head_dim

    @property
    def shape(self) -> GraphShape:
        return GraphShape(self.frames, self.joints)

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(d=self.head_dim, H=self.heads, eta=self.eta, bias=self.attn_bias)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bones"] = [list(b) for b in self.bones]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "bones" in d:
            d["bones"] = tuple(tuple(b) for b in d["bones"])
        return cls(**d)


class ModelParams:
    """Named parameter tensors. Names are ``<group>.<field>``."""

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for name in self.tensors:
            out.setdefault(name.split(".", 1)[0], []).append(name)
        return out

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def attention(self, group: str) -> MultiHeadParams:
        t = self.tensors
        return MultiHeadParams(
            t[f"{group}.w_q"], t[f"{group}.w_k"], t[f"{group}.w_v"],
            t.get(f"{group}.b_q"), t.get(f"{group}.b_k"), t.get(f"{group}.b_v"),
        )


def _layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], str, int]]:
    """(name, shape, kind, fan_in) for every parameter, in init order."""
    F, A, H, d, C = cfg.feat_dim, cfg.attn_out, cfg.heads, cfg.head_dim, cfg.classes

    def dense(group, n_in, n_out):
        return [(f"{group}.w", (n_in, n_out), "weight", n_in), (f"{group}.b", (n_out,), "zero", n_in)]

    def norm(group, width):
        return [(f"{group}.gain", (width,), "one", width), (f"{group}.bias", (width,), "zero", width)]

    def attn(group, n_in):
        out = [(f"{group}.w_{p}", (H, n_in, d), "weight", n_in) for p in "qkv"]
        if cfg.attn_bias:
            out += [(f"{group}.b_{p}", (H, 1, d), "zero", n_in) for p in "qkv"]
        return out

    layout = dense("embed", 3, F) + norm("ln_embed", F)
    if cfg.variant == "gat":
        layout += attn("graph", F) + norm("ln_graph", A)
    else:
        layout += attn("spatial", F) + norm("ln_spatial", A)
        layout += dense("mid", A, F) + norm("ln_mid", F)
        layout += attn("temporal", F) + norm("ln_temporal", A)
    return layout + dense("classifier", A, C)


def param_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _, _ in _layout(cfg))


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases 0; norm gains 1."""
    dt = np.dtype(cfg.dtype)
    tensors = {}
    for name, shape, kind, fan_in in _layout(cfg):
        if kind == "weight":
            bound = np.sqrt(1.0 / fan_in)
            a = rng.uniform(-bound, bound, size=shape)
        elif kind == "one":
            a = np.ones(shape)
        else:
            a = np.zeros(shape)
        tensors[name] = Tensor(a.astype(dt), requires_grad=True, name=name)
    return ModelParams(tensors)


class _Constants:
    """Masks and position tables for one config, built once and reused."""

    _cache: dict = {}

    def __init__(self, cfg: ModelConfig):
        dt = np.dtype(cfg.dtype)
        shape = cfg.shape
        self.spe = node_spe(shape, cfg.feat_dim).astype(dt)
        self.tpe = build_tpe(shape, cfg.feat_dim).values.astype(dt)
        kw = dict(bones=cfg.bones, same_joint_only=cfg.temporal_same_joint_only)
        if cfg.variant == "dgsta":
            self.masks = (build_mask("spatial", shape, **kw), build_mask("temporal", shape, **kw))
        elif cfg.variant == "ssg":
            self.masks = (build_mask("ssg_spatial", shape, **kw), build_mask("ssg_temporal", shape, **kw))
        else:
            self.masks = (build_mask("full", shape, **kw),)

    @classmethod
    def get(cls, cfg: ModelConfig) -> "_Constants":
        if cfg not in cls._cache:
            cls._cache[cfg] = cls(cfg)
        return cls._cache[cfg]


def stage_masks(cfg: ModelConfig) -> tuple[AttentionMask, ...]:
    """Masks used by the attention stages of `cfg.variant`, in pipeline order."""
    return _Constants.get(cfg).masks


def _coords(seq, cfg: ModelConfig) -> np.ndarray:
    x = getattr(seq, "frames", seq)
    x = x.data if isinstance(x, Tensor) else np.asarray(x)
    if x.ndim not in (3, 4) or x.shape[-3:] != (cfg.frames, cfg.joints, 3):
        raise ShapeError(f"expected coordinates (..., {cfg.frames}, {cfg.joints}, 3), got {x.shape}")
    return x.astype(cfg.dtype, copy=False)


def forward(
    params: ModelParams,
    cfg: ModelConfig,
    seq,
    training: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Class logits for one sequence (T, N, 3) -> (C,) or a batch (B, T, N, 3) -> (B, C).

    `seq` may be a SkeletonSequence or a coordinate array. If `trace` is a
    dict it receives the intermediate node features by stage name.
    """
    x = _coords(seq, cfg)
    single = x.ndim == 3
    if single:
        x = x[None]
    consts = _Constants.get(cfg)
    acfg = cfg.attention
    p = params
    lead = x.shape[:-3]
    nodes = cfg.frames * cfg.joints

    def keep(name, t):
        if trace is not None:
            trace[name] = t.data[0] if single and t.ndim > 1 else t.data
        return t

    h = Tensor(x.reshape(*lead, nodes, 3))
    h = keep("embedded", linear(h, p["embed.w"], p["embed.b"]))
    h = add(h, consts.spe)
    if cfg.variant == "gat":
        h = add(h, consts.tpe)
    h = keep("spatial_in", h)
    h = layer_norm(h, p["ln_embed.gain"], p["ln_embed.bias"], cfg.ln_eps)
    h = dropout(h, cfg.dropout, training, rng)

    if cfg.variant == "gat":
        h = keep("graph_out", multi_head(h, p.attention("graph"), consts.masks[0], acfg))
        h = layer_norm(h, p["ln_graph.gain"], p["ln_graph.bias"], cfg.ln_eps)
    else:
        spatial_mask, temporal_mask = consts.masks
        h = keep("spatial_out", multi_head(h, p.attention("spatial"), spatial_mask, acfg))
        h = layer_norm(h, p["ln_spatial.gain"], p["ln_spatial.bias"], cfg.ln_eps)
        h = keep("mid", linear(h, p["mid.w"], p["mid.b"]))
        h = keep("temporal_in", add(h, consts.tpe))
        h = layer_norm(h, p["ln_mid.gain"], p["ln_mid.bias"], cfg.ln_eps)
        h = dropout(h, cfg.dropout, training, rng)
        h = keep("temporal_out", multi_head(h, p.attention("temporal"), temporal_mask, acfg))
        h = layer_norm(h, p["ln_temporal.gain"], p["ln_temporal.bias"], cfg.ln_eps)

    pooled = mean_pool_rows(h)
    logits = linear(pooled, p["classifier.w"], p["classifier.b"])
    keep("pooled", pooled)
    if single:
        logits = reshape(logits, (cfg.classes,))
    return logits


def variant_forward_gat(params, cfg: ModelConfig, seq, training=False, rng=None, trace=None) -> Tensor:
    if cfg.variant != "gat":
        cfg = dataclasses.replace(cfg, variant="gat")
    return forward(params, cfg, seq, training, rng, trace)


def predict(params: ModelParams, cfg: ModelConfig, seq) -> int | np.ndarray:
    """Argmax of eval-mode logits; ties go to the lowest class index."""
    logits = forward(params, cfg, seq).data
    out = np.argmax(logits, axis=-1)
    return int(out) if out.ndim == 0 else out


def save_checkpoint(path: str | Path, params: ModelParams, cfg: ModelConfig, extra: dict | None = None) -> Path:
    """npz archive: ``__config__`` holds the JSON config, then one array per parameter."""
    path = Path(path)
    meta = {"config": cfg.to_dict(), "extra": extra or {}}
    arrays = {f"param/{k}": v for k, v in params.arrays().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __config__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig, dict]:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__config__"]))
        cfg = ModelConfig.from_dict(meta["config"])
        tensors = {
            k.split("/", 1)[1]: Tensor(z[k], requires_grad=True, name=k.split("/", 1)[1])
            for k in z.files
            if k.startswith("param/")
        }
    expected = {name: shape for name, shape, _, _ in _layout(cfg)}
    got = {k: t.shape for k, t in tensors.items()}
    if expected != got:
        raise ShapeError(f"checkpoint parameters do not match its config: {sorted(set(expected) ^ set(got)) or 'shape mismatch'}")
    return ModelParams({k: tensors[k] for k in expected}), cfg, meta.get("extra", {})
