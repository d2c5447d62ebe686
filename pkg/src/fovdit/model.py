"""A small diffusion transformer over variable-length foveated sequences.

Blocks follow the adaLN-zero recipe: timestep + class conditioning is
injected as per-block scale/shift/gate produced by zero-initialized
modulation tables, and the final output projection is zero-initialized,
so an untrained model predicts an all-zero velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .foveation import TokenLayout
from .rope import AttentionConfig, mixed_attention
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class DiTConfig:
    depth: int = 6
    width: int = 128
    heads: int = 4
    patch: int = 4
    num_classes: int = 8
    time_embed_dim: int = 256
    rope_theta: float = 10000.0
    rope_site: str = "top_left"
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError(f"width {self.width} must divide by heads {self.heads}")
        if (self.width // self.heads) % 2:
            raise ValueError("head_dim must be even")

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    @property
    def channels(self) -> int:
        return 3 * self.patch * self.patch

    def attention(self) -> AttentionConfig:
        return AttentionConfig(
            heads=self.heads, head_dim=self.head_dim, theta=self.rope_theta, site=self.rope_site
        )


@dataclass
class DiTParams:
    """All learnable weights, keyed by name in a fixed order."""

    config: DiTConfig
    tensors: dict[str, Parameter] = field(default_factory=dict)

    def named(self):
        return self.tensors.items()

    def zero_grads(self):
        for p in self.tensors.values():
            p.zero_grad()


def init_params(config: DiTConfig, seed: int = 0, dtype=np.float32) -> DiTParams:
    rng = np.random.default_rng(seed)
    W, C, Tdim, K = config.width, config.channels, config.time_embed_dim, config.num_classes
    t = {}

    def xavier(shape):
        bound = math.sqrt(6.0 / (shape[0] + shape[1]))
        return Parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)

    def zeros(shape):
        return Parameter(np.zeros(shape), dtype=dtype)

    def normal(shape, std=0.02):
        return Parameter(rng.normal(0.0, std, size=shape), dtype=dtype)

    t["in.w"] = xavier((C, W))
    t["in.b"] = zeros((W,))
    t["time.w1"] = normal((Tdim, W))
    t["time.b1"] = zeros((W,))
    t["time.w2"] = normal((W, W))
    t["time.b2"] = zeros((W,))
    t["class.emb"] = normal((K, W))
    for i in range(config.depth):
        t[f"blk{i}.mod.w"] = zeros((W, 6 * W))
        t[f"blk{i}.mod.b"] = zeros((6 * W,))
        t[f"blk{i}.qkv.w"] = xavier((W, 3 * W))
        t[f"blk{i}.qkv.b"] = zeros((3 * W,))
        t[f"blk{i}.attn_out.w"] = xavier((W, W))
        t[f"blk{i}.attn_out.b"] = zeros((W,))
        t[f"blk{i}.mlp.w1"] = xavier((W, 4 * W))
        t[f"blk{i}.mlp.b1"] = zeros((4 * W,))
        t[f"blk{i}.mlp.w2"] = xavier((4 * W, W))
        t[f"blk{i}.mlp.b2"] = zeros((W,))
    t["final.mod.w"] = zeros((W, 2 * W))
    t["final.mod.b"] = zeros((2 * W,))
    t["final.out.w"] = zeros((W, C))
    t["final.out.b"] = zeros((C,))
    return DiTParams(config=config, tensors=t)


def timestep_embedding(t: float, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal features of the flow time, shape (1, dim)."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = 1000.0 * float(t) * freqs
    return np.concatenate([np.cos(ang), np.sin(ang)])[None, :].astype(dtype)


@dataclass
class BatchItem:
    """One forward-pass work item."""

    tokens: np.ndarray  # (L, channels)
    layout: TokenLayout
    t: float
    class_id: int


def _condition(params: DiTParams, items: list[BatchItem], dtype) -> Tensor:
    cfg = params.config
    p = params.tensors
    rows = []
    for it in items:
        if not (0 <= it.class_id < cfg.num_classes):
            raise ValueError(f"class_id {it.class_id} out of range [0, {cfg.num_classes})")
        if not (0.0 <= it.t <= 1.0):
            raise ValueError(f"timestep {it.t} outside [0, 1]")
        emb = Tensor(timestep_embedding(it.t, cfg.time_embed_dim, dtype))
        h = T.silu(T.add(T.matmul(emb, p["time.w1"]), p["time.b1"]))
        h = T.add(T.matmul(h, p["time.w2"]), p["time.b2"])
        cls_row = T.gather_rows(p["class.emb"], np.array([it.class_id]), unique=True)
        rows.append(T.add(h, cls_row))
    return rows[0] if len(rows) == 1 else T.concat(rows, axis=0)


def _modulate(h: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    return T.add(T.mul(h, T.add(scale, 1.0)), shift)


def forward_batch(params: DiTParams, items: list[BatchItem]) -> Tensor:
    """Velocity predictions for a batch, concatenated along the token axis.

    Linear layers run on the token-concatenated matrix; attention runs
    per example since every item carries its own layout.
    """
    cfg = params.config
    p = params.tensors
    attn_cfg = cfg.attention()
    counts = np.array([it.layout.length for it in items], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    toks = np.concatenate([np.asarray(it.tokens) for it in items], axis=0)
    dtype = params.tensors["in.w"].data.dtype
    x = T.add(T.matmul(Tensor(toks, dtype=dtype), p["in.w"]), p["in.b"])

    cond = _condition(params, items, dtype)
    c_act = T.silu(cond)
    W = cfg.width

    for i in range(cfg.depth):
        mod = T.add(T.matmul(c_act, p[f"blk{i}.mod.w"]), p[f"blk{i}.mod.b"])
        sc1, sh1, g1, sc2, sh2, g2 = (
            T.repeat_rows(T.narrow(mod, 1, k * W, W), counts) for k in range(6)
        )
        h = _modulate(T.layer_norm(x, eps=cfg.ln_eps), sc1, sh1)
        qkv = T.add(T.matmul(h, p[f"blk{i}.qkv.w"]), p[f"blk{i}.qkv.b"])
        q_all = T.reshape(T.narrow(qkv, 1, 0, W), (-1, cfg.heads, cfg.head_dim))
        k_all = T.reshape(T.narrow(qkv, 1, W, W), (-1, cfg.heads, cfg.head_dim))
        v_all = T.reshape(T.narrow(qkv, 1, 2 * W, W), (-1, cfg.heads, cfg.head_dim))
        outs = []
        for j, it in enumerate(items):
            off, L = int(offsets[j]), int(counts[j])
            qj = T.narrow(q_all, 0, off, L)
            kj = T.narrow(k_all, 0, off, L)
            vj = T.narrow(v_all, 0, off, L)
            oj = mixed_attention(qj, kj, vj, it.layout, attn_cfg)
            outs.append(T.reshape(oj, (L, W)))
        attn = outs[0] if len(outs) == 1 else T.concat(outs, axis=0)
        attn = T.add(T.matmul(attn, p[f"blk{i}.attn_out.w"]), p[f"blk{i}.attn_out.b"])
        x = T.add(x, T.mul(g1, attn))

        h = _modulate(T.layer_norm(x, eps=cfg.ln_eps), sc2, sh2)
        h = T.silu(T.add(T.matmul(h, p[f"blk{i}.mlp.w1"]), p[f"blk{i}.mlp.b1"]))
        h = T.add(T.matmul(h, p[f"blk{i}.mlp.w2"]), p[f"blk{i}.mlp.b2"])
        x = T.add(x, T.mul(g2, h))

    fmod = T.add(T.matmul(c_act, p["final.mod.w"]), p["final.mod.b"])
    scf = T.repeat_rows(T.narrow(fmod, 1, 0, W), counts)
    shf = T.repeat_rows(T.narrow(fmod, 1, W, W), counts)
    h = _modulate(T.layer_norm(x, eps=cfg.ln_eps), scf, shf)
    return T.add(T.matmul(h, p["final.out.w"]), p["final.out.b"])


def forward(params: DiTParams, tokens: np.ndarray, t: float, class_id: int, layout: TokenLayout) -> Tensor:
    """Velocity prediction for one sequence; output shape equals input shape."""
    return forward_batch(params, [BatchItem(tokens, layout, t, class_id)])


def loss_batch(params: DiTParams, items: list[BatchItem], noises: list[np.ndarray]) -> Tensor:
    """Flow-matching objective, averaged equally over batch items.

    Each item's tokens are the clean sequence; the noisy input is
    (1 - t) * clean + t * noise and the regression target is
    noise - clean.
    """
    noisy_items = []
    targets = []
    for it, noise in zip(items, noises):
        z0 = np.asarray(it.tokens)
        if noise.shape != z0.shape:
            raise T.ShapeError(f"noise shape {noise.shape} must match tokens {z0.shape}")
        z_t = (1.0 - it.t) * z0 + it.t * noise
        noisy_items.append(BatchItem(z_t, it.layout, it.t, it.class_id))
        targets.append(noise - z0)
    pred = forward_batch(params, noisy_items)
    counts = [it.layout.length for it in items]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = None
    scale = 1.0 / len(items)
    for j, tgt in enumerate(targets):
        dj = T.sub(T.narrow(pred, 0, int(offsets[j]), counts[j]), Tensor(tgt.astype(pred.data.dtype)))
        lj = T.mul(T.mean(T.mul(dj, dj)), scale)
        total = lj if total is None else T.add(total, lj)
    return total


def loss(params: DiTParams, z0_fov: np.ndarray, t: float, noise: np.ndarray, class_id: int, layout: TokenLayout) -> Tensor:
    return loss_batch(params, [BatchItem(z0_fov, layout, t, class_id)], [noise])
