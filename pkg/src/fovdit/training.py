"""Flow-matching training on foveated token sequences.

Each step draws a batch of synthetic samples, a per-example mask under
the configured strategy, a uniform timestep and Gaussian noise, then
takes one Adam step on the velocity regression objective. All draws come
from a single seeded generator in a fixed order, so runs are bit-
reproducible per platform.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import masks as M
from .checkpoint import Checkpoint, save
from .codec import CodecConfig, down2, encode
from .data import SyntheticSpec, generate_sample
from .foveation import FoveatedSequence, TokenLayout, merge
from .masks import FoveationMask
from .model import BatchItem, DiTConfig, DiTParams, init_params, loss_batch
from .tensor import backward


class TrainingError(RuntimeError):
    """Training aborted on a non-finite loss; carries a diagnostic dump."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    strategy: str = "randomized"  # randomized | saliency | bbox | none
    radius_frac_min: float = 0.25
    radius_frac_max: float = 0.6
    budget_min: float = 0.25
    budget_max: float = 0.5
    max_boxes: int = 3
    seed: int = 0
    dataset_seed: int = 1234
    dataset_size: int = 8192
    norm_samples: int = 1024
    checkpoint_every: int = 0
    image_size: int = 64
    frames: int = 1

    def __post_init__(self):
        if self.steps < 0 or self.batch < 1 or self.dataset_size < 1 or self.frames < 1:
            raise ValueError("steps/batch/dataset_size/frames must be positive")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.strategy not in ("randomized", "saliency", "bbox", "none"):
            raise ValueError(f"unknown mask strategy {self.strategy!r}")
        if not (0 < self.radius_frac_min <= self.radius_frac_max):
            raise ValueError("radius fractions must satisfy 0 < min <= max")
        if not (0 < self.budget_min <= self.budget_max <= 1):
            raise ValueError("budgets must satisfy 0 < min <= max <= 1")


class Adam:
    """Adam with bias correction; parameters update in fixed name order."""

    def __init__(self, params: DiTParams, lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.named()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.named()}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name, p in self.params.named():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def compute_latent_stats(cfg: TrainConfig, codec: CodecConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std of encoded dataset latents (frozen into checkpoints)."""
    spec = SyntheticSpec(image_size=cfg.image_size, frames=1)
    c = codec.channels
    n = 0
    acc = np.zeros(c, dtype=np.float64)
    acc2 = np.zeros(c, dtype=np.float64)
    for i in range(cfg.norm_samples):
        img, _, _ = generate_sample(spec, cfg.dataset_seed, i)
        vals = encode(img, codec).values.reshape(c, -1).astype(np.float64)
        acc += vals.sum(axis=1)
        acc2 += (vals * vals).sum(axis=1)
        n += vals.shape[1]
    mean = acc / n
    var = np.maximum(acc2 / n - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)


def foveated_target(
    image: np.ndarray,
    mask: FoveationMask,
    codec: CodecConfig,
    latent_mean: np.ndarray,
    latent_std: np.ndarray,
    layout: TokenLayout | None = None,
) -> FoveatedSequence:
    """Clean training sequence: HR latents merged with half-res latents.

    Both grids encode the same image (the LR side through a bicubic
    half-resolution copy), then tokens are normalized channelwise.
    """
    hr = encode(image, codec)
    lr = encode(down2(image), codec)
    seq = merge(hr, lr, mask, layout=layout)
    tokens = (seq.tokens - latent_mean[None, :]) / latent_std[None, :]
    return FoveatedSequence(seq.layout, tokens.astype(np.float32))


def _draw_mask(cfg: TrainConfig, rng: np.random.Generator, h: int, w: int, saliency: np.ndarray) -> FoveationMask:
    if cfg.strategy == "none":
        return M.FoveationMask(np.ones((cfg.frames, h, w), dtype=bool))
    if cfg.strategy == "saliency":
        budget = rng.uniform(cfg.budget_min, cfg.budget_max)
        base = M.from_saliency(saliency, h, w, budget)
        if cfg.frames == 1:
            return base
        return M.FoveationMask(np.broadcast_to(base.bits[0], (cfg.frames, h, w)).copy())
    if cfg.strategy == "bbox":
        n = int(rng.integers(1, cfg.max_boxes + 1))
        boxes = []
        for _ in range(n):
            y0 = int(rng.integers(0, h - 1))
            x0 = int(rng.integers(0, w - 1))
            y1 = int(rng.integers(y0 + 1, h + 1))
            x1 = int(rng.integers(x0 + 1, w + 1))
            boxes.append((y0, x0, y1, x1))
        base = M.from_bboxes(h, w, boxes)
        if cfg.frames == 1:
            return base
        return M.FoveationMask(np.broadcast_to(base.bits[0], (cfg.frames, h, w)).copy())
    # randomized circles; for video, a random spline trajectory of circles
    if cfg.frames == 1:
        r = rng.uniform(cfg.radius_frac_min, cfg.radius_frac_max) * min(h, w)
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        return M.make_circle(h, w, (cy, cx), r)
    pts = []
    for frac in (0.0, 0.5, 1.0):
        r = rng.uniform(cfg.radius_frac_min, cfg.radius_frac_max) * min(h, w)
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        pts.append((frac * (cfg.frames - 1), cy, cx, r))
    return M.make_trajectory(cfg.frames, h, w, pts)


def train(
    cfg: TrainConfig,
    dit_cfg: DiTConfig,
    checkpoint_path: str | Path | None = None,
    trace_path: str | Path | None = None,
    progress=None,
) -> tuple[Checkpoint, np.ndarray]:
    """Run the trainer; returns the final checkpoint and per-step losses."""
    codec = CodecConfig(patch=dit_cfg.patch)
    h = cfg.image_size // codec.patch
    w = cfg.image_size // codec.patch
    spec = SyntheticSpec(image_size=cfg.image_size, frames=cfg.frames)
    latent_mean, latent_std = compute_latent_stats(cfg, codec)
    params = init_params(dit_cfg, seed=cfg.seed)
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    meta = {"train": asdict(cfg)}
    ckpt = Checkpoint(params=params, latent_mean=latent_mean, latent_std=latent_std, meta=meta)
    losses = np.zeros(cfg.steps, dtype=np.float64)
    ones_layout: TokenLayout | None = None

    trace_fh = open(trace_path, "w") if trace_path is not None else None
    try:
        if trace_fh:
            trace_fh.write("step,loss\n")
        for step in range(cfg.steps):
            items: list[BatchItem] = []
            noises: list[np.ndarray] = []
            for _ in range(cfg.batch):
                idx = int(rng.integers(cfg.dataset_size))
                img, class_id, sal = generate_sample(spec, cfg.dataset_seed, idx)
                mask = _draw_mask(cfg, rng, h, w, sal)
                if cfg.strategy == "none":
                    if ones_layout is None:
                        ones_layout = TokenLayout.from_mask(mask)
                    seq = foveated_target(img, mask, codec, latent_mean, latent_std, layout=ones_layout)
                else:
                    seq = foveated_target(img, mask, codec, latent_mean, latent_std)
                layout = seq.layout
                t = float(rng.random())
                noise = rng.standard_normal(seq.tokens.shape, dtype=np.float32)
                items.append(BatchItem(seq.tokens, layout, t, class_id))
                noises.append(noise)
            params.zero_grads()
            loss_node = loss_batch(params, items, noises)
            loss_val = loss_node.item()
            if not np.isfinite(loss_val):
                dump = {
                    "step": step,
                    "loss": loss_val,
                    "config": asdict(cfg),
                    "grad_norms": {k: float(np.abs(p.grad).max()) for k, p in params.named()},
                }
                raise TrainingError(f"non-finite loss {loss_val} at step {step}", dump)
            backward(loss_node)
            opt.step()
            losses[step] = loss_val
            if trace_fh:
                trace_fh.write(f"{step},{loss_val:.8g}\n")
            if progress is not None:
                progress(step, loss_val)
            if (
                checkpoint_path is not None
                and cfg.checkpoint_every > 0
                and (step + 1) % cfg.checkpoint_every == 0
                and step + 1 < cfg.steps
            ):
                interim = Path(checkpoint_path)
                save(interim.with_name(f"{interim.stem}.step{step + 1:06d}{interim.suffix}"), ckpt)
    finally:
        if trace_fh:
            trace_fh.close()
    if checkpoint_path is not None:
        save(checkpoint_path, ckpt)
    return ckpt, losses
