"""Analytic FLOP model and wall-clock measurement of forward cost.

The FLOP model counts matmul work per transformer block: QKV/out
projections, the two attention passes, and the MLP, times depth. Wall
clock is measured on warm, repeated forwards with the BLAS thread pool
pinned, and a zero-depth forward estimates the fixed per-call overhead
that dominates at toy scale.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import Checkpoint
from .foveation import TokenLayout
from .model import DiTConfig, DiTParams, forward, init_params
from .tensor import Parameter, no_grad


def predict_flops(layout: TokenLayout, config: DiTConfig) -> int:
    """Matmul FLOPs of one forward pass under the analytic model."""
    L = layout.length
    m = layout.hr_count
    f, (h, w) = layout.frames, layout.grid_hw
    lr_keys = f * h * w // 4
    W, D, H = config.width, config.head_dim, config.heads
    attn_hr = 2 * m * L * D * H * 2
    attn_lr = 2 * (L - m) * lr_keys * D * H * 2
    qkv = 2 * L * W * 3 * W
    out = 2 * L * W * W
    mlp = 2 * L * W * 4 * W * 2
    return config.depth * (attn_hr + attn_lr + qkv + out + mlp)


@dataclass
class BenchRow:
    label: str
    m: int
    L: int
    ratio: float
    flops: int
    median_s: float
    p10_s: float
    p90_s: float
    overhead_s: float
    speedup_raw: float
    speedup_corrected: float


@dataclass
class BenchReport:
    rows: list[BenchRow]
    threads: int
    reps: int
    warmup: int

    def to_csv(self) -> str:
        lines = [
            f"# forward-pass wall-clock sweep; threads={self.threads} reps={self.reps} warmup={self.warmup}",
            "# overhead = zero-depth forward on the same layout; corrected speedups subtract it",
            "label,m,L,ratio,flops,median_s,p10_s,p90_s,overhead_s,speedup_raw,speedup_corrected",
        ]
        for r in self.rows:
            lines.append(
                f"{r.label},{r.m},{r.L},{r.ratio:.6f},{r.flops},{r.median_s:.6e},"
                f"{r.p10_s:.6e},{r.p90_s:.6e},{r.overhead_s:.6e},"
                f"{r.speedup_raw:.4f},{r.speedup_corrected:.4f}"
            )
        return "\n".join(lines) + "\n"


def _time_forward(params: DiTParams, layout: TokenLayout, reps: int, warmup: int, rng) -> np.ndarray:
    c = params.config.channels
    z = rng.standard_normal((layout.length, c)).astype(np.float32)
    with no_grad():
        for _ in range(warmup):
            forward(params, z, 0.5, 0, layout)
        samples = np.empty(reps)
        for i in range(reps):
            t0 = time.perf_counter()
            forward(params, z, 0.5, 0, layout)
            samples[i] = time.perf_counter() - t0
    res = time.get_clock_info("perf_counter").resolution
    if np.median(samples) < 100 * res:
        # timer too coarse for one call: time small batches instead
        k = max(2, int(np.ceil(100 * res / max(np.median(samples), res))))
        with no_grad():
            for i in range(reps):
                t0 = time.perf_counter()
                for _ in range(k):
                    forward(params, z, 0.5, 0, layout)
                samples[i] = (time.perf_counter() - t0) / k
    return samples


def measure(
    ckpt: Checkpoint,
    layouts: list[tuple[str, TokenLayout]],
    reps: int = 20,
    warmup: int = 3,
    threads: int = 1,
) -> BenchReport:
    """Wall-clock forward cost per layout; speedups are against the first row.

    The first layout is treated as the full-resolution reference, so pass
    the ratio-1.0 layout first.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    zero_cfg = replace(ckpt.config, depth=0)
    zero_params = init_params(zero_cfg, seed=0)
    for name in ("in.w", "in.b", "final.mod.w", "final.mod.b", "final.out.w", "final.out.b"):
        zero_params.tensors[name] = Parameter(ckpt.params.tensors[name].data.copy())
    zero_params.tensors["time.w1"] = Parameter(ckpt.params.tensors["time.w1"].data.copy())
    zero_params.tensors["time.b1"] = Parameter(ckpt.params.tensors["time.b1"].data.copy())
    zero_params.tensors["time.w2"] = Parameter(ckpt.params.tensors["time.w2"].data.copy())
    zero_params.tensors["time.b2"] = Parameter(ckpt.params.tensors["time.b2"].data.copy())
    zero_params.tensors["class.emb"] = Parameter(ckpt.params.tensors["class.emb"].data.copy())

    rows: list[BenchRow] = []
    rng = np.random.default_rng(0)
    with threadpool_limits(limits=threads):
        medians: dict[str, tuple[float, float]] = {}
        for label, layout in layouts:
            samples = _time_forward(ckpt.params, layout, reps, warmup, rng)
            zero_samples = _time_forward(zero_params, layout, max(5, reps // 2), warmup, rng)
            med = float(np.median(samples))
            overhead = float(np.median(zero_samples))
            medians[label] = (med, overhead)
            f, (h, w) = layout.frames, layout.grid_hw
            rows.append(
                BenchRow(
                    label=label,
                    m=layout.hr_count,
                    L=layout.length,
                    ratio=layout.length / (f * h * w),
                    flops=predict_flops(layout, ckpt.config),
                    median_s=med,
                    p10_s=float(np.percentile(samples, 10)),
                    p90_s=float(np.percentile(samples, 90)),
                    overhead_s=overhead,
                    speedup_raw=0.0,
                    speedup_corrected=0.0,
                )
            )
    full_med, full_over = medians[rows[0].label]
    for r in rows:
        r.speedup_raw = full_med / r.median_s
        corrected = max(r.median_s - r.overhead_s, 1e-12)
        r.speedup_corrected = max(full_med - full_over, 1e-12) / corrected
    return BenchReport(rows=rows, threads=threads, reps=reps, warmup=warmup)
