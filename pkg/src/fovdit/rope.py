"""Rotary positional embedding over mixed-resolution token layouts.

Attention runs in two passes so that key phases always align with the
querying token's resolution:

* HR pass: HR tokens query all L tokens, with every position expressed in
  HR cell units (an LR key sits at the top-left cell of its block).
* LR pass: LR tokens query all LR tokens plus one HR representative per
  fully-HR block (its top-left token), with positions expressed in LR
  block units, so each LR query sees exactly f*h*w/4 keys.

Outputs of the two passes are re-interleaved into layout order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .foveation import HR, TokenLayout


@dataclass(frozen=True)
class AttentionConfig:
    heads: int = 4
    head_dim: int = 32
    theta: float = 10000.0
    site: str = "top_left"  # subsample site for LR keys in HR units: top_left | center

    def __post_init__(self):
        if self.head_dim % 2:
            raise ValueError(f"head_dim must be even, got {self.head_dim}")
        if self.site not in ("top_left", "center"):
            raise ValueError(f"unknown subsample site {self.site!r}")

    def axis_dims(self, with_time: bool) -> tuple[int, ...]:
        """Channel split across rotary axes: (y, x) or (t, y, x).

        Pairs divide as evenly as possible; leftovers go to y first,
        then x.
        """
        pairs = self.head_dim // 2
        if not with_time:
            py = pairs // 2 + pairs % 2
            return (2 * py, 2 * (pairs - py))
        base, rem = divmod(pairs, 3)
        py = base + (1 if rem >= 1 else 0)
        px = base + (1 if rem >= 2 else 0)
        return (2 * base, 2 * py, 2 * px)


@dataclass
class PositionTable:
    """Per-token coordinates in both unit systems, shape (L, 3) as (t, y, x).

    HR-unit rows place LR tokens at their block's subsample site; LR-unit
    rows are meaningful for LR tokens and for HR block representatives
    (block indices), which is all the LR pass consumes.
    """

    hr_units: np.ndarray
    lr_units: np.ndarray


def assign_positions(layout: TokenLayout, config: AttentionConfig = AttentionConfig()) -> PositionTable:
    cls = layout.cls
    fr = layout.frame.astype(np.float64)
    y = layout.y.astype(np.float64)
    x = layout.x.astype(np.float64)
    is_lr = cls != HR
    off = 0.5 if config.site == "center" else 0.0
    hr_y = np.where(is_lr, 2.0 * y + off, y)
    hr_x = np.where(is_lr, 2.0 * x + off, x)
    lr_y = np.where(is_lr, y, np.floor(y / 2.0))
    lr_x = np.where(is_lr, x, np.floor(x / 2.0))
    return PositionTable(
        hr_units=np.stack([fr, hr_y, hr_x], axis=1),
        lr_units=np.stack([fr, lr_y, lr_x], axis=1),
    )


def _phase_tables(positions: np.ndarray, config: AttentionConfig, with_time: bool, dtype) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (n, 1, head_dim), pair channels duplicated."""
    dims = config.axis_dims(with_time)
    axes = (0, 1, 2) if with_time else (1, 2)
    angle_parts = []
    for axis, d in zip(axes, dims):
        pa = d // 2
        if pa == 0:
            continue
        freqs = config.theta ** (-2.0 * np.arange(pa) / d)
        angle_parts.append(positions[:, axis : axis + 1] * freqs[None, :])
    ang = np.concatenate(angle_parts, axis=1)
    ang = np.repeat(ang, 2, axis=1)[:, None, :]
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def rotate(x: T.Tensor, positions: np.ndarray, config: AttentionConfig, with_time: bool) -> T.Tensor:
    """Rotate (n, heads, head_dim) vectors by their positional phases."""
    cos, sin = _phase_tables(positions, config, with_time, x.data.dtype)
    return T.rope_rotate(x, cos, sin)


def _scaled_attention(q: T.Tensor, k: T.Tensor, v: T.Tensor, head_dim: int) -> T.Tensor:
    """Softmax attention on (n, H, D) queries against (Lk, H, D) keys/values."""
    qt = T.transpose(q, (1, 0, 2))
    kt = T.transpose(k, (1, 2, 0))
    vt = T.transpose(v, (1, 0, 2))
    logits = T.mul(T.bmm(qt, kt), 1.0 / math.sqrt(head_dim))
    weights = T.softmax_rows(logits)
    out = T.bmm(weights, vt)
    return T.transpose(out, (1, 0, 2))


def standard_attention(
    q: T.Tensor, k: T.Tensor, v: T.Tensor, positions: np.ndarray, config: AttentionConfig, with_time: bool
) -> T.Tensor:
    """Single-pass rotary attention on a uniform grid (the reference path)."""
    qr = rotate(q, positions, config, with_time)
    kr = rotate(k, positions, config, with_time)
    return _scaled_attention(qr, kr, v, config.head_dim)


def _layout_plan(layout: TokenLayout, config: AttentionConfig):
    key = ("plan", config.theta, config.site, config.head_dim)
    plan = layout._cache.get(key)
    if plan is None:
        positions = assign_positions(layout, config)
        hr_idx = layout.hr_indices()
        lr_idx = layout.lr_indices()
        rep_idx = layout.representative_indices()
        inv = np.argsort(np.concatenate([hr_idx, lr_idx]), kind="stable")
        plan = (positions, hr_idx, lr_idx, rep_idx, inv)
        layout._cache[key] = plan
    return plan


def _tables(layout: TokenLayout, config: AttentionConfig, positions: PositionTable, dtype, custom: bool):
    with_time = layout.frames > 1
    if not custom:
        key = ("tables", config.theta, config.site, config.head_dim, str(dtype))
        cached = layout._cache.get(key)
        if cached is not None:
            return cached
    cos_hr, sin_hr = _phase_tables(positions.hr_units, config, with_time, dtype)
    cos_lr, sin_lr = _phase_tables(positions.lr_units, config, with_time, dtype)
    tables = (cos_hr, sin_hr, cos_lr, sin_lr)
    if not custom:
        layout._cache[key] = tables
    return tables


def mixed_attention(
    q: T.Tensor,
    k: T.Tensor,
    v: T.Tensor,
    layout: TokenLayout,
    config: AttentionConfig = AttentionConfig(),
    positions: PositionTable | None = None,
) -> T.Tensor:
    """Two-pass phase-aligned attention over a foveated layout.

    q, k, v have shape (L, heads, head_dim); the output is re-interleaved
    to the same token order. An explicit PositionTable overrides the
    layout-derived one (used by invariance tests).
    """
    default_plan = _layout_plan(layout, config)
    plan_positions, hr_idx, lr_idx, rep_idx, inv = default_plan
    custom = positions is not None
    if not custom:
        positions = plan_positions
    L = layout.length
    if q.data.shape != (L, config.heads, config.head_dim):
        raise T.ShapeError(f"q/k/v must be (L, heads, head_dim) = {(L, config.heads, config.head_dim)}, got {q.data.shape}")
    cos_hr, sin_hr, cos_lr, sin_lr = _tables(layout, config, positions, q.data.dtype, custom)

    parts = []
    if len(hr_idx):
        q_hr = T.rope_rotate(T.gather_rows(q, hr_idx, unique=True), cos_hr[hr_idx], sin_hr[hr_idx])
        k_all = T.rope_rotate(k, cos_hr, sin_hr)
        parts.append(_scaled_attention(q_hr, k_all, v, config.head_dim))
    if len(lr_idx):
        q_lr = T.rope_rotate(T.gather_rows(q, lr_idx, unique=True), cos_lr[lr_idx], sin_lr[lr_idx])
        k_lr = T.rope_rotate(T.gather_rows(k, lr_idx, unique=True), cos_lr[lr_idx], sin_lr[lr_idx])
        v_lr = T.gather_rows(v, lr_idx, unique=True)
        if len(rep_idx):
            k_rep = T.rope_rotate(T.gather_rows(k, rep_idx, unique=True), cos_lr[rep_idx], sin_lr[rep_idx])
            v_rep = T.gather_rows(v, rep_idx, unique=True)
            keys = T.concat([k_lr, k_rep], axis=0)
            vals = T.concat([v_lr, v_rep], axis=0)
        else:
            keys, vals = k_lr, v_lr
        parts.append(_scaled_attention(q_lr, keys, vals, config.head_dim))
    out = parts[0] if len(parts) == 1 else T.concat(parts, axis=0)
    if len(hr_idx) == L:
        return out  # already in layout order: hr_idx is the identity
    return T.gather_rows(out, inv, unique=True)
