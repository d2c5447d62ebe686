"""Foveation masks: binary grids over latent coordinates.

A mask marks which latent cells keep high-resolution tokens (1) and which
collapse into low-resolution tokens (0). Every 2x2 cell block must be
uniform so that each all-zero block maps to exactly one LR token; all
constructors quantize to that granularity by dilating partial blocks to
fully-HR blocks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class MaskError(ValueError):
    """Invalid mask geometry or a grid that violates block alignment."""


@dataclass(frozen=True)
class FoveationMask:
    """Binary grid over latent cells, one plane per frame.

    bits[t, y, x] == True keeps the high-resolution token at (t, y, x).
    """

    bits: np.ndarray  # bool, shape (f, h, w)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        object.__setattr__(self, "bits", bits)
        validate(bits)

    @property
    def frames(self) -> int:
        return self.bits.shape[0]

    @property
    def height(self) -> int:
        return self.bits.shape[1]

    @property
    def width(self) -> int:
        return self.bits.shape[2]

    def frame(self, t: int) -> np.ndarray:
        return self.bits[t]

    def __eq__(self, other):
        return isinstance(other, FoveationMask) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def validate(bits: np.ndarray):
    if bits.ndim != 3:
        raise MaskError(f"mask must be (frames, h, w), got shape {bits.shape}")
    f, h, w = bits.shape
    if f < 1 or h < 1 or w < 1:
        raise MaskError(f"mask extents must be positive, got {bits.shape}")
    if h % 2 or w % 2:
        raise MaskError(f"mask height/width must be even, got {h}x{w}")
    blocks = bits.reshape(f, h // 2, 2, w // 2, 2)
    uniform = blocks.all(axis=(2, 4)) | (~blocks).all(axis=(2, 4))
    if not uniform.all():
        raise MaskError("mask has mixed 2x2 blocks; cells must be block-aligned")


def hr_blocks(mask: FoveationMask) -> np.ndarray:
    """Per-frame boolean grid (f, h/2, w/2): True where a block is fully HR."""
    f, h, w = mask.bits.shape
    return mask.bits.reshape(f, h // 2, 2, w // 2, 2).any(axis=(2, 4))


def _dilate_to_blocks(cells: np.ndarray) -> np.ndarray:
    """Mark a whole 2x2 block HR if any covered cell is HR."""
    f, h, w = cells.shape
    blocks = cells.reshape(f, h // 2, 2, w // 2, 2).any(axis=(2, 4))
    return np.repeat(np.repeat(blocks, 2, axis=1), 2, axis=2)


def _check_grid(h: int, w: int):
    if h <= 0 or w <= 0 or h % 2 or w % 2:
        raise MaskError(f"grid extents must be positive and even, got {h}x{w}")


def make_circle(h: int, w: int, center: tuple[float, float], radius: float) -> FoveationMask:
    """Circular fovea: cell (y, x) is inside iff (y-cy)^2 + (x-cx)^2 < r^2."""
    _check_grid(h, w)
    cy, cx = center
    yy, xx = np.mgrid[0:h, 0:w]
    inside = (yy - cy) ** 2 + (xx - cx) ** 2 < radius**2
    return FoveationMask(_dilate_to_blocks(inside[None]))


def make_rect(h: int, w: int, top_left: tuple[int, int], bottom_right: tuple[int, int]) -> FoveationMask:
    """Rectangular fovea over the half-open box [y0, y1) x [x0, x1)."""
    _check_grid(h, w)
    y0, x0 = top_left
    y1, x1 = bottom_right
    if not (0 <= y0 <= h and 0 <= x0 <= w and y1 <= h and x1 <= w):
        raise MaskError(f"rectangle ({y0},{x0})-({y1},{x1}) exceeds grid {h}x{w}")
    inside = np.zeros((h, w), dtype=bool)
    if y1 > y0 and x1 > x0:
        inside[y0:y1, x0:x1] = True
    return FoveationMask(_dilate_to_blocks(inside[None]))


def union(masks: list[FoveationMask]) -> FoveationMask:
    if not masks:
        raise MaskError("union of an empty mask list")
    shape = masks[0].bits.shape
    for m in masks[1:]:
        if m.bits.shape != shape:
            raise MaskError(f"union extents differ: {m.bits.shape} vs {shape}")
    bits = np.zeros(shape, dtype=bool)
    for m in masks:
        bits |= m.bits
    return FoveationMask(bits)


def from_saliency(saliency: np.ndarray, h: int, w: int, budget: float) -> FoveationMask:
    """Keep the top-`budget` fraction of 2x2 blocks by mean saliency.

    The grayscale map is area-averaged onto the latent grid first. Block
    count is floor(budget * total); ties break toward lower row-major
    block index so the result is deterministic.
    """
    _check_grid(h, w)
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.ndim != 2:
        raise MaskError(f"saliency map must be 2-d, got shape {sal.shape}")
    if not np.isfinite(sal).all():
        raise MaskError("saliency map contains non-finite values")
    if not (0.0 < budget <= 1.0):
        raise MaskError(f"budget must lie in (0, 1], got {budget}")
    grid = area_resample(sal, h, w)
    bh, bw_ = h // 2, w // 2
    block_means = grid.reshape(bh, 2, bw_, 2).mean(axis=(1, 3)).ravel()
    n_blocks = bh * bw_
    k = int(np.floor(budget * n_blocks + 1e-9))
    bits = np.zeros((1, h, w), dtype=bool)
    if k > 0:
        order = np.lexsort((np.arange(n_blocks), -block_means))
        chosen = order[:k]
        block_bits = np.zeros(n_blocks, dtype=bool)
        block_bits[chosen] = True
        bits[0] = np.repeat(np.repeat(block_bits.reshape(bh, bw_), 2, axis=0), 2, axis=1)
    return FoveationMask(bits)


def area_resample(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Exact area-weighted average of a 2-d map onto an h x w grid."""
    return _axis_average(_axis_average(img, h, axis=0), w, axis=1)


def _axis_average(a: np.ndarray, n: int, axis: int) -> np.ndarray:
    m = a.shape[axis]
    if m == n:
        return a.astype(np.float64, copy=False)
    # weight[i, j] = |[i*m/n, (i+1)*m/n) ∩ [j, j+1)| * n/m
    edges = np.arange(n + 1) * (m / n)
    j = np.arange(m)
    lo = np.maximum(edges[:-1, None], j[None, :])
    hi = np.minimum(edges[1:, None], j[None, :] + 1)
    weights = np.clip(hi - lo, 0.0, None) * (n / m)
    return np.moveaxis(np.tensordot(weights, np.moveaxis(a, axis, 0), axes=(1, 0)), 0, axis)


def from_bboxes(h: int, w: int, boxes: list[tuple[int, int, int, int]]) -> FoveationMask:
    """Union of rectangular masks; zero-area boxes are dropped with a warning."""
    _check_grid(h, w)
    rects = []
    for box in boxes:
        y0, x0, y1, x1 = box
        if y1 <= y0 or x1 <= x0:
            warnings.warn(f"dropping degenerate box {box}", stacklevel=2)
            continue
        rects.append(make_rect(h, w, (y0, x0), (y1, x1)))
    if not rects:
        return FoveationMask(np.zeros((1, h, w), dtype=bool))
    return union(rects)


def make_trajectory(
    frames: int,
    h: int,
    w: int,
    control_points: list[tuple[float, float, float, float]],
) -> FoveationMask:
    """Per-frame circle masks along a natural cubic spline path.

    Control points are (frame, cy, cx, radius), sorted by strictly
    increasing frame index. Center and radius are splined over the frame
    axis; frames outside the control range clamp to the endpoint values.
    """
    if frames < 1:
        raise MaskError("frame count must be >= 1")
    if len(control_points) < 2:
        raise MaskError("trajectory needs at least 2 control points")
    pts = np.asarray(control_points, dtype=np.float64)
    t = pts[:, 0]
    if not np.all(np.diff(t) > 0):
        raise MaskError("control point frames must be strictly increasing")
    if (pts[:, 1] < 0).any() or (pts[:, 1] > h).any() or (pts[:, 2] < 0).any() or (pts[:, 2] > w).any():
        raise MaskError("control point centers must lie within the grid")
    spline = CubicSpline(t, pts[:, 1:4], bc_type="natural", axis=0)
    query = np.clip(np.arange(frames, dtype=np.float64), t[0], t[-1])
    path = spline(query)
    bits = np.zeros((frames, h, w), dtype=bool)
    for k in range(frames):
        cy, cx, r = path[k]
        bits[k] = make_circle(h, w, (cy, cx), r).bits[0]
    return FoveationMask(bits)


def make_center_disk(h: int, w: int, n_blocks: int, frames: int = 1) -> FoveationMask:
    """Exactly n_blocks HR blocks, chosen nearest the grid center.

    Used to hit arbitrary token ratios exactly; ties break by row-major
    block index.
    """
    _check_grid(h, w)
    bh, bw_ = h // 2, w // 2
    total = bh * bw_
    if not (0 <= n_blocks <= total):
        raise MaskError(f"n_blocks must lie in [0, {total}], got {n_blocks}")
    by, bx = np.mgrid[0:bh, 0:bw_]
    d2 = (by - (bh - 1) / 2) ** 2 + (bx - (bw_ - 1) / 2) ** 2
    order = np.lexsort((np.arange(total), d2.ravel()))
    block_bits = np.zeros(total, dtype=bool)
    block_bits[order[:n_blocks]] = True
    plane = np.repeat(np.repeat(block_bits.reshape(bh, bw_), 2, axis=0), 2, axis=1)
    return FoveationMask(np.broadcast_to(plane, (frames, h, w)).copy())


def sequence_length(mask: FoveationMask) -> tuple[int, int, float]:
    """Return (m, L, ratio) for a mask.

    Per frame the reduced length is m_f + (h*w - m_f) / 4; block alignment
    guarantees the division is exact. ratio is L over the full token count
    f*h*w.
    """
    f, h, w = mask.bits.shape
    per_frame_m = mask.bits.reshape(f, -1).sum(axis=1)
    m = int(per_frame_m.sum())
    L = int(sum(mf + (h * w - mf) // 4 for mf in per_frame_m.tolist()))
    ratio = L / (f * h * w)
    return m, L, ratio


@dataclass
class MaskSpec:
    """Declarative mask description, buildable against a latent grid.

    kind selects the constructor; the relevant parameter fields must be
    populated for that kind.
    """

    kind: str  # circle | rect | union | saliency | bboxes | trajectory | ones | zeros
    center: tuple[float, float] | None = None
    radius: float | None = None
    top_left: tuple[int, int] | None = None
    bottom_right: tuple[int, int] | None = None
    children: list["MaskSpec"] = field(default_factory=list)
    saliency: np.ndarray | None = None
    budget: float | None = None
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    control_points: list[tuple[float, float, float, float]] = field(default_factory=list)

    def build(self, h: int, w: int, frames: int = 1) -> FoveationMask:
        if self.kind == "circle":
            base = make_circle(h, w, self.center, self.radius)
        elif self.kind == "rect":
            base = make_rect(h, w, self.top_left, self.bottom_right)
        elif self.kind == "union":
            base = union([c.build(h, w) for c in self.children])
        elif self.kind == "saliency":
            base = from_saliency(self.saliency, h, w, self.budget)
        elif self.kind == "bboxes":
            base = from_bboxes(h, w, self.boxes)
        elif self.kind == "trajectory":
            return make_trajectory(frames, h, w, self.control_points)
        elif self.kind == "ones":
            base = FoveationMask(np.ones((1, h, w), dtype=bool))
        elif self.kind == "zeros":
            base = FoveationMask(np.zeros((1, h, w), dtype=bool))
        else:
            raise MaskError(f"unknown mask kind {self.kind!r}")
        if frames == 1:
            return base
        return FoveationMask(np.broadcast_to(base.bits[0], (frames, h, w)).copy())
