"""Variable-length foveated token sequences and pixel compositing.

A TokenLayout fixes the bijection between sequence index and grid
position: per frame, HR tokens in row-major order over retained cells,
then LR tokens in row-major order over all-zero 2x2 blocks. merge/split
move losslessly between dense HR/LR latent grids and the sequence; blend
composites the two decoded images through the pixel-space mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .codec import CodecConfig, LatentGrid, down2, mask_to_pixels, up2
from .masks import FoveationMask, hr_blocks, sequence_length

HR = 0
LR = 1


class LayoutError(ValueError):
    """Sequence, grid, or mask extents are inconsistent."""


@dataclass
class TokenLayout:
    """Bijection between sequence index and (class, frame, position).

    y/x are in each token's own grid units: cell coordinates for HR
    tokens, block coordinates for LR tokens.
    """

    mask: FoveationMask
    cls: np.ndarray  # uint8, 0 = HR, 1 = LR
    frame: np.ndarray  # int32
    y: np.ndarray
    x: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_mask(cls_, mask: FoveationMask) -> "TokenLayout":
        f = mask.frames
        blocks = hr_blocks(mask)
        cls_parts, fr_parts, y_parts, x_parts = [], [], [], []
        for t in range(f):
            hr_pos = np.argwhere(mask.bits[t])
            lr_pos = np.argwhere(~blocks[t])
            n_hr, n_lr = len(hr_pos), len(lr_pos)
            cls_parts.append(np.concatenate([np.zeros(n_hr, np.uint8), np.ones(n_lr, np.uint8)]))
            fr_parts.append(np.full(n_hr + n_lr, t, np.int32))
            y_parts.append(np.concatenate([hr_pos[:, 0], lr_pos[:, 0]]).astype(np.int32))
            x_parts.append(np.concatenate([hr_pos[:, 1], lr_pos[:, 1]]).astype(np.int32))
        layout = cls_(
            mask=mask,
            cls=np.concatenate(cls_parts),
            frame=np.concatenate(fr_parts),
            y=np.concatenate(y_parts),
            x=np.concatenate(x_parts),
        )
        layout.validate()
        return layout

    def validate(self):
        _, L, _ = sequence_length(self.mask)
        if not (len(self.cls) == len(self.frame) == len(self.y) == len(self.x) == L):
            raise LayoutError(f"layout arrays disagree with sequence length {L}")
        f, h, w = self.mask.bits.shape
        hr_sel = self.cls == HR
        seen_hr = np.zeros((f, h, w), dtype=bool)
        seen_hr[self.frame[hr_sel], self.y[hr_sel], self.x[hr_sel]] = True
        if not np.array_equal(seen_hr, self.mask.bits) or int(hr_sel.sum()) != int(self.mask.bits.sum()):
            raise LayoutError("HR tokens do not enumerate mask cells exactly once")
        lr_sel = ~hr_sel
        lr_map = ~hr_blocks(self.mask)
        seen_lr = np.zeros_like(lr_map)
        seen_lr[self.frame[lr_sel], self.y[lr_sel], self.x[lr_sel]] = True
        if not np.array_equal(seen_lr, lr_map) or int(lr_sel.sum()) != int(lr_map.sum()):
            raise LayoutError("LR tokens do not enumerate all-zero blocks exactly once")

    @property
    def length(self) -> int:
        return len(self.cls)

    @property
    def hr_count(self) -> int:
        return int((self.cls == HR).sum())

    @property
    def frames(self) -> int:
        return self.mask.frames

    @property
    def grid_hw(self) -> tuple[int, int]:
        return self.mask.height, self.mask.width

    def hr_indices(self) -> np.ndarray:
        return np.flatnonzero(self.cls == HR)

    def lr_indices(self) -> np.ndarray:
        return np.flatnonzero(self.cls == LR)

    def representative_indices(self) -> np.ndarray:
        """Sequence index of the top-left HR token of each fully-HR block,
        in frame-major, row-major block order."""
        f, h, w = self.mask.bits.shape
        seq_at = np.full((f, h, w), -1, dtype=np.int64)
        hr_sel = self.cls == HR
        seq_at[self.frame[hr_sel], self.y[hr_sel], self.x[hr_sel]] = np.flatnonzero(hr_sel)
        blocks = hr_blocks(self.mask)
        reps = []
        for t in range(f):
            ab = np.argwhere(blocks[t])
            reps.append(seq_at[t, 2 * ab[:, 0], 2 * ab[:, 1]])
        return np.concatenate(reps) if reps else np.zeros(0, dtype=np.int64)


@dataclass
class FoveatedSequence:
    """Token matrix of shape (L, channels) tied to its layout."""

    layout: TokenLayout
    tokens: np.ndarray

    def __post_init__(self):
        if self.tokens.ndim != 2 or self.tokens.shape[0] != self.layout.length:
            raise LayoutError(
                f"token matrix {self.tokens.shape} does not match layout length {self.layout.length}"
            )


def merge(
    hr: LatentGrid, lr: LatentGrid, mask: FoveationMask, layout: TokenLayout | None = None
) -> FoveatedSequence:
    """Assemble a sequence from dense HR and LR grids through a mask."""
    f, h, w = mask.bits.shape
    if hr.values.shape[1:] != (f, h, w):
        raise LayoutError(f"HR grid {hr.values.shape[1:]} does not match mask {(f, h, w)}")
    if lr.values.shape[1:] != (f, h // 2, w // 2):
        raise LayoutError(
            f"LR grid {lr.values.shape[1:]} must be the spatial half of the HR grid {(f, h, w)}"
        )
    if hr.channels != lr.channels:
        raise LayoutError(f"channel mismatch: {hr.channels} vs {lr.channels}")
    if layout is None:
        layout = TokenLayout.from_mask(mask)
    elif layout.mask != mask:
        raise LayoutError("provided layout was built from a different mask")
    tokens = np.empty((layout.length, hr.channels), dtype=hr.values.dtype)
    hr_sel = layout.cls == HR
    tokens[hr_sel] = hr.values[:, layout.frame[hr_sel], layout.y[hr_sel], layout.x[hr_sel]].T
    lr_sel = ~hr_sel
    tokens[lr_sel] = lr.values[:, layout.frame[lr_sel], layout.y[lr_sel], layout.x[lr_sel]].T
    return FoveatedSequence(layout, tokens)


def split(seq: FoveatedSequence) -> tuple[LatentGrid, np.ndarray, LatentGrid, np.ndarray]:
    """Scatter a sequence back to sparse grids.

    Returns (hr_grid, hr_valid, lr_grid, lr_valid); cells not covered by
    a token are zero and flagged invalid.
    """
    layout = seq.layout
    f, h, w = layout.mask.bits.shape
    c = seq.tokens.shape[1]
    dtype = seq.tokens.dtype
    hr_vals = np.zeros((c, f, h, w), dtype=dtype)
    lr_vals = np.zeros((c, f, h // 2, w // 2), dtype=dtype)
    hr_sel = layout.cls == HR
    hr_vals[:, layout.frame[hr_sel], layout.y[hr_sel], layout.x[hr_sel]] = seq.tokens[hr_sel].T
    lr_sel = ~hr_sel
    lr_vals[:, layout.frame[lr_sel], layout.y[lr_sel], layout.x[lr_sel]] = seq.tokens[lr_sel].T
    hr_valid = layout.mask.bits.copy()
    lr_valid = ~hr_blocks(layout.mask)
    return LatentGrid(hr_vals), hr_valid, LatentGrid(lr_vals), lr_valid


def _nearest_valid_fill(img: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid pixels with their nearest valid pixel, per frame."""
    out = img.copy()
    for t in range(valid.shape[0]):
        if valid[t].all():
            continue
        iy, ix = distance_transform_edt(~valid[t], return_indices=True)[1]
        out[:, t] = img[:, t, iy, ix]
    return out


def blend(
    x_high: np.ndarray,
    x_low: np.ndarray,
    lr_valid: np.ndarray,
    mask: FoveationMask,
    config: CodecConfig = CodecConfig(),
) -> np.ndarray:
    """Composite HR pixels over upsampled LR pixels through the mask.

    x_low cells under the fovea carry no token; they are filled with a
    downsample of the composited full-resolution estimate before the
    bilinear upsample so content bleeds correctly across the seam, then
    the binary pixel mask selects x_high inside the fovea and the
    upsampled LR image outside.
    """
    p = config.patch
    f, h, w = mask.bits.shape
    if x_high.shape[-2:] != (h * p, w * p) or x_low.shape[-2:] != (h * p // 2, w * p // 2):
        raise LayoutError(
            f"blend extents mismatch: high {x_high.shape}, low {x_low.shape}, mask {(f, h, w)}"
        )
    m_px = mask_to_pixels(mask, p)
    if m_px.all():
        return x_high.copy()
    valid_px = np.repeat(np.repeat(lr_valid, p, axis=1), p, axis=2)
    if valid_px.all():
        low_filled = x_low
    else:
        estimate = np.where(m_px, x_high, up2(_nearest_valid_fill(x_low, valid_px)))
        low_filled = np.where(valid_px, x_low, down2(estimate))
    return np.where(m_px, x_high, up2(low_filled))
