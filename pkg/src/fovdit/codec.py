"""Pixel <-> latent codec and fixed-factor resampling.

The latent space is an exact space-to-depth packing: each p x p pixel
patch becomes one latent cell with 3*p*p channels, so encode/decode round
trips are bit-exact and decoding is local to each cell. Downsampling is
separable bicubic (a = -0.5) by a factor of 2 with edge clamping;
upsampling is bilinear or nearest at pixel centers (align-corners false).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import FoveationMask


class CodecError(ValueError):
    """Image or grid extents incompatible with the codec configuration."""


@dataclass(frozen=True)
class CodecConfig:
    """Patchify settings. The peripheral downsample factor is fixed at 2."""

    patch: int = 4

    @property
    def channels(self) -> int:
        return 3 * self.patch * self.patch


@dataclass(frozen=True)
class LatentGrid:
    """Dense latent array of shape (channels, frames, height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 4:
            raise CodecError(f"latent grid must be 4-d (c, f, h, w), got {v.shape}")
        if min(v.shape) < 1:
            raise CodecError(f"latent extents must be positive, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[2]

    @property
    def width(self) -> int:
        return self.values.shape[3]


def _as_video(image: np.ndarray) -> tuple[np.ndarray, bool]:
    img = np.asarray(image)
    if img.ndim == 3:
        return img[:, None], True
    if img.ndim == 4:
        return img, False
    raise CodecError(f"image must be (3, H, W) or (3, f, H, W), got {img.shape}")


def encode(image: np.ndarray, config: CodecConfig = CodecConfig()) -> LatentGrid:
    """Space-to-depth packing of a pixel image (or video) into latents.

    Channel order within a cell is rgb-major: index = (rgb * p + py) * p + px.
    Pixel extents must divide by 2*p so the latent grid stays even.
    """
    vid, _ = _as_video(image)
    if vid.shape[0] != 3:
        raise CodecError(f"expected 3 pixel channels, got {vid.shape[0]}")
    p = config.patch
    _, f, H, W = vid.shape
    if H % (2 * p) or W % (2 * p):
        raise CodecError(f"pixel extents {H}x{W} must divide by {2 * p}")
    h, w = H // p, W // p
    packed = vid.reshape(3, f, h, p, w, p).transpose(0, 3, 5, 1, 2, 4).reshape(3 * p * p, f, h, w)
    return LatentGrid(np.ascontiguousarray(packed))


def decode(grid: LatentGrid, config: CodecConfig = CodecConfig()) -> np.ndarray:
    """Exact inverse of encode; returns (3, f, H, W)."""
    p = config.patch
    if grid.channels != 3 * p * p:
        raise CodecError(f"grid has {grid.channels} channels, codec expects {3 * p * p}")
    c, f, h, w = grid.values.shape
    pix = grid.values.reshape(3, p, p, f, h, w).transpose(0, 3, 4, 1, 5, 2).reshape(3, f, h * p, w * p)
    return np.ascontiguousarray(pix)


# bicubic (a = -0.5) taps at offsets {-1.5, -0.5, +0.5, +1.5}
_DOWN_TAPS = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0


def _down_axis(a: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    if n % 2:
        raise CodecError(f"axis extent must be even for down2, got {n}")
    a = np.moveaxis(a, axis, -1)
    pad = [(0, 0)] * (a.ndim - 1) + [(1, 2)]
    v = np.pad(a, pad, mode="edge")
    out = np.zeros(a.shape[:-1] + (n // 2,), dtype=a.dtype)
    for k, wk in enumerate(_DOWN_TAPS):
        out += wk * v[..., k : k + n - 1 : 2]
    return np.moveaxis(out, -1, axis)


def down2(image: np.ndarray) -> np.ndarray:
    """Separable bicubic downsample by 2 along the last two axes."""
    img = np.asarray(image, dtype=np.float64 if image.dtype == np.float64 else np.float32)
    return _down_axis(_down_axis(img, -1), -2)


def _up_axis_linear(a: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    pad = [(0, 0)] * (a.ndim - 1) + [(1, 1)]
    v = np.pad(a, pad, mode="edge")
    out = np.empty(a.shape[:-1] + (2 * n,), dtype=a.dtype)
    out[..., 0::2] = 0.25 * v[..., :n] + 0.75 * v[..., 1 : n + 1]
    out[..., 1::2] = 0.75 * v[..., 1 : n + 1] + 0.25 * v[..., 2 : n + 2]
    return np.moveaxis(out, -1, axis)


def up2(image: np.ndarray, mode: str = "bilinear") -> np.ndarray:
    """Upsample by 2 along the last two axes (bilinear or nearest)."""
    img = np.asarray(image)
    if mode == "nearest":
        return np.repeat(np.repeat(img, 2, axis=-2), 2, axis=-1)
    if mode == "bilinear":
        return _up_axis_linear(_up_axis_linear(img, -1), -2)
    raise CodecError(f"unknown upsample mode {mode!r}")


def mask_to_pixels(mask: FoveationMask, patch: int) -> np.ndarray:
    """Nearest-upsample a latent mask to pixel resolution (stays binary)."""
    return np.repeat(np.repeat(mask.bits, patch, axis=1), patch, axis=2)
