"""Binary PPM (P6) image and PGM (P5) mask files.

Images are 8-bit RGB mapped linearly between pixel value [0, 255] and the
internal range [-1, 1]. Masks use 255 for HR cells and 0 for LR cells;
multi-frame masks are one file per frame with a zero-padded frame suffix.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .masks import FoveationMask, MaskError


class FileFormatError(ValueError):
    """Header or payload does not match the expected netpbm format."""


def _read_header(fh, magic: bytes):
    got = _read_token(fh)
    if got != magic:
        raise FileFormatError(f"expected {magic.decode()} file, got magic {got!r}")
    width = int(_read_token(fh))
    height = int(_read_token(fh))
    maxval = int(_read_token(fh))
    if maxval != 255:
        raise FileFormatError(f"only maxval 255 is supported, got {maxval}")
    return width, height


def _read_token(fh) -> bytes:
    # tokens are separated by whitespace; '#' starts a comment to end of line
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise FileFormatError("truncated header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def write_ppm(path: str | Path, image: np.ndarray):
    """Write a (3, H, W) float image in [-1, 1] as binary P6."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise FileFormatError(f"image must be (3, H, W), got {img.shape}")
    u8 = np.clip(np.rint((img + 1.0) * 127.5), 0, 255).astype(np.uint8)
    h, w = img.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(u8.transpose(1, 2, 0).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 file into a (3, H, W) float32 image in [-1, 1]."""
    with open(path, "rb") as fh:
        w, h = _read_header(fh, b"P6")
        buf = fh.read(w * h * 3)
    if len(buf) != w * h * 3:
        raise FileFormatError(f"truncated pixel data in {path}")
    u8 = np.frombuffer(buf, dtype=np.uint8).reshape(h, w, 3)
    return (u8.astype(np.float32) / 255.0) * 2.0 - 1.0


def write_pgm(path: str | Path, gray: np.ndarray):
    """Write a (H, W) uint8 grayscale map as binary P5."""
    g = np.asarray(gray, dtype=np.uint8)
    if g.ndim != 2:
        raise FileFormatError(f"grayscale map must be 2-d, got {g.shape}")
    h, w = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(g.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary P5 file into a (H, W) uint8 array."""
    with open(path, "rb") as fh:
        w, h = _read_header(fh, b"P5")
        buf = fh.read(w * h)
    if len(buf) != w * h:
        raise FileFormatError(f"truncated pixel data in {path}")
    return np.frombuffer(buf, dtype=np.uint8).reshape(h, w).copy()


def mask_frame_paths(path: str | Path, frames: int) -> list[Path]:
    """Per-frame file names: base path for f=1, zero-padded suffix otherwise."""
    path = Path(path)
    if frames == 1:
        return [path]
    return [path.with_name(f"{path.stem}_{t:04d}{path.suffix}") for t in range(frames)]


def save_mask(path: str | Path, mask: FoveationMask) -> list[Path]:
    """Write one P5 file per frame (255 = HR cell, 0 = LR cell)."""
    paths = mask_frame_paths(path, mask.frames)
    for t, p in enumerate(paths):
        write_pgm(p, np.where(mask.bits[t], 255, 0).astype(np.uint8))
    return paths


def load_mask(paths: str | Path | list) -> FoveationMask:
    """Read PGM frame files back into a validated FoveationMask.

    Intermediate grey values are rejected; the assembled grid must be
    block-aligned.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    planes = []
    for p in paths:
        g = read_pgm(p)
        bad = ~np.isin(g, (0, 255))
        if bad.any():
            raise MaskError(f"{p}: mask pixels must be 0 or 255, found value {int(g[bad][0])}")
        planes.append(g == 255)
    return FoveationMask(np.stack(planes, axis=0))
