"""Procedural training data: 8 structured texture classes.

Every sample is a deterministic function of (seed, index): coarse class
structure plus fine high-frequency texture, pixel values in [-1, 1].
Class labels cycle through the 8 classes so the label histogram is
exactly uniform. A per-sample saliency map (normalized local gradient
energy) accompanies each image for the saliency masking strategy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_NAMES = (
    "checker_f4",
    "checker_f8",
    "stripes_0",
    "stripes_45",
    "stripes_90",
    "rings",
    "blobs",
    "noise_squares",
)

NUM_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class SyntheticSpec:
    image_size: int = 64
    frames: int = 1


def _checker(rng, S: int, freq: int) -> np.ndarray:
    cell = S // (2 * freq)
    oy, ox = rng.integers(0, cell, size=2)
    yy, xx = np.mgrid[0:S, 0:S]
    parity = ((yy + oy) // cell + (xx + ox) // cell) % 2
    return parity.astype(np.float64) * 2.0 - 1.0


def _stripes(rng, S: int, angle_deg: float) -> np.ndarray:
    yy, xx = np.mgrid[0:S, 0:S]
    a = np.deg2rad(angle_deg)
    u = xx * np.cos(a) + yy * np.sin(a)
    phase = rng.uniform(0.0, 2 * np.pi)
    return np.sign(np.sin(2 * np.pi * 6.0 * u / S + phase) + 1e-12)


def _rings(rng, S: int) -> np.ndarray:
    cy, cx = S / 2 + rng.uniform(-8, 8, size=2)
    lam = 10.0 + 4.0 * rng.random()
    phase = rng.uniform(0.0, 2 * np.pi)
    yy, xx = np.mgrid[0:S, 0:S]
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return np.sign(np.sin(2 * np.pi * r / lam + phase) + 1e-12)


def _blobs(rng, S: int) -> np.ndarray:
    yy, xx = np.mgrid[0:S, 0:S]
    out = np.zeros((S, S))
    for _ in range(3):
        cy, cx = rng.uniform(0, S, size=2)
        sig = rng.uniform(6.0, 14.0)
        amp = rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
        out += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    peak = np.abs(out).max()
    return out * (0.9 / peak) if peak > 0 else out


def _noise_squares(rng, S: int) -> np.ndarray:
    yy, xx = np.mgrid[0:S, 0:S]
    gy, gx = rng.uniform(-0.4, 0.4, size=2)
    out = gy * (yy / S * 2 - 1) + gx * (xx / S * 2 - 1)
    for _ in range(2):
        side = int(rng.integers(14, 27))
        y0 = int(rng.integers(0, S - side + 1))
        x0 = int(rng.integers(0, S - side + 1))
        out[y0 : y0 + side, x0 : x0 + side] = 0.8 * rng.uniform(-1, 1, size=(side, side))
    return out


_GENERATORS = (
    lambda rng, S: _checker(rng, S, 4),
    lambda rng, S: _checker(rng, S, 8),
    lambda rng, S: _stripes(rng, S, 0.0),
    lambda rng, S: _stripes(rng, S, 45.0),
    lambda rng, S: _stripes(rng, S, 90.0),
    _rings,
    _blobs,
    _noise_squares,
)


def saliency_map(image: np.ndarray) -> np.ndarray:
    """Normalized local gradient energy of the channel-mean image."""
    lum = image.mean(axis=0)
    gy, gx = np.gradient(lum)
    energy = gy * gy + gx * gx
    peak = energy.max()
    if peak > 0:
        energy = energy / peak
    return energy.astype(np.float32)


def generate_sample(spec: SyntheticSpec, seed: int, index: int):
    """Return (image, class_id, saliency) for dataset position `index`.

    image is (3, S, S) float32 for single-frame specs, (3, f, S, S)
    otherwise; regeneration with the same (seed, index) is bit-exact.
    """
    if index < 0:
        raise ValueError(f"index must be non-negative, got {index}")
    S = spec.image_size
    class_id = index % NUM_CLASSES
    rng = np.random.default_rng((seed, index))
    pattern = _GENERATORS[class_id](rng, S)
    texture = 0.15 * rng.uniform(-1.0, 1.0, size=(S, S))
    gains = 0.6 + 0.4 * rng.random(3)
    offsets = 0.1 * rng.uniform(-1.0, 1.0, size=3)
    img = np.clip(gains[:, None, None] * pattern + offsets[:, None, None] + texture, -1.0, 1.0)
    img = img.astype(np.float32)
    sal = saliency_map(img)
    if spec.frames > 1:
        # frames drift sideways so spatiotemporal layouts see moving content
        frames = np.stack([np.roll(img, shift=2 * t, axis=-1) for t in range(spec.frames)], axis=1)
        return frames, class_id, sal
    return img, class_id, sal
