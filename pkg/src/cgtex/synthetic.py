"""Procedural exemplars used by the tests, the acceptance suite and the demos."""
from __future__ import annotations

import numpy as np


def periodic_image(size: int = 64, period: int = 8, seed: int = 7, contrast: float = 0.03) -> np.ndarray:
    """A tileable colour texture: a random ``period``-periodic tile, circularly blurred.

    Values are quantised to 8 bits so the array survives a PNG round trip.
    """
    rng = np.random.default_rng(seed)
    tile = rng.standard_normal((period, period, 3))
    # 3x3 circular box blur gives the tile blob-like structure
    blurred = sum(np.roll(np.roll(tile, dy, 0), dx, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)) / 9
    blurred /= blurred.std()
    reps = -(-size // period)
    img = np.tile(blurred, (reps, reps, 1))[:size, :size]
    img = 0.5 + contrast * img
    return np.round(np.clip(img, 0, 1) * 255).astype(np.float32) / 255


def periodic_frames(size: int = 32, frames: int = 12, period: int = 8, seed: int = 11) -> np.ndarray:
    """A translating periodic pattern, ``(H, W, T, 3)``."""
    base = periodic_image(size + period * frames, period, seed)
    out = np.stack([base[t:t + size, t:t + size] for t in range(frames)], axis=2)
    return out.astype(np.float32)


def pulse_train(length: int = 16384, period: int = 400, width: int = 40, seed: int = 3,
                amplitude: float = 0.6) -> np.ndarray:
    """Periodic decaying tone bursts in [-1, 1), quantised to 16 bits."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    phase = t % period
    env = np.where(phase < width * 4, np.exp(-phase / width), 0.0)
    tone = np.sin(2 * np.pi * phase / 17.0)
    wave = amplitude * env * tone + 0.02 * rng.standard_normal(length)
    wave = np.clip(wave, -1, 32767 / 32768)
    return (np.round(wave * 32768) / 32768).astype(np.float32)
