"""Readers and writers for image, dynamic and sound textures and inpainting masks.

Value ranges: images and frames map 8-bit ``p`` to ``p / 255``; sound maps
16-bit ``s`` to ``s / 32768`` so the range is exactly [-1, 1).
Dynamic textures live in a directory of ``frame_%04d.png`` files.
"""
from __future__ import annotations

import re
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ContractError, FormatError

FRAME_PATTERN = "frame_{:04d}.png"
_FRAME_RE = re.compile(r"^frame_(\d{4,})\.png$")


@dataclass
class TextureExemplar:
    modality: str
    data: np.ndarray
    sample_rate: int | None = None
    frame_rate: float | None = None

    @property
    def shape(self):
        return self.data.shape


@dataclass
class MaskRegion:
    """Corrupted region ``omega`` and its ``border_width``-dilated closure."""

    omega: np.ndarray
    border_width: int
    closure: np.ndarray

    def bbox(self) -> tuple[slice, ...]:
        """Bounding box of the closure, one slice per axis."""
        idx = np.nonzero(self.closure)
        return tuple(slice(int(i.min()), int(i.max()) + 1) for i in idx)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(s.stop - s.start for s in self.bbox())


# ---------------------------------------------------------------- images

def _decode_png(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F", "1"):
                raise FormatError(f"{path}: unsupported PNG mode {mode!r}; need 8-bit RGB or grayscale")
            if im.format != "PNG":
                raise FormatError(f"{path}: not a PNG file ({im.format})")
            if mode == "P":
                im = im.convert("RGB")
            elif mode == "LA":
                im = im.convert("L")
            elif mode == "RGBA":
                im = im.convert("RGB")
            elif mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported PNG mode {mode!r}")
            return np.asarray(im)
    except FormatError:
        raise
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"{path}: unreadable image ({exc})") from exc


def _to_rgb01(px: np.ndarray) -> np.ndarray:
    if px.ndim == 2:
        px = np.repeat(px[:, :, None], 3, axis=2)
    return px.astype(np.float32) / np.float32(255)


def load_image(path) -> TextureExemplar:
    return TextureExemplar("image", _to_rgb01(_decode_png(path)))


def quantize8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0, 1) * 255).astype(np.uint8)


def save_image(path, data: np.ndarray):
    """Write an ``(H, W, 3)`` or ``(H, W)`` array in [0, 1]; values are clamped."""
    data = np.asarray(data)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(quantize8(data)).save(Path(path), format="PNG")


def resize_image(data: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an ``(H, W, C)`` float image to ``(height, width)``."""
    h, w = size
    chans = [np.asarray(Image.fromarray(data[:, :, c].astype(np.float32))
                        .resize((w, h), Image.BILINEAR)) for c in range(data.shape[2])]
    return np.stack(chans, axis=2).astype(np.float32)


# ---------------------------------------------------------------- dynamic

def load_frames(directory) -> TextureExemplar:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    found = {}
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FormatError(f"{directory}: no frame_NNNN.png files")
    idx = sorted(found)
    if idx != list(range(idx[0], idx[0] + len(idx))):
        gaps = sorted(set(range(idx[0], idx[-1] + 1)) - set(idx))
        raise FormatError(f"{directory}: frame numbering has gaps at {gaps[:5]}")
    frames = [_to_rgb01(_decode_png(found[i])) for i in idx]
    shape0 = frames[0].shape
    for i, fr in zip(idx, frames):
        if fr.shape != shape0:
            raise FormatError(f"{directory}: frame {i} is {fr.shape[:2]}, expected {shape0[:2]}")
    return TextureExemplar("dynamic", np.stack(frames, axis=2))


def save_frames(directory, data: np.ndarray):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(data.shape[2]):
        save_image(directory / FRAME_PATTERN.format(t), data[:, :, t])


def save_gif(path, data: np.ndarray, frame_rate: float = 10.0):
    """Animated GIF preview of a dynamic texture (lossy palette; viewing only)."""
    frames = [Image.fromarray(quantize8(data[:, :, t])) for t in range(data.shape[2])]
    frames[0].save(Path(path), save_all=True, append_images=frames[1:],
                   duration=int(round(1000 / frame_rate)), loop=0)


# ---------------------------------------------------------------- sound

def load_sound(path) -> TextureExemplar:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            nch, width, rate, nframes = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            if nch != 1:
                raise FormatError(f"{path}: {nch} channels; only mono WAV is supported")
            if width != 2:
                raise FormatError(f"{path}: {8 * width}-bit samples; only 16-bit PCM is supported")
            raw = w.readframes(nframes)
    except wave.Error as exc:
        raise FormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    except EOFError as exc:
        raise OSError(f"{path}: truncated WAV file") from exc
    if len(raw) != 2 * nframes:
        raise OSError(f"{path}: truncated WAV data ({len(raw)} of {2 * nframes} bytes)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / np.float32(32768)
    return TextureExemplar("sound", samples, sample_rate=rate)


def save_sound(path, data: np.ndarray, sample_rate: int = 22050):
    q = np.clip(np.round(np.asarray(data, dtype=np.float64) * 32768), -32768, 32767).astype("<i2")
    with wave.open(str(Path(path)), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(q.tobytes())


# ---------------------------------------------------------------- dispatch

def load_texture(path) -> TextureExemplar:
    path = Path(path)
    if path.is_dir():
        return load_frames(path)
    if path.suffix.lower() == ".wav":
        return load_sound(path)
    return load_image(path)


def save_texture(path, tex: TextureExemplar | np.ndarray, modality: str | None = None,
                 sample_rate: int | None = None):
    if isinstance(tex, TextureExemplar):
        modality, data, sample_rate = tex.modality, tex.data, tex.sample_rate or sample_rate
    else:
        data = tex
    if modality == "image":
        save_image(path, data)
    elif modality == "dynamic":
        save_frames(path, data)
    elif modality == "sound":
        save_sound(path, data, sample_rate or 22050)
    else:
        raise ContractError(f"unknown modality {modality!r}")


def texture_suffix(modality: str) -> str:
    return {"image": ".png", "dynamic": "", "sound": ".wav"}[modality]


# ---------------------------------------------------------------- masks

def make_region(omega: np.ndarray, border_width: int) -> MaskRegion:
    """Validate ``omega`` and dilate it by a box of half-width ``border_width``."""
    omega = np.asarray(omega, dtype=bool)
    if border_width < 0:
        raise ContractError(f"border width must be >= 0, got {border_width}")
    if not omega.any():
        raise ContractError("mask is empty: nothing to inpaint")
    if omega.all():
        raise ContractError("mask covers the whole domain: no uncorrupted region left")
    if border_width:
        closure = ndimage.maximum_filter(omega.astype(np.uint8), size=2 * border_width + 1,
                                         mode="constant", cval=0).astype(bool)
    else:
        closure = omega.copy()
    return MaskRegion(omega, border_width, closure)


def load_mask(path, border_width: int, frames: int | None = None) -> MaskRegion:
    """Mask PNG: 0 keeps, nonzero marks corruption. ``frames`` repeats it along time."""
    px = _decode_png(path)
    if px.ndim == 3:
        px = px.max(axis=2)
    omega = px != 0
    if frames is not None:
        omega = np.repeat(omega[:, :, None], frames, axis=2)
    return make_region(omega, border_width)


def interval_mask(start: int, stop: int, length: int, border_width: int) -> MaskRegion:
    """Sound mask covering samples ``[start, stop)``."""
    if not 0 <= start < stop <= length:
        raise ContractError(f"interval [{start}, {stop}) outside a {length}-sample signal")
    omega = np.zeros(length, dtype=bool)
    omega[start:stop] = True
    return make_region(omega, border_width)


def rect_mask(shape, top: int, left: int, height: int, width: int, border_width: int) -> MaskRegion:
    omega = np.zeros(shape, dtype=bool)
    omega[top:top + height, left:left + width] = True
    return make_region(omega, border_width)


def expand_to(mask: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Broadcast a domain mask over the channel axis of ``data``."""
    if mask.shape == data.shape:
        return mask
    return np.broadcast_to(mask[..., None], data.shape)


def apply_mask(data: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Zero the corrupted region; everything else is copied bit for bit."""
    out = np.array(data, copy=True)
    out[expand_to(omega, out)] = 0
    return out
