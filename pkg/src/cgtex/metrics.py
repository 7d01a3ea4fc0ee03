"""Multi-scale structural similarity.

Colour inputs are reduced to luma (0.299, 0.587, 0.114) first. Each scale
filters with a separable Gaussian window (valid region only), contributes the
mean contrast-structure term, and the coarsest scale contributes the full
SSIM mean. Scales are separated by 2x average pooling. Negative per-scale
terms are clamped to zero before exponentiation, so the result is in [0, 1].
1-D inputs (waveforms) use the same machinery along time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError

STANDARD_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class MsSsimConfig:
    scales: int = 5
    weights: tuple[float, ...] | None = None
    win_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.scales < 1:
            raise ContractError("MS-SSIM needs at least one scale")
        if self.weights is None:
            if self.scales > len(STANDARD_WEIGHTS):
                raise ContractError(f"no standard weights for {self.scales} scales; pass weights")
            w = np.array(STANDARD_WEIGHTS[: self.scales])
            object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))
        if len(self.weights) != self.scales:
            raise ContractError(f"{len(self.weights)} weights for {self.scales} scales")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ContractError(f"MS-SSIM weights must sum to 1, got {sum(self.weights)}")

    @property
    def min_extent(self) -> int:
        return self.win_size * 2 ** (self.scales - 1)

    def fitted(self, shape) -> "MsSsimConfig":
        """The same config with as many scales as ``shape`` allows (at most ``scales``)."""
        small = min(shape)
        s = self.scales
        while s > 1 and self.win_size * 2 ** (s - 1) > small:
            s -= 1
        if s == self.scales:
            return self
        return MsSsimConfig(s, None, self.win_size, self.sigma, self.k1, self.k2, self.data_range)


def to_luma(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim >= 2 and x.shape[-1] == 3:
        return x @ np.array(LUMA)
    return x


def _window(cfg: MsSsimConfig) -> np.ndarray:
    r = np.arange(cfg.win_size) - (cfg.win_size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * cfg.sigma ** 2))
    return g / g.sum()


def _filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    for ax in range(x.ndim):
        x = sliding_window_view(x, len(g), axis=ax) @ g
    return x


def _pool(x: np.ndarray) -> np.ndarray:
    for ax in range(x.ndim):
        n = x.shape[ax] // 2 * 2
        x = np.take(x, np.arange(n), axis=ax)
        shape = x.shape[:ax] + (n // 2, 2) + x.shape[ax + 1:]
        x = x.reshape(shape).mean(axis=ax + 1)
    return x


def _ssim_terms(x, y, g, c1, c2):
    mx, my = _filter(x, g), _filter(y, g)
    sxx = _filter(x * x, g) - mx * mx
    syy = _filter(y * y, g) - my * my
    sxy = _filter(x * y, g) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(cs)), float(np.mean(lum * cs))


def ms_ssim(a, b, cfg: MsSsimConfig | None = None) -> float:
    """MS-SSIM of two images (H, W[, 3]) or waveforms (T,).

    Without ``cfg`` the standard 5-scale setup is used, reduced to as many
    scales as the input extent supports.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"ms_ssim: shapes {a.shape} and {b.shape} differ")
    x, y = to_luma(a), to_luma(b)
    if x.ndim not in (1, 2):
        raise ShapeError(f"ms_ssim takes images or waveforms, got shape {a.shape}; "
                         "use ms_ssim_frames for dynamic textures")
    cfg = MsSsimConfig().fitted(x.shape) if cfg is None else cfg
    if min(x.shape) < cfg.min_extent:
        raise ShapeError(f"ms_ssim: extent {min(x.shape)} below the minimum {cfg.min_extent} "
                         f"for {cfg.scales} scales with window {cfg.win_size}")
    g = _window(cfg)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    score = 1.0
    for j in range(cfg.scales):
        cs, ss = _ssim_terms(x, y, g, c1, c2)
        term = ss if j == cfg.scales - 1 else cs
        score *= max(term, 0.0) ** cfg.weights[j]
        if j < cfg.scales - 1:
            x, y = _pool(x), _pool(y)
    return float(min(max(score, 0.0), 1.0))


def ms_ssim_frames(a, b, cfg: MsSsimConfig | None = None) -> float:
    """Mean per-frame MS-SSIM of two dynamic textures ``(H, W, T, 3)``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError(f"ms_ssim_frames expects (H, W, T, 3) inputs, got {a.shape} and {b.shape}")
    if a.shape[2] != b.shape[2]:
        raise ContractError(f"frame counts differ: {a.shape[2]} vs {b.shape[2]}")
    if a.shape != b.shape:
        raise ShapeError(f"frame sizes differ: {a.shape} vs {b.shape}")
    scores = [ms_ssim(a[:, :, t], b[:, :, t], cfg) for t in range(a.shape[2])]
    return float(np.mean(scores))


def score(a, b, cfg: MsSsimConfig | None = None) -> float:
    """Dispatch on rank: 4-D inputs are dynamic textures, anything else goes to ms_ssim."""
    if np.ndim(a) == 4:
        return ms_ssim_frames(a, b, cfg)
    return ms_ssim(a, b, cfg)
