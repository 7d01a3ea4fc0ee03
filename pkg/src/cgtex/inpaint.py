"""Template-guided inpainting.

Outer loop: pick the uncorrupted patch whose statistics are closest (lowest
energy) to the current content of the bordered hole. Inner loop: masked
Langevin synthesis of the hole against that patch, each sweep followed by one
D-learning step with the patch as exemplar. Only entries inside the hole are
ever written.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import energy as E
from .errors import ContractError
from .optim import OptimizerState
from .sampler import Chain, SamplerConfig
from .texture_io import MaskRegion, apply_mask, expand_to
from .trainer import d_learning_step

log = logging.getLogger(__name__)

DEFAULT_GRID = {"image": 8, "dynamic": 4, "sound": 500}


def default_inpaint_spec(modality: str, statistic: str = "gram") -> E.NetworkSpec:
    """(4D+0S) for images (64 ch) and dynamic textures (32 ch); (3D+0S) sound net."""
    if modality == "sound":
        # four stride-5/10/10/10 layers collapse a 12000-sample bordered hole
        return E.default_spec("sound", m=3, statistic=statistic)
    return E.default_spec(modality, m=4, n=0, statistic=statistic)


@dataclass
class InpaintConfig:
    searches: int = 10
    updates: int = 50
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    grid_stride: int | tuple[int, ...] | None = None
    spec: E.NetworkSpec | None = None
    template: tuple[int, ...] | None = None
    lr_d: float = 0.001
    d_optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.searches < 1 or self.updates < 1:
            raise ContractError("searches and updates must both be >= 1")
        if self.grid_stride is not None and min(np.atleast_1d(self.grid_stride)) < 1:
            raise ContractError("grid stride must be >= 1")


@dataclass
class TemplateMatch:
    offset: tuple[int, ...]
    extents: tuple[int, ...]
    energy: float

    def window(self) -> tuple[slice, ...]:
        return tuple(slice(o, o + e) for o, e in zip(self.offset, self.extents))


@dataclass
class InpaintResult:
    texture: np.ndarray
    net: E.EnergyNet
    templates: list[TemplateMatch]
    start_energies: list[float]
    end_energies: list[float]
    final_start_state: np.ndarray | None = None


def _strides(grid_stride, ndim: int) -> tuple[int, ...]:
    if np.isscalar(grid_stride):
        return (int(grid_stride),) * ndim
    return tuple(int(s) for s in grid_stride)


def _candidates(shape, extents, strides):
    ranges = [range(0, n - e + 1, s) for n, e, s in zip(shape, extents, strides)]
    return itertools.product(*ranges)


def template_search(f: np.ndarray, region: MaskRegion, net: E.EnergyNet, grid_stride) -> TemplateMatch:
    """Lowest-energy grid patch that avoids the hole; ties go to the first in scan order.

    The conditioning exemplar is the current content of the bordered hole's
    bounding box.
    """
    box = region.bbox()
    ext = region.extents
    ref = E.exemplar_stats(net, f[box])
    best = None
    dom = region.omega.shape
    for off in _candidates(dom, ext, _strides(grid_stride, len(dom))):
        win = tuple(slice(o, o + e) for o, e in zip(off, ext))
        if region.omega[win].any():
            continue
        e = E.energy(net, f[win], ref).item()
        if best is None or e < best.energy:
            best = TemplateMatch(tuple(off), ext, e)
    if best is None:
        raise ContractError(f"no {ext} patch on the search grid avoids the corrupted region; "
                            "use a smaller border, a finer grid or a user template")
    return best


def user_template(f: np.ndarray, region: MaskRegion, net: E.EnergyNet, offset) -> TemplateMatch:
    ext = region.extents
    offset = tuple(int(o) for o in offset)
    if len(offset) != len(ext):
        raise ContractError(f"template offset {offset} has wrong rank for extents {ext}")
    win = tuple(slice(o, o + e) for o, e in zip(offset, ext))
    if any(o < 0 or o + e > n for o, e, n in zip(offset, ext, region.omega.shape)):
        raise ContractError(f"template at {offset} with extents {ext} leaves the domain")
    if region.omega[win].any():
        raise ContractError(f"template at {offset} overlaps the corrupted region")
    ref = E.exemplar_stats(net, f[region.bbox()])
    return TemplateMatch(offset, ext, E.energy(net, f[win], ref).item())


def inpaint(f0: np.ndarray, region: MaskRegion, cfg: InpaintConfig, modality: str = "image",
            net: E.EnergyNet | None = None) -> InpaintResult:
    f = apply_mask(np.asarray(f0, dtype=np.float32), region.omega)
    box = region.bbox()
    crop_mask = np.ascontiguousarray(expand_to(region.omega, f)[box])
    spec = cfg.spec or default_inpaint_spec(modality)
    if net is None:
        net = E.build_network(spec, cfg.seed, f[box].shape)
    stride = cfg.grid_stride or DEFAULT_GRID[modality]
    sampler = SamplerConfig(cfg.sampler.step_size, cfg.sampler.n_steps, cfg.sampler.noise,
                            cfg.sampler.preconditioner, cfg.sampler.seed, crop_mask)
    chain = Chain(f[box].copy(), sampler, rng=np.random.default_rng([cfg.seed, 4]))
    d_opt = OptimizerState(cfg.d_optimizer, cfg.lr_d)
    result = InpaintResult(f, net, [], [], [])
    for t in range(1, cfg.searches + 1):
        if cfg.template is not None:
            match = user_template(f, region, net, cfg.template)
        else:
            match = template_search(f, region, net, stride)
        result.templates.append(match)
        phi = f[match.window()].copy()
        if t == cfg.searches:
            result.final_start_state = f[box].copy()
        result.start_energies.append(E.energy(net, f[box], E.exemplar_stats(net, phi)).item())
        for _ in range(cfg.updates):
            stats = E.exemplar_stats(net, phi)
            chain.f = f[box].copy()
            chain.run(net, stats)
            f[box] = chain.f
            d_learning_step(net, [f[box]], phi, d_opt)
        result.end_energies.append(E.energy(net, f[box], E.exemplar_stats(net, phi)).item())
        log.info("search %d: template %s, energy %.5f -> %.5f", t, match.offset,
                 result.start_energies[-1], result.end_energies[-1])
    result.texture = f
    return result
