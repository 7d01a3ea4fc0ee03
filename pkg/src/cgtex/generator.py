"""Fully convolutional multi-scale generator mapping a noise pyramid to a texture.

Each octave's noise passes through three same-padded 3-wide convs. Starting
from the coarsest octave the running map is upsampled x2 (nearest neighbour),
concatenated with the next finer octave's processed noise and passed through
three more convs. Two residual blocks and a 1x1 conv follow; the output goes
through a hard sigmoid (and for sound the affine map to [-1, 1]).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .energy import modality_layout
from .errors import ContractError, ShapeError
from .tensor import Tensor

DEFAULT_OCTAVES = {"image": 5, "dynamic": 3, "sound": 3}


@dataclass
class GeneratorSpec:
    modality: str = "image"
    octaves: int | None = None
    width: int = 8
    noise_channels: int | None = None

    def __post_init__(self):
        cin, _ = modality_layout(self.modality)
        if self.octaves is None:
            self.octaves = DEFAULT_OCTAVES[self.modality]
        if self.noise_channels is None:
            self.noise_channels = cin
        if self.octaves < 1 or self.width < 1:
            raise ContractError("generator needs octaves >= 1 and width >= 1")

    @property
    def out_channels(self) -> int:
        return modality_layout(self.modality)[0]

    @property
    def multiple(self) -> int:
        return 2 ** (self.octaves - 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NoisePyramid:
    levels: list[np.ndarray]  # finest first, each (*extents, channels)
    seed: int | None = None

    @property
    def size(self) -> tuple[int, ...]:
        return self.levels[0].shape[:-1]


def check_size(size, octaves: int) -> tuple[int, ...]:
    size = tuple(int(s) for s in size)
    mult = 2 ** (octaves - 1)
    bad = [s for s in size if s < 1 or s % mult]
    if bad:
        raise ContractError(f"size {size} invalid for {octaves} octaves: every extent must be "
                            f"a positive multiple of {mult}")
    return size


def sample_noise(target_size, octaves: int, rng_seed=0, channels: int = 3) -> NoisePyramid:
    size = check_size(target_size, octaves)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    levels = []
    for i in range(octaves):
        ext = tuple(s >> i for s in size)
        levels.append(T.gaussian_noise(ext + (channels,), 1.0, rng))
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return NoisePyramid(levels, seed)


class GeneratorNet:
    def __init__(self, spec: GeneratorSpec, params: list[np.ndarray], names: list[str]):
        self.spec = spec
        self.params = params
        self.names = names

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.names, self.params))

    def load_state_dict(self, tensors: dict[str, np.ndarray]):
        missing = [n for n in self.names if n not in tensors]
        if missing:
            raise ContractError(f"checkpoint lacks generator tensors {missing[:3]}")
        self.params = [np.asarray(tensors[n], dtype=T.default_dtype()).copy() for n in self.names]

    def weight_tensors(self, requires_grad: bool = False) -> list[Tensor]:
        return [Tensor(p, requires_grad=requires_grad, name=n) for p, n in zip(self.params, self.names)]

    def noise(self, target_size, rng_seed=0) -> NoisePyramid:
        return sample_noise(target_size, self.spec.octaves, rng_seed, self.spec.noise_channels)


def _layers(spec: GeneratorSpec) -> list[tuple[str, int, int, int]]:
    """(name, kernel, c_in, c_out) for every conv, in parameter order."""
    w = spec.width
    out = []
    for i in range(spec.octaves):
        out += [(f"G.oct{i}.conv{j}", 3, spec.noise_channels if j == 0 else w, w) for j in range(3)]
    for i in range(spec.octaves - 1):
        out += [(f"G.join{i}.conv{j}", 3, 2 * w if j == 0 else w, w) for j in range(3)]
    for r in range(2):
        out += [(f"G.res{r}.conv{a}", 3, w, w) for a in range(2)]
    out.append(("G.out", 1, w, spec.out_channels))
    return out


def build_generator(spec: GeneratorSpec, rng_seed=0) -> GeneratorNet:
    _, nsp = modality_layout(spec.modality)
    rng = np.random.default_rng(rng_seed)
    params, names = [], []
    for name, k, cin, cout in _layers(spec):
        fan_in = k ** nsp * cin
        b = np.sqrt(1.0 / fan_in)
        params.append(rng.uniform(-b, b, size=(k,) * nsp + (cin, cout)).astype(T.default_dtype()))
        if name == "G.out":
            # start the output in the linear part of the hard sigmoid
            bias = np.full(cout, 0.5)
        else:
            bias = rng.uniform(-b, b, size=cout)
        params.append(bias.astype(T.default_dtype()))
        names += [f"{name}.weight", f"{name}.bias"]
    return GeneratorNet(spec, params, names)


def generate(net: GeneratorNet, z: NoisePyramid, weights: list[Tensor] | None = None) -> Tensor:
    """Texture of the pyramid's finest size; sound comes back as a 1-D tensor."""
    spec = net.spec
    if len(z.levels) != spec.octaves:
        raise ContractError(f"noise pyramid has {len(z.levels)} octaves, generator expects {spec.octaves}")
    _, nsp = modality_layout(spec.modality)
    for i, lvl in enumerate(z.levels):
        if lvl.ndim != nsp + 1 or lvl.shape[-1] != spec.noise_channels:
            raise ShapeError(f"noise octave {i} has shape {lvl.shape}")
        if i and tuple(2 * s for s in lvl.shape[:-1]) != z.levels[i - 1].shape[:-1]:
            raise ShapeError(f"noise octave {i} extents {lvl.shape[:-1]} are not half of octave {i - 1}")
    if weights is None:
        weights = net.weight_tensors()
    params = dict(zip(net.names, weights))

    def conv(name, h, k=3):
        return T.conv(h, params[name + ".weight"], params[name + ".bias"],
                      padding=(k // 2,) * nsp)

    def block(prefix, h):
        for j in range(3):
            h = T.hard_sigmoid(conv(f"{prefix}.conv{j}", h))
        return h

    top = spec.octaves - 1
    h = block(f"G.oct{top}", Tensor(z.levels[top]))
    for i in range(top - 1, -1, -1):
        h = block(f"G.join{i}", T.concat([T.upsample2(h), block(f"G.oct{i}", Tensor(z.levels[i]))]))
    for r in range(2):
        h = T.add(h, conv(f"G.res{r}.conv1", T.hard_sigmoid(conv(f"G.res{r}.conv0", h))))
    out = T.hard_sigmoid(conv("G.out", h, k=1))
    if spec.modality == "sound":
        out = T.reshape(T.scale(out, 2.0, -1.0), out.shape[:-1])
    return out
