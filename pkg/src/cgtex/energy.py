"""Two-branch energy network and the conditional energy it defines.

The network reads a texture through a deep branch (small dilated kernels) and
a shallow branch (large kernels). Every convolution is followed by a hard
sigmoid, and every layer of the selected ``(m deep, n shallow)`` sub-network
contributes the distance between its feature statistic on the candidate and
on the exemplar::

    E(f, f0; w) = sum_l || S(D_l(f0)) - S(D_l(f)) ||_F

with ``S`` either the normalised Gram matrix or the per-channel mean.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import GeometryError, SpecError
from .tensor import Tensor

MODALITIES = ("image", "dynamic", "sound")
STATISTICS = ("gram", "mean")

# channels of the raw texture and number of spatial/temporal axes
_LAYOUT = {"image": (3, 2), "dynamic": (3, 3), "sound": (1, 1)}


def modality_layout(modality: str) -> tuple[int, int]:
    """``(input channels, spatial axes)`` for a modality."""
    try:
        return _LAYOUT[modality]
    except KeyError:
        raise SpecError(f"unknown modality {modality!r}; expected one of {MODALITIES}") from None


@dataclass
class LayerSpec:
    channels: int
    kernel: int | list[int]
    stride: int | list[int] = 1
    dilation: int | list[int] = 1


@dataclass
class NetworkSpec:
    modality: str
    deep: list[LayerSpec]
    shallow: list[LayerSpec] = field(default_factory=list)
    m: int | None = None
    n: int | None = None
    statistic: str = "gram"

    def __post_init__(self):
        self.deep = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.deep]
        self.shallow = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.shallow]
        if self.m is None:
            self.m = len(self.deep)
        if self.n is None:
            self.n = len(self.shallow)
        modality_layout(self.modality)
        if self.statistic not in STATISTICS:
            raise SpecError(f"statistic must be one of {STATISTICS}, got {self.statistic!r}")
        if not 0 <= self.m <= len(self.deep):
            raise SpecError(f"m={self.m} outside 0..{len(self.deep)}")
        if not 0 <= self.n <= len(self.shallow):
            raise SpecError(f"n={self.n} outside 0..{len(self.shallow)}")
        if self.m == 0 and self.n == 0:
            raise SpecError("(0D + 0S) has no layers")

    @property
    def label(self) -> str:
        return f"({self.m}D+{self.n}S)"

    def branches(self) -> dict[str, list[LayerSpec]]:
        return {"deep": self.deep[: self.m], "shallow": self.shallow[: self.n]}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)

    def receptive_field(self) -> dict[str, int]:
        """Receptive field (along the first axis) of each branch's last layer."""
        out = {}
        for name, layers in self.branches().items():
            rf, jump = 1, 1
            for layer in layers:
                k = _axis0(layer.kernel)
                rf += (k - 1) * _axis0(layer.dilation) * jump
                jump *= _axis0(layer.stride)
            out[name] = rf if layers else 0
        return out

    def feature_shapes(self, input_shape) -> dict[str, list[tuple[int, ...]]]:
        """Spatial extents of every selected layer's output; raises on collapse."""
        _, nsp = modality_layout(self.modality)
        shapes = {}
        for name, layers in self.branches().items():
            cur = tuple(input_shape[:nsp])
            shapes[name] = []
            for i, layer in enumerate(layers):
                k = T._per_axis(layer.kernel, nsp, "kernel")
                cur = T.conv_output_shape(cur, k, layer.stride, layer.dilation)
                if min(cur) < 1:
                    raise GeometryError(
                        f"{self.label}: {name} layer {i} collapses input {tuple(input_shape[:nsp])} "
                        f"to extent {cur}")
                shapes[name].append(cur)
        return shapes


def _axis0(v) -> int:
    return int(v) if np.isscalar(v) else int(v[0])


def default_spec(modality: str = "image", m: int | None = None, n: int | None = None,
                 statistic: str = "gram", channels: int | None = None) -> NetworkSpec:
    """Default architectures per modality.

    image:   9 deep 3x3 convs with dilations 1,1,1,2,2,2,4,4,4 and 3 shallow
             11x11 convs with dilations 1,4,16; 64 channels
    dynamic: 6 deep 3x3x2 convs, 32 channels (no shallow branch)
    sound:   4 deep length-25 convs with strides 5,10,10,10, 128 channels
    """
    if modality == "image":
        c = channels or 64
        deep = [LayerSpec(c, 3, 1, d) for d in (1, 1, 1, 2, 2, 2, 4, 4, 4)]
        shallow = [LayerSpec(c, 11, 1, d) for d in (1, 4, 16)]
    elif modality == "dynamic":
        c = channels or 32
        deep = [LayerSpec(c, [3, 3, 2], 1, 1) for _ in range(6)]
        shallow = []
    elif modality == "sound":
        c = channels or 128
        deep = [LayerSpec(c, 25, s, 1) for s in (5, 10, 10, 10)]
        shallow = []
    else:
        modality_layout(modality)
        raise AssertionError
    return NetworkSpec(modality, deep, shallow,
                       m=len(deep) if m is None else m,
                       n=len(shallow) if n is None else n,
                       statistic=statistic)


class EnergyNet:
    """Weights of a selected sub-network plus the statistic that defines E.

    ``params`` is a flat list of arrays ordered like ``names``; each conv owns
    a kernel ``(*k, C_in, C_out)`` and a bias ``(C_out,)``.
    """

    def __init__(self, spec: NetworkSpec, params: list[np.ndarray], names: list[str]):
        self.spec = spec
        self.params = params
        self.names = names

    @property
    def layer_count(self) -> int:
        return self.spec.m + self.spec.n

    @property
    def receptive_field(self) -> dict[str, int]:
        return self.spec.receptive_field()

    def layer_channels(self) -> list[int]:
        b = self.spec.branches()
        return [l.channels for l in b["deep"]] + [l.channels for l in b["shallow"]]

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.names, self.params))

    def load_state_dict(self, tensors: dict[str, np.ndarray]):
        missing = [n for n in self.names if n not in tensors]
        if missing:
            raise SpecError(f"checkpoint lacks energy-net tensors {missing[:3]}")
        self.params = [np.asarray(tensors[n], dtype=T.default_dtype()).copy() for n in self.names]

    def weight_tensors(self, requires_grad: bool = False) -> list[Tensor]:
        return [Tensor(p, requires_grad=requires_grad, name=n) for p, n in zip(self.params, self.names)]

    def checksum(self) -> int:
        import zlib
        crc = 0
        for p in self.params:
            crc = zlib.crc32(np.ascontiguousarray(p).tobytes(), crc)
        return crc


def build_network(spec: NetworkSpec, rng_seed=0, input_shape=None) -> EnergyNet:
    """Initialise weights i.i.d. uniform in [-b, b] with b = sqrt(1 / fan_in).

    With ``input_shape`` given the layer geometry is validated against it.
    """
    if input_shape is not None:
        spec.feature_shapes(input_shape)
    cin0, nsp = modality_layout(spec.modality)
    rng = np.random.default_rng(rng_seed)
    params, names = [], []
    for bname, layers in spec.branches().items():
        cin = cin0
        for i, layer in enumerate(layers):
            k = T._per_axis(layer.kernel, nsp, "kernel")
            fan_in = int(np.prod(k)) * cin
            b = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-b, b, size=k + (cin, layer.channels))
            bias = rng.uniform(-b, b, size=(layer.channels,))
            params += [w.astype(T.default_dtype()), bias.astype(T.default_dtype())]
            names += [f"D.{bname}.{i}.weight", f"D.{bname}.{i}.bias"]
            cin = layer.channels
    return EnergyNet(spec, params, names)


def _as_input(net: EnergyNet, f) -> Tensor:
    f = T.as_tensor(f)
    cin, nsp = modality_layout(net.spec.modality)
    if net.spec.modality == "sound" and f.ndim == 1:
        f = T.reshape(f, f.shape + (1,))
    if f.ndim != nsp + 1 or f.shape[-1] != cin:
        raise T.ShapeError(
            f"{net.spec.modality} network expects {nsp} spatial axes and {cin} channels, got {f.shape}")
    return f


def features(net: EnergyNet, f, weights: list[Tensor] | None = None) -> list[Tensor]:
    """Post-activation feature maps of every contributing layer (deep first)."""
    x = _as_input(net, f)
    if weights is None:
        weights = net.weight_tensors()
    nsp = x.ndim - 1
    out = []
    idx = 0
    for layers in net.spec.branches().values():
        h = x
        for layer in layers:
            w, b = weights[idx], weights[idx + 1]
            idx += 2
            h = T.hard_sigmoid(T.conv(h, w, b, stride=T._per_axis(layer.stride, nsp, "stride"),
                                      dilation=T._per_axis(layer.dilation, nsp, "dilation")))
            out.append(h)
    return out


def gram_statistic(feature) -> Tensor:
    return T.gram(feature)


def mean_statistic(feature) -> Tensor:
    return T.channel_mean(feature)


def statistic(net: EnergyNet, feature) -> Tensor:
    return gram_statistic(feature) if net.spec.statistic == "gram" else mean_statistic(feature)


def layer_stats(net: EnergyNet, f, weights: list[Tensor] | None = None) -> list[Tensor]:
    return [statistic(net, h) for h in features(net, f, weights)]


def exemplar_stats(net: EnergyNet, f0) -> list[np.ndarray]:
    """Exemplar statistics under the current weights, detached from any tape.

    Must be recomputed whenever ``net.params`` change.
    """
    return [s.data.copy() for s in layer_stats(net, f0)]


def energy_from_stats(stats: list[Tensor], ref_stats) -> Tensor:
    terms = [T.norm(T.sub(T.as_tensor(r), s)) for s, r in zip(stats, ref_stats)]
    return T.add_scalars(terms)


def layer_distances(net: EnergyNet, f, f0_stats) -> list[float]:
    """Per-layer statistic distances, no tape."""
    return [float(np.sqrt(np.sum((s.data - r) ** 2)))
            for s, r in zip(layer_stats(net, f), f0_stats)]


def energy(net: EnergyNet, f, f0_stats, weights: list[Tensor] | None = None) -> Tensor:
    """Scalar ``E(f, f0; w)``; differentiable in ``f`` and, via ``weights``, in ``w``.

    ``f0_stats`` may be cached arrays or tensors that themselves depend on
    ``weights``.
    """
    return energy_from_stats(layer_stats(net, f, weights), f0_stats)


def energy_and_grad(net: EnergyNet, f: np.ndarray, f0_stats) -> tuple[float, np.ndarray]:
    """Energy and its gradient with respect to the texture, weights frozen."""
    x = Tensor(f, requires_grad=True)
    e = energy(net, x, f0_stats)
    (g,) = T.backward(e, [x])
    return e.item(), g


def energy_bound(net: EnergyNet) -> float:
    """Upper bound on E given [0, 1]-valued statistics."""
    chans = net.layer_channels()
    if net.spec.statistic == "gram":
        return float(sum(chans))
    return float(sum(np.sqrt(c) for c in chans))
