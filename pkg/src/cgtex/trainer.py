"""Training loops: Langevin-sampled (c-cgcnn), generator-sampled (f-cgcnn), fixed network.

Weight learning ascends the mean energy of the current samples. The exemplar
statistics are recomputed on the tape with the same weights, so the exemplar's
own contribution to the gradient is exactly zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import energy as E
from . import tensor as T
from .errors import ContractError
from .generator import GeneratorNet, GeneratorSpec, build_generator, check_size, generate
from .optim import OptimizerState, optimizer_step
from .sampler import Chain, SamplerConfig

log = logging.getLogger(__name__)

MODES = ("c-cgcnn", "f-cgcnn", "fixed-d")
# the sound net's wide kernels give small initial weights; a full 1e-3 Adam step
# per update lets D outrun the chains
DEFAULT_LR_D = {"image": 0.001, "dynamic": 0.001, "sound": 0.0001}


@dataclass
class TrainConfig:
    mode: str = "c-cgcnn"
    K: int = 3
    T: int = 5000
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lr_d: float | None = None  # None: per-modality default
    lr_g: float = 0.001
    d_optimizer: str = "adam"
    g_optimizer: str = "adam"
    init_std: float = 0.1
    kle_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.K < 1:
            raise ContractError(f"K must be >= 1, got {self.K}")
        if self.T < 1:
            raise ContractError(f"T must be >= 1, got {self.T}")
        if self.init_std < 0:
            raise ContractError("init_std must be >= 0")


@dataclass
class TrainState:
    net: E.EnergyNet
    d_opt: OptimizerState
    iteration: int = 0
    samples: list[np.ndarray] = field(default_factory=list)
    chains: list[Chain] = field(default_factory=list)
    trace: list[tuple[int, int, float]] = field(default_factory=list)
    gen: GeneratorNet | None = None
    g_opt: OptimizerState | None = None
    d_updates: int = 0
    g_updates: int = 0
    kle_trace: list[float] = field(default_factory=list)

    def mean_energy(self, iteration: int) -> float:
        vals = [e for t, _, e in self.trace if t == iteration]
        return float(np.mean(vals))


def _lr_d(cfg: TrainConfig, spec: E.NetworkSpec) -> float:
    return DEFAULT_LR_D[spec.modality] if cfg.lr_d is None else cfg.lr_d


# ---------------------------------------------------------------- D-learning

def d_learning_step(net: E.EnergyNet, samples, f0, opt: OptimizerState) -> list[float]:
    """One optimizer step on ``w`` ascending mean sample energy.

    Returns the per-sample energies evaluated before the update.
    """
    if len(samples) < 1:
        raise ContractError("D-learning needs at least one sample")
    w = net.weight_tensors(requires_grad=True)
    ref = E.layer_stats(net, f0, w)
    energies = [E.energy(net, s, ref, w) for s in samples]
    mean = T.scale(T.add_scalars(energies), 1.0 / len(samples))
    grads = T.backward(mean, w)
    # descending -mean(E) is ascending mean(E)
    net.params = optimizer_step(opt, net.params, [-g for g in grads])
    return [e.item() for e in energies]


# ---------------------------------------------------------------- c-cgCNN

def _init_chains(f0: np.ndarray, cfg: TrainConfig) -> list[Chain]:
    chains = []
    for k in range(cfg.K):
        rng = np.random.default_rng([cfg.seed, 1, k])
        f = T.gaussian_noise(f0.shape, cfg.init_std, rng)
        chains.append(Chain(f, cfg.sampler, rng=rng))
    return chains


def _langevin_loop(f0, spec, cfg: TrainConfig, learn: bool, net=None, callback=None) -> TrainState:
    f0 = np.asarray(f0, dtype=T.default_dtype())
    if net is None:
        net = E.build_network(spec, cfg.seed, f0.shape)
    state = TrainState(net=net, d_opt=OptimizerState(cfg.d_optimizer, _lr_d(cfg, spec)))
    state.chains = _init_chains(f0, cfg)
    state.samples = [c.f for c in state.chains]
    for t in range(1, cfg.T + 1):
        stats = E.exemplar_stats(net, f0)
        for c in state.chains:
            c.run(net, stats)
        state.samples = [c.f for c in state.chains]
        if learn:
            energies = d_learning_step(net, state.samples, f0, state.d_opt)
            state.d_updates += 1
        else:
            energies = [E.energy(net, s, stats).item() for s in state.samples]
        state.trace += [(t, k, e) for k, e in enumerate(energies)]
        state.iteration = t
        if t == 1 or t % 50 == 0:
            log.info("iter %d mean energy %.5f", t, float(np.mean(energies)))
        if callback is not None:
            callback(state)
    return state


def train_c_cgcnn(f0, spec: E.NetworkSpec, cfg: TrainConfig, net: E.EnergyNet | None = None,
                  callback: Callable[[TrainState], None] | None = None) -> TrainState:
    """Persistent chains alternating ``N`` Langevin steps and one D-learning step."""
    if cfg.mode != "c-cgcnn":
        raise ContractError(f"train_c_cgcnn called with mode {cfg.mode!r}")
    return _langevin_loop(f0, spec, cfg, True, net, callback)


def train_fixed_d(f0, spec: E.NetworkSpec, cfg: TrainConfig, net: E.EnergyNet | None = None,
                  callback: Callable[[TrainState], None] | None = None) -> TrainState:
    """The c-cgcnn loop with weight learning switched off."""
    if cfg.mode != "fixed-d":
        raise ContractError(f"train_fixed_d called with mode {cfg.mode!r}")
    return _langevin_loop(f0, spec, cfg, False, net, callback)


# ---------------------------------------------------------------- f-cgCNN

def kle(samples) -> T.Tensor:
    """Sum of Frobenius distances over unordered sample pairs ``i < j``."""
    samples = [T.as_tensor(s) for s in samples]
    if len(samples) < 2:
        raise ContractError(f"KLE needs at least 2 samples, got {len(samples)}")
    terms = [T.norm(T.sub(samples[i], samples[j]))
             for i in range(len(samples)) for j in range(i + 1, len(samples))]
    return T.add_scalars(terms)


def g_learning_step(gen: GeneratorNet, net: E.EnergyNet, f0_stats, zs, opt: OptimizerState,
                    kle_weight: float = 1.0) -> tuple[float, float]:
    """One optimizer step on the generator weights.

    Loss: ``mean_k E(G(z_k)) - kle_weight * KLE``. With ``kle_weight == 0``
    a single noise input is allowed. Returns ``(mean energy, KLE)``.
    """
    if kle_weight != 0 and len(zs) < 2:
        raise ContractError("G-learning with the entropy term needs K >= 2")
    if len(zs) < 1:
        raise ContractError("G-learning needs at least one noise input")
    theta = gen.weight_tensors(requires_grad=True)
    outs = [generate(gen, z, theta) for z in zs]
    mean_e = T.scale(T.add_scalars([E.energy(net, o, f0_stats) for o in outs]), 1.0 / len(outs))
    loss = mean_e
    k_val = 0.0
    if kle_weight != 0:
        k = kle(outs)
        k_val = k.item()
        loss = T.sub(mean_e, T.scale(k, kle_weight))
    grads = T.backward(loss, theta)
    gen.params = optimizer_step(opt, gen.params, grads)
    return mean_e.item(), k_val


def train_f_cgcnn(f0, spec_d: E.NetworkSpec, spec_g: GeneratorSpec, cfg: TrainConfig,
                  net: E.EnergyNet | None = None, gen: GeneratorNet | None = None,
                  callback: Callable[[TrainState], None] | None = None) -> TrainState:
    """Per iteration: K fresh generations, one D-learning step, one G-learning step."""
    if cfg.mode != "f-cgcnn":
        raise ContractError(f"train_f_cgcnn called with mode {cfg.mode!r}")
    if cfg.K < 2 and cfg.kle_weight != 0:
        raise ContractError("f-cgcnn with the entropy term needs K >= 2")
    f0 = np.asarray(f0, dtype=T.default_dtype())
    _, nsp = E.modality_layout(spec_d.modality)
    size = check_size(f0.shape[:nsp], spec_g.octaves)
    if net is None:
        net = E.build_network(spec_d, cfg.seed, f0.shape)
    if gen is None:
        gen = build_generator(spec_g, [cfg.seed, 3])
    state = TrainState(net=net, d_opt=OptimizerState(cfg.d_optimizer, _lr_d(cfg, spec_d)), gen=gen,
                       g_opt=OptimizerState(cfg.g_optimizer, cfg.lr_g))
    rng = np.random.default_rng([cfg.seed, 2])
    for t in range(1, cfg.T + 1):
        zs = [gen.noise(size, rng) for _ in range(cfg.K)]
        samples = [generate(gen, z).data for z in zs]
        energies = d_learning_step(net, samples, f0, state.d_opt)
        state.d_updates += 1
        stats = E.exemplar_stats(net, f0)
        _, k_val = g_learning_step(gen, net, stats, zs, state.g_opt, cfg.kle_weight)
        state.g_updates += 1
        state.samples = samples
        state.trace += [(t, k, e) for k, e in enumerate(energies)]
        state.kle_trace.append(k_val)
        state.iteration = t
        if t == 1 or t % 50 == 0:
            log.info("iter %d mean energy %.5f kle %.3f", t, float(np.mean(energies)), k_val)
        if callback is not None:
            callback(state)
    return state


def train(f0, spec_d: E.NetworkSpec, cfg: TrainConfig, spec_g: GeneratorSpec | None = None,
          callback=None) -> TrainState:
    if cfg.mode == "c-cgcnn":
        return train_c_cgcnn(f0, spec_d, cfg, callback=callback)
    if cfg.mode == "fixed-d":
        return train_fixed_d(f0, spec_d, cfg, callback=callback)
    return train_f_cgcnn(f0, spec_d, spec_g or GeneratorSpec(spec_d.modality), cfg, callback=callback)
