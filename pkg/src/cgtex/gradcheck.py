"""Finite-difference verification of every differentiable op.

Each check builds a random scalar function of a few leaves, evaluates the
tape gradient and the central difference (h = 1e-3) in 64-bit precision and
reports ``||g_tape - g_fd|| / max(||g_tape||, ||g_fd||)``. Cases whose
hard-sigmoid inputs lie within 2h of a kink, or whose norm arguments lie
within 10h of zero, are redrawn. Large leaves are checked on a random subset
of coordinates.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import energy as E
from . import tensor as T
from .generator import GeneratorSpec, build_generator, generate, sample_noise
from .tensor import Tensor

H = 1e-3
TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    cases: int
    max_rel_err: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOL


def _project(out: Tensor, r: np.ndarray) -> Tensor:
    if out.data.size == 1:
        return T.reshape(out, ())
    return T.sum_all(T.mul(out, Tensor(r)))


def rel_error(fn: Callable[[list[Tensor]], Tensor], leaves: list[np.ndarray], h: float = H,
              max_coords: int | None = None, rng=None) -> float:
    """Relative error between tape and central-difference gradients of ``fn``.

    With ``max_coords`` each leaf is compared on at most that many randomly
    chosen coordinates.
    """
    tensors = [Tensor(x, requires_grad=True) for x in leaves]
    grads = T.backward(fn(tensors), tensors)
    worst = 0.0
    for i, x in enumerate(leaves):
        coords = np.arange(x.size)
        if max_coords is not None and x.size > max_coords:
            coords = np.sort(rng.choice(x.size, max_coords, replace=False))
        fd = np.zeros(len(coords))
        for c, j in enumerate(coords):
            args = [Tensor(y) for y in leaves]
            xp = x.copy().reshape(-1)
            xp[j] += h
            args[i] = Tensor(xp.reshape(x.shape))
            up = fn(args).item()
            xp[j] -= 2 * h
            args[i] = Tensor(xp.reshape(x.shape))
            down = fn(args).item()
            fd[c] = (up - down) / (2 * h)
        tape = grads[i].reshape(-1)[coords]
        denom = max(np.linalg.norm(tape), np.linalg.norm(fd), 1e-8)
        worst = max(worst, float(np.linalg.norm(tape - fd) / denom))
    return worst


def _kink_margin(fn, leaves) -> float:
    T.kink_log = []
    try:
        fn([Tensor(x) for x in leaves])
        return min(T.kink_log, default=np.inf)
    finally:
        T.kink_log = None


def _run(name: str, make_case: Callable[[np.random.Generator], tuple], cases: int, seed: int,
         max_coords: int | None = None) -> CheckResult:
    """``make_case(rng) -> (fn, leaves)``; redraws cases that sit near a kink."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, done, tries = 0.0, 0, 0
    with T.precision(np.float64):
        while done < cases:
            tries += 1
            if tries > 50 * cases:
                raise RuntimeError(f"gradcheck {name}: could not draw kink-free cases")
            fn, leaves = make_case(rng)
            if _kink_margin(fn, leaves) < 2 * H:
                continue
            worst = max(worst, rel_error(fn, leaves, max_coords=max_coords, rng=rng))
            done += 1
    return CheckResult(name, cases, worst, time.perf_counter() - start)


# ---------------------------------------------------------------- case factories

def _conv_case(nsp: int):
    def make(rng):
        k = tuple(rng.integers(1, 4, size=nsp))
        stride = tuple(rng.integers(1, 3, size=nsp))
        dil = tuple(rng.integers(1, 3, size=nsp))
        pad = tuple(rng.integers(0, 2, size=nsp)) if rng.random() < 0.5 else None
        cin, cout = rng.integers(1, 3), rng.integers(1, 3)
        base = {1: 9, 2: 6, 3: 4}[nsp]
        size = tuple(int(d * (kk - 1) + 1 + rng.integers(0, base - 2)) for kk, d in zip(k, dil))
        x = rng.standard_normal(size + (cin,))
        w = rng.standard_normal(k + (cin, cout))
        b = rng.standard_normal(cout)
        out_shape = T.conv_output_shape(size, k, stride, dil, pad or 0) + (cout,)
        r = rng.standard_normal(out_shape)

        def fn(ts):
            return _project(T.conv(ts[0], ts[1], ts[2], stride, dil, pad), r)
        return fn, [x, w, b]
    return make


def _hard_sigmoid_case(rng):
    x = rng.uniform(-0.5, 1.5, size=tuple(rng.integers(1, 5, size=rng.integers(1, 4))))
    r = rng.standard_normal(x.shape)
    return (lambda ts: _project(T.hard_sigmoid(ts[0]), r)), [x]


def _gram_case(rng):
    x = rng.random((int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))))
    r = rng.standard_normal((x.shape[-1],) * 2)
    return (lambda ts: _project(T.gram(ts[0]), r)), [x]


def _mean_case(rng):
    x = rng.random((int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))))
    r = rng.standard_normal(x.shape[-1])
    return (lambda ts: _project(T.channel_mean(ts[0]), r)), [x]


def _norm_case(rng):
    x = rng.standard_normal(tuple(rng.integers(1, 5, size=rng.integers(1, 4))))
    return (lambda ts: T.norm(ts[0])), [x]


def _shape_ops_case(rng):
    a = rng.standard_normal((int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 3))))
    b = rng.standard_normal(a.shape[:-1] + (int(rng.integers(1, 3)),))
    r = rng.standard_normal(tuple(2 * s for s in a.shape[:-1]) + (a.shape[-1] + b.shape[-1],))

    def fn(ts):
        return _project(T.upsample2(T.concat([ts[0], ts[1]])), r)
    return fn, [a, b]


def _kle_case(rng):
    from .trainer import kle
    k = int(rng.integers(2, 5))
    xs = [rng.standard_normal((3, 2)) for _ in range(k)]
    return (lambda ts: kle(ts)), xs


def _tiny_spec(rng, statistic, modality="image"):
    m = int(rng.integers(1, 3))
    if modality == "image":
        deep = [E.LayerSpec(2, 3, 1, int(rng.integers(1, 3)) if i == 0 else 1) for i in range(m)]
        shallow = [E.LayerSpec(2, 3, 2, 1)]
        n = int(rng.integers(0, 2))
    elif modality == "dynamic":
        deep = [E.LayerSpec(2, 2, 1, 1) for _ in range(m)]
        shallow, n = [], 0
    else:
        deep = [E.LayerSpec(2, 3, 2, 1) for _ in range(m)]
        shallow, n = [], 0
    return E.NetworkSpec(modality, deep, shallow, m=m, n=n, statistic=statistic)


_SHAPES = {"image": (7, 7, 3), "dynamic": (4, 4, 3, 3), "sound": (16,)}


def _energy_case(statistic, wrt, modality="image"):
    def make(rng):
        spec = _tiny_spec(rng, statistic, modality)
        net = E.build_network(spec, int(rng.integers(1 << 30)))
        shape = _SHAPES[modality]
        f0 = rng.random(shape)
        f = rng.random(shape)
        if wrt == "f":
            stats = E.exemplar_stats(net, f0)
            return (lambda ts: E.energy(net, ts[0], stats)), [f]

        def fn(ts):
            ref = E.layer_stats(net, Tensor(f0), ts)
            return E.energy(net, Tensor(f), ref, ts)
        return fn, [p.copy() for p in net.params]
    return make


def _generator_case(rng):
    spec = GeneratorSpec("image", octaves=2, width=2, noise_channels=1)
    gen = build_generator(spec, int(rng.integers(1 << 30)))
    z = sample_noise((4, 4), 2, int(rng.integers(1 << 30)), channels=1)
    r = rng.standard_normal((4, 4, 3))

    def fn(ts):
        return _project(generate(gen, z, ts), r)
    # every octave path, join, residual block and the output conv is a leaf
    return fn, [p.copy() for p in gen.params]


def _composite_case(rng):
    x = rng.random((6, 6, 2))
    w = rng.uniform(-0.6, 0.6, size=(3, 3, 2, 2))

    def fn(ts):
        h = T.hard_sigmoid(T.conv(ts[0], ts[1]))
        return T.norm(T.gram(h))
    return fn, [x, w]


CHECKS: dict[str, Callable] = {
    "conv1d": _conv_case(1),
    "conv2d": _conv_case(2),
    "conv3d": _conv_case(3),
    "hard_sigmoid": _hard_sigmoid_case,
    "gram": _gram_case,
    "mean": _mean_case,
    "norm": _norm_case,
    "upsample_concat": _shape_ops_case,
    "kle": _kle_case,
    "conv_sigma_gram_norm": _composite_case,
    "energy_gram_df": _energy_case("gram", "f"),
    "energy_mean_df": _energy_case("mean", "f"),
    "energy_gram_dw": _energy_case("gram", "w"),
    "energy_mean_dw": _energy_case("mean", "w"),
    "energy_dynamic_df": _energy_case("gram", "f", "dynamic"),
    "energy_sound_dw": _energy_case("gram", "w", "sound"),
    "generator_dtheta": _generator_case,
}


# per-leaf coordinate budget for checks whose leaves are large
SUBSAMPLE = {"generator_dtheta": 6}


def run_suite(cases: int = 20, seed: int = 0, names=None) -> list[CheckResult]:
    out = []
    for i, (name, make) in enumerate(CHECKS.items()):
        if names is not None and name not in names:
            continue
        out.append(_run(name, make, cases, seed + i, SUBSAMPLE.get(name)))
    return out
