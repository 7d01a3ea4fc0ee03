"""Langevin sampling of textures under a frozen energy network.

Plain mode follows ``f <- f - (eps^2 / 2) dE/df + eps * N(0, 1)``. The
preconditioned modes replace the gradient term with one adam/rmsprop step of
learning rate ``eps`` and keep the ``eps * N(0, 1)`` noise term.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import energy as E
from .errors import ContractError, NumericalError
from .optim import KINDS, OptimizerState, optimizer_step
from .tensor import gaussian_noise


@dataclass
class SamplerConfig:
    step_size: float = 0.001
    n_steps: int = 10
    noise: bool = True
    preconditioner: str = "adam"
    seed: int = 0
    mask: np.ndarray | None = field(default=None, repr=False)
    backtrack: bool = False

    def __post_init__(self):
        if self.step_size <= 0:
            raise ContractError(f"step size must be positive, got {self.step_size}")
        if self.n_steps < 1:
            raise ContractError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.preconditioner not in KINDS:
            raise ContractError(f"preconditioner must be one of {KINDS}")
        if self.backtrack and (self.noise or self.preconditioner != "plain"):
            raise ContractError("backtracking applies only to noise-free plain Langevin")


class Chain:
    """One persistent Langevin chain: current state, noise stream, optimizer moments."""

    def __init__(self, f: np.ndarray, cfg: SamplerConfig, rng=None):
        self.f = f
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.opt = OptimizerState(cfg.preconditioner, cfg.step_size)
        self.step_size = cfg.step_size

    def step(self, net: E.EnergyNet, f0_stats) -> float:
        """Advance one step; returns the energy at the pre-step state."""
        self.f, e = langevin_step(self.f, net, f0_stats, self.cfg, rng=self.rng,
                                  opt_state=self.opt, step_size=self.step_size)
        return e

    def run(self, net: E.EnergyNet, f0_stats, n_steps: int | None = None) -> list[float]:
        n = self.cfg.n_steps if n_steps is None else n_steps
        if not self.cfg.backtrack:
            return [self.step(net, f0_stats) for _ in range(n)]
        trace = []
        for _ in range(n):
            e0, g = E.energy_and_grad(net, self.f, f0_stats)
            _check_finite(g)
            while True:
                cand = _plain_update(self.f, g, self.step_size, self.cfg.mask)
                e1 = E.energy(net, cand, f0_stats).item()
                if e1 <= e0 or self.step_size < 1e-12:
                    break
                self.step_size *= 0.5
            trace.append(e0)
            self.f = cand
        return trace


def _check_finite(g: np.ndarray):
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite energy gradient during Langevin sampling")


def _plain_update(f, g, eps, mask):
    coef = f.dtype.type(0.5 * eps * eps)
    new = f - coef * g
    return new if mask is None else np.where(mask, new, f)


def langevin_step(f: np.ndarray, net: E.EnergyNet, f0_stats, cfg: SamplerConfig,
                  rng=None, opt_state: OptimizerState | None = None,
                  step_size: float | None = None) -> tuple[np.ndarray, float]:
    """One update of ``f``; returns ``(new f, energy before the step)``.

    Entries outside ``cfg.mask`` (when set) are copied through untouched.
    """
    eps = cfg.step_size if step_size is None else step_size
    if cfg.mask is not None and cfg.mask.shape != f.shape:
        raise ContractError(f"update mask shape {cfg.mask.shape} != sample shape {f.shape}")
    e, g = E.energy_and_grad(net, f, f0_stats)
    _check_finite(g)
    if cfg.preconditioner == "plain":
        new = f - f.dtype.type(0.5 * eps * eps) * g
    else:
        if opt_state is None:
            opt_state = OptimizerState(cfg.preconditioner, eps)
        if cfg.mask is not None:
            g = np.where(cfg.mask, g, 0).astype(f.dtype)
        (new,) = optimizer_step(opt_state, [f], [g])
    if cfg.noise:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        new = new + f.dtype.type(eps) * gaussian_noise(f.shape, 1.0, rng)
    if cfg.mask is not None:
        new = np.where(cfg.mask, new, f)
    return new.astype(f.dtype, copy=False), e


def langevin_run(f: np.ndarray, net: E.EnergyNet, f0_stats, cfg: SamplerConfig,
                 chain: Chain | None = None) -> tuple[np.ndarray, list[float]]:
    """``cfg.n_steps`` sequential steps; returns final state and per-step energies.

    With ``cfg.backtrack`` (plain, noise-free) the step size halves whenever a
    step would raise the energy, so the trace is non-increasing.
    """
    if chain is None:
        chain = Chain(f, cfg)
    else:
        chain.f = f
    trace = chain.run(net, f0_stats)
    return chain.f, trace
