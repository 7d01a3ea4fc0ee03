"""First-order update rules shared by weight learning and preconditioned Langevin."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

ADAM_BETAS = (0.9, 0.999)
RMS_DECAY = 0.9
EPS = 1e-8

KINDS = ("adam", "rmsprop", "plain")


@dataclass
class OptimizerState:
    """Moment buffers for one list of parameters.

    Buffers are created lazily on the first step so that the same state can be
    attached before the parameter shapes are known.
    """

    kind: str = "adam"
    lr: float = 0.001
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        if self.lr <= 0:
            raise ContractError(f"learning rate must be positive, got {self.lr}")


def optimizer_step(state: OptimizerState, params, grads) -> list[np.ndarray]:
    """Return updated copies of ``params``; ``state`` is advanced in place.

    plain:   p - lr * g
    rmsprop: v = 0.9 v + 0.1 g^2;  p - lr * g / (sqrt(v) + 1e-8)
    adam:    bias-corrected moments with betas (0.9, 0.999), eps 1e-8 outside the root
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    if state.step == 0 and state.kind != "plain":
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif state.kind != "plain" and len(state.v) != len(params):
        raise ContractError("optimizer state was built for a different parameter list")
    state.step += 1
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        t = p.dtype.type
        lr = t(state.lr)
        if state.kind == "plain":
            out.append(p - lr * g)
        elif state.kind == "rmsprop":
            state.v[i] = t(RMS_DECAY) * state.v[i] + t(1 - RMS_DECAY) * (g * g)
            out.append(p - lr * g / (np.sqrt(state.v[i]) + t(EPS)))
        else:
            b1, b2 = ADAM_BETAS
            state.m[i] = t(b1) * state.m[i] + t(1 - b1) * g
            state.v[i] = t(b2) * state.v[i] + t(1 - b2) * (g * g)
            mhat = state.m[i] / t(1 - b1 ** state.step)
            vhat = state.v[i] / t(1 - b2 ** state.step)
            out.append(p - lr * mhat / (np.sqrt(vhat) + t(EPS)))
    return out
