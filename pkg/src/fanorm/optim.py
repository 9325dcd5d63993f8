"""Adam optimizer acting on dicts of named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import ShapeError


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_opt: float = 1e-8,
) -> None:
    """One bias-corrected adaptive-moment update, in place on `params`.

    m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    Rejects the whole step if any gradient is non-finite or misshapen.
    """
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: missing gradient for {name}")
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"adam_step: gradient for {name} has shape {g.shape}, parameter has {p.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError(f"adam_step: non-finite gradient for {name}")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps_opt)
