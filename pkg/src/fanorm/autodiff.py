"""Explicit gradient tape.

The forward pass of a model records one closure per executed primitive;
``GradTape.backward`` replays them in exact reverse order, threading the
running output gradient through each closure.  Parameter gradients are
accumulated on :class:`Param` objects as a side effect of the closures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ops
from .ops import ShapeError


@dataclass
class Param:
    """A named trainable array with an accumulated gradient slot."""

    name: str
    data: np.ndarray
    grad: np.ndarray | None = None

    def zero_grad(self):
        self.grad = None

    def add_grad(self, g: np.ndarray):
        g = np.asarray(g)
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient for {self.name} has shape {g.shape}, parameter has {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g


@dataclass
class GradTape:
    """Ordered record of executed primitives with their backward closures."""

    _records: list[tuple[str, Callable]] = field(default_factory=list)

    def record(self, name: str, backward_fn: Callable):
        self._records.append((name, backward_fn))

    @property
    def op_names(self) -> list[str]:
        return [name for name, _ in self._records]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Run all recorded backward closures in reverse execution order.

        Returns the gradient w.r.t. the first recorded primitive's input.
        """
        if not self._records:
            raise ValueError("GradTape.backward: tape is empty")
        g = grad_out
        for _, fn in reversed(self._records):
            g = fn(g)
        return g


# ---------------------------------------------------------------------------
# tape-recording wrappers around the ops primitives
# ---------------------------------------------------------------------------

def taped_conv(tape: GradTape, x: np.ndarray, w: Param, b: Param | None = None,
               padding: str = "valid") -> np.ndarray:
    """Convolution whose weight (and optional bias) gradients accumulate on
    the given parameters during backward."""
    bias = b.data if b is not None else np.zeros(w.data.shape[0], dtype=w.data.dtype)
    out, cache = ops.conv2d_forward(x, ops.ConvParams(weight=w.data, bias=bias, padding=padding))

    def bwd(g):
        gx, gw, gb = ops.conv2d_backward(g, cache)
        w.add_grad(gw)
        if b is not None:
            b.add_grad(gb)
        return gx

    tape.record(f"conv[{w.name}]", bwd)
    return out


def taped_relu(tape: GradTape, x: np.ndarray) -> np.ndarray:
    out, cache = ops.relu_forward(x)
    tape.record("relu", lambda g: ops.relu_backward(g, cache))
    return out


def taped_sigmoid(tape: GradTape, x: np.ndarray) -> np.ndarray:
    out, cache = ops.sigmoid_forward(x)
    tape.record("sigmoid", lambda g: ops.sigmoid_backward(g, cache))
    return out
