"""Trainable color transform: lift RGB into a latent representation and
project it back.

Both halves are short stacks of 1x1 convolutions, so they act pixelwise
and carry no spatial context of their own; all spatial reasoning lives in
the frozen extractor that steers the correction units between them.  The
projection ends in a sigmoid so outputs land in [0, 1] like the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import GradTape, Param, taped_conv, taped_relu, taped_sigmoid
from .ops import ShapeError


def _conv_param(name: str, c_out: int, c_in: int, rng: np.random.Generator) -> Param:
    bound = 1.0 / np.sqrt(c_in)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, 1, 1)).astype(np.float32)
    return Param(name=f"{name}.weight", data=w)


def _bias_param(name: str, c_out: int) -> Param:
    return Param(name=f"{name}.bias", data=np.zeros(c_out, dtype=np.float32))


@dataclass
class Transformer:
    """Pixelwise lift (3 -> latent) and projection (latent -> 3) stacks.

    Parameter names follow the position of each convolution in its stack:
    t.lift.{0,2}.* and t.project.{0,2}.* with relu at the odd slots and a
    final sigmoid on the projection.
    """

    latent_channels: int
    params: dict

    @classmethod
    def create(cls, latent_channels: int, rng: np.random.Generator) -> "Transformer":
        if latent_channels < 3:
            raise ValueError(f"latent_channels must be at least 3, got {latent_channels}")
        layers = [
            ("t.lift.0", latent_channels, 3),
            ("t.lift.2", latent_channels, latent_channels),
            ("t.project.0", latent_channels, latent_channels),
            ("t.project.2", 3, latent_channels),
        ]
        params = {}
        for name, c_out, c_in in layers:
            wp = _conv_param(name, c_out, c_in, rng)
            bp = _bias_param(name, c_out)
            params[wp.name] = wp
            params[bp.name] = bp
        return cls(latent_channels=latent_channels, params=params)

    @classmethod
    def from_weights(cls, weights: dict) -> "Transformer":
        """Rebuild from container entries t.lift.*/t.project.* (copied)."""
        names = ["t.lift.0", "t.lift.2", "t.project.0", "t.project.2"]
        params = {}
        for name in names:
            for suffix in (".weight", ".bias"):
                key = name + suffix
                if key not in weights:
                    raise KeyError(f"container is missing transformer entry {key}")
                params[key] = Param(name=key, data=np.array(weights[key]))
        latent = params["t.lift.0.weight"].data.shape[0]
        expect = {
            "t.lift.0.weight": (latent, 3, 1, 1),
            "t.lift.2.weight": (latent, latent, 1, 1),
            "t.project.0.weight": (latent, latent, 1, 1),
            "t.project.2.weight": (3, latent, 1, 1),
        }
        for key, shape in expect.items():
            got = tuple(params[key].data.shape)
            if got != shape:
                raise ShapeError(f"{key} has shape {got}, expected {shape}")
        return cls(latent_channels=latent, params=params)

    def _pair(self, name: str):
        return self.params[name + ".weight"], self.params[name + ".bias"]

    def lift(self, tape: GradTape, x: np.ndarray) -> np.ndarray:
        """RGB in [0, 1] -> latent representation."""
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"lift input must be (n, 3, h, w), got {x.shape}")
        if x.size and (x.min() < -1e-6 or x.max() > 1 + 1e-6):
            raise ValueError(
                f"lift input must lie in [0, 1], got range [{x.min():.4g}, {x.max():.4g}]"
            )
        w0, b0 = self._pair("t.lift.0")
        w2, b2 = self._pair("t.lift.2")
        y = taped_conv(tape, x, w0, b0)
        y = taped_relu(tape, y)
        return taped_conv(tape, y, w2, b2)

    def project(self, tape: GradTape, y: np.ndarray) -> np.ndarray:
        """Latent representation -> RGB in (0, 1)."""
        y = np.asarray(y)
        if y.ndim != 4 or y.shape[1] != self.latent_channels:
            raise ShapeError(
                f"project input must be (n, {self.latent_channels}, h, w), got {y.shape}"
            )
        w0, b0 = self._pair("t.project.0")
        w2, b2 = self._pair("t.project.2")
        out = taped_conv(tape, y, w0, b0)
        out = taped_relu(tape, out)
        out = taped_conv(tape, out, w2, b2)
        return taped_sigmoid(tape, out)

    def param_list(self) -> list:
        names = [
            "t.lift.0.weight", "t.lift.0.bias",
            "t.lift.2.weight", "t.lift.2.bias",
            "t.project.0.weight", "t.project.0.bias",
            "t.project.2.weight", "t.project.2.bias",
        ]
        return [self.params[n] for n in names]


def init_transformer(latent_channels: int, seed: int) -> Transformer:
    """Fresh transformer with fan-in scaled uniform weights from one seed."""
    return Transformer.create(latent_channels, np.random.default_rng(seed))
