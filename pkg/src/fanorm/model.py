"""The full normalization pipeline and its checkpoint format.

A model is: a frozen feature extractor, a trainable pixelwise lift into a
latent color representation, three feature-steered correction units
applied deepest-first, and a trainable projection back to RGB.  Because
the extractor uses valid convolutions, the output covers a centered
window of the input; `forward` returns that window's (top, left) offset
alongside the output tensor.

Checkpoints are single named-tensor containers holding the extractor
(f.*), the trainable parameters (t.*, fan.*), the fitted color noise
model (noise.*), and scalar metadata (meta.*).  Saving the same model
twice produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradTape
from .container import load_container, save_container
from .extractor import ExtractorSpec, extract, spec_from_weights, weight_names
from .fan import FanUnit, apply_unit
from .noise import NoiseModel
from .ops import ShapeError
from .transformer import Transformer

DEFAULT_EPS_STAB = 1e-5


@dataclass
class NormalizationModel:
    spec: ExtractorSpec
    extractor_weights: dict
    transformer: Transformer
    units: list  # three FanUnit, applied deepest level first
    eps_stab: float = DEFAULT_EPS_STAB
    preprocess_mean: np.ndarray | None = None
    noise_model: NoiseModel | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.units) != 3:
            raise ValueError(f"model needs exactly 3 correction units, got {len(self.units)}")
        tap_ch = self.spec.tap_channels()
        latent = self.transformer.latent_channels
        for i, unit in enumerate(self.units):
            want = (latent, tap_ch[2 - i], 1, 1)
            got = tuple(unit.w_mult.data.shape)
            if got != want:
                raise ShapeError(
                    f"fan.{i} gate shape {got} does not match latent {latent} and "
                    f"tap channels {tap_ch[2 - i]} (expected {want})"
                )

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def create(cls, spec: ExtractorSpec, extractor_weights: dict, latent_channels: int,
               rng: np.random.Generator, preprocess_mean=None,
               eps_stab: float = DEFAULT_EPS_STAB) -> "NormalizationModel":
        transformer = Transformer.create(latent_channels, rng)
        tap_ch = spec.tap_channels()
        units = [
            FanUnit.create(i, latent_channels, tap_ch[2 - i], rng)
            for i in range(3)
        ]
        mean = None if preprocess_mean is None else np.asarray(preprocess_mean, dtype=np.float32)
        return cls(
            spec=spec,
            extractor_weights=extractor_weights,
            transformer=transformer,
            units=units,
            eps_stab=eps_stab,
            preprocess_mean=mean,
        )

    # ------------------------------------------------------------------
    # running
    # ------------------------------------------------------------------

    def forward(self, x: np.ndarray, tape: GradTape):
        """Full pipeline on a batch; returns (out, (top, left)).

        The extractor runs outside the tape: its weights are fixed and the
        steering features are treated as constants of the forward pass.
        """
        pyramid = extract(x, self.spec, self.extractor_weights, self.preprocess_mean)
        y = self.transformer.lift(tape, x)
        offset = (0, 0)
        for unit, level in zip(self.units, reversed(pyramid.levels)):
            y, offset = apply_unit(tape, y, offset, level, unit, self.eps_stab)
        out = self.transformer.project(tape, y)
        return out, offset

    def normalize(self, x: np.ndarray):
        """Inference entry point: forward on a throwaway tape."""
        return self.forward(x, GradTape())

    def params(self) -> list:
        out = list(self.transformer.param_list())
        for unit in self.units:
            out.extend([unit.w_mult, unit.w_add])
        return out

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def to_entries(self) -> list:
        """Checkpoint entries in canonical order (f, t, fan, noise, meta)."""
        entries = []
        for name in weight_names(self.spec):
            entries.append((name, self.extractor_weights[name]))
        for p in self.transformer.param_list():
            entries.append((p.name, p.data))
        for unit in self.units:
            entries.append((unit.w_mult.name, unit.w_mult.data))
            entries.append((unit.w_add.name, unit.w_add.data))
        if self.noise_model is not None:
            nm = self.noise_model
            entries.append(("noise.w", nm.w.astype(np.float32)))
            entries.append(("noise.sigma", nm.sigma.astype(np.float32)))
            entries.append(("noise.epsilon", np.array([nm.epsilon], dtype=np.float32)))
        entries.append(
            ("meta.latent_channels",
             np.array([self.transformer.latent_channels], dtype=np.float32))
        )
        entries.append(("meta.eps_stab", np.array([self.eps_stab], dtype=np.float32)))
        if self.preprocess_mean is not None:
            entries.append(
                ("meta.preprocess.mean", self.preprocess_mean.astype(np.float32))
            )
        return entries

    def save(self, path):
        save_container(self.to_entries(), path)

    @classmethod
    def from_entries(cls, weights: dict) -> "NormalizationModel":
        spec = spec_from_weights(weights)
        extractor_weights = {n: weights[n] for n in weight_names(spec)}
        transformer = Transformer.from_weights(weights)
        units = [FanUnit.from_weights(i, weights) for i in range(3)]
        extra_fans = [n for n in weights if n.startswith("fan.3")]
        if extra_fans:
            raise ValueError(f"checkpoint has more than 3 correction units: {extra_fans}")

        if "meta.latent_channels" not in weights:
            raise KeyError("checkpoint is missing meta.latent_channels")
        latent = int(round(float(weights["meta.latent_channels"][0])))
        if latent != transformer.latent_channels:
            raise ValueError(
                f"meta.latent_channels says {latent} but transformer weights "
                f"imply {transformer.latent_channels}"
            )
        if "meta.eps_stab" not in weights:
            raise KeyError("checkpoint is missing meta.eps_stab")
        eps_stab = float(weights["meta.eps_stab"][0])

        noise_keys = [k for k in ("noise.w", "noise.sigma", "noise.epsilon") if k in weights]
        noise_model = None
        if noise_keys:
            if len(noise_keys) != 3:
                raise KeyError(
                    f"checkpoint has a partial noise model: only {', '.join(noise_keys)}"
                )
            noise_model = NoiseModel(
                w=weights["noise.w"],
                sigma=weights["noise.sigma"],
                epsilon=float(weights["noise.epsilon"][0]),
            )

        mean = weights.get("meta.preprocess.mean")
        if mean is not None and mean.shape != (3,):
            raise ShapeError(f"meta.preprocess.mean must be (3,), got {mean.shape}")

        return cls(
            spec=spec,
            extractor_weights=extractor_weights,
            transformer=transformer,
            units=units,
            eps_stab=eps_stab,
            preprocess_mean=mean,
            noise_model=noise_model,
        )

    @classmethod
    def load(cls, path) -> "NormalizationModel":
        return cls.from_entries(load_container(path))
