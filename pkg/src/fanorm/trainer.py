"""Training loop for the normalization model.

The model learns by denoising: each step draws a batch of random crops,
corrupts them with global color shifts from the fitted noise model, runs
the pipeline on the corrupted crops, and minimizes the mean squared error
against the matching window of the clean crops.  The frozen extractor
sees the corrupted input too; only the lift, projection and gate weights
receive gradients.

All randomness derives from one seed through named SeedSequence children
(holdout split, parameter init, color fitting, crop sampling, noise), so
a rerun with the same config and data is bit-identical.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import GradTape
from .container import load_container
from .extractor import minimum_input_size, spec_from_weights, tiny_spec
from .images import read_image
from .model import NormalizationModel
from .noise import NoiseModel, apply_noise, fit_pca
from .ops import ShapeError
from .optim import AdamState, adam_step

HOLDOUT_FRACTION = 0.1
MAX_FIT_PIXELS = 1_000_000
TINY_EXTRACTOR_SEED = 0
CHECKPOINT_NAME = "model.fanc"
LOSS_LOG_NAME = "loss.tsv"
CONFIG_ECHO_NAME = "config.txt"

# seed tag separating holdout corruption draws from training randomness
HOLDOUT_EVAL_TAG = 0x484F4C44


@dataclass
class TrainConfig:
    patch_size: int = 192
    batch_size: int = 8
    steps: int = 5000
    learning_rate: float = 1e-3
    seed: int = 0
    epsilon_aug: float = 0.5
    latent_channels: int = 32
    extractor_weights: str = "tiny"

    def __post_init__(self):
        for name in ("patch_size", "batch_size", "steps", "latent_channels", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be positive, got {self.patch_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.latent_channels < 1:
            raise ValueError(f"latent_channels must be positive, got {self.latent_channels}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.epsilon_aug < 1:
            raise ValueError(f"epsilon_aug must lie in [0, 1), got {self.epsilon_aug}")
        if not self.extractor_weights:
            raise ValueError("extractor_weights must be 'tiny' or a container path")


@dataclass
class TrainResult:
    checkpoint_path: Path
    steps_run: int
    final_loss: float
    holdout_loss: float | None
    aborted: bool
    abort_reason: str | None
    train_count: int
    holdout_count: int
    losses: list = field(default_factory=list, repr=False)


def load_dataset(data_dir) -> list:
    """All readable images in a directory as (name, (3, h, w) float32) pairs."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    paths = sorted(
        p for p in data_dir.iterdir() if p.suffix.lower() in (".png", ".ppm")
    )
    if not paths:
        raise FileNotFoundError(f"no .png or .ppm images in {data_dir}")
    return [(p.name, read_image(p)[0]) for p in paths]


def split_holdout(count: int, rng: np.random.Generator):
    """Deterministic train/holdout index split; holdout is ~10%, never all."""
    order = rng.permutation(count)
    n_hold = min(count - 1, max(1, round(HOLDOUT_FRACTION * count))) if count >= 2 else 0
    return sorted(order[n_hold:].tolist()), sorted(order[:n_hold].tolist())


def _resolve_extractor(config: TrainConfig):
    if config.extractor_weights == "tiny":
        spec, weights = tiny_spec(TINY_EXTRACTOR_SEED)
        return spec, weights, None
    weights = load_container(config.extractor_weights)
    spec = spec_from_weights(weights)
    mean = weights.get("meta.preprocess.mean")
    return spec, weights, mean


def _effective_patch(config: TrainConfig, images, min_input: int) -> int:
    smallest = min(min(img.shape[1], img.shape[2]) for _, img in images)
    patch = min(config.patch_size, smallest)
    if patch < config.patch_size:
        warnings.warn(
            f"patch_size {config.patch_size} exceeds smallest image side {smallest}; "
            f"using {patch}",
            stacklevel=3,
        )
    if patch < min_input:
        raise ValueError(
            f"patch size {patch} is below the extractor's minimum input "
            f"{min_input}x{min_input}"
        )
    return patch


def _fit_noise(images, train_idx, epsilon: float, rng: np.random.Generator) -> NoiseModel:
    pixels = np.concatenate(
        [images[i][1].reshape(3, -1).T for i in train_idx], axis=0
    )
    if pixels.shape[0] > MAX_FIT_PIXELS:
        sel = rng.choice(pixels.shape[0], size=MAX_FIT_PIXELS, replace=False)
        pixels = pixels[sel]
    fitted = fit_pca(pixels, epsilon=epsilon)
    # checkpoints store float32, so quantize now: the model trained with is
    # the model a reload evaluates with, bit for bit
    return NoiseModel(
        w=fitted.w.astype(np.float32).astype(np.float64),
        sigma=fitted.sigma.astype(np.float32).astype(np.float64),
        epsilon=float(np.float32(fitted.epsilon)),
    )


def _sample_batch(images, idx_pool, patch: int, count: int, rng: np.random.Generator):
    batch = np.empty((count, 3, patch, patch), dtype=np.float32)
    picks = rng.integers(0, len(idx_pool), size=count)
    for j, pick in enumerate(picks):
        img = images[idx_pool[pick]][1]
        h, w = img.shape[1], img.shape[2]
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        batch[j] = img[:, top:top + patch, left:left + patch]
    return batch


def _center_crop(img: np.ndarray, patch: int) -> np.ndarray:
    h, w = img.shape[1], img.shape[2]
    top, left = (h - patch) // 2, (w - patch) // 2
    return img[:, top:top + patch, left:left + patch]


def mse_loss(prediction: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries and its prediction gradient."""
    prediction, target = np.asarray(prediction), np.asarray(target)
    if prediction.shape != target.shape:
        raise ShapeError(
            f"prediction shape {prediction.shape} does not match target {target.shape}"
        )
    diff = prediction - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def _batch_loss(model: NormalizationModel, clean: np.ndarray, noisy: np.ndarray,
                tape: GradTape):
    out, (top, left) = model.forward(noisy, tape)
    oh, ow = out.shape[2], out.shape[3]
    return mse_loss(out, clean[:, :, top:top + oh, left:left + ow])


def evaluate_loss(model: NormalizationModel, batch, seed) -> float:
    """Objective value on one batch of clean crops, without any update.

    The corruption applied to the batch is drawn from the model's stored
    noise model using only `seed`, so the same model, batch and seed
    always give the same value.  A model without a noise model is
    evaluated on the clean batch directly.
    """
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ShapeError(f"batch must be (n, 3, h, w), got {batch.shape}")
    if model.noise_model is None:
        noisy = batch
    else:
        noisy, _ = apply_noise(batch, model.noise_model, np.random.default_rng(seed))
    loss, _ = _batch_loss(model, batch, noisy, GradTape())
    return loss


def extract_patches(image, patch_size: int, stride=None, seed=0) -> np.ndarray:
    """Square crops from one image as an (n, 3, patch, patch) array.

    With a stride, patches come from the regular top-left-anchored grid
    with that step.  Without one, `seed` drives uniform random crop
    positions, one patch per patch_size^2 pixels of area (at least one).
    An image smaller than the patch in either direction yields an empty
    result and a warning.
    """
    img = np.asarray(image)
    if img.ndim == 4 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"image must be (3, h, w), got {np.asarray(image).shape}")
    if patch_size < 1:
        raise ValueError(f"patch_size must be positive, got {patch_size}")
    h, w = img.shape[1], img.shape[2]
    if h < patch_size or w < patch_size:
        warnings.warn(
            f"image {w}x{h} is smaller than patch size {patch_size}; skipping",
            stacklevel=2,
        )
        return np.zeros((0, 3, patch_size, patch_size), dtype=img.dtype)
    if stride is not None:
        if stride < 1:
            raise ValueError(f"stride must be positive, got {stride}")
        positions = [
            (t, l)
            for t in range(0, h - patch_size + 1, stride)
            for l in range(0, w - patch_size + 1, stride)
        ]
    else:
        rng = np.random.default_rng(seed)
        count = max(1, round(h * w / (patch_size * patch_size)))
        positions = [
            (int(rng.integers(0, h - patch_size + 1)),
             int(rng.integers(0, w - patch_size + 1)))
            for _ in range(count)
        ]
    return np.stack(
        [img[:, t:t + patch_size, l:l + patch_size] for t, l in positions]
    )


def _write_config_echo(path: Path, config: TrainConfig, data_dir, out_dir, patch: int):
    lines = [
        "# effective training configuration",
        f"patch_size = {config.patch_size}",
        f"batch_size = {config.batch_size}",
        f"steps = {config.steps}",
        f"learning_rate = {config.learning_rate!r}",
        f"seed = {config.seed}",
        f"epsilon_aug = {config.epsilon_aug!r}",
        f"latent_channels = {config.latent_channels}",
        f"extractor_weights = {config.extractor_weights}",
        f"data_dir = {data_dir}",
        f"out_dir = {out_dir}",
    ]
    if patch != config.patch_size:
        lines.append(f"# patch clipped to image size: {patch}")
    path.write_text("\n".join(lines) + "\n")


def train(config: TrainConfig, data_dir, out_dir, progress=None) -> TrainResult:
    """Fit a model on a directory of images; writes checkpoint, loss log
    and config echo into out_dir.  `progress(step, loss)` is called once
    per completed step when given."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = load_dataset(data_dir)

    seeds = np.random.SeedSequence(config.seed).spawn(5)
    split_rng = np.random.default_rng(seeds[0])
    init_rng = np.random.default_rng(seeds[1])
    fit_rng = np.random.default_rng(seeds[2])
    data_rng = np.random.default_rng(seeds[3])
    noise_rng = np.random.default_rng(seeds[4])

    train_idx, holdout_idx = split_holdout(len(images), split_rng)
    spec, extractor_weights, preprocess_mean = _resolve_extractor(config)
    patch = _effective_patch(config, images, minimum_input_size(spec))

    noise_model = _fit_noise(images, train_idx, config.epsilon_aug, fit_rng)
    model = NormalizationModel.create(
        spec, extractor_weights, config.latent_channels, init_rng,
        preprocess_mean=preprocess_mean,
    )
    model.noise_model = noise_model

    params = model.params()
    param_arrays = {p.name: p.data for p in params}
    adam = AdamState.for_params(param_arrays)
    _write_config_echo(out_dir / CONFIG_ECHO_NAME, config, data_dir, out_dir, patch)

    losses = []
    aborted = False
    abort_reason = None
    with open(out_dir / LOSS_LOG_NAME, "w") as log:
        for step in range(config.steps):
            clean = _sample_batch(images, train_idx, patch, config.batch_size, data_rng)
            noisy, _ = apply_noise(clean, model.noise_model, noise_rng)
            model.zero_grads()
            tape = GradTape()
            loss, grad = _batch_loss(model, clean, noisy, tape)
            if not math.isfinite(loss):
                aborted = True
                abort_reason = f"non-finite loss at step {step}"
                break
            tape.backward(grad)
            grads = {p.name: p.grad for p in params if p.grad is not None}
            try:
                adam_step(param_arrays, grads, adam, lr=config.learning_rate)
            except (KeyError, ValueError) as exc:
                aborted = True
                abort_reason = f"step {step}: {exc}"
                break
            losses.append(loss)
            log.write(f"{step}\t{loss:.8e}\n")
            if progress is not None:
                progress(step, loss)

    holdout_loss = None
    if holdout_idx:
        total, count = 0.0, 0
        for k, start in enumerate(range(0, len(holdout_idx), config.batch_size)):
            chunk = holdout_idx[start:start + config.batch_size]
            clean = np.stack([_center_crop(images[i][1], patch) for i in chunk])
            chunk_seed = np.random.SeedSequence([config.seed, HOLDOUT_EVAL_TAG, k])
            loss = evaluate_loss(model, clean, chunk_seed)
            total += loss * len(chunk)
            count += len(chunk)
        holdout_loss = total / count

    checkpoint_path = out_dir / CHECKPOINT_NAME
    model.save(checkpoint_path)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        steps_run=len(losses),
        final_loss=losses[-1] if losses else float("nan"),
        holdout_loss=holdout_loss,
        aborted=aborted,
        abort_reason=abort_reason,
        train_count=len(train_idx),
        holdout_count=len(holdout_idx),
        losses=losses,
    )
