"""Class-conditional GAN pretrained on labeled + unlabeled images.

The generator maps a concatenated (label vector, noise vector) to an image
through transposed convolutions with a tanh output, so pixels land in
[-1, 1] by construction. The discriminator is a small strided conv net with
two linear heads: a real/synthetic source logit and per-class logits. It is
deliberately normalization-free so that an all-zero parameter vector yields
the neutral output (source probability 0.5, uniform class scores).

Training alternates: the discriminator descends source loss + class loss on
a half-real/half-synthetic batch (class loss only where a label exists);
the generator descends class loss minus source loss on fresh synthetic
batches.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import SOURCE_SYNTHETIC, Dataset, ImageExample
from .errors import ConfigError, DivergenceError, MalformedFileError
from .io import load_arrays, save_arrays
from .losses import adversarial_loss, class_loss_from_logits, source_loss_from_logits
from .nets import (
    arrays_to_state,
    dcgan_init_,
    images_to_tensor,
    state_to_arrays,
    tensor_to_images,
)

__all__ = [
    "GanConfig",
    "Generator",
    "Discriminator",
    "GanState",
    "DiscriminatorOutput",
    "build_gan",
    "generate",
    "generate_batch",
    "discriminate",
    "adversarial_loss",
    "pretrain_gan",
    "save_gan",
    "load_gan",
]


@dataclass(frozen=True)
class GanConfig:
    image_size: int = 8
    channels: int = 3
    class_count: int = 4
    label_mode: str = "single"
    noise_dim: int = 64
    gen_width: int = 64
    disc_width: int = 64
    iterations: int = 1500
    batch_size: int = 128
    learning_rate: float = 2e-4
    beta1: float = 0.9
    real_class_weight: float = 1.0  # weight of real vs synthetic class loss

    def validate(self) -> None:
        if self.class_count < 1:
            raise ConfigError("class_count must be >= 1")
        if self.image_size % 4 != 0 or self.image_size < 8:
            raise ConfigError("image_size must be a multiple of 4, >= 8")
        if self.label_mode not in ("single", "multi"):
            raise ConfigError(f"unknown label_mode {self.label_mode!r}")


class Generator(nn.Module):
    def __init__(self, cfg: GanConfig):
        super().__init__()
        self.cfg = cfg
        s0 = cfg.image_size // 4
        self.start_shape = (cfg.gen_width * 2, s0, s0)
        self.fc = nn.Linear(cfg.class_count + cfg.noise_dim, cfg.gen_width * 2 * s0 * s0)
        self.bn0 = nn.BatchNorm2d(cfg.gen_width * 2)
        self.deconv1 = nn.ConvTranspose2d(cfg.gen_width * 2, cfg.gen_width, 4, 2, 1)
        self.bn1 = nn.BatchNorm2d(cfg.gen_width)
        self.deconv2 = nn.ConvTranspose2d(cfg.gen_width, cfg.channels, 4, 2, 1)

    def forward(self, labels: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        h = self.fc(torch.cat([labels, z], dim=1))
        h = h.view(-1, *self.start_shape)
        h = F.relu(self.bn0(h))
        h = F.relu(self.bn1(self.deconv1(h)))
        return torch.tanh(self.deconv2(h))


class Discriminator(nn.Module):
    def __init__(self, cfg: GanConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.disc_width
        self.conv1 = nn.Conv2d(cfg.channels, w, 4, 2, 1)
        self.conv2 = nn.Conv2d(w, w * 2, 4, 2, 1)
        self.feature_dim = w * 2 * (cfg.image_size // 4) ** 2
        self.head_source = nn.Linear(self.feature_dim, 1)
        self.head_class = nn.Linear(self.feature_dim, cfg.class_count)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        h = h.flatten(1)
        return self.head_source(h).squeeze(1), self.head_class(h)


@dataclass
class GanState:
    generator: Generator
    discriminator: Discriminator
    config: GanConfig


@dataclass(frozen=True)
class DiscriminatorOutput:
    p_source: float  # probability the input is real
    class_scores: np.ndarray  # simplex (single) or per-label probs (multi)


def build_gan(config: GanConfig, seed: int = 0) -> GanState:
    """Construct generator and discriminator with seeded DCGAN init."""
    config.validate()
    g = torch.Generator().manual_seed(seed)
    gen = Generator(config)
    disc = Discriminator(config)
    dcgan_init_(gen, g)
    dcgan_init_(disc, g)
    gen.eval()
    disc.eval()
    return GanState(gen, disc, config)


def generate(state: GanState, label: np.ndarray, z: np.ndarray) -> ImageExample:
    """Synthesize a single image conditioned on a label vector."""
    cfg = state.config
    label = np.asarray(label)
    z = np.asarray(z)
    if label.shape != (cfg.class_count,):
        raise ValueError(f"label must have {cfg.class_count} entries, got {label.shape}")
    if z.shape != (cfg.noise_dim,):
        raise ValueError(f"noise must have {cfg.noise_dim} entries, got {z.shape}")
    state.generator.eval()
    with torch.no_grad():
        lab = torch.from_numpy(label.astype(np.float32))[None]
        noise = torch.from_numpy(z.astype(np.float32))[None]
        img = state.generator(lab, noise)
    pixels = tensor_to_images(img)[0]
    return ImageExample(
        pixels=pixels,
        label=label.astype(np.uint8),
        is_labeled=bool(label.any()),
        source=SOURCE_SYNTHETIC,
        id=-1,
        true_label=label.astype(np.uint8),
    )


def generate_batch(state: GanState, labels: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Vectorized synthesis; returns (B, H, W, C) pixels in [-1, 1]."""
    state.generator.eval()
    with torch.no_grad():
        img = state.generator(
            torch.from_numpy(labels.astype(np.float32)),
            torch.from_numpy(zs.astype(np.float32)),
        )
    return tensor_to_images(img)


def discriminate(state: GanState, x: ImageExample) -> DiscriminatorOutput:
    """Source probability and class distribution for one image."""
    cfg = state.config
    if x.pixels.shape != (cfg.image_size, cfg.image_size, cfg.channels):
        raise ValueError(
            f"expected image shape {(cfg.image_size, cfg.image_size, cfg.channels)}, "
            f"got {x.pixels.shape}"
        )
    state.discriminator.eval()
    with torch.no_grad():
        s_logit, c_logits = state.discriminator(images_to_tensor(x.pixels))
        p_source = torch.sigmoid(s_logit)[0].item()
        if cfg.label_mode == "single":
            scores = torch.softmax(c_logits[0], dim=0).numpy()
        else:
            scores = torch.sigmoid(c_logits[0]).numpy()
    return DiscriminatorOutput(p_source=p_source, class_scores=scores.astype(np.float64))


def _sample_conditioning(
    label_pool: torch.Tensor, n: int, noise_dim: int, g: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    idx = torch.randint(label_pool.shape[0], (n,), generator=g)
    z = torch.randn(n, noise_dim, generator=g)
    return label_pool[idx], z


def pretrain_gan(
    labeled: Dataset, unlabeled: Dataset, config: GanConfig, seed: int = 0
) -> GanState:
    """Alternating minimax pretraining on the full real pool.

    Each discriminator batch mixes real (labeled + unlabeled) and synthetic
    images with equal probability; the class term covers labeled reals and
    all synthetic images (which always carry their conditioning label), and
    unlabeled reals contribute only the source term. Deterministic given
    ``seed``.
    """
    config.validate()
    if len(labeled) == 0:
        raise ConfigError("pretraining requires a nonempty labeled set")
    if labeled.class_count != config.class_count:
        raise ConfigError(
            f"config.class_count={config.class_count} does not match "
            f"dataset class_count={labeled.class_count}"
        )

    state = build_gan(config, seed)
    gen, disc = state.generator, state.discriminator
    g = torch.Generator().manual_seed(seed + 0x9E3779B9)

    if len(unlabeled) > 0:
        real_pixels = np.concatenate([labeled.pixels, unlabeled.pixels], axis=0)
        real_labels = np.concatenate([labeled.labels, unlabeled.labels], axis=0)
        real_has_label = np.concatenate([labeled.is_labeled, unlabeled.is_labeled])
    else:
        real_pixels = labeled.pixels
        real_labels = labeled.labels
        real_has_label = labeled.is_labeled
    real_images = images_to_tensor(real_pixels)
    real_label_t = torch.from_numpy(real_labels.astype(np.float32))
    real_flag_t = torch.from_numpy(real_has_label.copy())
    label_pool = torch.from_numpy(labeled.labels.astype(np.float32))

    opt_d = torch.optim.Adam(
        disc.parameters(), lr=config.learning_rate, betas=(config.beta1, 0.999)
    )
    opt_g = torch.optim.Adam(
        gen.parameters(), lr=config.learning_rate, betas=(config.beta1, 0.999)
    )

    gen.train()
    disc.train()
    for step in range(config.iterations):
        # -- discriminator step -------------------------------------------
        is_real = torch.rand(config.batch_size, generator=g) < 0.5
        n_real = int(is_real.sum())
        n_syn = config.batch_size - n_real
        parts, labels_parts, flags, weights = [], [], [], []
        if n_real > 0:
            idx = torch.randint(real_images.shape[0], (n_real,), generator=g)
            parts.append(real_images[idx])
            labels_parts.append(real_label_t[idx])
            flags.append(real_flag_t[idx])
            weights.append(
                torch.full((n_real,), config.real_class_weight) * real_flag_t[idx]
            )
        if n_syn > 0:
            syn_labels, z = _sample_conditioning(label_pool, n_syn, config.noise_dim, g)
            with torch.no_grad():
                syn = gen(syn_labels, z)
            parts.append(syn)
            labels_parts.append(syn_labels)
            flags.append(torch.ones(n_syn, dtype=torch.bool))
            weights.append(torch.ones(n_syn))
        batch = torch.cat(parts)
        batch_labels = torch.cat(labels_parts)
        batch_real = torch.cat(
            [torch.ones(n_real, dtype=torch.bool), torch.zeros(n_syn, dtype=torch.bool)]
        )
        class_weight = torch.cat(weights) * torch.cat(flags).float()

        s_logits, c_logits = disc(batch)
        loss_a = source_loss_from_logits(s_logits, batch_real).mean()
        wsum = class_weight.sum()
        if wsum > 0:
            per_image = class_loss_from_logits(c_logits, batch_labels, config.label_mode)
            loss_c = (per_image * class_weight).sum() / wsum
        else:
            loss_c = torch.zeros(())
        loss_d = loss_a + loss_c
        if not torch.isfinite(loss_d):
            raise DivergenceError(f"discriminator loss non-finite at step {step}")
        opt_d.zero_grad()
        loss_d.backward()
        opt_d.step()

        # -- generator step ------------------------------------------------
        syn_labels, z = _sample_conditioning(
            label_pool, config.batch_size, config.noise_dim, g
        )
        syn = gen(syn_labels, z)
        s_logits, c_logits = disc(syn)
        loss_a_g = F.softplus(s_logits).mean()  # l_a with correct (synthetic) source
        loss_c_g = class_loss_from_logits(c_logits, syn_labels, config.label_mode).mean()
        loss_g = loss_c_g - loss_a_g
        if not torch.isfinite(loss_g):
            raise DivergenceError(f"generator loss non-finite at step {step}")
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()

    gen.eval()
    disc.eval()
    return state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_gan(path, state: GanState) -> None:
    arrays = state_to_arrays(state.generator, "generator.")
    arrays.update(state_to_arrays(state.discriminator, "discriminator."))
    save_arrays(path, arrays, meta={"kind": "gan", "config": asdict(state.config)})


def load_gan(path) -> GanState:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "gan":
        raise MalformedFileError(f"{path}: container does not hold a GAN checkpoint")
    config = GanConfig(**meta["config"])
    state = build_gan(config, seed=0)
    arrays_to_state(state.generator, arrays, "generator.")
    arrays_to_state(state.discriminator, arrays, "discriminator.")
    return state
