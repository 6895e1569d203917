"""Shared convolutional encoder with hash, source, and classifier heads.

The encoder is three conv blocks plus one dense layer; each head is a
linear map on the shared feature vector. The hash head passes through a
sigmoid so relaxed codes are strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import ImageExample
from .errors import ConfigError, MalformedFileError
from .io import load_arrays, save_arrays
from .nets import arrays_to_state, images_to_tensor, kaiming_init_, state_to_arrays


@dataclass(frozen=True)
class HashModelConfig:
    image_size: int = 8
    channels: int = 3
    class_count: int = 4
    code_bits: int = 12
    label_mode: str = "single"
    feature_dim: int = 128
    width: int = 32

    def validate(self) -> None:
        if self.code_bits < 1:
            raise ConfigError("code_bits must be >= 1")
        if self.image_size % 4 != 0 or self.image_size < 8:
            raise ConfigError("image_size must be a multiple of 4, >= 8")
        if self.label_mode not in ("single", "multi"):
            raise ConfigError(f"unknown label_mode {self.label_mode!r}")


class ModelOut(NamedTuple):
    features: torch.Tensor  # (B, feature_dim)
    code: torch.Tensor  # (B, K) relaxed codes in (0, 1)
    source_logit: torch.Tensor  # (B,)
    class_logits: torch.Tensor  # (B, c)


class HashModel(nn.Module):
    def __init__(self, cfg: HashModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        w = cfg.width
        self.conv1 = nn.Conv2d(cfg.channels, w, 3, 1, 1)
        self.conv2 = nn.Conv2d(w, w * 2, 4, 2, 1)
        self.conv3 = nn.Conv2d(w * 2, w * 4, 4, 2, 1)
        flat = w * 4 * (cfg.image_size // 4) ** 2
        self.fc = nn.Linear(flat, cfg.feature_dim)
        self.head_hash = nn.Linear(cfg.feature_dim, cfg.code_bits)
        self.head_source = nn.Linear(cfg.feature_dim, 1)
        self.head_class = nn.Linear(cfg.feature_dim, cfg.class_count)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        h = F.leaky_relu(self.conv3(h), 0.2)
        return F.leaky_relu(self.fc(h.flatten(1)), 0.2)

    def forward(self, x: torch.Tensor) -> ModelOut:
        feats = self.encode(x)
        return ModelOut(
            features=feats,
            code=torch.sigmoid(self.head_hash(feats)),
            source_logit=self.head_source(feats).squeeze(1),
            class_logits=self.head_class(feats),
        )

    @property
    def dtype(self) -> torch.dtype:
        return self.fc.weight.dtype


def build_hash_model(cfg: HashModelConfig, seed: int = 0, gan=None) -> HashModel:
    """Seeded construction; adopts the GAN discriminator's source head when
    its feature width happens to match the encoder's."""
    model = HashModel(cfg)
    g = torch.Generator().manual_seed(seed)
    kaiming_init_(model, g)
    if gan is not None:
        src = gan.discriminator.head_source
        if src.weight.shape == model.head_source.weight.shape:
            with torch.no_grad():
                model.head_source.weight.copy_(src.weight)
                model.head_source.bias.copy_(src.bias)
    model.eval()
    return model


def _check_image(model: HashModel, x: ImageExample) -> None:
    cfg = model.cfg
    expected = (cfg.image_size, cfg.image_size, cfg.channels)
    if x.pixels.shape != expected:
        raise ValueError(f"expected image shape {expected}, got {x.pixels.shape}")


def embed(model: HashModel, x: ImageExample) -> np.ndarray:
    """Shared-encoder feature vector for one image."""
    _check_image(model, x)
    with torch.no_grad():
        feats = model.encode(images_to_tensor(x.pixels, dtype=model.dtype))
    return feats[0].numpy()


def hash_forward(model: HashModel, x: ImageExample) -> np.ndarray:
    """Relaxed K-dimensional code in (0, 1) for one image."""
    _check_image(model, x)
    with torch.no_grad():
        out = model(images_to_tensor(x.pixels, dtype=model.dtype))
    return out.code[0].numpy()


def relaxed_codes(model: HashModel, pixels: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Relaxed codes for a stack of images, batched; returns (N, K)."""
    chunks = []
    with torch.no_grad():
        for start in range(0, pixels.shape[0], batch_size):
            t = images_to_tensor(pixels[start : start + batch_size], dtype=model.dtype)
            chunks.append(model(t).code.numpy())
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, model.cfg.code_bits))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_hash_model(path, model: HashModel) -> None:
    save_arrays(
        path,
        state_to_arrays(model, "model."),
        meta={"kind": "hashmodel", "config": asdict(model.cfg)},
    )


def load_hash_model(path) -> HashModel:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "hashmodel":
        raise MalformedFileError(f"{path}: container does not hold a hash model")
    model = HashModel(HashModelConfig(**meta["config"]))
    arrays_to_state(model, arrays, "model.")
    model.eval()
    return model
