"""Shared torch plumbing: tensor conversion, seeded initialization, and
checkpoint helpers mapping module state dicts to named numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn


def images_to_tensor(pixels: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(B, H, W, C) or (H, W, C) numpy image(s) -> NCHW torch tensor."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)
    return t.permute(0, 3, 1, 2).contiguous()


def tensor_to_images(t: torch.Tensor) -> np.ndarray:
    """NCHW tensor -> (B, H, W, C) float32 numpy images."""
    return t.detach().permute(0, 2, 3, 1).contiguous().cpu().numpy().astype(np.float32)


def dcgan_init_(module: nn.Module, generator: torch.Generator, std: float = 0.02) -> None:
    """Zero-centered normal(std) weights, DCGAN-style; BN scale around 1."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            m.weight.data.normal_(0.0, std, generator=generator)
            if m.bias is not None:
                m.bias.data.zero_()
        elif isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
            m.weight.data.normal_(1.0, std, generator=generator)
            m.bias.data.zero_()


def kaiming_init_(module: nn.Module, generator: torch.Generator) -> None:
    """Replicates the torch default Linear/Conv init with an explicit RNG."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            if isinstance(m, nn.Linear):
                fan_in = m.weight.shape[1]
            else:
                fan_in = m.weight.shape[1] * m.weight.shape[2] * m.weight.shape[3]
            bound = 1.0 / math.sqrt(fan_in)
            m.weight.data.uniform_(-bound, bound, generator=generator)
            if m.bias is not None:
                m.bias.data.uniform_(-bound, bound, generator=generator)


def zero_parameters_(module: nn.Module) -> None:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def state_to_arrays(module: nn.Module, prefix: str = "") -> dict:
    """Parameters and buffers as {prefixed name: numpy array}."""
    return {
        prefix + name: tensor.detach().cpu().numpy().copy()
        for name, tensor in module.state_dict().items()
    }


def arrays_to_state(module: nn.Module, arrays: dict, prefix: str = "") -> None:
    """Load arrays produced by :func:`state_to_arrays` back into a module."""
    state = {}
    for name, tensor in module.state_dict().items():
        arr = arrays[prefix + name]
        state[name] = torch.from_numpy(np.ascontiguousarray(arr)).to(tensor.dtype)
    module.load_state_dict(state)
