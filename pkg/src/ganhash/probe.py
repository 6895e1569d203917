"""Small standalone image classifier used as an independent oracle: it
checks that toy classes are separable and that generated images carry
their conditioning class. It never shares weights with the hashing model.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import EmptyInputError
from .nets import images_to_tensor, kaiming_init_


class ProbeNet(nn.Module):
    def __init__(self, image_size: int, channels: int, class_count: int, width: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, width, 4, 2, 1)
        self.conv2 = nn.Conv2d(width, width * 2, 4, 2, 1)
        self.fc = nn.Linear(width * 2 * (image_size // 4) ** 2, class_count)

    def forward(self, x):
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        return self.fc(h.flatten(1))


class ProbeClassifier:
    def __init__(self, net: ProbeNet):
        self.net = net

    def predict(self, pixels: np.ndarray, batch_size: int = 256) -> np.ndarray:
        self.net.eval()
        preds = []
        with torch.no_grad():
            for start in range(0, pixels.shape[0], batch_size):
                logits = self.net(images_to_tensor(pixels[start : start + batch_size]))
                preds.append(logits.argmax(dim=1).numpy())
        return np.concatenate(preds)

    def accuracy(self, pixels: np.ndarray, class_ids: np.ndarray) -> float:
        return float((self.predict(pixels) == np.asarray(class_ids)).mean())


def fit_probe_classifier(
    pixels: np.ndarray,
    class_ids: np.ndarray,
    class_count: int,
    seed: int = 0,
    iterations: int = 400,
    batch_size: int = 64,
) -> ProbeClassifier:
    """Train a tiny CNN with Adam; deterministic given ``seed``."""
    if pixels.shape[0] == 0:
        raise EmptyInputError("cannot fit a probe on zero examples")
    net = ProbeNet(pixels.shape[1], pixels.shape[3], class_count)
    g = torch.Generator().manual_seed(seed)
    kaiming_init_(net, g)
    images = images_to_tensor(pixels)
    targets = torch.from_numpy(np.asarray(class_ids, dtype=np.int64))
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    net.train()
    for _ in range(iterations):
        idx = torch.randint(images.shape[0], (batch_size,), generator=g)
        loss = F.cross_entropy(net(images[idx]), targets[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()
    return ProbeClassifier(net)
