"""All training losses: source (real/synthetic) log-likelihood, triplet
ranking with unit margin on relaxed codes, single-label softmax and
multi-label cross entropy, the per-triplet stream decomposition, and the
two combined objectives (encoder-side sum and generator-side signed sum).

Scalar ops accept python/numpy values or torch tensors and return the same
kind; batched logit-space variants exist for numerically stable training.
Batch objectives average over the triplet set instead of summing, a pure
positive rescaling that keeps learning rates independent of batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import SOURCE_REAL, SOURCE_SYNTHETIC
from .errors import EmptyInputError, InvalidLabelError
from .nets import images_to_tensor


def adversarial_loss(p_source, source: str):
    """Negative log-likelihood of predicting the correct image source."""
    p = p_source.item() if isinstance(p_source, torch.Tensor) else float(p_source)
    if not (0.0 < p < 1.0):
        raise ValueError(f"p_source must lie strictly in (0,1), got {p}")
    if source not in (SOURCE_REAL, SOURCE_SYNTHETIC):
        raise ValueError(f"unknown source {source!r}")
    if isinstance(p_source, torch.Tensor):
        return -torch.log(p_source) if source == SOURCE_REAL else -torch.log1p(-p_source)
    return -math.log(p) if source == SOURCE_REAL else -math.log1p(-p)


def source_loss_from_logits(logits: torch.Tensor, is_real: torch.Tensor) -> torch.Tensor:
    """Per-image adversarial loss from source logits.

    softplus(-s) == -log sigmoid(s) and softplus(s) == -log(1 - sigmoid(s)),
    so this equals :func:`adversarial_loss` without forming probabilities.
    """
    return torch.where(is_real, F.softplus(-logits), F.softplus(logits))


def class_loss_from_logits(
    logits: torch.Tensor, labels: torch.Tensor, label_mode: str
) -> torch.Tensor:
    """Per-image classification loss from class logits."""
    if label_mode == "single":
        return F.cross_entropy(logits, labels.argmax(dim=1), reduction="none")
    return F.binary_cross_entropy_with_logits(logits, labels, reduction="none").sum(dim=1)


def triplet_ranking_loss(h, hp, hn):
    """max(0, 1 - ||h - hn||^2 + ||h - hp||^2) on relaxed codes.

    Tensor inputs may carry a leading batch dimension; the squared
    distances reduce over the last axis.
    """
    if isinstance(h, torch.Tensor):
        if h.shape != hp.shape or h.shape != hn.shape:
            raise ValueError(
                f"code shapes differ: {tuple(h.shape)}, {tuple(hp.shape)}, {tuple(hn.shape)}"
            )
        d_neg = ((h - hn) ** 2).sum(dim=-1)
        d_pos = ((h - hp) ** 2).sum(dim=-1)
        return torch.clamp(1.0 - d_neg + d_pos, min=0.0)
    h = np.asarray(h, dtype=np.float64)
    hp = np.asarray(hp, dtype=np.float64)
    hn = np.asarray(hn, dtype=np.float64)
    if h.shape != hp.shape or h.shape != hn.shape:
        raise ValueError(f"code shapes differ: {h.shape}, {hp.shape}, {hn.shape}")
    d_neg = float(((h - hn) ** 2).sum())
    d_pos = float(((h - hp) ** 2).sum())
    return max(0.0, 1.0 - d_neg + d_pos)


def softmax_classification_loss(scores, label):
    """Negative log softmax probability of the single true class."""
    label = np.asarray(label)
    if label.sum() != 1 or not np.isin(label, (0, 1)).all():
        raise InvalidLabelError(f"single-label loss needs a one-hot label, got {label}")
    y = int(np.argmax(label))
    if isinstance(scores, torch.Tensor):
        if scores.shape[-1] != label.shape[0]:
            raise ValueError("scores and label length differ")
        return torch.logsumexp(scores, dim=-1) - scores[..., y]
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-1] != label.shape[0]:
        raise ValueError("scores and label length differ")
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()) - scores[y])


def cross_entropy_classification_loss(probs, label):
    """Sum over labels of the per-label binary cross entropy."""
    label = np.asarray(label)
    if isinstance(probs, torch.Tensor):
        if probs.shape[-1] != label.shape[0]:
            raise ValueError("probs and label length differ")
        if not bool(((probs > 0) & (probs < 1)).all()):
            raise ValueError("probabilities must lie strictly in (0,1)")
        lab = torch.as_tensor(label, dtype=probs.dtype)
        return -(lab * torch.log(probs) + (1 - lab) * torch.log1p(-probs)).sum(dim=-1)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] != label.shape[0]:
        raise ValueError("probs and label length differ")
    if not ((probs > 0) & (probs < 1)).all():
        raise ValueError("probabilities must lie strictly in (0,1)")
    lab = label.astype(np.float64)
    return float(-(lab * np.log(probs) + (1 - lab) * np.log1p(-probs)).sum())


def adversary_stream_loss(p_sources, sources) -> float:
    """Mean source loss over the members of one triplet."""
    vals = [adversarial_loss(p, s) for p, s in zip(p_sources, sources, strict=True)]
    return sum(vals) / len(vals)


@dataclass(frozen=True)
class StreamLosses:
    """Per-triplet values of the three streams; all finite, nonnegative."""

    triplet: float
    adversary: float
    classification: float


def batch_stream_losses(
    model,
    query: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    pos_is_real: torch.Tensor,
    neg_is_real: torch.Tensor,
    query_labels: torch.Tensor,
    negative_labels: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-triplet stream losses for a batch, keeping the autograd graph.

    Queries are always real; positives share the query's labels. Returns
    (triplet, adversary, classification), each of shape (B,).
    """
    b = query.shape[0]
    out = model(torch.cat([query, positive, negative], dim=0))
    code_q, code_p, code_n = out.code.split(b)
    trip = triplet_ranking_loss(code_q, code_p, code_n)

    is_real = torch.cat([torch.ones(b, dtype=torch.bool), pos_is_real, neg_is_real])
    adv_each = source_loss_from_logits(out.source_logit, is_real)
    adv = (adv_each[:b] + adv_each[b : 2 * b] + adv_each[2 * b :]) / 3.0

    labels = torch.cat([query_labels, query_labels, negative_labels], dim=0)
    cls_each = class_loss_from_logits(out.class_logits, labels, model.cfg.label_mode)
    cls = (cls_each[:b] + cls_each[b : 2 * b] + cls_each[2 * b :]) / 3.0
    return trip, adv, cls


def triplet_stream_losses(model, triplet) -> StreamLosses:
    """Stream losses for one concrete real/synthetic triplet."""
    pixels = np.stack(
        [triplet.query.pixels, triplet.positive.pixels, triplet.negative.pixels]
    )
    dtype = model.dtype
    with torch.no_grad():
        trip, adv, cls = batch_stream_losses(
            model,
            images_to_tensor(pixels[0:1], dtype=dtype),
            images_to_tensor(pixels[1:2], dtype=dtype),
            images_to_tensor(pixels[2:3], dtype=dtype),
            pos_is_real=torch.tensor([triplet.positive.source == SOURCE_REAL]),
            neg_is_real=torch.tensor([triplet.negative.source == SOURCE_REAL]),
            query_labels=torch.from_numpy(triplet.query.label[None].astype(np.float64)).to(dtype),
            negative_labels=torch.from_numpy(triplet.negative.label[None].astype(np.float64)).to(dtype),
        )
    return StreamLosses(
        triplet=float(trip[0]), adversary=float(adv[0]), classification=float(cls[0])
    )


def _objective(losses, sign: float):
    losses = list(losses)
    if not losses:
        raise EmptyInputError("objective over an empty batch")
    total = None
    for sl in losses:
        term = sl.triplet + sign * sl.adversary + sl.classification
        total = term if total is None else total + term
    return total / len(losses)


def cnn_objective(losses):
    """Batch mean of (triplet + adversary + classification)."""
    return _objective(losses, +1.0)


def generator_objective(losses):
    """Batch mean of (triplet - adversary + classification)."""
    return _objective(losses, -1.0)
