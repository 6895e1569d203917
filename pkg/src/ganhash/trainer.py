"""Joint two-player optimization: the shared encoder and its heads descend
the summed stream objective while the generator periodically descends the
signed variant (triplet and class terms pull it toward label-consistent
synthesis, the source term is driven adversarially).

Updates are plain momentum SGD with weight decay on the encoder side only.
Everything is deterministic given the config seed.
"""

from __future__ import annotations

import copy
import csv
import os
from dataclasses import dataclass

import numpy as np
import torch

from .data import Dataset
from .errors import ConfigError, DivergenceError
from .gan import GanState, save_gan
from .losses import batch_stream_losses
from .model import HashModel, save_hash_model
from .nets import images_to_tensor
from .triplets import TripletBatchSpec, sample_triplet_batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    iterations: int = 3000
    lr_milestone: int = 2000  # step index at which the rate drops
    lr_decay_factor: float = 0.1
    update_ratio: int = 1  # encoder steps per generator step
    synthetic_fraction: float = 1.0
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.update_ratio < 1:
            raise ConfigError("need learning_rate > 0, batch_size >= 1, update_ratio >= 1")
        if not 0.0 <= self.synthetic_fraction <= 1.0:
            raise ConfigError("synthetic_fraction must lie in [0, 1]")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")

    def lr_multiplier(self, step: int) -> float:
        return self.lr_decay_factor if 0 < self.lr_milestone <= step else 1.0


@dataclass(frozen=True)
class LogRow:
    step: int
    triplet_loss: float
    adversary_loss: float
    classification_loss: float
    eq_cnn: float  # triplet + adversary + classification (batch mean)
    eq_gen: float  # triplet - adversary + classification (batch mean)
    lr: float


LOG_COLUMNS = ("step", "triplet_loss", "adversary_loss", "classification_loss",
               "eq8", "eq9", "lr")


def write_log_csv(path, rows: list[LogRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for r in rows:
            writer.writerow(
                [r.step, repr(r.triplet_loss), repr(r.adversary_loss),
                 repr(r.classification_loss), repr(r.eq_cnn), repr(r.eq_gen), repr(r.lr)]
            )


def gradient_step(params: dict, grads: dict, velocities: dict, *,
                  lr: float, momentum: float, weight_decay: float) -> tuple[dict, dict]:
    """One momentum step: v <- m*v + g + wd*p; p <- p - lr*v.

    Pure function over dicts of same-shaped arrays (numpy or torch);
    returns updated (params, velocities) without touching the inputs.
    """
    new_params, new_velocities = {}, {}
    for name, p in params.items():
        g = grads[name]
        v = velocities[name]
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: {p.shape} vs {g.shape} vs {v.shape}"
            )
        v_new = momentum * v + g + weight_decay * p
        new_velocities[name] = v_new
        new_params[name] = p - lr * v_new
    return new_params, new_velocities


def _momentum_step_(named_params, grads, velocities: dict, *, lr, momentum, weight_decay):
    """In-place variant used by the training loop. ``None`` grads count as zero."""
    with torch.no_grad():
        for (name, p), g in zip(named_params, grads):
            v = velocities[name]
            v.mul_(momentum)
            if g is not None:
                v.add_(g)
            if weight_decay:
                v.add_(p, alpha=weight_decay)
            p.sub_(v, alpha=lr)


def triplet_batch_losses(
    model: HashModel,
    generator,
    images_t: torch.Tensor,
    labels_t: torch.Tensor,
    spec: TripletBatchSpec,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-triplet stream losses for a sampled batch spec.

    Synthetic slots are rendered through the generator inside the autograd
    graph (positives and negatives share one generator forward pass).
    """
    dtype = model.dtype
    q_idx = torch.from_numpy(spec.query_idx)
    query = images_t[q_idx]
    q_labels = labels_t[q_idx]
    neg_labels = torch.from_numpy(spec.neg_labels.astype(np.float64)).to(dtype)

    pos_syn = torch.from_numpy(spec.pos_real_idx < 0)
    neg_syn = torch.from_numpy(spec.neg_real_idx < 0)
    n_pos_syn = int(pos_syn.sum())
    n_neg_syn = int(neg_syn.sum())

    positive = torch.zeros_like(query)
    negative = torch.zeros_like(query)
    if n_pos_syn < len(spec):
        positive[~pos_syn] = images_t[torch.from_numpy(spec.pos_real_idx[spec.pos_real_idx >= 0])]
    if n_neg_syn < len(spec):
        negative[~neg_syn] = images_t[torch.from_numpy(spec.neg_real_idx[spec.neg_real_idx >= 0])]
    if n_pos_syn + n_neg_syn > 0:
        syn_labels = torch.cat([q_labels[pos_syn], neg_labels[neg_syn]])
        syn_z = torch.from_numpy(
            np.concatenate([spec.pos_z[pos_syn.numpy()], spec.neg_z[neg_syn.numpy()]])
        ).to(dtype)
        syn_out = generator(syn_labels, syn_z)
        pos_out, neg_out = syn_out.split([n_pos_syn, n_neg_syn])
        if n_pos_syn:
            positive[pos_syn] = pos_out
        if n_neg_syn:
            negative[neg_syn] = neg_out

    return batch_stream_losses(
        model, query, positive, negative,
        pos_is_real=~pos_syn, neg_is_real=~neg_syn,
        query_labels=q_labels, negative_labels=neg_labels,
    )


def _check_finite(step: int, **streams) -> None:
    for name, value in streams.items():
        if not torch.isfinite(value):
            raise DivergenceError(f"non-finite {name} loss at step {step}")


def train(
    labeled: Dataset,
    gan: GanState,
    init: HashModel,
    cfg: TrainConfig,
    checkpoint_dir=None,
) -> tuple[HashModel, GanState, list[LogRow]]:
    """Alternating optimization over streams of real/synthetic triplets.

    Every cycle takes one encoder step against the summed objective; every
    ``update_ratio`` cycles the generator takes one step against the signed
    objective on a fresh batch. Inputs are not mutated.
    """
    cfg.validate()
    if labeled.class_count != init.cfg.class_count:
        raise ConfigError("dataset and model class counts differ")
    if gan.config.class_count != init.cfg.class_count:
        raise ConfigError("GAN and model class counts differ")

    model = copy.deepcopy(init)
    gan = GanState(
        generator=copy.deepcopy(gan.generator),
        discriminator=copy.deepcopy(gan.discriminator),
        config=gan.config,
    )
    model.train()
    gan.generator.train()

    rng = np.random.default_rng(cfg.seed)
    dtype = model.dtype
    images_t = images_to_tensor(labeled.pixels, dtype=dtype)
    labels_t = torch.from_numpy(labeled.labels.astype(np.float64)).to(dtype)

    cnn_params = list(model.named_parameters())
    gen_params = list(gan.generator.named_parameters())
    cnn_velocity = {n: torch.zeros_like(p) for n, p in cnn_params}
    gen_velocity = {n: torch.zeros_like(p) for n, p in gen_params}

    log: list[LogRow] = []
    for step in range(cfg.iterations):
        lr = cfg.learning_rate * cfg.lr_multiplier(step)

        spec = sample_triplet_batch(
            labeled, cfg.batch_size, cfg.synthetic_fraction, gan.config.noise_dim, rng
        )
        trip, adv, cls = triplet_batch_losses(model, gan.generator, images_t, labels_t, spec)
        t_mean, a_mean, c_mean = trip.mean(), adv.mean(), cls.mean()
        _check_finite(step, triplet=t_mean, adversary=a_mean, classification=c_mean)
        eq_cnn = t_mean + a_mean + c_mean
        eq_gen = t_mean - a_mean + c_mean

        grads = torch.autograd.grad(eq_cnn, [p for _, p in cnn_params])
        _momentum_step_(cnn_params, grads, cnn_velocity,
                        lr=lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)

        if (step + 1) % cfg.update_ratio == 0:
            g_spec = sample_triplet_batch(
                labeled, cfg.batch_size, cfg.synthetic_fraction, gan.config.noise_dim, rng
            )
            g_trip, g_adv, g_cls = triplet_batch_losses(
                model, gan.generator, images_t, labels_t, g_spec
            )
            g_obj = (g_trip - g_adv + g_cls).mean()
            _check_finite(step, generator_objective=g_obj)
            # allow_unused: a batch with no synthetic slot leaves G out of the graph
            g_grads = torch.autograd.grad(
                g_obj, [p for _, p in gen_params], allow_unused=True
            )
            _momentum_step_(gen_params, g_grads, gen_velocity,
                            lr=lr, momentum=cfg.momentum, weight_decay=0.0)

        log.append(LogRow(
            step=step,
            triplet_loss=t_mean.detach().item(),
            adversary_loss=a_mean.detach().item(),
            classification_loss=c_mean.detach().item(),
            eq_cnn=eq_cnn.detach().item(),
            eq_gen=eq_gen.detach().item(),
            lr=lr,
        ))

        if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_hash_model(os.path.join(checkpoint_dir, f"model_step{step + 1:06d}.ckpt"), model)
            save_gan(os.path.join(checkpoint_dir, f"gan_step{step + 1:06d}.ckpt"), gan)

    model.eval()
    gan.generator.eval()
    return model, gan, log
