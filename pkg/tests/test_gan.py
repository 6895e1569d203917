import copy

import numpy as np
import pytest
import torch

from ganhash.data import SOURCE_SYNTHETIC, make_toy_dataset, split_supervised
from ganhash.errors import ConfigError
from ganhash.gan import (
    GanConfig,
    build_gan,
    discriminate,
    generate,
    load_gan,
    pretrain_gan,
    save_gan,
)
from ganhash.losses import (
    adversarial_loss,
    class_loss_from_logits,
    softmax_classification_loss,
    source_loss_from_logits,
)
from ganhash.nets import images_to_tensor, zero_parameters_
from ganhash.probe import fit_probe_classifier

CFG = GanConfig(image_size=8, class_count=4, gen_width=16, disc_width=16)


def one_hot(j, c=4):
    v = np.zeros(c, dtype=np.uint8)
    v[j] = 1
    return v


class TestGenerate:
    def test_deterministic(self, tiny_gan):
        z = np.random.default_rng(0).standard_normal(64)
        a = generate(tiny_gan, one_hot(2), z)
        b = generate(tiny_gan, one_hot(2), z)
        assert np.array_equal(a.pixels, b.pixels)
        assert a.source == SOURCE_SYNTHETIC
        assert np.array_equal(a.label, one_hot(2))

    def test_pixels_bounded(self, tiny_gan):
        rng = np.random.default_rng(1)
        for _ in range(50):
            ex = generate(tiny_gan, one_hot(int(rng.integers(4))),
                          rng.standard_normal(64))
            assert ex.pixels.min() >= -1.0 and ex.pixels.max() <= 1.0
            assert ex.pixels.shape == (8, 8, 3)

    def test_shape_errors(self, tiny_gan):
        with pytest.raises(ValueError):
            generate(tiny_gan, np.zeros(3), np.zeros(64))
        with pytest.raises(ValueError):
            generate(tiny_gan, one_hot(0), np.zeros(10))


class TestDiscriminate:
    def test_output_contracts(self, tiny_gan):
        rng = np.random.default_rng(2)
        for _ in range(20):
            ex = generate(tiny_gan, one_hot(int(rng.integers(4))),
                          rng.standard_normal(64))
            out = discriminate(tiny_gan, ex)
            assert 0.0 < out.p_source < 1.0
            assert out.class_scores.sum() == pytest.approx(1.0, abs=1e-6)
            assert (out.class_scores > 0).all()

    def test_zero_parameters_neutral_point(self, tiny_gan):
        state = build_gan(CFG, seed=0)
        zero_parameters_(state.discriminator)
        ex = generate(tiny_gan, one_hot(1), np.zeros(64))
        out = discriminate(state, ex)
        assert out.p_source == pytest.approx(0.5, abs=1e-7)
        assert np.allclose(out.class_scores, 0.25, atol=1e-7)

    def test_shape_error(self, tiny_gan):
        from dataclasses import replace

        ex = generate(tiny_gan, one_hot(1), np.zeros(64))
        bad = replace(ex, pixels=np.zeros((4, 4, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            discriminate(tiny_gan, bad)

    def test_multi_mode_per_label_probabilities(self, toy_split):
        cfg = GanConfig(image_size=8, class_count=4, label_mode="multi",
                        gen_width=8, disc_width=8, iterations=2, batch_size=8)
        labeled, unlabeled = toy_split
        state = pretrain_gan(labeled, unlabeled, cfg, seed=0)
        ex = generate(state, np.array([1, 0, 1, 0], dtype=np.uint8), np.zeros(64))
        out = discriminate(state, ex)
        assert ((out.class_scores > 0) & (out.class_scores < 1)).all()


class TestPretrain:
    def test_zero_iterations_is_initialization(self, toy_split):
        labeled, unlabeled = toy_split
        cfg = GanConfig(image_size=8, class_count=4, gen_width=8, disc_width=8,
                        iterations=0)
        trained = pretrain_gan(labeled, unlabeled, cfg, seed=9)
        fresh = build_gan(cfg, seed=9)
        for a, b in zip(trained.generator.state_dict().values(),
                        fresh.generator.state_dict().values()):
            assert torch.equal(a, b)
        for a, b in zip(trained.discriminator.state_dict().values(),
                        fresh.discriminator.state_dict().values()):
            assert torch.equal(a, b)

    def test_seed_determinism(self, toy_split):
        labeled, unlabeled = toy_split
        cfg = GanConfig(image_size=8, class_count=4, gen_width=8, disc_width=8,
                        iterations=12, batch_size=16)
        a = pretrain_gan(labeled, unlabeled, cfg, seed=4)
        b = pretrain_gan(labeled, unlabeled, cfg, seed=4)
        for x, y in zip(a.generator.state_dict().values(),
                        b.generator.state_dict().values()):
            assert torch.equal(x, y)
        for x, y in zip(a.discriminator.state_dict().values(),
                        b.discriminator.state_dict().values()):
            assert torch.equal(x, y)

    def test_empty_labeled_rejected(self, toy_small):
        labeled, unlabeled = split_supervised(toy_small, 8, seed=1)
        empty = labeled.select(np.array([], dtype=np.int64))
        with pytest.raises(ConfigError):
            pretrain_gan(empty, unlabeled, CFG, seed=0)

    def test_mismatched_class_count_rejected(self, toy_split):
        labeled, unlabeled = toy_split
        with pytest.raises(ConfigError):
            pretrain_gan(labeled, unlabeled,
                         GanConfig(image_size=8, class_count=7), seed=0)

    def test_discriminator_classifies_held_out_above_chance(self):
        ds = make_toy_dataset(4, 120, 8, "single", seed=21)
        labeled, unlabeled = split_supervised(ds, 60, seed=1)
        held = make_toy_dataset(4, 25, 8, "single", seed=77)
        cfg = GanConfig(image_size=8, class_count=4, gen_width=16, disc_width=16,
                        iterations=250, batch_size=64)
        state = pretrain_gan(labeled, unlabeled, cfg, seed=2)
        correct = 0
        for i in range(len(held)):
            out = discriminate(state, held[i])
            correct += int(np.argmax(out.class_scores) == np.argmax(held.labels[i]))
        assert correct / len(held) > 0.25


class TestLossDecomposition:
    def test_discriminator_loss_decomposes(self, toy_split):
        # measured l_c + l_a equals independently computed parts (double precision)
        labeled, _ = toy_split
        state = build_gan(CFG, seed=5)
        disc = copy.deepcopy(state.discriminator).double()
        images = images_to_tensor(labeled.pixels[:6], dtype=torch.float64)
        is_real = torch.tensor([True, False, True, False, True, False])
        labels = torch.from_numpy(labeled.labels[:6].astype(np.float64))

        s_logits, c_logits = disc(images)
        measured = (
            source_loss_from_logits(s_logits, is_real)
            + class_loss_from_logits(c_logits, labels, "single")
        )
        for i in range(6):
            p = torch.sigmoid(s_logits[i]).item()
            la = adversarial_loss(p, "real" if is_real[i] else "synthetic")
            lc = softmax_classification_loss(c_logits[i].detach().numpy(),
                                             labels[i].numpy())
            assert measured[i].item() == pytest.approx(la + lc, abs=1e-10)

    def test_single_step_does_not_increase_loss(self, toy_split):
        # frozen batch, lr 1e-4: l_c + l_a may not rise by more than 1e-8
        labeled, _ = toy_split
        state = build_gan(CFG, seed=6)
        disc = copy.deepcopy(state.discriminator).double()
        images = images_to_tensor(labeled.pixels[:8], dtype=torch.float64)
        is_real = torch.tensor([True] * 4 + [False] * 4)
        labels = torch.from_numpy(labeled.labels[:8].astype(np.float64))

        def batch_loss():
            s_logits, c_logits = disc(images)
            return (
                source_loss_from_logits(s_logits, is_real).mean()
                + class_loss_from_logits(c_logits, labels, "single").mean()
            )

        before = batch_loss()
        before.backward()
        with torch.no_grad():
            for p in disc.parameters():
                p -= 1e-4 * p.grad
        after = batch_loss()
        assert after.item() <= before.item() + 1e-8


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tiny_gan, tmp_path):
        p = tmp_path / "g.ckpt"
        save_gan(p, tiny_gan)
        back = load_gan(p)
        assert back.config == tiny_gan.config
        for a, b in zip(tiny_gan.generator.state_dict().values(),
                        back.generator.state_dict().values()):
            assert torch.equal(a, b)
        for a, b in zip(tiny_gan.discriminator.state_dict().values(),
                        back.discriminator.state_dict().values()):
            assert torch.equal(a, b)
        save_gan(tmp_path / "g2.ckpt", back)
        assert (tmp_path / "g.ckpt").read_bytes() == (tmp_path / "g2.ckpt").read_bytes()
