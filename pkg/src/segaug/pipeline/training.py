"""Segmentor pretraining and the three-player adversarial game."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..autodiff import Adam, NumericError, Tensor, get_default_dtype, no_grad, ops
from ..data.records import Record
from ..losses import feature_matching, hinge_loss_d, hinge_loss_g, jaccard_ce_loss
from ..masks import one_hot
from ..models import FrozenSegmentor, Generator, MultiscaleDiscriminator, Segmentor
from ..nn import update_spectral
from .config import TrainConfig

log = logging.getLogger(__name__)


class DivergenceError(NumericError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


def stack_batch(records: Sequence[Record], n_labels: int, dtype=None):
    dtype = dtype or get_default_dtype()
    images = np.stack([r.image for r in records]).astype(dtype)
    labels = np.stack([r.mask for r in records])
    classes = np.array([r.global_class for r in records], dtype=np.int64)
    return images, one_hot(labels, n_labels, dtype=dtype), labels, classes


def _batches(n: int, batch: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch):
        yield perm[i : i + batch]


@dataclass
class SegTrainResult:
    model: Segmentor
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)


def train_segmentor(
    records: Sequence[Record],
    cfg: TrainConfig,
    seed: int | None = None,
    epochs: int | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> SegTrainResult:
    """Adam-trained U-Net on the given records with the CE + Jaccard objective."""
    if not records:
        raise ValueError("cannot train a segmentor on an empty set")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    model = Segmentor(cfg.segmentor, rng)
    opt = Adam(model.parameters(), lr=cfg.lr_seg)
    images, masks, _, _ = stack_batch(records, cfg.generator.n_labels)
    result = SegTrainResult(model)
    step = 0
    for epoch in range(epochs or cfg.epochs_seg):
        losses = []
        for idx in _batches(len(records), cfg.batch_size, rng):
            opt.zero_grad()
            loss = jaccard_ce_loss(model(Tensor(images[idx])), masks[idx], cfg.lambda_jaccard)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(step, "segmentor loss")
            loss.backward()
            opt.step()
            losses.append(value)
            result.step_losses.append(value)
            if callback:
                callback(step, value)
            step += 1
        result.epoch_losses.append(float(np.mean(losses)))
        log.debug("seg epoch %d loss %.4f", epoch, result.epoch_losses[-1])
    return result


@dataclass
class GanTrainResult:
    generator: Generator
    discriminator: MultiscaleDiscriminator
    trace: list = field(default_factory=list)  # dicts: step, d_loss, g_hinge, fm, g_loss


def build_gan(cfg: TrainConfig, seed: int) -> tuple[Generator, MultiscaleDiscriminator]:
    rng = np.random.default_rng([seed, 2])
    return Generator(cfg.generator, rng), MultiscaleDiscriminator(cfg.discriminator, rng)


def train_redgan(
    records: Sequence[Record],
    frozen: FrozenSegmentor,
    cfg: TrainConfig,
    seed: int | None = None,
    class_ids: Sequence[int] | None = None,
    models: tuple[Generator, MultiscaleDiscriminator] | None = None,
    callback: Callable[[dict], None] | None = None,
) -> GanTrainResult:
    """Alternating 1:1 hinge-GAN updates with feature matching.

    The discriminator sees (mask, image, segmentor features). With
    ``cfg.third_player`` off the features are replaced by zeros.
    ``class_ids`` overrides the conditioning class of each record (used to
    train a generator with a single class).
    """
    if not records:
        raise ValueError("cannot train a GAN on an empty set")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 3])
    G, D = models if models is not None else build_gan(cfg, seed)
    opt_g = Adam(G.parameters(), lr=cfg.lr_g, betas=(cfg.beta1, cfg.beta2))
    opt_d = Adam(D.parameters(), lr=cfg.lr_d, betas=(cfg.beta1, cfg.beta2))
    dtype = G.mask_conv.weight.dtype
    images, masks, _, classes = stack_batch(records, cfg.generator.n_labels, dtype)
    if class_ids is not None:
        classes = np.asarray(class_ids, dtype=np.int64)
    checksum = frozen.checksum()

    with no_grad():
        if cfg.third_player:
            real_feats = np.concatenate(
                [frozen.features(Tensor(images[i : i + 16], dtype=dtype)).data for i in range(0, len(images), 16)]
            )
        else:
            real_feats = np.zeros((len(images), cfg.segmentor.feat_channels) + images.shape[2:], dtype=dtype)

    def fake_features(fake: Tensor) -> Tensor:
        if cfg.third_player:
            return frozen.features(fake)
        return Tensor(np.zeros((fake.shape[0], cfg.segmentor.feat_channels) + fake.shape[2:], dtype=dtype))

    result = GanTrainResult(G, D)
    steps_per_epoch = -(-len(records) // cfg.batch_size)
    total = cfg.epochs_gan * steps_per_epoch
    if cfg.max_steps_gan:
        total = min(total, cfg.max_steps_gan)
    step = 0
    while step < total:
        for idx in _batches(len(records), cfg.batch_size, rng):
            if step >= total:
                break
            x_real = Tensor(images[idx], dtype=dtype)
            m, c, f_real = masks[idx], classes[idx], Tensor(real_feats[idx], dtype=dtype)
            b = len(idx)
            update_spectral(G)
            update_spectral(D)

            # discriminator step on real and fake triples in one batch
            with no_grad():
                fake = G(m, c)
                f_fake = fake_features(fake)
            opt_d.zero_grad()
            scores, _ = D(
                np.concatenate([m, m]),
                Tensor(np.concatenate([x_real.data, fake.data])),
                Tensor(np.concatenate([f_real.data, f_fake.data])),
            )
            real_s = [ops.narrow(s, 0, 0, b) for s in scores]
            fake_s = [ops.narrow(s, 0, b, 2 * b) for s in scores]
            d_loss = hinge_loss_d(real_s, fake_s)
            if not np.isfinite(d_loss.item()):
                raise DivergenceError(step, "discriminator loss")
            d_loss.backward()
            opt_d.step()

            # generator step; D is held fixed
            D.requires_grad_(False)
            try:
                opt_g.zero_grad()
                fake = G(m, c)
                fake_scores, fake_acts = D(m, fake, fake_features(fake))
                with no_grad():
                    _, real_acts = D(m, x_real, f_real)
                g_hinge = hinge_loss_g(fake_scores)
                fm = feature_matching(real_acts, fake_acts)
                g_loss = ops.add(g_hinge, ops.scale(fm, cfg.lambda_fm))
                if not np.isfinite(g_loss.item()):
                    raise DivergenceError(step, "generator loss")
                g_loss.backward()
                opt_g.step()
            finally:
                D.requires_grad_(True)

            row = {
                "step": step,
                "d_loss": d_loss.item(),
                "g_hinge": g_hinge.item(),
                "fm": fm.item(),
                "g_loss": g_loss.item(),
            }
            result.trace.append(row)
            if callback:
                callback(row)
            step += 1
    if frozen.checksum() != checksum:
        raise AssertionError("frozen segmentor parameters changed during the adversarial game")
    frozen.assert_unchanged()
    return result


def moving_average(values: Sequence[float], window: int = 10) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return np.array([v.mean()]) if len(v) else v
    c = np.cumsum(np.concatenate([[0.0], v]))
    return (c[window:] - c[:-window]) / window
