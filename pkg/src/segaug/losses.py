"""Adversarial, feature-matching and segmentation objectives; Dice evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import DimensionError, DomainError, Tensor, ops
from .masks import is_one_hot


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float = 10.0
    lambda_jaccard: float = 1.0

    def __post_init__(self):
        for name in ("lambda_fm", "lambda_jaccard"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")


def _as_list(scores) -> list[Tensor]:
    if isinstance(scores, Tensor):
        scores = [scores]
    scores = [s if isinstance(s, Tensor) else Tensor(s) for s in scores]
    if not scores or any(s.size == 0 for s in scores):
        raise DomainError("empty score map")
    return scores


def hinge_loss_d(real_scores, fake_scores) -> Tensor:
    real, fake = _as_list(real_scores), _as_list(fake_scores)
    if len(real) != len(fake):
        raise DimensionError("real and fake score lists differ in number of scales")
    terms = [
        ops.add(ops.mean(ops.relu(ops.sub(1.0, r))), ops.mean(ops.relu(ops.add(1.0, f))))
        for r, f in zip(real, fake)
    ]
    return _mean_of(terms)


def hinge_loss_g(fake_scores) -> Tensor:
    return ops.scale(_mean_of([ops.mean(f) for f in _as_list(fake_scores)]), -1.0)


def _mean_of(terms: Sequence[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return ops.scale(total, 1.0 / len(terms)) if len(terms) > 1 else total


def feature_matching(real_feats, fake_feats) -> Tensor:
    """Mean over scales and layers of the mean absolute difference.

    Real activations are treated as constants.
    """
    if len(real_feats) != len(fake_feats):
        raise DimensionError("feature stacks differ in number of scales")
    terms = []
    for rs, fs in zip(real_feats, fake_feats):
        if len(rs) != len(fs):
            raise DimensionError("feature stacks differ in number of layers")
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise DimensionError(f"feature shapes differ: {r.shape} vs {f.shape}")
            rc = Tensor(r.data, dtype=r.dtype) if isinstance(r, Tensor) else Tensor(r)
            terms.append(ops.mean(ops.abs(ops.sub(f, rc))))
    if not terms:
        raise DomainError("empty feature stacks")
    return _mean_of(terms)


def jaccard_ce_loss(logits: Tensor, target: np.ndarray, lambda_jaccard: float = 1.0) -> Tensor:
    """Pixel-mean cross-entropy plus lambda * (1 - soft Jaccard).

    ``target`` is one-hot with the class axis at position 1 (or 0 for a single
    unbatched map). Soft Jaccard is computed per class over all pixels of the
    batch and averaged over the classes present in the target.
    """
    target = np.asarray(target)
    if logits.ndim == 3:
        logits = ops.reshape(logits, (1,) + logits.shape)
        target = target[None]
    if target.shape != logits.shape:
        raise DimensionError(f"target {target.shape} does not match logits {logits.shape}")
    if not is_one_hot(target, axis=1):
        raise DomainError("target is not one-hot along the class axis")
    t = Tensor(target.astype(logits.dtype, copy=False), dtype=logits.dtype)
    shift = Tensor(logits.data.max(axis=1, keepdims=True), dtype=logits.dtype)
    z = ops.sub(logits, shift)
    lse = ops.log(ops.sum(ops.exp(z), axis=1))
    picked = ops.sum(ops.mul(z, t), axis=1)
    ce = ops.mean(ops.sub(lse, picked))
    if lambda_jaccard == 0:
        return ce
    p = ops.softmax(logits, axis=1)
    axes = (0, 2, 3)
    inter = ops.sum(ops.mul(p, t), axis=axes)
    union = ops.sub(ops.add(ops.sum(p, axis=axes), ops.sum(t, axis=axes)), inter)
    present = target.sum(axis=axes) > 0
    weights = present.astype(logits.dtype) / present.sum()
    jac = ops.sum(ops.mul(ops.mul(inter, ops.reciprocal(union)), Tensor(weights, dtype=logits.dtype)))
    return ops.add(ce, ops.scale(ops.sub(1.0, jac), lambda_jaccard))


def _check_labels(labels: np.ndarray, n_labels: int | None) -> None:
    if labels.size and labels.min() < 0:
        raise DomainError("negative label")
    if n_labels is not None and labels.size and labels.max() > n_labels:
        raise DomainError(f"label above {n_labels}")


def dice_per_class(pred_labels, target_labels, c: int, n_labels: int | None = None) -> float:
    """Hard Dice 2|P∩T|/(|P|+|T|) for label ``c``; 1 when both are empty."""
    p = np.asarray(pred_labels)
    t = np.asarray(target_labels)
    if p.shape != t.shape:
        raise DimensionError("prediction and target shapes differ")
    _check_labels(p, n_labels)
    _check_labels(t, n_labels)
    if n_labels is not None and not 0 <= c <= n_labels:
        raise DomainError(f"class {c} outside [0, {n_labels}]")
    pc, tc = p == c, t == c
    denom = int(pc.sum()) + int(tc.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pc, tc).sum()) / denom


def multiclass_dice(pred_labels, target_labels, n_labels: int) -> float:
    """Unweighted mean of per-label Dice over the foreground labels 1..n_labels."""
    return float(np.mean([dice_per_class(pred_labels, target_labels, c, n_labels) for c in range(1, n_labels + 1)]))
