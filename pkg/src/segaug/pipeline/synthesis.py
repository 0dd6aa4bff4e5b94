"""Strategy I (single class) and strategy II (balanced) synthetic injection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..autodiff import no_grad
from ..data.records import Record
from ..masks import one_hot
from ..models import Generator


@dataclass
class SyntheticItem:
    image: np.ndarray
    mask: np.ndarray
    class_id: int
    source_id: str

    def to_record(self) -> Record:
        return Record(
            image=self.image.astype(np.float32),
            mask=self.mask.astype(np.uint8),
            global_class=self.class_id,
            id=f"syn-c{self.class_id}-{self.source_id}",
            split="train",
        )


@dataclass
class SyntheticBatch:
    items: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def extend(self, other: "SyntheticBatch") -> None:
        self.items.extend(other.items)

    def records(self) -> list[Record]:
        return [it.to_record() for it in self.items]


def generate_images(generator: Generator, masks: np.ndarray, class_ids, batch: int = 8) -> np.ndarray:
    """Run the generator without gradient recording over label maps (N, S, S)."""
    n_labels = generator.spec.n_labels
    ids = np.broadcast_to(np.asarray(class_ids, dtype=np.int64), (len(masks),))
    dtype = generator.mask_conv.weight.dtype
    out = []
    with no_grad():
        for i in range(0, len(masks), batch):
            m = one_hot(masks[i : i + batch], n_labels, dtype=dtype)
            out.append(generator(m, ids[i : i + batch]).data)
    if not out:
        return np.zeros((0, generator.spec.n_modalities) + masks.shape[1:], dtype=dtype)
    return np.concatenate(out)


def synthesize_strategy_I(
    generator: Generator, train: Sequence[Record], target_class: int, condition_id: int | None = None, batch: int = 8
) -> SyntheticBatch:
    """One image of ``target_class`` per training mask belonging to any other class.

    ``condition_id`` overrides the id fed to the generator (a generator trained
    on a single class takes id 0) while the items stay labelled ``target_class``.
    """
    n_classes = generator.spec.n_classes
    cid = target_class if condition_id is None else condition_id
    if not 0 <= cid < n_classes:
        raise ValueError(f"class {cid} outside [0, {n_classes})")
    sources = [r for r in train if r.global_class != target_class]
    if not sources:
        warnings.warn(f"no training masks outside class {target_class}; strategy I batch is empty", stacklevel=2)
        return SyntheticBatch()
    masks = np.stack([r.mask for r in sources])
    images = generate_images(generator, masks, cid, batch)
    return SyntheticBatch(
        [SyntheticItem(img, r.mask, target_class, r.id) for img, r in zip(images, sources)]
    )


def synthesize_strategy_II(generator: Generator, train: Sequence[Record], n_classes: int | None = None, batch: int = 8) -> SyntheticBatch:
    out = SyntheticBatch()
    for c in range(n_classes or generator.spec.n_classes):
        out.extend(synthesize_strategy_I(generator, train, c, batch=batch))
    return out


def class_totals(train: Sequence[Record], synthetic: SyntheticBatch | None, n_classes: int) -> list[int]:
    totals = np.zeros(n_classes, dtype=int)
    for r in train:
        totals[r.global_class] += 1
    for it in synthetic or ():
        totals[it.class_id] += 1
    return totals.tolist()
