"""Cross-validated augmentation experiments.

Every fold trains a baseline segmentor on the real training split, uses it as
the frozen third player of the adversarial game, synthesizes records per
strategy and retrains a fresh segmentor (same initialization seed) on the
augmented set. Per-record Dice on the real test split is grouped by global
class and compared against the baseline with a paired signed-rank test.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..data.records import Record
from ..data.splits import split_protocol
from ..losses import multiclass_dice
from ..models import FrozenSegmentor, Generator, Segmentor
from ..stats import summarize, wilcoxon_signed_rank
from .config import ExperimentConfig, TrainConfig
from .synthesis import SyntheticBatch, SyntheticItem, generate_images, synthesize_strategy_I, synthesize_strategy_II
from .training import train_redgan, train_segmentor

log = logging.getLogger(__name__)

BASELINE = "baseline"
SYNTH_THIRD = "synthetic_third"
SYNTH_PLAIN = "synthetic_plain"
STRATEGIES = ("baseline", "I", "II", "synthetic")


@dataclass
class Cell:
    condition: str
    fold: int
    global_class: int
    n_test: int
    dice_mean: float
    dice_std: float
    failed: bool = False


@dataclass
class PairedTest:
    condition: str
    global_class: int
    W: float
    p_two_sided: float
    n_pairs: int


@dataclass
class ExperimentReport:
    fingerprint: str
    conditions: list
    n_folds: int
    n_classes: int
    cells: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    # (condition, fold) -> list of (record id, global class, dice)
    per_record: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    split_fingerprint: str = ""

    def cell(self, condition: str, fold: int, global_class: int) -> Cell:
        for c in self.cells:
            if (c.condition, c.fold, c.global_class) == (condition, fold, global_class):
                return c
        raise KeyError((condition, fold, global_class))

    def test(self, condition: str, global_class: int) -> PairedTest:
        for t in self.tests:
            if (t.condition, t.global_class) == (condition, global_class):
                return t
        raise KeyError((condition, global_class))

    def is_complete(self) -> bool:
        keys = {(c.condition, c.fold, c.global_class) for c in self.cells}
        return all(
            (cond, f, k) in keys for cond in self.conditions for f in range(self.n_folds) for k in range(self.n_classes)
        )

    def fold_means(self, condition: str, global_class: int) -> list[float]:
        return [self.cell(condition, f, global_class).dice_mean for f in range(self.n_folds)]

    def condition_mean(self, condition: str) -> float:
        """Mean Dice over every test record of every fold."""
        vals = [d for f in range(self.n_folds) for _, _, d in self.per_record.get((condition, f), [])]
        return float(np.mean(vals)) if vals else float("nan")


def condition_name(strategy: str, target_class: int | None = None) -> str:
    if strategy == "I":
        return f"I(c={target_class})"
    return strategy


def evaluate(model: Segmentor, test: Sequence[Record], n_labels: int) -> list[tuple[str, int, float]]:
    pred = model.predict(np.stack([r.image for r in test]))
    return [(r.id, r.global_class, multiclass_dice(p, r.mask, n_labels)) for p, r in zip(pred, test)]


def synthesize_replica(generator: Generator, train: Sequence[Record], batch: int = 8) -> SyntheticBatch:
    """One synthetic image per training mask, conditioned on that record's own class."""
    masks = np.stack([r.mask for r in train])
    classes = np.array([r.global_class for r in train])
    images = generate_images(generator, masks, classes, batch)
    return SyntheticBatch([SyntheticItem(img, r.mask, r.global_class, r.id) for img, r in zip(images, train)])


def rarest_class(records: Sequence[Record], n_classes: int) -> int:
    counts = np.bincount([r.global_class for r in records], minlength=n_classes)
    return int(np.argmin(counts))


class FoldRunner:
    """Trains and caches the models of one fold."""

    def __init__(self, cfg: TrainConfig, train: list, test: list, seed: int):
        self.cfg, self.train, self.test, self.seed = cfg, train, test, seed
        self.n_labels = cfg.generator.n_labels
        self._baseline = None
        self._gans = {}

    def fresh_segmentor(self, records: Sequence[Record]) -> Segmentor:
        # every downstream segmentor shares the initialization and batch seed
        return train_segmentor(records, self.cfg, seed=self.seed).model

    def baseline(self) -> Segmentor:
        if self._baseline is None:
            self._baseline = self.fresh_segmentor(self.train)
        return self._baseline

    def gan(self, third_player: bool = True) -> Generator:
        if third_player not in self._gans:
            cfg = copy.deepcopy(self.cfg)
            cfg.third_player = third_player
            frozen = FrozenSegmentor(self.baseline())
            self._gans[third_player] = train_redgan(self.train, frozen, cfg, seed=self.seed).generator
        return self._gans[third_player]

    def run(self, condition: str, target_class: int | None = None) -> list:
        if condition == BASELINE:
            model = self.baseline()
        elif condition.startswith("I("):
            batch = synthesize_strategy_I(self.gan(), self.train, target_class)
            model = self.fresh_segmentor(self.train + batch.records())
        elif condition == "II":
            batch = synthesize_strategy_II(self.gan(), self.train)
            model = self.fresh_segmentor(self.train + batch.records())
        elif condition in (SYNTH_THIRD, SYNTH_PLAIN):
            batch = synthesize_replica(self.gan(condition == SYNTH_THIRD), self.train)
            model = self.fresh_segmentor(batch.records())
        else:
            raise ValueError(f"unknown condition {condition!r}")
        return evaluate(model, self.test, self.n_labels)


def make_folds(cfg: ExperimentConfig, records: Sequence[Record]):
    strata = [r.global_class for r in records]
    return split_protocol(len(records), cfg.n_folds, cfg.test_fraction, cfg.train.seed, strata=strata)


def run_experiment(
    cfg: ExperimentConfig,
    records: Sequence[Record],
    strategies: Sequence[str] = ("baseline", "I", "II"),
    target_class: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Run the requested strategies over ``cfg.n_folds`` shared splits.

    ``strategies`` may contain "baseline", "I", "II" and "synthetic" (the
    synthetic-only pair with and without the third player). The baseline is
    always trained since every other arm is paired against it.
    """
    records = list(records)
    n_classes = cfg.train.generator.n_classes
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}; expected one of {', '.join(STRATEGIES)}")
    if target_class is None:
        target_class = cfg.target_class if cfg.target_class >= 0 else rarest_class(records, n_classes)
    if not 0 <= target_class < n_classes:
        raise ValueError(f"target class {target_class} outside [0, {n_classes})")

    conditions = [BASELINE]
    for s in strategies:
        if s == "I":
            conditions.append(condition_name("I", target_class))
        elif s == "II":
            conditions.append("II")
        elif s == "synthetic":
            conditions += [SYNTH_THIRD, SYNTH_PLAIN]

    folds = make_folds(cfg, records)
    report = ExperimentReport(cfg.fingerprint(), conditions, cfg.n_folds, n_classes)
    report.split_fingerprint = split_fingerprint(folds)
    for f, (tr, te) in enumerate(folds):
        train = [records[i] for i in tr]
        test = [records[i] for i in te]
        runner = FoldRunner(cfg.train, train, test, seed=cfg.train.seed + 1000 * f)
        for cond in conditions:
            t0 = time.time()
            try:
                report.per_record[(cond, f)] = runner.run(cond, target_class)
            except Exception as exc:  # recorded per fold, the report marks the cells
                log.error("fold %d condition %s failed: %s", f, cond, exc)
                report.errors[(cond, f)] = f"{type(exc).__name__}: {exc}"
            if progress:
                progress(f"fold {f} {cond} {time.time() - t0:.1f}s")
    _fill_cells(report)
    _fill_tests(report)
    return report


def split_fingerprint(folds) -> str:
    h = hashlib.sha256()
    for tr, te in folds:
        h.update(np.asarray(tr, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(te, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def _fill_cells(report: ExperimentReport) -> None:
    for cond in report.conditions:
        for f in range(report.n_folds):
            rows = report.per_record.get((cond, f))
            for k in range(report.n_classes):
                if rows is None:
                    report.cells.append(Cell(cond, f, k, 0, float("nan"), float("nan"), failed=True))
                    continue
                scores = [d for _, c, d in rows if c == k]
                mean, std = summarize(scores) if scores else (float("nan"), float("nan"))
                report.cells.append(Cell(cond, f, k, len(scores), mean, std))


def _fill_tests(report: ExperimentReport) -> None:
    for cond in report.conditions:
        for k in range(report.n_classes):
            a, b = [], []
            ran = False
            for f in range(report.n_folds):
                rows = report.per_record.get((cond, f))
                base = report.per_record.get((BASELINE, f))
                if rows is None or base is None:
                    continue
                ran = True
                base_by_id = {rid: d for rid, c, d in base if c == k}
                for rid, c, d in rows:
                    if c == k:
                        a.append(d)
                        b.append(base_by_id[rid])
            if a:
                res = wilcoxon_signed_rank(a, b)
                report.tests.append(PairedTest(cond, k, res.W, res.p_two_sided, len(a)))
            elif ran:
                # class absent from every test split: no evidence of a difference
                report.tests.append(PairedTest(cond, k, 0.0, 1.0, 0))
            else:
                report.tests.append(PairedTest(cond, k, float("nan"), float("nan"), 0))


@dataclass
class DilemmaResult:
    per_class: float  # arm A: generator trained on class-c records only
    global_conditioned: float  # arm B: globally conditioned generator
    fold_values: list = field(default_factory=list)
    split_fingerprint: str = ""


def run_dilemma_comparison(
    cfg: ExperimentConfig, records: Sequence[Record], target_class: int
) -> DilemmaResult:
    """Per-class generator vs globally conditioned generator, both feeding strategy I(c).

    Returns the mean Dice on the class-``target_class`` test records after
    augmentation, averaged over folds.
    """
    records = list(records)
    folds = make_folds(cfg, records)
    values = []
    for f, (tr, te) in enumerate(folds):
        train = [records[i] for i in tr]
        test = [records[i] for i in te if records[i].global_class == target_class]
        own = [r for r in train if r.global_class == target_class]
        if len(own) < cfg.train.batch_size:
            raise ValueError(
                f"class {target_class} has {len(own)} training records, fewer than batch_size={cfg.train.batch_size}"
            )
        if not test:
            raise ValueError(f"fold {f} has no class-{target_class} test records")
        seed = cfg.train.seed + 1000 * f
        runner = FoldRunner(cfg.train, train, test, seed)

        single = copy.deepcopy(cfg.train)
        single.generator.n_classes = 1
        frozen = FrozenSegmentor(runner.baseline())
        g_a = train_redgan(own, frozen, single, seed=seed, class_ids=[0] * len(own)).generator
        batch_a = synthesize_strategy_I(g_a, train, target_class, condition_id=0)
        dice_a = evaluate(runner.fresh_segmentor(train + batch_a.records()), test, runner.n_labels)

        batch_b = synthesize_strategy_I(runner.gan(), train, target_class)
        dice_b = evaluate(runner.fresh_segmentor(train + batch_b.records()), test, runner.n_labels)
        values.append((float(np.mean([d for *_, d in dice_a])), float(np.mean([d for *_, d in dice_b]))))
    a, b = np.mean(values, axis=0)
    return DilemmaResult(float(a), float(b), values, split_fingerprint(folds))
