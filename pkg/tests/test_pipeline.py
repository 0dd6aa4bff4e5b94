import warnings

import numpy as np
import pytest
from conftest import tiny_config

from segaug.autodiff import Tensor, default_dtype
from segaug.data import Record, generate_shapesmed
from segaug.models import FrozenSegmentor, Generator, Segmentor
from segaug.pipeline import (
    DivergenceError,
    TrainConfig,
    build_gan,
    class_totals,
    synthesize_strategy_I,
    synthesize_strategy_II,
    train_redgan,
    train_segmentor,
)
from segaug.pipeline import training
from segaug.pipeline.experiment import BASELINE, run_dilemma_comparison, run_experiment
from segaug.pipeline import report as rpt
from segaug.pipeline.report import bar_chart_svg, cells_csv, read_report, write_report


def fake_train_set(counts, size=32, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for c, n in enumerate(counts):
        for i in range(n):
            mask = rng.integers(0, 3, (size, size)).astype(np.uint8)
            out.append(Record(np.zeros((2, size, size), np.float32), mask, c, f"c{c}-{i:03d}"))
    return out


@pytest.fixture(scope="module")
def tiny_generator():
    cfg = tiny_config()
    return Generator(cfg.train.generator, np.random.default_rng(0))


def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(epochs_gan=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
    cfg = TrainConfig()
    assert (cfg.lr_g, cfg.lr_d, cfg.beta1, cfg.beta2) == (1e-4, 4e-4, 0.0, 0.9)
    assert (cfg.epochs_seg, cfg.epochs_gan) == (100, 80)


def test_strategy_I_counts(tiny_generator):
    train = fake_train_set([70, 20, 10])
    batch = synthesize_strategy_I(tiny_generator, train, 2)
    assert len(batch) == 90
    assert class_totals(train, batch, 3) == [70, 20, 100]
    assert all(it.class_id == 2 for it in batch)
    by_id = {r.id: r for r in train}
    assert all(by_id[it.source_id].global_class != 2 for it in batch)
    assert all(np.array_equal(it.mask, by_id[it.source_id].mask) for it in batch)


def test_strategy_II_counts_and_determinism(tiny_generator):
    train = fake_train_set([70, 20, 10])
    batch = synthesize_strategy_II(tiny_generator, train)
    # union of the three strategy-I batches: 30 + 80 + 90
    assert len(batch) == 200
    assert [sum(it.class_id == c for it in batch) for c in range(3)] == [30, 80, 90]
    assert class_totals(train, batch, 3) == [100, 100, 100]
    again = synthesize_strategy_II(tiny_generator, train)
    assert all(np.array_equal(a.image, b.image) for a, b in zip(batch, again))


def test_strategy_I_images_follow_generator(tiny_generator):
    train = fake_train_set([3, 2, 1])
    batch = synthesize_strategy_I(tiny_generator, train, 1)
    from segaug.masks import one_hot

    src = {r.id: r for r in train}
    it = batch.items[0]
    ref = tiny_generator(one_hot(src[it.source_id].mask[None], 2, dtype=np.float32), 1).data[0]
    np.testing.assert_array_equal(it.image, ref)


def test_strategy_I_empty_complement_warns(tiny_generator):
    train = fake_train_set([0, 0, 4])
    with pytest.warns(UserWarning):
        batch = synthesize_strategy_I(tiny_generator, train, 2)
    assert len(batch) == 0


@pytest.mark.parametrize("counts", [[5, 3, 1], [2, 7, 4], [1, 1, 9]])
def test_strategy_arithmetic_any_distribution(tiny_generator, counts):
    train = fake_train_set(counts, size=32)
    n = sum(counts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for c in range(3):
            assert class_totals(train, synthesize_strategy_I(tiny_generator, train, c), 3)[c] == n
        assert class_totals(train, synthesize_strategy_II(tiny_generator, train), 3) == [n] * 3


def test_segmentor_training_deterministic_and_decreasing():
    cfg = tiny_config(epochs_seg=6, n_records=8)
    with default_dtype(np.float64):
        recs = generate_shapesmed(cfg.data)
        a = train_segmentor(recs, cfg.train)
        b = train_segmentor(recs, cfg.train)
    assert a.step_losses == b.step_losses
    assert a.epoch_losses[-1] < a.epoch_losses[0]
    assert len(a.epoch_losses) == 6


def test_segmentor_training_empty_set():
    with pytest.raises(ValueError):
        train_segmentor([], tiny_config().train)


def test_divergence_reports_step(monkeypatch):
    cfg = tiny_config(epochs_seg=3, n_records=8)
    recs = generate_shapesmed(cfg.data)
    real = training.jaccard_ce_loss
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        out = real(*a, **k)
        return out if calls["n"] < 3 else out * float("nan")

    monkeypatch.setattr(training, "jaccard_ce_loss", flaky)
    with pytest.raises(DivergenceError) as err:
        train_segmentor(recs, cfg.train)
    assert err.value.step == 2


def test_zero_discriminator_first_losses():
    cfg = tiny_config(n_records=4)
    cfg.train.max_steps_gan = 1
    recs = generate_shapesmed(cfg.data)
    seg = Segmentor(cfg.train.segmentor, np.random.default_rng(0))
    G, D = build_gan(cfg.train, 0)
    for p in D.parameters():
        p.data[:] = 0
    res = train_redgan(recs, FrozenSegmentor(seg), cfg.train, models=(G, D))
    assert res.trace[0]["d_loss"] == 2.0
    assert res.trace[0]["g_hinge"] == 0.0


def test_gan_keeps_segmentor_frozen_and_traces_steps():
    cfg = tiny_config(n_records=8, epochs_gan=2)
    recs = generate_shapesmed(cfg.data)
    frozen = FrozenSegmentor(Segmentor(cfg.train.segmentor, np.random.default_rng(0)))
    before = frozen.checksum()
    res = train_redgan(recs, frozen, cfg.train)
    assert frozen.checksum() == before
    assert [r["step"] for r in res.trace] == list(range(4))
    assert set(res.trace[0]) == {"step", "d_loss", "g_hinge", "fm", "g_loss"}


def test_gan_without_third_player_ignores_segmentor():
    cfg = tiny_config(n_records=4, third_player=False)
    cfg.train.max_steps_gan = 2
    recs = generate_shapesmed(cfg.data)
    seg_a = Segmentor(cfg.train.segmentor, np.random.default_rng(0))
    seg_b = Segmentor(cfg.train.segmentor, np.random.default_rng(1))
    ta = train_redgan(recs, FrozenSegmentor(seg_a), cfg.train).trace
    tb = train_redgan(recs, FrozenSegmentor(seg_b), cfg.train).trace
    assert ta == tb


@pytest.fixture(scope="module")
def tiny_report():
    cfg = tiny_config(n_records=30)
    recs = generate_shapesmed(cfg.data)
    return cfg, recs, run_experiment(cfg, recs, ["I", "II"], target_class=2)


def test_report_schema(tiny_report):
    cfg, _, rep = tiny_report
    assert rep.conditions == [BASELINE, "I(c=2)", "II"]
    assert rep.is_complete()
    assert len(rep.cells) == 3 * 3 * 3
    for c in rep.cells:
        assert not c.failed and 0 <= c.dice_mean <= 1
    assert rep.fingerprint == cfg.fingerprint()


def test_report_has_p_for_every_pair(tiny_report):
    _, _, rep = tiny_report
    assert {(t.condition, t.global_class) for t in rep.tests} == {(c, k) for c in rep.conditions for k in range(3)}
    for t in rep.tests:
        assert 0 < t.p_two_sided <= 1
    for k in range(3):
        assert rep.test(BASELINE, k).p_two_sided == 1.0


def test_test_hygiene(tiny_report):
    # every evaluated record is a real test record of its fold, never a synthetic one
    cfg, recs, rep = tiny_report
    from segaug.pipeline.experiment import make_folds

    folds = make_folds(cfg, recs)
    for (cond, f), rows in rep.per_record.items():
        test_ids = {recs[i].id for i in folds[f][1]}
        assert {rid for rid, _, _ in rows} == test_ids


def test_csv_roundtrip(tiny_report, tmp_path):
    _, _, rep = tiny_report
    paths = write_report(tmp_path, rep)
    back = read_report(paths["cells"], paths["tests"])
    assert back.conditions == rep.conditions and back.is_complete()
    for a, b in zip(rep.cells, back.cells):
        assert (a.condition, a.fold, a.global_class, a.n_test) == (b.condition, b.fold, b.global_class, b.n_test)
        assert b.dice_mean == pytest.approx(a.dice_mean, abs=1e-6)
    assert len(back.tests) == len(rep.tests)
    header = paths["cells"].read_text().splitlines()
    assert header[0].startswith("#") and "condition,fold,global_class,n_test,dice_mean,dice_std" in header
    assert "condition,global_class,wilcoxon_W,p_two_sided" in paths["tests"].read_text()


def test_svg_groups(tiny_report):
    _, _, rep = tiny_report
    svg = bar_chart_svg(rep)
    assert svg.count('class="bar"') == len(rep.conditions) * rep.n_classes
    for cond in rep.conditions:
        assert svg.count(f'data-condition="{cond}"') == rep.n_classes


def test_failed_cells_are_marked(monkeypatch):
    cfg = tiny_config(n_records=30)
    recs = generate_shapesmed(cfg.data)
    from segaug.pipeline import experiment

    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(experiment, "synthesize_strategy_II", boom)
    rep = run_experiment(cfg, recs, ["II"])
    assert rep.is_complete()
    assert all(c.failed for c in rep.cells if c.condition == "II")
    assert not any(c.failed for c in rep.cells if c.condition == BASELINE)
    assert "failed" in cells_csv(rep)
    assert "nan" in rpt.tests_csv(rep)


def test_dilemma_comparison_runs_on_shared_splits():
    cfg = tiny_config(n_records=60, n_folds=2, class_proportions="0.4,0.3,0.3")
    recs = generate_shapesmed(cfg.data)
    res = run_dilemma_comparison(cfg, recs, target_class=2)
    assert 0 <= res.per_class <= 1 and 0 <= res.global_conditioned <= 1
    assert len(res.fold_values) == 2
    from segaug.pipeline.experiment import make_folds, split_fingerprint

    assert res.split_fingerprint == split_fingerprint(make_folds(cfg, recs))


def test_dilemma_aborts_on_tiny_class():
    cfg = tiny_config(n_records=30, batch_size=8)
    recs = generate_shapesmed(cfg.data)
    with pytest.raises(ValueError, match="batch_size"):
        run_dilemma_comparison(cfg, recs, target_class=2)


def test_class_missing_from_test_splits_gets_p_one():
    cfg = tiny_config(n_records=12)
    recs = generate_shapesmed(cfg.data)
    rep = run_experiment(cfg, recs, [])
    present = {c for rows in rep.per_record.values() for _, c, _ in rows}
    for k in range(3):
        t = rep.test(BASELINE, k)
        assert t.p_two_sided == 1.0
        assert (t.n_pairs > 0) == (k in present)
