import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segaug.autodiff.serialize import FormatError
from segaug.data import (
    ManifestEntry,
    Record,
    ShapesMedConfig,
    class_counts,
    generate_shapesmed,
    load_dataset,
    load_record,
    read_manifest,
    read_pgm,
    save_dataset,
    save_record,
    split_protocol,
    write_manifest,
    write_pgm,
)
from segaug.masks import is_one_hot, one_hot


def small(**kw):
    base = dict(n_records=20, image_size=32)
    base.update(kw)
    return ShapesMedConfig(**base)


def test_default_class_counts():
    recs = generate_shapesmed(ShapesMedConfig())
    assert np.bincount([r.global_class for r in recs]).tolist() == [70, 20, 10]
    assert len({r.id for r in recs}) == 100


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.lists(st.integers(1, 20), min_size=1, max_size=5))
def test_class_counts_floor_allocation(n, weights):
    props = np.array(weights, dtype=float) / sum(weights)
    counts = class_counts(n, props)
    assert sum(counts) == n
    floors = np.floor(props * n + 1e-9).astype(int)
    big = int(np.argmax(props))
    for i, (c, f) in enumerate(zip(counts, floors)):
        assert c == f or i == big


def test_same_seed_identical_dumps(tmp_path):
    a = generate_shapesmed(small(seed=3))
    b = generate_shapesmed(small(seed=3))
    assert a == b
    save_dataset(tmp_path / "a", a)
    save_dataset(tmp_path / "b", b)
    for ra in sorted((tmp_path / "a" / "records").iterdir()):
        assert ra.read_bytes() == (tmp_path / "b" / "records" / ra.name).read_bytes()
    assert (tmp_path / "a" / "manifest.tsv").read_bytes() == (tmp_path / "b" / "manifest.tsv").read_bytes()
    assert generate_shapesmed(small(seed=4)) != a


def test_record_invariants():
    cfg = small()
    for r in generate_shapesmed(cfg):
        assert r.image.shape == (cfg.n_modalities, 32, 32) and r.image.dtype == np.float32
        assert np.isfinite(r.image).all() and r.image.min() >= -1 and r.image.max() <= 1
        assert r.mask.dtype == np.uint8 and r.mask.max() <= cfg.n_labels
        assert (r.mask == 0).any()
        assert is_one_hot(one_hot(r.mask, cfg.n_labels))


def test_gain_ratio_in_foreground():
    cfg = ShapesMedConfig(
        n_records=100,
        image_size=32,
        n_classes=2,
        class_proportions=[0.5, 0.5],
        class_gains=[1.0, 0.5],
        class_noise=[0.0, 0.0],
        texture_amplitude=0.0,
    )
    recs = generate_shapesmed(cfg)
    means = {0: [], 1: []}
    for r in recs:
        fg = r.mask > 0
        means[r.global_class].append(r.image[:, fg].mean())
    ratio = np.mean(means[0][:50]) / np.mean(means[1][:50])
    assert abs(ratio - 2.0) <= 0.2


def test_mean_intensity_classifier_separates_styles():
    recs = generate_shapesmed(ShapesMedConfig(n_records=150, image_size=32, class_proportions=[1 / 3, 1 / 3, 1 / 3]))
    feats = np.array([[r.image.mean(), r.image.std()] for r in recs])
    y = np.array([r.global_class for r in recs])
    half = len(recs) // 2
    centroids = np.array([feats[:half][y[:half] == k].mean(axis=0) for k in range(3)])
    pred = np.argmin(((feats[half:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
    assert (pred == y[half:]).mean() >= 0.8


@pytest.mark.parametrize(
    "kw,key",
    [
        (dict(class_proportions=[0.5, 0.2, 0.1]), "class_proportions"),
        (dict(class_proportions=[0.5, 0.5]), "class_proportions"),
        (dict(image_size=48), "image_size"),
    ],
)
def test_invalid_config_names_key(kw, key):
    with pytest.raises(ValueError, match=key):
        generate_shapesmed(small(**kw))


def test_split_sizes_and_partition():
    splits = split_protocol(100, 3, 0.1, seed=0)
    assert len(splits) == 3
    for train, test in splits:
        assert len(train) == 90 and len(test) == 10
        assert set(train) | set(test) == set(range(100)) and not set(train) & set(test)
    assert not np.array_equal(splits[0][1], splits[1][1])


def test_split_determinism():
    a = split_protocol(50, 3, 0.1, seed=7)
    b = split_protocol(50, 3, 0.1, seed=7)
    for (ta, sa), (tb, sb) in zip(a, b):
        assert np.array_equal(ta, tb) and np.array_equal(sa, sb)


def test_split_too_small():
    with pytest.raises(ValueError):
        split_protocol(4, 3, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(20, 300), st.integers(0, 1000))
def test_stratified_split_covers_every_stratum(n, seed):
    strata = np.repeat([0, 1, 2], [n - 2 * (n // 10), n // 10, n // 10])
    n_test = round(n * 0.1)
    for train, test in split_protocol(n, 3, 0.1, seed=seed, strata=strata):
        assert len(test) == n_test
        assert set(train) | set(test) == set(range(n))
        for k in range(3):
            # coverage is only possible with at least one test slot per stratum
            if (strata == k).sum() >= 2 and n_test >= 3:
                assert (strata[test] == k).any()
                assert (strata[train] == k).any()


def test_record_roundtrip(tmp_path):
    r = generate_shapesmed(small(n_records=1))[0]
    save_record(tmp_path / "r.rgt", r)
    back = load_record(tmp_path / "r.rgt")
    assert back == r and back.mask.dtype == np.uint8
    assert back.image.tobytes() == r.image.tobytes()


def test_truncated_record_is_format_error(tmp_path):
    r = generate_shapesmed(small(n_records=1))[0]
    save_record(tmp_path / "r.rgt", r)
    data = (tmp_path / "r.rgt").read_bytes()
    for cut in (3, 30, len(data) // 2, len(data) - 1):
        (tmp_path / "t.rgt").write_bytes(data[:cut])
        with pytest.raises(FormatError):
            load_record(tmp_path / "t.rgt")


def test_manifest_roundtrip_and_errors(tmp_path):
    entries = [ManifestEntry("records/a.rgt", 0, "train"), ManifestEntry("records/b.rgt", 2, "test")]
    write_manifest(tmp_path / "m.tsv", entries)
    assert read_manifest(tmp_path / "m.tsv") == entries
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "m.tsv", n_classes=2)
    (tmp_path / "bad.tsv").write_text("records/a.rgt\t0\ttrain\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "bad.tsv")


def test_dataset_roundtrip(tmp_path):
    recs = generate_shapesmed(small(n_records=6))
    save_dataset(tmp_path, recs)
    assert load_dataset(tmp_path) == recs


def test_pgm_roundtrip(tmp_path):
    arr = np.linspace(-1, 1, 12).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", arr)
    px = read_pgm(tmp_path / "a.pgm")
    assert px.shape == (3, 4) and px[0, 0] == 0 and px[-1, -1] == 255


def test_record_equality_is_exact():
    r = Record(np.zeros((2, 4, 4), np.float32), np.zeros((4, 4), np.uint8), 0, "x")
    s = Record(np.zeros((2, 4, 4), np.float32), np.zeros((4, 4), np.uint8), 0, "x")
    assert r == s
    s.image[0, 0, 0] = 1e-7
    assert r != s
