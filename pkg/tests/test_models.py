import numpy as np
import pytest

from segaug.autodiff import DimensionError, DomainError, Tensor, ops
from segaug.autodiff.ops import conv_out_size
from segaug.masks import one_hot
from segaug.models import (
    DiscriminatorSpec,
    FrozenSegmentor,
    Generator,
    GeneratorSpec,
    MultiscaleDiscriminator,
    Segmentor,
    SegmentorSpec,
    discriminator_forward,
    generator_forward,
    load_checkpoint,
    save_checkpoint,
    segmentor_features,
)

SMALL_G = dict(base_channels=16, min_channels=8, spade_hidden=8, embed_dim=8)
SMALL_SEG = dict(stem_width=4, stage_widths=[4, 8, 8, 8], decoder_widths=[8, 8, 4, 4, 4])


def masks(rng, n, size, labels=2):
    return one_hot(rng.integers(0, labels + 1, (n, size, size)), labels, dtype=np.float32)


def test_generator_spec_invariants():
    with pytest.raises(ValueError):
        GeneratorSpec(n_blocks=4, n_upsamples=3)
    with pytest.raises(ValueError):
        GeneratorSpec(image_size=48)
    s = GeneratorSpec()
    assert s.base_resolution * 2**s.n_upsamples == s.image_size


def test_generator_desk_shapes(rng):
    spec = GeneratorSpec(image_size=64, n_upsamples=3, n_blocks=5, **SMALL_G)
    g = Generator(spec, rng)
    sizes = []
    for blk in g.block:
        orig = blk.forward
        blk.forward = lambda x, m, orig=orig: sizes.append(x.shape[-1]) or orig(x, m)
    out = g(masks(rng, 2, 64), [0, 2])
    assert out.shape == (2, spec.n_modalities, 64, 64)
    assert sizes == [8, 8, 16, 32, 64]


def test_generator_full_scale_shape():
    spec = GeneratorSpec.full_scale(base_channels=16, min_channels=8, spade_hidden=4, embed_dim=4)
    assert (spec.image_size, spec.n_upsamples, spec.n_blocks) == (256, 5, 7)
    g = Generator(spec, np.random.default_rng(0))
    out = g(masks(np.random.default_rng(1), 1, 256), 0)
    assert out.shape == (1, 4, 256, 256)


def test_generator_range_and_purity(rng):
    spec = GeneratorSpec(image_size=32, n_upsamples=2, n_blocks=4, **SMALL_G)
    g = Generator(spec, rng)
    m = masks(rng, 3, 32)
    a = generator_forward(m, [0, 1, 2], spec, g).data
    b = generator_forward(m, [0, 1, 2], spec, g).data
    assert np.array_equal(a, b)
    assert a.min() >= -1 and a.max() <= 1


def test_generator_errors(rng):
    spec = GeneratorSpec(image_size=32, n_upsamples=2, n_blocks=4, **SMALL_G)
    g = Generator(spec, rng)
    with pytest.raises(DomainError):
        g(masks(rng, 1, 32), 3)
    with pytest.raises(DimensionError):
        g(masks(rng, 1, 64), 0)


def test_parameter_count_is_function_of_spec():
    spec = GeneratorSpec(image_size=32, n_upsamples=2, n_blocks=4, **SMALL_G)
    a = Generator(spec, np.random.default_rng(0))
    b = Generator(GeneratorSpec.from_dict(spec.to_dict()), np.random.default_rng(5))
    assert a.num_parameters() == b.num_parameters()
    assert [p.shape for p in a.parameters()] == [p.shape for p in b.parameters()]


def test_discriminator_patch_shapes(rng):
    spec = DiscriminatorSpec(base_channels=8)
    d = MultiscaleDiscriminator(spec, rng)
    S = 64
    scores, feats = d(masks(rng, 2, S), Tensor(rng.standard_normal((2, 2, S, S))), Tensor(rng.standard_normal((2, 3, S, S))))
    sizes = []
    for s0 in (S, S // 2):
        s = s0
        for stride in (2, 2, 1):
            s = conv_out_size(s, 4, stride, 1)
        sizes.append(s)
    assert sizes == [15, 7]
    assert [sc.shape for sc in scores] == [(2, 1, 15, 15), (2, 1, 7, 7)]
    assert len(feats) == 2 and all(len(f) == 2 for f in feats)


def test_discriminator_zero_weights(rng):
    spec = DiscriminatorSpec(base_channels=8)
    d = MultiscaleDiscriminator(spec, rng)
    for p in d.parameters():
        p.data[:] = 0
    scores, _ = discriminator_forward(
        masks(rng, 1, 32), Tensor(rng.standard_normal((1, 2, 32, 32))), Tensor(rng.standard_normal((1, 3, 32, 32))), spec, d
    )
    for s in scores:
        np.testing.assert_array_equal(s.data, 0)


def test_discriminator_spatial_mismatch(rng):
    d = MultiscaleDiscriminator(DiscriminatorSpec(base_channels=8), rng)
    with pytest.raises(DimensionError):
        d(masks(rng, 1, 32), Tensor(np.zeros((1, 2, 16, 16))), Tensor(np.zeros((1, 3, 32, 32))))


def test_segmentor_shapes_and_codomain(rng):
    seg = Segmentor(SegmentorSpec(**SMALL_SEG), rng)
    x = Tensor(rng.standard_normal((2, 2, 32, 32)))
    logits = seg(x)
    assert logits.shape == (2, 3, 32, 32)
    pred = seg.predict(x.data)
    assert pred.min() >= 0 and pred.max() <= 2


def test_segmentor_features_are_probabilities(rng):
    frozen = FrozenSegmentor(Segmentor(SegmentorSpec(**SMALL_SEG), rng))
    f = segmentor_features(Tensor(rng.standard_normal((2, 2, 32, 32))), frozen).data
    np.testing.assert_allclose(f.sum(axis=1), 1.0, atol=1e-5)


def test_decoder_feature_mode(rng):
    spec = SegmentorSpec(feature_mode="decoder", **SMALL_SEG)
    seg = Segmentor(spec, rng)
    assert seg.features(Tensor(rng.standard_normal((1, 2, 32, 32)))).shape == (1, spec.feat_channels, 32, 32)


def test_frozen_segmentor_gets_no_grads(rng):
    frozen = FrozenSegmentor(Segmentor(SegmentorSpec(**SMALL_SEG), rng))
    before = frozen.segmentor.l2_norm()
    x = Tensor(rng.standard_normal((1, 2, 32, 32)).astype(np.float32), requires_grad=True)
    ops.sum(frozen.features(x)).backward()
    assert x.grad is not None
    assert all(p.grad is None for p in frozen.segmentor.parameters())
    frozen.assert_unchanged()
    assert frozen.segmentor.l2_norm() == before


def test_frozen_segmentor_detects_mutation(rng):
    frozen = FrozenSegmentor(Segmentor(SegmentorSpec(**SMALL_SEG), rng))
    frozen.segmentor.head.bias.data[0] += 1e-3
    with pytest.raises(AssertionError):
        frozen.assert_unchanged()


def test_segmentor_size_check(rng):
    seg = Segmentor(SegmentorSpec(**SMALL_SEG), rng)
    with pytest.raises(DimensionError):
        seg(Tensor(np.zeros((1, 2, 24, 24))))


def test_checkpoint_roundtrip(tmp_path, rng):
    spec = GeneratorSpec(image_size=32, n_upsamples=2, n_blocks=4, **SMALL_G)
    g = Generator(spec, rng)
    seg = Segmentor(SegmentorSpec(**SMALL_SEG), rng)
    save_checkpoint(tmp_path / "m.ckpt", {"generator": g, "segmentor": seg}, {"note": "x"})
    models, header = load_checkpoint(tmp_path / "m.ckpt")
    assert header["note"] == "x"
    assert models["generator"].spec == spec and models["segmentor"].spec == seg.spec
    assert models["generator"].checksum() == g.checksum()
    m = masks(rng, 1, 32)
    np.testing.assert_array_equal(models["generator"](m, 1).data, g(m, 1).data)
