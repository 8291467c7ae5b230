import warnings

import numpy as np
import pytest

from rawjpeg import codec
from rawjpeg.codec import NoPayloadWarning, decode, decode_fast, encode, invert_lut_f32
from rawjpeg.container import encode_jpeg, insert_com
from rawjpeg.exceptions import PayloadError
from rawjpeg.metrics import psnr
from rawjpeg.fitter import RawParams, constrain, preset
from rawjpeg.payload import quantize
from rawjpeg.transforms import AdapterParams, ColorTransform, invert_lut, post_decode


def _params(seed, use_dct=True):
    r = np.random.default_rng(seed)
    return quantize(constrain(RawParams(r.standard_normal((100, 100)), r.standard_normal((3, 128)),
                                        r.standard_normal((8, 8)) if use_dct else None)))


@pytest.mark.parametrize("shape", [(64, 96, 3), (37, 53, 3), (150, 77, 3)])
def test_fast_matches_reference(corpus, shape):
    img = corpus[2][:shape[0], :shape[1]]
    data = encode(img, _params(1), 50)
    ref, p_ref = decode(data)
    fast, p_fast = decode_fast(data)
    assert p_ref == p_fast
    assert fast.dtype == np.float32
    assert np.abs(fast - ref).max() <= 1e-5


def test_fast_pipeline_color_off_lattice(rng):
    # unquantized LUTs and a color stage, over several row chunks
    p = constrain(RawParams(rng.standard_normal((100, 100)), rng.standard_normal((3, 128)), rng.standard_normal((8, 8))))
    assert not codec._on_lattice(p.luts)
    ccm = np.array([[1.2, -0.1, -0.1], [-0.05, 1.1, -0.05], [0.0, -0.2, 1.2]])
    p = AdapterParams(p.luts, p.gamma, p.dct_scale, ColorTransform([1.5, 1.0, 1.8], ccm))
    u8 = rng.integers(0, 256, (141, 70, 3)).astype(np.uint8)
    ref = post_decode(u8 / 255.0, p)
    assert np.abs(codec.post_decode_u8_fast(u8, p) - ref).max() <= 1e-5


def test_fast_lut_inversion(rng):
    luts = _params(3).luts
    y = rng.random((40, 40, 3)).astype(np.float32)
    np.testing.assert_allclose(invert_lut_f32(y, luts), invert_lut(y.astype(np.float64), luts), atol=2e-6)


def test_fast_lut_inversion_off_lattice(rng):
    # unquantized LUTs take the segment-search path
    luts = constrain(RawParams(np.zeros((100, 100)), rng.standard_normal((3, 128)))).luts
    assert not codec._on_lattice(luts)
    y = rng.random((40, 40, 3)).astype(np.float32)
    np.testing.assert_allclose(invert_lut_f32(y, luts), invert_lut(y.astype(np.float64), luts), atol=2e-6)


def test_fast_gamma_inversion(rng):
    u8 = rng.integers(0, 256, (33, 47, 3)).astype(np.uint8)
    grid = _params(4).gamma
    from rawjpeg.transforms import invert_gamma
    ref = invert_gamma(u8 / 255.0, grid)
    np.testing.assert_allclose(codec.invert_gamma_u8(u8, grid), ref, atol=2e-6)
    assert np.all(codec.invert_gamma_u8(np.zeros((2, 2, 3), np.uint8), grid) == 0)


def test_identity_preset_equals_plain_jpeg(corpus):
    img = corpus[0]
    data = encode(img, preset("identity"), 95)
    ref, _ = decode(data)
    plain = codec.container.decode_jpeg(encode_jpeg(img, 95))
    # u16 LUT codes move a few samples across an 8-bit rounding boundary
    assert psnr(ref, img) == pytest.approx(psnr(plain, img), abs=0.02)


def test_fixed_gamma_beats_plain_on_dark_image(corpus):
    img = corpus[1]
    plain = codec.container.decode_jpeg(encode_jpeg(img, 50))
    rec, _ = decode(encode(img, preset("fixed_gamma"), 50))
    assert np.mean((rec - img) ** 2) < np.mean((plain - img) ** 2)


def test_foreign_jpeg_warns(rng):
    data = encode_jpeg(rng.random((16, 16, 3)), 80)
    for fn in (decode, decode_fast):
        with pytest.warns(NoPayloadWarning):
            img, params = fn(data)
        assert params is None and img.shape == (16, 16, 3)


def test_corrupt_payload_raises(rng):
    data = insert_com(encode_jpeg(rng.random((16, 16, 3)), 80), "RJA:!!notbase64")
    with pytest.raises(PayloadError):
        decode(data)
    with pytest.raises(PayloadError):
        decode_fast(data)


def test_duplicate_payload_warns(rng):
    img = rng.random((16, 16, 3))
    data = encode(img, preset("identity"), 80)
    data = insert_com(data, codec.payload.serialize(preset("fixed_gamma")))
    with pytest.warns(UserWarning, match="first"):
        _, params = decode(data)
    assert params == preset("fixed_gamma")


def test_encode_embeds_exact_params(rng):
    p = _params(5)
    img = rng.random((32, 32, 3))
    _, got = decode(encode(img, p, 60))
    assert got == p


def test_warm_up_runs():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        codec.warm_up()
