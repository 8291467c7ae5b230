import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import psnr_direct, ssim_naive
from rawjpeg.metrics import (
    CSV_COLUMNS,
    MetricsReport,
    bpp,
    cr,
    csv_header,
    csv_row,
    format_table,
    ms_ssim,
    png16_size,
    psnr,
    ssim,
    unique_triples,
    wbpp,
)


def test_psnr_cases(rng):
    a = rng.random((16, 16, 3)) * 0.8
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    b = rng.random((16, 16, 3))
    assert psnr(a, b) == pytest.approx(psnr_direct(a, b), abs=1e-9)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_ssim_matches_naive_oracle(rng):
    a = rng.random((64, 64, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert abs(ssim(a, b) - ssim_naive(a, b)) <= 1e-6


def test_ssim_checkerboard(rng):
    x = (np.add.outer(np.arange(24), np.arange(24)) % 2).astype(float)
    x = np.repeat(x[..., None], 3, axis=-1)
    assert abs(ssim(x, 1 - x) - ssim_naive(x, 1 - x)) <= 1e-9
    assert ssim(x, 1 - x) < 0


def test_ssim_identity_and_symmetry(rng):
    a, b = rng.random((32, 32, 3)), rng.random((32, 32, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_ms_ssim(corpus):
    a = corpus[0]
    assert ms_ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    noisy = np.clip(a + 0.02 * np.random.default_rng(0).standard_normal(a.shape), 0, 1)
    v = ms_ssim(a, noisy)
    assert 0 < v < 1
    assert v == pytest.approx(ms_ssim(noisy, a), abs=1e-12)
    with pytest.raises(ValueError):
        ms_ssim(a[:100, :100], noisy[:100, :100])


def test_rate_metrics():
    assert bpp(1000, 100, 10) == 8.0
    assert cr(10_000, 1000) == 10.0
    with pytest.raises(ValueError):
        bpp(10, 0, 5)
    with pytest.raises(ValueError):
        cr(0, 5)


def test_wbpp():
    flat = np.full((4, 4, 3), 0.3)
    assert unique_triples(flat) == 1
    assert wbpp(2.5, flat) == 2.5
    four = np.zeros((2, 2, 3))
    four[0, 1] = 0.25
    four[1, 0] = 0.5
    four[1, 1] = [0.1, 0.2, 0.3]
    assert unique_triples(four) == 4
    assert wbpp(1.0, four) == pytest.approx(1 / math.log2(5))
    assert math.log2(5) == pytest.approx(2.3219, abs=1e-4)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31))
def test_psnr_symmetric_and_ssim_bounded(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((16, 16, 3)), r.random((16, 16, 3))
    assert psnr(a, b) == psnr(b, a)
    assert -1 <= ssim(a, b) <= 1


def test_com_overhead_arithmetic():
    # a COM segment adds 4 + len(text) bytes, i.e. 8 * (4 + n) / (W H) bpp
    w, h, n = 512, 512, 27556
    assert bpp(n + 4, w, h) == pytest.approx(8 * (4 + n) / (w * h))


def test_report_and_csv(corpus):
    a = corpus[1]
    r = MetricsReport.compute(a, a, file_bytes=5000)
    assert r.psnr == math.inf and r.ssim == pytest.approx(1.0)
    assert r.cr == pytest.approx(png16_size(a) / 5000)
    assert csv_header().split(",") == list(CSV_COLUMNS)
    row = csv_row(r, label="x", quality=50)
    assert row.split(",")[:2] == ["x", "50"] and len(row.split(",")) == len(CSV_COLUMNS)
    small = MetricsReport.compute(a[:64, :64], a[:64, :64], file_bytes=10, reference_bytes=100)
    assert math.isnan(small.ms_ssim) and small.cr == 10.0
    table = format_table([{"a": 1.0, "b": "z"}, {"a": math.inf, "b": "y"}], ["a", "b"])
    assert "inf" in table and "1.0000" in table
