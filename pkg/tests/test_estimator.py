import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rawjpeg import RawJpegAdapter
from rawjpeg.image import synth_raw


def test_params_and_clone():
    est = RawJpegAdapter(quality=25, mode="fixed_gamma", gamma=2.0)
    params = est.get_params()
    assert params["quality"] == 25 and params["gamma"] == 2.0
    c = clone(est)
    assert c.get_params() == params and c is not est
    est.set_params(quality=75)
    assert est.quality == 75


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RawJpegAdapter().transform(np.zeros((8, 8, 3)))


@pytest.mark.parametrize("mode", ["identity", "fixed_gamma"])
def test_presets_round_trip(mode):
    img = synth_raw(0, 64, 64)
    est = RawJpegAdapter(mode=mode).fit(img)
    assert est.loss_curve_ == []
    x = est.transform(img)
    np.testing.assert_allclose(est.inverse_transform(x), img, atol=1e-9)
    assert est.fit_transform(img).shape == img.shape


def test_fit_mode_and_codec():
    img = synth_raw(4, 64, 64)
    est = RawJpegAdapter(quality=50, iterations=5, thumbnail=32).fit(img)
    assert len(est.loss_curve_) == 6 and est.params_.has_dct
    data = est.encode(img)
    assert data[:2] == b"\xff\xd8"
    out = RawJpegAdapter.decode(data)
    assert out.shape == img.shape and np.mean((out - img) ** 2) < 1e-2


def test_bad_mode_and_settings():
    img = synth_raw(0, 32, 32)
    with pytest.raises(ValueError):
        RawJpegAdapter(mode="magic").fit(img)
    with pytest.raises(ValueError):
        RawJpegAdapter(mode="identity", quality=0).fit(img)
    with pytest.raises(ValueError):
        RawJpegAdapter().fit(np.zeros((4, 4)))
