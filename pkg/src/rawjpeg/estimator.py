"""scikit-learn style wrapper around fitting, pre-encoding and decoding.

``X`` is a single raw image ``(H, W, 3)``. ``fit`` learns the adapter
coefficients, ``transform`` maps a raw image into the JPEG-ready domain and
``inverse_transform`` undoes it. ``encode``/``decode`` go through real JPEG
bytes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import codec
from .fitter import FitConfig, fit_trace, preset
from .transforms import post_decode, pre_encode
from .validation import check_image

MODES = ("fit", "identity", "fixed_gamma")


class RawJpegAdapter(TransformerMixin, BaseEstimator):
    """Invertible pre-processing that makes raw images survive JPEG.

    Parameters mirror :class:`FitConfig`; ``mode`` selects per-image fitting
    or one of the non-fitted presets (``gamma`` is used by ``fixed_gamma``).

    Attributes:
        params_: the fitted, already quantized :class:`AdapterParams`.
        loss_curve_: fit objective per iteration (empty for presets).
    """

    def __init__(self, quality=50, mode="fit", iterations=200, step_size=0.03, thumbnail=256,
                 use_dct=True, loss_weights=(1.0, 0.1, 0.1), rng_seed=0, gamma=2.2):
        self.quality = quality
        self.mode = mode
        self.iterations = iterations
        self.step_size = step_size
        self.thumbnail = thumbnail
        self.use_dct = use_dct
        self.loss_weights = loss_weights
        self.rng_seed = rng_seed
        self.gamma = gamma

    def _config(self) -> FitConfig:
        return FitConfig(quality=self.quality, iterations=self.iterations, step_size=self.step_size,
                         thumbnail=self.thumbnail, use_dct=self.use_dct,
                         loss_weights=tuple(self.loss_weights), rng_seed=self.rng_seed)

    def fit(self, X, y=None):
        X = check_image(X, name="X")
        if self.mode == "fit":
            result = fit_trace(X, self._config())
            self.params_ = result.params
            self.loss_curve_ = result.losses
        elif self.mode in ("identity", "fixed_gamma"):
            self._config()  # validate shared settings even when not fitting
            self.params_ = preset(self.mode, gamma=self.gamma, use_dct=False)
            self.loss_curve_ = []
        else:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return pre_encode(check_image(X, name="X"), self.params_)

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        return post_decode(check_image(X, name="X"), self.params_)

    def encode(self, X) -> bytes:
        """JPEG bytes of ``X`` with the fitted coefficients embedded."""
        check_is_fitted(self, "params_")
        return codec.encode(X, self.params_, self.quality)

    @staticmethod
    def decode(data: bytes) -> np.ndarray:
        img, _ = codec.decode(data)
        return img
