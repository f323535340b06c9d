"""scikit-learn compatible wrappers around the pipeline stages.

``SpectrogramTransformer`` turns I/Q frames into images; the two classifiers
fit on those images.  Hyperparameters live in ``__init__`` so ``get_params``,
``set_params`` and ``sklearn.base.clone`` work unchanged.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import training
from .radar import Dataset
from .tfa import BETA, TFAConfig, transform_array
from .validation import check_images, check_iq, check_labels


class SpectrogramTransformer(TransformerMixin, BaseEstimator):
    """Stateless STFT / CWT image transform of ``[n, 2, T]`` complex frames."""

    def __init__(self, method="stft", fs_hz=500.0, window_len=64, hop=4, window_fn="hann",
                 w0=6.0, fmin=2.0, fmax=60.0, n_scales=64, height=64, width=64, beta=BETA):
        self.method = method
        self.fs_hz = fs_hz
        self.window_len = window_len
        self.hop = hop
        self.window_fn = window_fn
        self.w0 = w0
        self.fmin = fmin
        self.fmax = fmax
        self.n_scales = n_scales
        self.height = height
        self.width = width
        self.beta = beta

    def _config(self) -> TFAConfig:
        return TFAConfig(self.method, self.window_len, self.hop, self.window_fn, self.w0, self.fmin,
                         self.fmax, self.n_scales, self.height, self.width, self.beta)

    @staticmethod
    def _frames(x):
        if isinstance(x, Dataset):
            return np.stack([f.channels for f in x.frames]), x.fs_hz
        return check_iq(x), None

    def fit(self, x, y=None):
        frames, _ = self._frames(x)
        self.n_samples_in_ = frames.shape[-1]
        return self

    def transform(self, x):
        check_is_fitted(self, "n_samples_in_")
        frames, fs = self._frames(x)
        images, fax, tax = transform_array(frames, fs or self.fs_hz, self._config())
        self.freq_axis_, self.time_axis_ = fax, tax
        return images


class _ImageClassifier(ClassifierMixin, BaseEstimator):
    _trainer = None

    def _train_config(self) -> training.TrainConfig:
        names = set(training.TrainConfig.__dataclass_fields__)
        return training.TrainConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, x, y, validation_data=None):
        x = check_images(x)
        y = check_labels(y, x.shape[0])
        self.classes_, enc = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        val = None
        if validation_data is not None:
            vx = check_images(validation_data[0])
            vy = np.searchsorted(self.classes_, check_labels(validation_data[1], vx.shape[0]))
            val = (vx, vy)
        res = type(self)._trainer(x, enc, self._train_config(), self.classes_.size, val)
        self._store(res)
        self.history_ = res.history
        self.n_features_in_ = int(np.prod(x.shape[1:]))
        return self

    def _store(self, res):
        raise NotImplementedError

    def predict_proba(self, x):
        check_is_fitted(self, "classes_")
        return training.classify(self.model_, check_images(x))

    def predict(self, x):
        check_is_fitted(self, "classes_")
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]

    def evaluate(self, x, y, timing_passes: int = 100) -> training.Metrics:
        check_is_fitted(self, "classes_")
        x = check_images(x)
        y = np.searchsorted(self.classes_, check_labels(y, x.shape[0]))
        return training.evaluate(self.model_, x, y, timing_passes, self.history_)


class DeDCGANClassifier(_ImageClassifier):
    """Discriminator of a jointly trained GAN used as a ``K``-class classifier."""

    _trainer = staticmethod(training.train_gan)

    def __init__(self, epochs=50, batch_size=16, lr_g=2e-4, lr_d=2e-4, beta1=0.5, beta2=0.999,
                 adv_weight=1.0, cls_weight=1.0, label_smoothing=0.9, latent_dim=100, seed=0,
                 activation="selu", kernel="deformable", kernel_size=4, d_channels=(16, 32, 64, 128),
                 g_channels=(64, 32, 16, 8), augment_with_generated=False, augment_weight=0.5,
                 dtype="float32"):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.beta1 = beta1
        self.beta2 = beta2
        self.adv_weight = adv_weight
        self.cls_weight = cls_weight
        self.label_smoothing = label_smoothing
        self.latent_dim = latent_dim
        self.seed = seed
        self.activation = activation
        self.kernel = kernel
        self.kernel_size = kernel_size
        self.d_channels = d_channels
        self.g_channels = g_channels
        self.augment_with_generated = augment_with_generated
        self.augment_weight = augment_weight
        self.dtype = dtype

    def _store(self, res):
        self.discriminator_ = res.model
        self.generator_ = res.generator

    @property
    def model_(self):
        return self.discriminator_

    def generate(self, count: int, seed: int = 0) -> np.ndarray:
        """Generated images mapped back to ``[0, 1]``."""
        check_is_fitted(self, "generator_")
        return (training.generate(self.generator_, count, seed) + 1.0) / 2.0

    def realness(self, x) -> np.ndarray:
        check_is_fitted(self, "discriminator_")
        return training.realness(self.discriminator_, check_images(x))


class CNNClassifier(_ImageClassifier):
    """Conventional conv / batch-norm / max-pool baseline."""

    _trainer = staticmethod(training.train_cnn)

    def __init__(self, epochs=50, batch_size=16, lr_d=2e-4, beta1=0.5, beta2=0.999, seed=0,
                 cnn_channels=(24, 48, 96, 192), dtype="float32"):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_d = lr_d
        self.beta1 = beta1
        self.beta2 = beta2
        self.seed = seed
        self.cnn_channels = cnn_channels
        self.dtype = dtype

    def _store(self, res):
        self.model_ = res.model
