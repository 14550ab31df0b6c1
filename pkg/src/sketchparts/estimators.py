"""Estimator-style facade over the training and inference pipeline.

SketchToShape and LatentRefiner follow the fit/predict/transform idiom with
get_params/set_params support, so they compose with scikit-learn tooling
(cloning, grid search over the exposed hyperparameters, pipelines)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .model import ModelConfig, RefineMask
from .nn import LrSchedule
from .render import Sketch, normalize_sketch
from .shapes import LabeledMesh, PartSet, decode_partset, extract_mesh
from .trainer import TrainConfig, evaluate_epoch, train_refiner, train_sketch2shape


def validate_sketch_input(X) -> list:
    """Accepts Sketch objects or raw 2-D pixel arrays; returns pixel arrays."""
    if isinstance(X, (Sketch, np.ndarray)):
        X = [X]
    out = []
    for i, item in enumerate(X):
        if isinstance(item, Sketch):
            out.append(item.pixels)
            continue
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"X[{i}] is not a 2-D grayscale image")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"X[{i}] must hold values in [0, 1]")
        out.append(arr)
    return out


def _model_config(params: dict) -> ModelConfig:
    return ModelConfig(h_d=params["h_d"], enc_layers=params["enc_layers"],
                       dec_layers=params["dec_layers"], heads=params["heads"],
                       m=params["m"], d_model=params["d_model"],
                       refiner_layers=params["refiner_layers"])


class SketchToShape(BaseEstimator):
    """fit on TrainSample lists, predict meshes (or latent part sets) from sketches."""

    def __init__(self, epochs=200, batch_size=8, lr_start=1e-5, lr_end=2e-3,
                 warmup_epochs=1, seed=0, h_d=64, enc_layers=2, dec_layers=2,
                 heads=4, m=8, d_model=32, refiner_layers=2, grid_res=32,
                 max_steps=None, stop_loss=None, include_threshold=0.5):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.warmup_epochs = warmup_epochs
        self.seed = seed
        self.h_d = h_d
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.heads = heads
        self.m = m
        self.d_model = d_model
        self.refiner_layers = refiner_layers
        self.grid_res = grid_res
        self.max_steps = max_steps
        self.stop_loss = stop_loss
        self.include_threshold = include_threshold

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            schedule=LrSchedule(self.lr_start, self.lr_end, self.warmup_epochs),
            seed=self.seed, model=_model_config(self.get_params()),
        )

    def fit(self, X, y=None):
        """X: list of TrainSample. y is ignored (targets ride on the samples)."""
        result = train_sketch2shape(self._train_config(), samples=list(X),
                                    max_steps=self.max_steps,
                                    stop_loss_full=self.stop_loss)
        self.model_ = result.model
        self.curve_ = result.curve
        self.n_steps_ = result.steps
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")

    def predict_latents(self, X) -> list:
        self._require_fitted()
        out = []
        for px in validate_sketch_input(X):
            pred = self.model_.predict(normalize_sketch(px).pixels)
            c = (pred.c >= self.include_threshold).astype(float)
            out.append(PartSet(m=self.m, d_model=self.d_model,
                               z=pred.z.tolist(), c=c.tolist()))
        return out

    def predict(self, X) -> list:
        """Meshes for each input sketch; empty mesh when nothing is present."""
        meshes = []
        for ps in self.predict_latents(X):
            parts, _ = decode_partset(ps, threshold=self.include_threshold)
            meshes.append(extract_mesh(parts, grid_res=self.grid_res)
                          if parts else LabeledMesh.empty())
        return meshes

    def score(self, X, y=None) -> float:
        """Negative mean latent L1 against the samples' own targets."""
        self._require_fitted()
        rep = evaluate_epoch(self.model_, list(X), grid_res=max(8, self.grid_res // 2),
                             n_points=200, seed=self.seed)
        return -rep["mean_loss_full"]


class LatentRefiner(BaseEstimator):
    """fit on PartSet latents; transform fills masked slots."""

    def __init__(self, epochs=200, batch_size=8, lr_start=1e-5, lr_end=2e-3,
                 warmup_epochs=1, seed=0, h_d=64, enc_layers=2, dec_layers=2,
                 heads=4, m=8, d_model=32, refiner_layers=2,
                 mask_low=0.05, mask_high=0.40, max_steps=None, stop_loss=None):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.warmup_epochs = warmup_epochs
        self.seed = seed
        self.h_d = h_d
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.heads = heads
        self.m = m
        self.d_model = d_model
        self.refiner_layers = refiner_layers
        self.mask_low = mask_low
        self.mask_high = mask_high
        self.max_steps = max_steps
        self.stop_loss = stop_loss

    def fit(self, X, y=None):
        """X: list of PartSet with ground-truth latents."""
        cfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            schedule=LrSchedule(self.lr_start, self.lr_end, self.warmup_epochs),
            seed=self.seed, model=_model_config(self.get_params()),
            mask_range=(self.mask_low, self.mask_high),
        )
        result = train_refiner(cfg, list(X), max_steps=self.max_steps,
                               stop_loss=self.stop_loss)
        self.refiner_ = result.model
        self.n_steps_ = result.steps
        return self

    def transform(self, X) -> list:
        """X: list of (z matrix with masked rows zeroed, mask bits). Returns
        full latent matrices with only the masked rows replaced."""
        if not hasattr(self, "refiner_"):
            raise RuntimeError("estimator is not fitted")
        out = []
        for z_in, bits in X:
            mask = bits if isinstance(bits, RefineMask) else RefineMask(tuple(bits))
            z_in = np.asarray(z_in, dtype=np.float64)
            filled = self.refiner_.refine(z_in, mask).data
            z = z_in.copy()
            sel = np.array(mask.bits, dtype=bool)
            z[sel] = filled[sel]
            out.append(z)
        return out
