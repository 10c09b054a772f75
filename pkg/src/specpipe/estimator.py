"""Scikit-learn style wrapper around calibration and throughput prediction.

``X`` rows are policy tuples ``(bs_prefill, bs_decoding, bs_draft,
n_cand)`` and ``y`` is measured throughput in tokens/second, so the
calibrated cost model composes with the usual model-selection tooling
(cross-validation, pipelines, grid search over estimator parameters).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .planner import calibrate, predict_throughput
from .types import HardwareProfile, ModelSpec, Policy, Workload

DEFAULT_FREE_PARAMS = (
    "t_attn_cpu",
    "t_ffn_gpu",
    "t_target_prefill_gpu",
    "g2c_bandwidth",
    "t_draft_prefill_gpu",
    "t_draft_decode_gpu",
    "acceptance_p",
)


class ThroughputEstimator(RegressorMixin, BaseEstimator):
    """Predicts offloaded-inference throughput for policy 4-tuples.

    ``fit`` calibrates the selected hardware primitives (and optionally
    the acceptance probability) against measured throughput; ``predict``
    evaluates the analytic cost model with the fitted profile.
    """

    def __init__(
        self,
        hardware: HardwareProfile = None,
        target_model: ModelSpec = None,
        draft_model: ModelSpec = None,
        workload: Workload = None,
        free_params: tuple = DEFAULT_FREE_PARAMS,
        residual_threshold: float = 2.0,
        n_starts: int = 8,
        damping: float = 0.08,
    ):
        self.hardware = hardware
        self.target_model = target_model
        self.draft_model = draft_model
        self.workload = workload
        self.free_params = free_params
        self.residual_threshold = residual_threshold
        self.n_starts = n_starts
        self.damping = damping

    @staticmethod
    def _policies(X: np.ndarray) -> list[Policy]:
        return [Policy(*(int(v) for v in row)) for row in X]

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_features=4)
        if X.shape[1] != 4:
            raise ValueError("X must have exactly 4 columns (policy tuples)")
        observations = list(zip(self._policies(X), (float(v) for v in y)))
        result = calibrate(
            observations,
            self.workload,
            self.hardware,
            self.target_model,
            self.draft_model,
            free_params=tuple(self.free_params),
            residual_threshold=self.residual_threshold,
            n_starts=self.n_starts,
            damping=self.damping,
        )
        self.hardware_ = result.hardware
        self.workload_ = result.workload
        self.fitted_params_ = result.fitted
        self.residuals_ = result.residuals
        self.n_features_in_ = 4
        return self

    def predict(self, X):
        check_is_fitted(self, "hardware_")
        X = check_array(X, ensure_min_features=4)
        return np.array(
            [
                predict_throughput(
                    p, self.workload_, self.hardware_, self.target_model, self.draft_model
                ).throughput
                for p in self._policies(X)
            ]
        )
