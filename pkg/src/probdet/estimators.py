"""Scikit-learn style wrappers around the fusion and post-processing steps.

Both transformers are stateless: ``fit`` only validates hyperparameters,
and ``X`` is the per-frame nested detection structure used throughout
(``X[frame][source]`` is a detection list). The flat constructor
parameters make the post-processor directly usable with ``clone`` and
parameter search utilities.
"""

from __future__ import annotations

from typing import List, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .core import Detection
from .heuristics import PipelineConfig, run_pipeline
from .merge import MergeConfig, merge_ensemble


class EnsembleMerger(BaseEstimator, TransformerMixin):
    """Fuse per-frame multi-source detections into single observations."""

    def __init__(self, lambda_iou: float = 0.5, strategy: str = "most_confident",
                 merge_within_sources_first: bool = False):
        self.lambda_iou = lambda_iou
        self.strategy = strategy
        self.merge_within_sources_first = merge_within_sources_first

    def _config(self) -> MergeConfig:
        return MergeConfig(lambda_iou=self.lambda_iou, strategy=self.strategy)

    def fit(self, X=None, y=None):
        self._config()  # validate hyperparameters
        return self

    def transform(self, X: Sequence[Sequence[Sequence[Detection]]]) -> List[List[Detection]]:
        config = self._config()
        return [
            merge_ensemble(sources, config, self.merge_within_sources_first)
            for sources in X
        ]


class DetectionPostProcessor(BaseEstimator, TransformerMixin):
    """Full pipeline: fusion followed by the post-processing heuristics."""

    def __init__(
        self,
        confidence_threshold: float = 0.0,
        box_reduction_ratio: float = 0.0,
        covariance_scale: float = 0.0,
        final_nms_iou: float = 1.0,
        label_smoothing: bool = False,
        lambda_iou: float = 0.5,
        strategy: str = "most_confident",
        num_classes: int = 30,
    ):
        self.confidence_threshold = confidence_threshold
        self.box_reduction_ratio = box_reduction_ratio
        self.covariance_scale = covariance_scale
        self.final_nms_iou = final_nms_iou
        self.label_smoothing = label_smoothing
        self.lambda_iou = lambda_iou
        self.strategy = strategy
        self.num_classes = num_classes

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            confidence_threshold=self.confidence_threshold,
            box_reduction_ratio=self.box_reduction_ratio,
            covariance_scale=self.covariance_scale,
            final_nms_iou=self.final_nms_iou,
            label_smoothing=self.label_smoothing,
            merge=MergeConfig(lambda_iou=self.lambda_iou, strategy=self.strategy),
            num_classes=self.num_classes,
        )

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X: Sequence[Sequence[Sequence[Detection]]]) -> List[List[Detection]]:
        return run_pipeline(X, self._config())
