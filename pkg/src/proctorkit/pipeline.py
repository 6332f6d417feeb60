"""End-to-end orchestration: record stream -> features -> trained models
-> evaluation reports.

Training protocol: the last quarter of the training sessions (at least
one) is held out as a validation split.  Preprocessing (imputer + scaler)
is fitted on the remaining fit sessions only and frozen; both models
consume the same transformed features.  Each model's decision threshold
is the F1-optimal cut on its own validation scores, and the temporal
model keeps the epoch snapshot with the best validation AUC.  The static
model is evaluated per frame, the temporal model per sliding-window
sequence; reports carry that granularity label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .facegeom import analyze_face_frame
from .features import (
    FeatureVector,
    Preprocessor,
    assemble,
    sequence_arrays,
)
from .gbdt import (
    GBDTModel,
    GBDTParams,
    borderline_smote,
    predict_proba,
    select_threshold,
    train_gbdt,
)
from .handgeom import min_class_distances
from .lstm import (
    LSTMModel,
    LSTMParams,
    TrainHistory,
    attach_scaler,
    predict_proba_sequences,
    train_lstm_arrays,
)
from .metrics import EvalReport, evaluate
from .records import FrameRecord, SessionStream


def extract_frame(record: FrameRecord, cfg: PipelineConfig,
                  reference_embedding=None) -> FeatureVector:
    """One frame's fused feature vector from its two analysis reports."""
    face = analyze_face_frame(record, cfg, reference_embedding)
    hand = min_class_distances(record.hands, record.detections)
    return assemble(face, hand, frame_index=record.frame_index, label=record.label)


def extract_session(stream: SessionStream, cfg: PipelineConfig,
                    reference_embedding=None) -> list[FeatureVector]:
    return [extract_frame(rec, cfg, reference_embedding) for rec in stream]


def feature_matrix(vectors: Sequence[FeatureVector]):
    """(values matrix, labels array with None -> nan encoded as -1 mask)."""
    X = np.stack([fv.values for fv in vectors])
    labels = np.array(
        [-1 if fv.label is None else int(fv.label) for fv in vectors], dtype=np.int64
    )
    return X, labels


def split_fit_val(session_ids: Sequence[str]) -> tuple[list[str], list[str]]:
    """Deterministic fit/validation partition of the training sessions."""
    ids = list(session_ids)
    if len(ids) < 2:
        return ids, ids
    n_val = max(1, round(0.25 * len(ids)))
    return ids[:-n_val], ids[-n_val:]


@dataclass
class TrainedModels:
    preprocessor: Preprocessor
    static: Optional[GBDTModel] = None
    temporal: Optional[LSTMModel] = None
    temporal_history: Optional[TrainHistory] = None


def _concat_rows(features_by_session: dict, ids: Sequence[str]):
    xs, ys = [], []
    for sid in ids:
        X, labels = feature_matrix(features_by_session[sid])
        keep = labels >= 0
        xs.append(X[keep])
        ys.append(labels[keep])
    return np.vstack(xs), np.concatenate(ys)


def _concat_sequences(features_by_session: dict, ids: Sequence[str],
                      pre: Preprocessor, w: int):
    xs, ys = [], []
    for sid in ids:
        X, labels = feature_matrix(features_by_session[sid])
        Xs, yseq = sequence_arrays(pre.transform(X), labels, w)
        if Xs.shape[0]:
            xs.append(Xs)
            ys.append(yseq)
    if not xs:
        return np.empty((0, w, 0)), np.empty(0, dtype=bool)
    return np.vstack(xs), np.concatenate(ys)


def train_models(features_by_session: dict[str, list[FeatureVector]],
                 gbdt_params: GBDTParams = GBDTParams(),
                 lstm_params: LSTMParams = LSTMParams(),
                 smote_k: int = 5,
                 seed: int = 0,
                 fit_ids: Optional[Sequence[str]] = None,
                 val_ids: Optional[Sequence[str]] = None,
                 kinds: str = "both") -> TrainedModels:
    """Fit preprocessing and the requested proctoring models."""
    ids = list(features_by_session)
    if fit_ids is None or val_ids is None:
        fit_ids, val_ids = split_fit_val(ids)

    X_fit, y_fit = _concat_rows(features_by_session, fit_ids)
    X_val, y_val = _concat_rows(features_by_session, val_ids)
    pre = Preprocessor.fit(X_fit)
    out = TrainedModels(preprocessor=pre)

    if kinds in ("static", "both"):
        Xs, ys = borderline_smote(pre.transform(X_fit), y_fit.astype(np.float64),
                                  k=smote_k, seed=seed)
        static = train_gbdt(Xs, ys, gbdt_params, seed=seed)
        static.threshold_opt = select_threshold(
            predict_proba(static, pre.transform(X_val)), y_val.astype(bool)
        )
        out.static = static

    if kinds in ("temporal", "both"):
        w = lstm_params.window
        Xq, yq = _concat_sequences(features_by_session, fit_ids, pre, w)
        Xqv, yqv = _concat_sequences(features_by_session, val_ids, pre, w)
        temporal, history = train_lstm_arrays(
            Xq, yq.astype(np.float64), lstm_params, Xqv, yqv.astype(np.float64)
        )
        temporal.threshold_opt = select_threshold(
            predict_proba_sequences(temporal, Xqv), yqv
        )
        out.temporal = attach_scaler(temporal, pre)
        out.temporal_history = history

    return out


@dataclass
class EvalBundle:
    static: EvalReport
    temporal: EvalReport
    static_scores: np.ndarray
    static_labels: np.ndarray
    temporal_scores: np.ndarray
    temporal_labels: np.ndarray


def evaluate_models(models: TrainedModels,
                    features_by_session: dict[str, list[FeatureVector]],
                    ids: Optional[Sequence[str]] = None) -> EvalBundle:
    """Score held-out sessions with both models at their stored thresholds."""
    ids = list(features_by_session) if ids is None else list(ids)
    pre = models.preprocessor

    X, y = _concat_rows(features_by_session, ids)
    static_scores = predict_proba(models.static, pre.transform(X))
    static_labels = y.astype(bool)
    static_report = evaluate(
        static_scores, static_labels, models.static.threshold_opt,
        model_id="static", granularity="frame",
    )

    w = models.temporal.params.window
    Xq, yq = _concat_sequences(features_by_session, ids, pre, w)
    temporal_scores = predict_proba_sequences(models.temporal, Xq)
    temporal_report = evaluate(
        temporal_scores, yq, models.temporal.threshold_opt,
        model_id="temporal", granularity="sequence",
    )

    return EvalBundle(
        static=static_report,
        temporal=temporal_report,
        static_scores=static_scores,
        static_labels=static_labels,
        temporal_scores=temporal_scores,
        temporal_labels=yq,
    )
