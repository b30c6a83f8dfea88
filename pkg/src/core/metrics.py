"""
評估指標
MPJPE、Procrustes 對齊後的 PA-MPJPE、骨長正規化後的 BA-MPJPE 與手部根節點對齊誤差。
輸入單位為公尺，回報單位為毫米。
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import AlignmentError, DomainError, ShapeError
from src.core.settings import settings
from src.core.skeleton import (
    LEFT_HAND,
    N_BODY,
    N_HAND,
    N_WHOLE,
    RIGHT_HAND,
    SkeletonLayout,
    body_layout,
    hand_layout,
    whole_body_layout,
)

logger = logging.getLogger(__name__)

MM = 1000.0
METRICS = ("mpjpe", "pa_mpjpe", "ba_mpjpe", "hand_root_mpjpe", "hand_root_pa_mpjpe")


def _pair(pred: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.shape[-1] != 3 or p.ndim < 2:
        raise ShapeError(f"pred {p.shape} and gt {g.shape} must both be (..., J, 3)")
    return p, g


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """平均每關節歐氏距離（毫米）"""
    p, g = _pair(pred, gt)
    return float(np.linalg.norm(p - g, axis=-1).mean() * MM)


@dataclass
class AlignmentResult:
    """s R pred + t ≈ gt；rigid 對齊時 scale 為 None"""
    rotation: np.ndarray
    translation: np.ndarray
    scale: Optional[float]
    residual_mm: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        s = 1.0 if self.scale is None else self.scale
        return s * np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def _check_spread(centered: np.ndarray, name: str) -> None:
    singular = np.linalg.svd(centered, compute_uv=False)
    if singular[0] < 1e-12:
        raise AlignmentError(f"{name} points are coincident")
    if singular[1] < 1e-9 * singular[0]:
        raise AlignmentError(f"{name} points are collinear")


def procrustes_align(pred: np.ndarray, gt: np.ndarray, with_scale: bool = True) -> AlignmentResult:
    """
    最小平方相似（或剛體）對齊

    以交叉共變異矩陣的 SVD 求解，D = diag(1, 1, sign det) 避免反射

    Raises:
        AlignmentError: 點數少於 3、共線或重合
    """
    p, g = _pair(pred, gt)
    if p.ndim != 2:
        raise ShapeError(f"procrustes_align expects a single (J, 3) pose, got {p.shape}")
    if p.shape[0] < 3:
        raise AlignmentError(f"need at least 3 points, got {p.shape[0]}")

    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    x = p - mu_p
    y = g - mu_g
    _check_spread(x, "predicted")
    _check_spread(y, "ground-truth")

    u, s, vt = np.linalg.svd(x.T @ y)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(vt.T @ u.T))
    if d[2] == 0.0:
        d[2] = 1.0
    rotation = vt.T @ np.diag(d) @ u.T

    scale = float(np.dot(s, d) / np.sum(x * x)) if with_scale else None
    factor = 1.0 if scale is None else scale
    translation = mu_g - factor * rotation @ mu_p

    aligned = factor * p @ rotation.T + translation
    return AlignmentResult(
        rotation=rotation,
        translation=translation,
        scale=scale,
        residual_mm=mpjpe(aligned, g),
    )


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray, with_scale: Optional[bool] = None) -> float:
    """Procrustes 對齊後的 MPJPE；(L, J, 3) 輸入逐幀對齊後取平均"""
    if with_scale is None:
        with_scale = bool(settings.get("metrics.with_scale", True))
    p, g = _pair(pred, gt)
    if p.ndim == 3:
        return float(np.mean([pa_mpjpe(a, b, with_scale) for a, b in zip(p, g)]))
    return procrustes_align(p, g, with_scale).residual_mm


def layout_for(n_joints: int) -> SkeletonLayout:
    layouts = {N_BODY: body_layout, N_HAND: hand_layout, N_WHOLE: whole_body_layout}
    if n_joints not in layouts:
        raise ShapeError(f"no skeleton layout with {n_joints} joints")
    return layouts[n_joints]()


def ba_mpjpe(
    pred: np.ndarray,
    gt: np.ndarray,
    reference: Optional[SkeletonLayout] = None,
    with_scale: Optional[bool] = None,
) -> float:
    """
    兩個姿勢都把骨長換成參考骨長後再算 PA-MPJPE

    Raises:
        MetricError: 輸入含長度為零的骨頭
    """
    p, g = _pair(pred, gt)
    if p.ndim == 3:
        return float(np.mean([ba_mpjpe(a, b, reference, with_scale) for a, b in zip(p, g)]))
    layout = reference or layout_for(p.shape[0])
    return pa_mpjpe(layout.normalize_bones(p), layout.normalize_bones(g), with_scale)


def hand_root_mpjpe(pred_hand: np.ndarray, gt_hand: np.ndarray) -> Tuple[float, float]:
    """手腕（索引 0）對齊後的 (MPJPE, PA-MPJPE)"""
    p, g = _pair(pred_hand, gt_hand)
    if p.shape[-2] != N_HAND:
        raise ShapeError(f"hands must have {N_HAND} joints, got {p.shape[-2]}")
    p = p - p[..., :1, :]
    g = g - g[..., :1, :]
    return mpjpe(p, g), pa_mpjpe(p, g)


@dataclass
class EvaluationReport:
    """評估報告"""
    metric: str
    value_mm: float
    alignment: str
    n_frames: int
    per_frame: Optional[List[float]] = None
    mean_mm: Optional[float] = None
    std_mm: Optional[float] = None
    samples: Optional[int] = None

    def to_dict(self) -> dict:
        data = {
            "metric": self.metric,
            "value_mm": float(self.value_mm),
            "alignment": self.alignment,
            "n_frames": int(self.n_frames),
        }
        if self.per_frame is not None:
            data["per_frame"] = [float(v) for v in self.per_frame]
        if self.samples is not None:
            data["samples"] = int(self.samples)
            data["mean_mm"] = float(self.mean_mm)
            data["std_mm"] = float(self.std_mm)
        return data


def _frame_metric(metric: str, pred: np.ndarray, gt: np.ndarray, with_scale: bool) -> float:
    if metric == "mpjpe":
        return mpjpe(pred, gt)
    if metric == "pa_mpjpe":
        return pa_mpjpe(pred, gt, with_scale)
    if metric == "ba_mpjpe":
        return ba_mpjpe(pred, gt, with_scale=with_scale)
    if metric in ("hand_root_mpjpe", "hand_root_pa_mpjpe"):
        pick = 0 if metric == "hand_root_mpjpe" else 1
        if pred.shape[0] == N_WHOLE:
            values = [hand_root_mpjpe(pred[part], gt[part])[pick] for part in (LEFT_HAND, RIGHT_HAND)]
            return float(np.mean(values))
        return hand_root_mpjpe(pred, gt)[pick]
    raise DomainError(f"unknown metric '{metric}', expected one of {', '.join(METRICS)}")


def evaluate_sequence(
    pred: np.ndarray,
    gt: np.ndarray,
    metric: str = "mpjpe",
    with_scale: Optional[bool] = None,
    per_frame: bool = False,
) -> EvaluationReport:
    """
    逐幀計算指標後取平均

    Args:
        pred: (L, J, 3) 預測
        gt: (L, J, 3) 真值
        metric: METRICS 之一
        with_scale: PA 對齊是否含尺度
        per_frame: 報告是否附上逐幀數值
    """
    if with_scale is None:
        with_scale = bool(settings.get("metrics.with_scale", True))
    p, g = _pair(pred, gt)
    if p.ndim == 2:
        p, g = p[None], g[None]

    values = [_frame_metric(metric, a, b, with_scale) for a, b in zip(p, g)]
    alignment = "none"
    if metric in ("pa_mpjpe", "ba_mpjpe", "hand_root_pa_mpjpe"):
        alignment = "similarity" if with_scale else "rigid"
    return EvaluationReport(
        metric=metric,
        value_mm=float(np.mean(values)),
        alignment=alignment,
        n_frames=len(values),
        per_frame=values if per_frame else None,
    )


def evaluate_samples(
    preds: Sequence[np.ndarray],
    gt: np.ndarray,
    metric: str = "mpjpe",
    with_scale: Optional[bool] = None,
) -> EvaluationReport:
    """多個樣本各自評估，回報平均與標準差；value_mm 為樣本平均"""
    if not preds:
        raise DomainError("no predictions to evaluate")
    reports = [evaluate_sequence(p, gt, metric, with_scale) for p in preds]
    values = np.array([r.value_mm for r in reports])
    first = reports[0]
    return EvaluationReport(
        metric=metric,
        value_mm=float(values.mean()),
        alignment=first.alignment,
        n_frames=first.n_frames,
        mean_mm=float(values.mean()),
        std_mm=float(values.std()),
        samples=len(reports),
    )
