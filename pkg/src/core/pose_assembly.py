"""
全身姿勢組裝
將手部裁切座標系中的手部關節旋轉到相機座標系，平移到身體手腕，
組成 57 個關節的全身姿勢
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from src.core.errors import DomainError, GeometryError, ShapeError
from src.core.fisheye_camera import FisheyeCamera
from src.core.patch_sampler import TangentFrame, tangent_frame
from src.core.settings import settings
from src.core.skeleton import (
    L_WRIST,
    LAYOUT_VERSION,
    LEFT_HAND,
    N_BODY,
    N_HAND,
    N_WHOLE,
    R_WRIST,
    RIGHT_HAND,
    whole_body_layout,
)

logger = logging.getLogger(__name__)


@dataclass
class HandEstimate:
    """單隻手的估計：裁切座標系中的關節（手腕在索引 0）與其切平面座標系"""
    joints: np.ndarray
    uncertainty: np.ndarray
    frame: TangentFrame

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.uncertainty = np.asarray(self.uncertainty, dtype=np.float64)
        if self.joints.shape != (N_HAND, 3) or self.uncertainty.shape != (N_HAND,):
            raise ShapeError(
                f"hand estimate must be ({N_HAND}, 3) joints with {N_HAND} uncertainties, "
                f"got {self.joints.shape} and {self.uncertainty.shape}"
            )


@dataclass
class WholeBodyPose:
    """57 個關節（公尺，相機座標系）與不確定度"""
    joints: np.ndarray
    uncertainty: np.ndarray
    valid: Dict[str, bool] = field(default_factory=lambda: {"body": True, "left": True, "right": True})

    def to_dict(self) -> dict:
        return {
            "layout_version": LAYOUT_VERSION,
            "joints": self.joints.tolist(),
            "uncertainty": self.uncertainty.tolist(),
            "valid": {k: bool(self.valid.get(k, False)) for k in ("body", "left", "right")},
        }


def hand_frame(center: Sequence[float], bbox_size: float, camera: FisheyeCamera) -> TangentFrame:
    """以偵測框建立手部座標系（偏移取框大小的一半）"""
    return tangent_frame(center, bbox_size / 2.0, camera)


def hand_rotation(frame: TangentFrame) -> np.ndarray:
    """
    R 的各欄為 (v^x, v^y, v^z)

    Raises:
        GeometryError: 座標系不是正交或不是右手系
    """
    rotation = frame.axes
    if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9):
        raise GeometryError("hand frame is not orthonormal")
    if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
        raise GeometryError("hand frame is not right-handed")
    return rotation


def attach_hand(local_hand: np.ndarray, rotation: np.ndarray, body_wrist: np.ndarray) -> np.ndarray:
    """
    旋轉後平移，使手部的索引 0 與身體手腕重合

    Args:
        local_hand: (21, 3) 裁切座標系中的關節
        rotation: 3x3 旋轉
        body_wrist: 身體手腕位置

    Returns:
        np.ndarray: (21, 3) 相機座標系中的關節
    """
    local = np.asarray(local_hand, dtype=np.float64)
    if local.shape != (N_HAND, 3):
        raise ShapeError(f"hand must be ({N_HAND}, 3), got {local.shape}")
    rotated = local @ np.asarray(rotation, dtype=np.float64).T
    return rotated - rotated[0] + np.asarray(body_wrist, dtype=np.float64)


def rest_hand_offsets(part: slice) -> np.ndarray:
    """靜止姿勢下手部各關節相對手腕的位移"""
    rest = whole_body_layout().rest_pose()
    return rest[part] - rest[part.start]


def _bounded(uncertainty: np.ndarray, max_u: float, what: str) -> np.ndarray:
    """夾到 [0, max_u]"""
    if not np.all(np.isfinite(uncertainty)):
        raise DomainError(f"{what} uncertainty must be finite")
    return np.clip(uncertainty, 0.0, max_u)


def assemble(
    body: np.ndarray,
    body_uncertainty: np.ndarray,
    left: Optional[HandEstimate],
    right: Optional[HandEstimate],
) -> WholeBodyPose:
    """
    組合身體與雙手

    缺少的手以靜止姿勢釘在身體手腕上，不確定度全設為上限，並標為無效。

    Raises:
        ShapeError: 身體關節數不符
        DomainError: 不確定度含非有限值
    """
    body = np.asarray(body, dtype=np.float64)
    body_uncertainty = np.asarray(body_uncertainty, dtype=np.float64)
    if body.shape != (N_BODY, 3) or body_uncertainty.shape != (N_BODY,):
        raise ShapeError(
            f"body must be ({N_BODY}, 3) with {N_BODY} uncertainties, "
            f"got {body.shape} and {body_uncertainty.shape}"
        )

    max_u = float(settings.get("heatmap.max_uncertainty", 0.05))
    joints = np.empty((N_WHOLE, 3))
    unc = np.empty(N_WHOLE)
    joints[:N_BODY] = body
    unc[:N_BODY] = _bounded(body_uncertainty, max_u, "body")
    valid = {"body": True}

    for name, estimate, part, wrist in (("left", left, LEFT_HAND, L_WRIST), ("right", right, RIGHT_HAND, R_WRIST)):
        if estimate is None:
            joints[part] = body[wrist] + rest_hand_offsets(part)
            unc[part] = max_u
            valid[name] = False
            logger.debug("%s hand missing, pinned rest hand to the wrist", name)
        else:
            joints[part] = attach_hand(estimate.joints, hand_rotation(estimate.frame), body[wrist])
            unc[part] = _bounded(estimate.uncertainty, max_u, f"{name} hand")
            valid[name] = True
        # 手腕與身體手腕逐位相同
        joints[part.start] = body[wrist]

    return WholeBodyPose(joints=joints, uncertainty=unc, valid=valid)
