"""
資料儲存管理模組
處理相機校正、姿勢、動作、解碼結果、手部估計與評估報告的 JSON 讀寫
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from src.core.errors import FormatError, FormatVersionError
from src.core.fisheye_camera import FisheyeCamera
from src.core.heatmap3d import DecodedJoints
from src.core.metrics import EvaluationReport
from src.core.motion_prior import MotionSequence
from src.core.pose_assembly import WholeBodyPose
from src.core.skeleton import LAYOUT_VERSION

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DECODED_VERSION = 1
HAND_ESTIMATES_VERSION = 1
CAMERA_FIELDS = ("width", "height", "cx", "cy", "forward_poly", "backward_poly")
HAND_FIELDS = ("center", "bbox", "joints", "uncertainty")


class StorageManager:
    """儲存管理器"""

    def __init__(self, data_dir: Optional[PathLike] = None):
        """
        初始化儲存管理器

        Args:
            data_dir: 相對路徑的基準目錄，預設為目前目錄
        """
        self.data_dir = Path(data_dir) if data_dir is not None else Path(".")

    def _resolve(self, path: PathLike) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.data_dir / p

    def write_json(self, path: PathLike, data: Dict[str, Any]) -> Path:
        """
        寫入 JSON（不含時間戳記，相同輸入產生相同位元組）

        Returns:
            Path: 實際寫入的路徑
        """
        target = self._resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
            f.write("\n")
        logger.debug("wrote %s", target)
        return target

    def read_json(self, path: PathLike) -> Dict[str, Any]:
        """
        讀取 JSON 物件

        Raises:
            FormatError: 檔案無法讀取或不是 JSON 物件
        """
        source = self._resolve(path)
        try:
            with open(source, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"cannot read {source}: {e}") from e
        if not isinstance(data, dict):
            raise FormatError(f"{source} must contain a JSON object")
        return data

    @staticmethod
    def _check_layout(data: Dict[str, Any], source: str) -> None:
        found = data.get("layout_version")
        if found != LAYOUT_VERSION:
            raise FormatVersionError(f"{source} layout", LAYOUT_VERSION, found if isinstance(found, int) else -1)

    # 相機
    def save_camera(self, camera: FisheyeCamera, path: PathLike) -> Path:
        return self.write_json(path, camera.to_dict())

    def load_camera(self, path: PathLike) -> FisheyeCamera:
        """
        Raises:
            FormatError: 缺少必要欄位
            CameraValidationError: 參數違反相機不變條件
        """
        data = self.read_json(path)
        missing = [k for k in CAMERA_FIELDS if k not in data]
        if missing:
            raise FormatError(f"calibration file {path} is missing {', '.join(missing)}")
        kwargs = {k: data[k] for k in CAMERA_FIELDS}
        if "fov_deg" in data:
            kwargs["fov_deg"] = float(data["fov_deg"])
        try:
            return FisheyeCamera(**kwargs)
        except (TypeError, ValueError) as e:
            raise FormatError(f"calibration file {path} has malformed fields: {e}") from e

    # 單幀姿勢
    def save_pose(self, pose: WholeBodyPose, path: PathLike) -> Path:
        return self.write_json(path, pose.to_dict())

    def load_pose(self, path: PathLike) -> WholeBodyPose:
        data = self.read_json(path)
        self._check_layout(data, "pose")
        try:
            return WholeBodyPose(
                joints=np.asarray(data["joints"], dtype=np.float64),
                uncertainty=np.asarray(data["uncertainty"], dtype=np.float64),
                valid={k: bool(v) for k, v in data.get("valid", {}).items()},
            )
        except KeyError as e:
            raise FormatError(f"pose file {path} is missing {e}") from e

    # 動作序列
    def save_motion(self, seq: MotionSequence, path: PathLike) -> Path:
        return self.write_json(path, seq.to_dict())

    def load_motion(self, path: PathLike) -> MotionSequence:
        """
        Raises:
            FormatVersionError: layout_version 不符
            FormatError: 缺少 frames
        """
        data = self.read_json(path)
        self._check_layout(data, "motion")
        if "frames" not in data:
            raise FormatError(f"motion file {path} has no frames")
        kwargs = {
            "frames": np.asarray(data["frames"], dtype=np.float64),
            "fps": float(data.get("fps", 30.0)),
        }
        if data.get("uncertainty") is not None:
            kwargs["uncertainty"] = np.asarray(data["uncertainty"], dtype=np.float64)
        if data.get("up_axis") is not None:
            kwargs["up_axis"] = np.asarray(data["up_axis"], dtype=np.float64)
        return MotionSequence(**kwargs)

    # 熱圖解碼結果
    def save_decoded(self, frames: List[DecodedJoints], image_size, path: PathLike) -> Path:
        return self.write_json(path, {
            "format": "decoded_joints",
            "version": DECODED_VERSION,
            "image_size": [int(image_size[0]), int(image_size[1])],
            "frames": [f.to_dict() for f in frames],
        })

    def load_decoded(self, path: PathLike) -> List[Dict[str, np.ndarray]]:
        """回傳逐幀的 {"uvd", "xyz", "uncertainty", "in_fov", "clamped"} 陣列"""
        data = self.read_json(path)
        self._check_format(data, "decoded_joints", DECODED_VERSION)
        frames = []
        for i, item in enumerate(data.get("frames", [])):
            try:
                frames.append({
                    "uvd": np.asarray(item["uvd"], dtype=np.float64),
                    "xyz": np.asarray(item["xyz"], dtype=np.float64),
                    "uncertainty": np.asarray(item["uncertainty"], dtype=np.float64),
                    "in_fov": np.asarray(item.get("in_fov", []), dtype=bool),
                    "clamped": np.asarray(item.get("clamped", []), dtype=bool),
                })
            except KeyError as e:
                raise FormatError(f"decoded file {path} frame {i} is missing {e}") from e
            except (TypeError, ValueError, AttributeError) as e:
                raise FormatError(f"decoded file {path} frame {i} is malformed: {e}") from e
        return frames

    # 手部估計
    def save_hand_estimates(self, frames: List[dict], path: PathLike) -> Path:
        return self.write_json(path, {
            "format": "hand_estimates",
            "version": HAND_ESTIMATES_VERSION,
            "frames": frames,
        })

    def load_hand_estimates(self, path: PathLike) -> List[dict]:
        data = self.read_json(path)
        self._check_format(data, "hand_estimates", HAND_ESTIMATES_VERSION)
        frames = data.get("frames", [])
        for i, item in enumerate(frames):
            if not isinstance(item, dict):
                raise FormatError(f"hand estimates file {path} frame {i} is not an object")
            for side in ("left", "right"):
                hand = item.get(side)
                if hand is None:
                    continue
                missing = [k for k in HAND_FIELDS if not isinstance(hand, dict) or k not in hand]
                if missing:
                    raise FormatError(
                        f"hand estimates file {path} frame {i} {side} hand is missing {', '.join(missing)}"
                    )
        return frames

    # 評估報告
    def save_report(self, report: EvaluationReport, path: PathLike) -> Path:
        return self.write_json(path, report.to_dict())

    @staticmethod
    def _check_format(data: Dict[str, Any], kind: str, version: int) -> None:
        if data.get("format") != kind:
            raise FormatError(f"expected a '{kind}' file, got '{data.get('format')}'")
        found = data.get("version")
        if found != version:
            raise FormatVersionError(kind, version, found if isinstance(found, int) else -1)
