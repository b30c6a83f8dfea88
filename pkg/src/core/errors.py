"""
例外類別定義
所有模組共用的錯誤階層，CLI 依此決定結束代碼
"""
from typing import Optional, Tuple


class EgoMocapError(Exception):
    """所有領域錯誤的基底類別"""


class DomainError(EgoMocapError):
    """輸入值超出定義域（非有限值、距離 <= 0 等）"""


class ConfigError(EgoMocapError):
    """設定值不合法"""


class ShapeError(EgoMocapError):
    """陣列形狀或關節數不符"""


class CameraError(EgoMocapError):
    """相機模型錯誤"""


class CameraValidationError(CameraError):
    """相機參數違反不變條件，或往返誤差超出容許值"""


class OutOfFOVError(CameraError):
    """點位於相機視野之外"""

    def __init__(self, rho: float, theta_max: float, message: Optional[str] = None):
        self.rho = float(rho)
        self.theta_max = float(theta_max)
        super().__init__(
            message or f"point outside field of view (rho={self.rho:.6f} rad, "
                       f"theta_max={self.theta_max:.6f} rad)"
        )


class GeometryError(EgoMocapError):
    """幾何建構失敗（射線平行於切平面、座標系非正交、髖關節重合等）"""

    def __init__(self, message: str, patch: Optional[Tuple[int, int]] = None):
        self.patch = patch
        if patch is not None:
            message = f"{message} (patch {patch[0]},{patch[1]})"
        super().__init__(message)


class DegenerateHeatmapError(EgoMocapError):
    """熱圖無法計算 soft-argmax（全為 -inf 或含 NaN）"""


class TrainingError(EgoMocapError):
    """訓練失敗"""

    def __init__(self, message: str, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(f"{message} (epoch {epoch}, step {step})")


class AlignmentError(EgoMocapError):
    """Procrustes 對齊退化（共線或重合的點）"""


class MetricError(EgoMocapError):
    """評估指標無法計算"""

    def __init__(self, message: str, bone: Optional[str] = None):
        self.bone = bone
        super().__init__(message if bone is None else f"{message}: {bone}")


class FormatError(EgoMocapError):
    """檔案格式錯誤"""


class FormatVersionError(FormatError):
    """檔案格式版本不符"""

    def __init__(self, kind: str, expected: int, found: int):
        self.kind = kind
        self.expected = expected
        self.found = found
        super().__init__(f"{kind} format version mismatch: expected {expected}, found {found}")


class UnknownFamilyError(EgoMocapError):
    """未知的合成動作類型"""
