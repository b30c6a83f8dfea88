"""
魚眼相機模型
Scaramuzza 式全向相機：正向多項式 f(rho) 將入射參數映射為影像半徑，
反向多項式 f'(rho') 將影像半徑映射為軸向分量
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from src.core.errors import CameraError, CameraValidationError, DomainError, OutOfFOVError
from src.core.settings import settings

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def eval_poly(coeffs: Sequence[float], arg: ArrayLike) -> Union[float, np.ndarray]:
    """
    以 Horner 法計算多項式

    Args:
        coeffs: 係數 k_0..k_p（依次方遞增）
        arg: 自變數，可為純量或陣列

    Returns:
        多項式值，形狀與 arg 相同

    Raises:
        DomainError: 係數為空或自變數含非有限值
    """
    if len(coeffs) == 0:
        raise DomainError("polynomial has no coefficients")

    x = np.asarray(arg, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("polynomial argument must be finite")

    result = np.full_like(x, float(coeffs[-1]))
    for c in reversed(coeffs[:-1]):
        result = result * x + float(c)

    if result.ndim == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class FisheyeCamera:
    """校正後的全向相機（建構後不可變）"""
    width: int
    height: int
    cx: float
    cy: float
    forward_poly: Tuple[float, ...]
    backward_poly: Tuple[float, ...]
    fov_deg: float = 190.0

    def __post_init__(self):
        object.__setattr__(self, "forward_poly", tuple(float(c) for c in self.forward_poly))
        object.__setattr__(self, "backward_poly", tuple(float(c) for c in self.backward_poly))

        if self.width <= 0 or self.height <= 0:
            raise CameraValidationError(f"image size must be positive, got {self.width}x{self.height}")
        if not self.forward_poly or not self.backward_poly:
            raise CameraValidationError("both polynomials must be non-empty")
        if not (0.0 < self.fov_deg <= 360.0):
            raise CameraValidationError(f"fov_deg must lie in (0, 360], got {self.fov_deg}")
        # 光軸必須對應到正的 z
        if self.backward_poly[0] <= 0.0:
            raise CameraValidationError(
                f"backward polynomial must satisfy f'(0) > 0, got {self.backward_poly[0]}"
            )

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.cx, self.cy], dtype=np.float64)

    @property
    def theta_max(self) -> float:
        """與光軸的最大入射角（弧度）"""
        return math.radians(self.fov_deg) / 2.0

    @property
    def image_size(self) -> Tuple[int, int]:
        """(H, W)"""
        return self.height, self.width

    def project(self, point: ArrayLike) -> np.ndarray:
        """
        將相機座標系的 3D 點投影到影像

        Args:
            point: (..., 3) 點，單位公尺

        Returns:
            np.ndarray: (..., 2) 像素座標

        Raises:
            DomainError: 輸入為原點或非有限值
            OutOfFOVError: 點超出視野，帶有計算出的 rho
        """
        p = np.asarray(point, dtype=np.float64)
        if p.shape[-1] != 3:
            raise DomainError(f"expected (..., 3) points, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DomainError("point must be finite")

        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        r = np.hypot(x, y)
        norm = np.sqrt(r * r + z * z)
        if np.any(norm == 0.0):
            raise DomainError("cannot project the camera origin")

        # rho = arctan(z / r)；arctan2 在 r = 0 時給出 +-pi/2
        rho = np.arctan2(z, r)
        theta = math.pi / 2.0 - rho
        outside = theta > self.theta_max + 1e-12
        if np.any(outside):
            worst = float(np.min(np.where(outside, rho, np.inf)))
            raise OutOfFOVError(worst, self.theta_max)

        radius = eval_poly(self.forward_poly, rho)
        on_axis = r == 0.0
        safe_r = np.where(on_axis, 1.0, r)
        scale = np.where(on_axis, 0.0, radius / safe_r)

        u = self.cx + scale * x
        v = self.cy + scale * y
        return np.stack([u, v], axis=-1)

    def unproject(self, pixel: ArrayLike, distance: ArrayLike) -> np.ndarray:
        """
        將像素與距離反投影為 3D 點

        Args:
            pixel: (..., 2) 像素座標
            distance: 與相機中心的距離，公尺，需 > 0

        Returns:
            np.ndarray: (..., 3) 點，範數等於 distance
        """
        px = np.asarray(pixel, dtype=np.float64)
        d = np.asarray(distance, dtype=np.float64)
        if px.shape[-1] != 2:
            raise DomainError(f"expected (..., 2) pixels, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise DomainError("pixel must be finite")
        if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
            raise DomainError("distance must be finite and > 0")

        u = px[..., 0] - self.cx
        v = px[..., 1] - self.cy
        rho_prime = np.hypot(u, v)
        w = eval_poly(self.backward_poly, rho_prime)

        ray = np.stack([u, v, np.broadcast_to(w, u.shape)], axis=-1)
        ray = ray / np.linalg.norm(ray, axis=-1, keepdims=True)
        return ray * d[..., None]

    def incidence(self, pixel: ArrayLike) -> np.ndarray:
        """像素對應射線與光軸的夾角（弧度）"""
        ray = self.unproject(pixel, 1.0)
        return np.arccos(np.clip(ray[..., 2], -1.0, 1.0))

    def pixel_in_fov(self, pixel: ArrayLike) -> np.ndarray:
        """像素是否位於校正視野內"""
        return self.incidence(pixel) <= self.theta_max + 1e-12

    def to_dict(self) -> dict:
        return {
            "width": int(self.width),
            "height": int(self.height),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "forward_poly": list(self.forward_poly),
            "backward_poly": list(self.backward_poly),
            "fov_deg": float(self.fov_deg),
        }


@dataclass
class ValidationReport:
    """往返驗證報告"""
    max_err: float
    mean_err: float
    tol_px: float
    samples: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_err <= self.tol_px)


def fov_directions(samples: int, theta_max: float) -> np.ndarray:
    """
    在視野球冠上產生近似均勻分佈的單位方向（Fibonacci 螺旋）

    第一個方向永遠是光軸，最後一個方向位於 theta_max
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")

    i = np.arange(samples, dtype=np.float64)
    frac = i / max(samples - 1, 1)
    cos_theta = 1.0 - frac * (1.0 - math.cos(theta_max))
    sin_theta = np.sqrt(np.clip(1.0 - cos_theta ** 2, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta], axis=-1)


def validate(camera: FisheyeCamera, samples: int = 1000, tol_px: float = 0.1) -> ValidationReport:
    """
    投影 -> 反投影 -> 再投影，統計像素誤差

    Args:
        camera: 相機
        samples: 方向數量
        tol_px: 容許最大誤差（像素）

    Returns:
        ValidationReport: 驗證報告
    """
    directions = fov_directions(samples, camera.theta_max)
    pixels = camera.project(directions)
    rays = camera.unproject(pixels, 1.0)
    reprojected = camera.project(rays)

    errors = np.linalg.norm(reprojected - pixels, axis=-1)
    report = ValidationReport(
        max_err=float(errors.max()),
        mean_err=float(errors.mean()),
        tol_px=float(tol_px),
        samples=int(samples),
    )
    logger.debug("camera validation: max %.6f px, mean %.6f px over %d samples",
                 report.max_err, report.mean_err, samples)
    return report


def make_equidistant_camera(
    f_c: float,
    size: int,
    fit_degree: int,
    fov_deg: Optional[float] = None,
) -> FisheyeCamera:
    """
    建立等距投影（r = f_c * theta）的合成相機

    正向多項式取閉式 [f_c * pi / 2, -f_c]；反向多項式以最小平方法擬合
    r -> r / tan(r / f_c)，在 r = 0 處取極限 f_c。

    Args:
        f_c: 焦距（像素）
        size: 正方形影像邊長（像素）
        fit_degree: 反向多項式階數（>= 2）
        fov_deg: 全視角，預設取自設定

    Returns:
        FisheyeCamera: 通過往返驗證的相機

    Raises:
        CameraError: 參數不合法或擬合殘差過大
    """
    if f_c <= 0 or size <= 0:
        raise CameraError(f"focal and size must be positive, got f_c={f_c}, size={size}")
    if fit_degree < 2:
        raise CameraError(f"fit_degree must be >= 2, got {fit_degree}")

    if fov_deg is None:
        fov_deg = float(settings.get("camera.fov_deg", 190.0))
    n_samples = int(settings.get("camera.fit_samples", 512))
    tolerance = float(settings.get("camera.fit_tolerance_px", 0.5))

    theta_max = math.radians(fov_deg) / 2.0
    radii = np.linspace(0.0, f_c * theta_max, n_samples)
    theta = radii / f_c
    axial = np.empty_like(radii)
    axial[0] = f_c
    axial[1:] = radii[1:] * np.cos(theta[1:]) / np.sin(theta[1:])

    # Polynomial.fit 會先縮放定義域，convert() 換回原始座標的係數
    fitted = Polynomial.fit(radii, axial, deg=fit_degree).convert()
    backward = fitted.coef.tolist()
    residual = float(np.max(np.abs(fitted(radii) - axial)))
    logger.debug("equidistant backward fit: degree %d, max residual %.6g px", fit_degree, residual)

    half = size / 2.0
    try:
        camera = FisheyeCamera(
            width=int(size),
            height=int(size),
            cx=half,
            cy=half,
            forward_poly=(f_c * math.pi / 2.0, -float(f_c)),
            backward_poly=tuple(backward),
            fov_deg=float(fov_deg),
        )
    except CameraValidationError as e:
        raise CameraValidationError(
            f"degree-{fit_degree} fit produced an invalid camera: {e}"
        ) from e

    report = validate(camera, samples=int(settings.get("camera.validate_samples", 1000)), tol_px=tolerance)
    if not report.passed:
        raise CameraValidationError(
            f"degree-{fit_degree} backward fit too coarse: round trip {report.max_err:.4f} px "
            f"> {tolerance} px (fit residual {residual:.4f} px)"
        )
    return camera
