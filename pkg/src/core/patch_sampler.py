"""
切平面取樣模組
在單位球面上為每個影像區塊建立切平面座標系，於切平面上取樣格點後
投影回魚眼影像，得到無畸變的區塊取樣座標
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.core.errors import (
    CameraError,
    ConfigError,
    DomainError,
    GeometryError,
    OutOfFOVError,
    ShapeError,
)
from src.core.fisheye_camera import FisheyeCamera
from src.core.settings import settings

logger = logging.getLogger(__name__)

# 射線與切平面平行的判定門檻
PARALLEL_EPS = 1e-9
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class PatchGridConfig:
    """區塊網格設定"""
    n_patches_per_side: int = 16
    patch_resolution: int = 16
    orientation_offset: float = 8.0
    patch_side: float = 0.2
    image_height: int = 256
    image_width: int = 256

    def __post_init__(self):
        n = self.n_patches_per_side
        if n < 1 or self.patch_resolution < 1:
            raise ConfigError(
                f"N and M must be >= 1, got N={n}, M={self.patch_resolution}"
            )
        if self.orientation_offset < 1.0:
            raise ConfigError(f"orientation offset must be >= 1 px, got {self.orientation_offset}")
        if self.patch_side <= 0.0:
            raise ConfigError(f"patch side must be > 0, got {self.patch_side}")
        if self.image_height <= 0 or self.image_width <= 0:
            raise ConfigError("image size must be positive")
        if self.image_height % n or self.image_width % n:
            raise ConfigError(
                f"image {self.image_height}x{self.image_width} does not divide into {n}x{n} cells"
            )

    @property
    def image_size(self) -> Tuple[int, int]:
        """(H, W)"""
        return self.image_height, self.image_width

    @property
    def n_patches(self) -> int:
        return self.n_patches_per_side ** 2

    @classmethod
    def from_settings(cls, **overrides) -> "PatchGridConfig":
        """以 patch_grid 設定區段建立，關鍵字參數優先"""
        values = settings.section("patch_grid")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """
    區塊中心的切平面座標系

    z_axis 即球面點 P^c；offset_point 是 P^x，即偏移像素射線與切平面的交點
    """
    center_pixel: Tuple[float, float]
    sphere_point: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray
    offset_point: np.ndarray

    @property
    def axes(self) -> np.ndarray:
        """3x3 矩陣，各欄依序為 v^x, v^y, v^z"""
        return np.stack([self.x_axis, self.y_axis, self.z_axis], axis=1)


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """
    預先計算好的取樣座標

    pixel_coords 形狀為 (N²·M², 2)，每列是 (u, v)；先依 (i, j) 再依 (m, n) 逐列排序。
    從檔案讀回的網格不含 frames。
    """
    config: PatchGridConfig
    pixel_coords: np.ndarray
    frames: Tuple[TangentFrame, ...] = field(default=())

    def __post_init__(self):
        expected = (self.config.n_patches * self.config.patch_resolution ** 2, 2)
        if self.pixel_coords.shape != expected:
            raise ShapeError(f"grid coordinates must have shape {expected}, got {self.pixel_coords.shape}")
        if not np.all(np.isfinite(self.pixel_coords)):
            raise GeometryError("grid coordinates must be finite")

    @property
    def patch_coords(self) -> np.ndarray:
        """(N², M, M, 2) 視圖"""
        m = self.config.patch_resolution
        return self.pixel_coords.reshape(self.config.n_patches, m, m, 2)


def patch_centers(image_size: Sequence[int], n: int) -> np.ndarray:
    """
    在影像上均勻取 N x N 個區塊中心

    Args:
        image_size: (H, W)
        n: 每邊區塊數 N

    Returns:
        np.ndarray: (N², 2)，第 i*N + j 列為 ((H/N)(i+½), (W/N)(j+½))
    """
    h, w = image_size
    i, j = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    first = (h / n) * (i + 0.5)
    second = (w / n) * (j + 0.5)
    return np.stack([first.ravel(), second.ravel()], axis=-1)


def _require_in_fov(camera: FisheyeCamera, pixel: np.ndarray) -> None:
    theta = float(camera.incidence(pixel))
    if theta > camera.theta_max + 1e-12:
        raise OutOfFOVError(math.pi / 2.0 - theta, camera.theta_max)


def tangent_frame(center: Sequence[float], offset_d: float, camera: FisheyeCamera) -> TangentFrame:
    """
    建立區塊中心的切平面座標系

    P^c 與 P^u 分別是中心與 center + (d, 0) 反投影到單位球面的點；
    P^u 方向的射線與切平面交於 P^x = v^u / <v^u, v^c>，v^x 指向 P^x - P^c。

    Args:
        center: 區塊中心像素 (u, v)
        offset_d: 定向偏移（像素）
        camera: 相機

    Returns:
        TangentFrame: 右手正交座標系

    Raises:
        OutOfFOVError: 中心或偏移點超出視野
        GeometryError: 射線與切平面平行或座標系退化
    """
    c = np.asarray(center, dtype=np.float64)
    shifted = c + np.array([offset_d, 0.0])
    _require_in_fov(camera, c)
    _require_in_fov(camera, shifted)

    p_c = camera.unproject(c, 1.0)
    v_u = camera.unproject(shifted, 1.0)

    dot = float(np.dot(v_u, p_c))
    if dot <= PARALLEL_EPS:
        raise GeometryError(f"offset ray is parallel to the tangent plane (<v^u, v^c> = {dot:.3e})")

    p_x = v_u / dot
    along = p_x - p_c
    length = float(np.linalg.norm(along))
    if length <= PARALLEL_EPS:
        raise GeometryError("offset point coincides with the patch center")

    v_x = along / length
    v_z = p_c
    v_y = np.cross(v_z, v_x)

    axes = np.stack([v_x, v_y, v_z], axis=1)
    if not np.allclose(axes.T @ axes, np.eye(3), atol=ORTHONORMAL_TOL):
        raise GeometryError("tangent frame is not orthonormal")

    return TangentFrame(
        center_pixel=(float(c[0]), float(c[1])),
        sphere_point=p_c,
        x_axis=v_x,
        y_axis=v_y,
        z_axis=v_z,
        offset_point=p_x,
    )


def grid_points(frame: TangentFrame, m_res: int, side: float) -> np.ndarray:
    """
    在切平面上取 M x M 個格點

    P^mn = P^c + l(m/M) v^x + l(n/M) v^y，m, n 取 -(M-1)/2 ... (M-1)/2

    Returns:
        np.ndarray: (M², 3)，依 (m, n) 逐列排序
    """
    ladder = np.arange(m_res, dtype=np.float64) - (m_res - 1) / 2.0
    mm, nn = np.meshgrid(ladder, ladder, indexing="ij")
    a = (side * mm / m_res).reshape(-1, 1)
    b = (side * nn / m_res).reshape(-1, 1)
    return frame.sphere_point + a * frame.x_axis + b * frame.y_axis


def precompute_grid(camera: FisheyeCamera, config: PatchGridConfig) -> SamplingGrid:
    """
    計算所有區塊的取樣座標 C^mn_ij

    結果只取決於相機與設定，與影像內容無關

    Raises:
        ShapeError: 設定的影像大小與相機不符
        OutOfFOVError / GeometryError: 訊息中標出出錯的區塊 (i, j)
    """
    if config.image_size != camera.image_size:
        raise ShapeError(
            f"grid image size {config.image_size} does not match camera {camera.image_size}"
        )

    n = config.n_patches_per_side
    centers = patch_centers(config.image_size, n)
    frames: List[TangentFrame] = []
    coords: List[np.ndarray] = []

    for index, center in enumerate(centers):
        patch = divmod(index, n)
        try:
            frame = tangent_frame(center, config.orientation_offset, camera)
            points = grid_points(frame, config.patch_resolution, config.patch_side)
            coords.append(camera.project(points))
        except OutOfFOVError as e:
            raise OutOfFOVError(e.rho, e.theta_max, message=f"{e} (patch {patch[0]},{patch[1]})") from e
        except GeometryError as e:
            raise GeometryError(str(e), patch=patch) from e
        except CameraError as e:
            raise CameraError(f"{e} (patch {patch[0]},{patch[1]})") from e
        frames.append(frame)

    logger.debug("precomputed %d patches of %dx%d samples", len(frames),
                 config.patch_resolution, config.patch_resolution)
    return SamplingGrid(config=config, pixel_coords=np.concatenate(coords, axis=0), frames=tuple(frames))


def extract_patches(image: np.ndarray, grid: SamplingGrid) -> np.ndarray:
    """
    以雙線性內插取出所有區塊

    Args:
        image: (H, W) 或 (H, W, c) 影像，以 [v, u] 索引
        grid: 取樣網格

    Returns:
        np.ndarray: (N², M, M, c)；落在 [0, W-1] x [0, H-1] 之外的樣本為 0

    Raises:
        ShapeError: 影像大小與網格不符
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise ShapeError(f"image must be HxW or HxWxC, got shape {img.shape}")

    h, w = grid.config.image_size
    if img.shape[:2] != (h, w):
        raise ShapeError(f"image is {img.shape[0]}x{img.shape[1]}, grid expects {h}x{w}")

    u = grid.pixel_coords[:, 0]
    v = grid.pixel_coords[:, 1]
    outside = (u < 0.0) | (u > w - 1) | (v < 0.0) | (v > h - 1)

    channels = []
    for c in range(img.shape[2]):
        sampled = ndimage.map_coordinates(img[..., c], [v, u], order=1, mode="nearest")
        sampled[outside] = 0.0
        channels.append(sampled)

    m = grid.config.patch_resolution
    return np.stack(channels, axis=-1).reshape(grid.config.n_patches, m, m, img.shape[2])


def hand_crop_grid(
    hand_center: Sequence[float],
    bbox_size: float,
    camera: FisheyeCamera,
    m_res: int,
) -> Tuple[SamplingGrid, TangentFrame]:
    """
    為偵測到的手部建立單一區塊的取樣網格

    偏移 d 取框大小的一半，切平面邊長 l = 2 ||P^x - P^c||，
    使區塊在切平面上覆蓋整個偵測框。

    Args:
        hand_center: 偵測框中心像素
        bbox_size: 偵測框邊長（像素）
        camera: 相機
        m_res: 區塊解析度 M

    Returns:
        (SamplingGrid, TangentFrame): 網格與其座標系（供手部旋轉使用）
    """
    if not bbox_size > 0.0:
        raise DomainError(f"bbox size must be > 0, got {bbox_size}")

    offset = bbox_size / 2.0
    frame = tangent_frame(hand_center, offset, camera)
    side = 2.0 * float(np.linalg.norm(frame.offset_point - frame.sphere_point))

    config = PatchGridConfig(
        n_patches_per_side=1,
        patch_resolution=m_res,
        orientation_offset=max(offset, 1.0),
        patch_side=side,
        image_height=camera.height,
        image_width=camera.width,
    )
    coords = camera.project(grid_points(frame, m_res, side))
    return SamplingGrid(config=config, pixel_coords=coords, frames=(frame,)), frame


def corner_angles(grid: SamplingGrid) -> Optional[np.ndarray]:
    """每個區塊中心射線與角落樣本射線的夾角（弧度），網格不含座標系時回傳 None"""
    if not grid.frames:
        return None
    m = grid.config.patch_resolution
    side = grid.config.patch_side
    angles = []
    for frame in grid.frames:
        corner = grid_points(frame, m, side)[0]
        sin = np.linalg.norm(np.cross(corner, frame.z_axis))
        angles.append(math.atan2(float(sin), float(np.dot(corner, frame.z_axis))))
    return np.array(angles)
