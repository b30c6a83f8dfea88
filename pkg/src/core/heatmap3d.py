"""
3D 熱圖解碼
以 soft-argmax 求出每個關節在 uvd 空間的位置，再透過魚眼相機反投影成 3D 點，
並由平滑後的熱圖估計每個關節的不確定度
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.core.errors import DegenerateHeatmapError, DomainError, ShapeError
from src.core.fisheye_camera import FisheyeCamera
from src.core.settings import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Heatmap3D:
    """
    像素對齊的 3D 熱圖

    values 形狀為 (J, D_h, H_h, W_h)；uv 兩軸對齊 image_size 的影像，
    d 軸在 depth_range 內線性分箱（公尺）
    """
    values: np.ndarray
    depth_range: Tuple[float, float]
    image_size: Tuple[int, int]

    def __post_init__(self):
        if self.values.ndim != 4:
            raise ShapeError(f"heatmap must be (J, D, H, W), got shape {self.values.shape}")
        j, d, h, w = self.values.shape
        if j < 1 or min(d, h, w) < 2:
            raise ShapeError(f"heatmap needs J >= 1 and every axis >= 2, got {self.values.shape}")
        d_min, d_max = self.depth_range
        if not d_min < d_max:
            raise DomainError(f"depth range must satisfy d_min < d_max, got {self.depth_range}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("heatmap values must be finite")
        object.__setattr__(self, "depth_range", (float(d_min), float(d_max)))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @property
    def joints(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(D_h, H_h, W_h)"""
        return tuple(self.values.shape[1:])


@dataclass
class DecodedJoints:
    """解碼結果；voxel 為連續體素索引 (w, h, d)"""
    uvd: np.ndarray
    xyz: np.ndarray
    uncertainty: np.ndarray
    voxel: np.ndarray
    in_fov: np.ndarray
    clamped: np.ndarray

    def to_dict(self) -> dict:
        return {
            "uvd": self.uvd.tolist(),
            "xyz": self.xyz.tolist(),
            "uncertainty": self.uncertainty.tolist(),
            "in_fov": [bool(x) for x in self.in_fov],
            "clamped": [bool(x) for x in self.clamped],
        }


def voxel_to_uvd(
    voxel: np.ndarray,
    dims: Sequence[int],
    image_size: Sequence[int],
    depth_range: Sequence[float],
) -> np.ndarray:
    """
    連續體素索引 (w, h, d) 轉為 (u, v, d)，採體素中心慣例（先加 ½ 再縮放）
    """
    d_h, h_h, w_h = dims
    height, width = image_size
    d_min, d_max = depth_range
    vox = np.asarray(voxel, dtype=np.float64)
    u = (vox[..., 0] + 0.5) * width / w_h
    v = (vox[..., 1] + 0.5) * height / h_h
    d = d_min + (vox[..., 2] + 0.5) * (d_max - d_min) / d_h
    return np.stack([u, v, d], axis=-1)


def uvd_to_voxel(
    uvd: np.ndarray,
    dims: Sequence[int],
    image_size: Sequence[int],
    depth_range: Sequence[float],
) -> np.ndarray:
    """voxel_to_uvd 的反函數"""
    d_h, h_h, w_h = dims
    height, width = image_size
    d_min, d_max = depth_range
    p = np.asarray(uvd, dtype=np.float64)
    w = p[..., 0] * w_h / width - 0.5
    h = p[..., 1] * h_h / height - 0.5
    d = (p[..., 2] - d_min) * d_h / (d_max - d_min) - 0.5
    return np.stack([w, h, d], axis=-1)


def _softmax(volume: np.ndarray, temperature: float) -> np.ndarray:
    if not temperature > 0.0:
        raise DomainError(f"temperature must be > 0, got {temperature}")

    scores = np.asarray(volume, dtype=np.float64) / temperature
    if np.any(np.isnan(scores)):
        raise DegenerateHeatmapError("heatmap contains NaN")
    peak = scores.max()
    if not np.isfinite(peak):
        raise DegenerateHeatmapError("heatmap has no finite maximum")

    p = np.exp(scores - peak)
    return p / p.sum()


def soft_argmax(volume: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """
    單一關節的 soft-argmax

    Args:
        volume: (D, H, W) 分數
        temperature: softmax 溫度

    Returns:
        np.ndarray: 連續索引 (w̄, h̄, d̄)

    Raises:
        DegenerateHeatmapError: 全為 -inf 或含 NaN
    """
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ShapeError(f"soft_argmax expects a (D, H, W) volume, got shape {vol.shape}")
    return _expected_index(_softmax(vol, temperature))


def _expected_index(p: np.ndarray) -> np.ndarray:
    d_n, h_n, w_n = p.shape
    w = float(np.dot(p.sum(axis=(0, 1)), np.arange(w_n)))
    h = float(np.dot(p.sum(axis=(0, 2)), np.arange(h_n)))
    d = float(np.dot(p.sum(axis=(1, 2)), np.arange(d_n)))
    return np.array([w, h, d])


def gaussian_kernel(sigma: float) -> np.ndarray:
    """半徑 ceil(3σ) 的正規化一維高斯核"""
    if not sigma > 0.0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-x * x / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _smooth_volumes(values: np.ndarray, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel(sigma)
    out = np.asarray(values, dtype=np.float64)
    for axis in (-3, -2, -1):
        out = ndimage.convolve1d(out, kernel, axis=axis, mode="constant", cval=0.0)
    return out


def gaussian_smooth3d(heatmap: Heatmap3D, sigma: float) -> Heatmap3D:
    """可分離的 3D 高斯平滑，邊界補零，形狀不變"""
    return replace(heatmap, values=_smooth_volumes(heatmap.values, sigma))


def clamp_voxel(voxel: np.ndarray, dims: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    把 (w, h, d) 索引夾到體積範圍內

    Returns:
        (夾住後的索引, 每個關節是否被夾住)
    """
    d_h, h_h, w_h = dims
    vox = np.asarray(voxel, dtype=np.float64).reshape(-1, 3)
    upper = np.array([w_h - 1, h_h - 1, d_h - 1], dtype=np.float64)
    clamped = np.clip(vox, 0.0, upper)
    return clamped, np.any(clamped != vox, axis=-1)


def uncertainty(smoothed: Heatmap3D, uvd_voxel: np.ndarray) -> np.ndarray:
    """
    u = max_u * (1 - HM)

    HM 為平滑後熱圖在預測位置的三線性內插值，除以該關節體積的最大值；
    超出範圍的索引夾到邊界。最大值不為正時 HM 視為 0。

    Args:
        smoothed: 平滑後的熱圖（或任何非負信心體積）
        uvd_voxel: (J, 3) 連續索引 (w, h, d)

    Returns:
        np.ndarray: (J,) 介於 [0, max_u]
    """
    max_u = float(settings.get("heatmap.max_uncertainty", 0.05))
    vox, _ = clamp_voxel(uvd_voxel, smoothed.dims)
    if vox.shape[0] != smoothed.joints:
        raise ShapeError(f"got {vox.shape[0]} joint locations for {smoothed.joints} joints")

    result = np.empty(smoothed.joints)
    for j in range(smoothed.joints):
        volume = np.asarray(smoothed.values[j], dtype=np.float64)
        peak = float(volume.max())
        if peak <= 0.0:
            result[j] = max_u
            continue
        w, h, d = vox[j]
        value = ndimage.map_coordinates(volume, [[d], [h], [w]], order=1, mode="nearest")[0]
        hm = min(max(value / peak, 0.0), 1.0)
        result[j] = max_u * (1.0 - hm)
    return result


def decode(
    heatmap: Heatmap3D,
    camera: FisheyeCamera,
    temperature: Optional[float] = None,
    smooth_sigma: Optional[float] = None,
) -> DecodedJoints:
    """
    解碼熱圖為 3D 關節與不確定度

    信心體積為每個關節在該溫度下的 softmax 機率，再以 σ = smooth_sigma 平滑。
    解出的 uv 落在視野外時只標記 in_fov，不視為錯誤。

    Raises:
        ShapeError: 熱圖對齊的影像大小與相機不符
        DegenerateHeatmapError: 某個關節的分數無法計算 softmax
    """
    if temperature is None:
        temperature = float(settings.get("heatmap.temperature", 1.0))
    if smooth_sigma is None:
        smooth_sigma = float(settings.get("heatmap.smooth_sigma", 1.0))
    if heatmap.image_size != camera.image_size:
        raise ShapeError(
            f"heatmap aligned to {heatmap.image_size}, camera is {camera.image_size}"
        )

    probs = np.empty(heatmap.values.shape, dtype=np.float64)
    voxel = np.empty((heatmap.joints, 3))
    for j in range(heatmap.joints):
        try:
            probs[j] = _softmax(heatmap.values[j], temperature)
        except DegenerateHeatmapError as e:
            raise DegenerateHeatmapError(f"joint {j}: {e}") from e
        voxel[j] = _expected_index(probs[j])

    uvd = voxel_to_uvd(voxel, heatmap.dims, heatmap.image_size, heatmap.depth_range)
    xyz = camera.unproject(uvd[:, :2], uvd[:, 2])
    in_fov = camera.pixel_in_fov(uvd[:, :2])

    confidence = replace(heatmap, values=_smooth_volumes(probs, smooth_sigma))
    _, clamped = clamp_voxel(voxel, heatmap.dims)
    unc = uncertainty(confidence, voxel)

    if not np.all(in_fov):
        logger.debug("joints outside the field of view: %s", np.flatnonzero(~in_fov).tolist())

    return DecodedJoints(
        uvd=uvd,
        xyz=xyz,
        uncertainty=unc,
        voxel=voxel,
        in_fov=np.asarray(in_fov, dtype=bool),
        clamped=clamped,
    )
