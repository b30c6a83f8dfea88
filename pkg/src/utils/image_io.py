"""
影像讀寫工具
讀取 8/16 位元 PNG 為 [0, 1] 浮點陣列，並輸出區塊拼貼預覽
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.core.errors import FormatError, ShapeError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# 各模式的滿刻度值
_FULL_SCALE = {
    "1": 1.0,
    "L": 255.0,
    "RGB": 255.0,
    "I;16": 65535.0,
    "I;16B": 65535.0,
    "I;16L": 65535.0,
    "I": 65535.0,
}


def load_image(image_path: PathLike) -> np.ndarray:
    """
    讀取影像

    Args:
        image_path: PNG 路徑

    Returns:
        np.ndarray: (H, W, c) float64，數值介於 [0, 1]

    Raises:
        FormatError: 無法開啟或模式不支援
    """
    try:
        image = Image.open(image_path)
        image.load()
    except (OSError, UnidentifiedImageError) as e:
        raise FormatError(f"cannot read image {image_path}: {e}") from e

    # 如果是 RGBA，貼到白色背景轉為 RGB
    if image.mode == "RGBA":
        background = Image.new("RGB", image.size, (255, 255, 255))
        background.paste(image, mask=image.split()[3])
        image = background
    elif image.mode in ("P", "LA"):
        image = image.convert("RGB" if image.mode == "P" else "L")

    if image.mode not in _FULL_SCALE:
        raise FormatError(f"unsupported image mode '{image.mode}' in {image_path}")

    array = np.asarray(image, dtype=np.float64) / _FULL_SCALE[image.mode]
    if array.ndim == 2:
        array = array[..., None]
    logger.debug("loaded %s: %s, mode %s", image_path, array.shape, image.mode)
    return np.clip(array, 0.0, 1.0)


def save_image(array: np.ndarray, output_path: PathLike) -> Path:
    """以 8 位元 PNG 儲存 [0, 1] 浮點影像（單通道或 RGB）"""
    data = np.asarray(array, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
        raise ShapeError(f"expected (H, W), (H, W, 1) or (H, W, 3), got {array.shape}")

    pixels = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    target = Path(output_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(target, format="PNG")
    return target


def patch_mosaic(patches: np.ndarray, border: int = 1) -> np.ndarray:
    """
    將 (N², M, M, c) 區塊排成 N×N 拼貼，區塊之間留 border 像素的黑邊

    Raises:
        ShapeError: 區塊數不是平方數
    """
    count, m, m2, channels = patches.shape
    n = int(round(np.sqrt(count)))
    if n * n != count or m != m2:
        raise ShapeError(f"cannot tile {count} patches of {m}x{m2} into a square mosaic")

    step = m + border
    mosaic = np.zeros((n * step - border, n * step - border, channels))
    for index in range(count):
        i, j = divmod(index, n)
        mosaic[i * step:i * step + m, j * step:j * step + m] = patches[index]
    return mosaic


def save_patch_preview(patches: np.ndarray, output_path: PathLike) -> Path:
    """寫出區塊拼貼預覽 PNG"""
    target = save_image(patch_mosaic(patches), output_path)
    logger.info("wrote patch preview %s", target)
    return target
