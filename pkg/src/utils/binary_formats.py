"""
二進位檔案格式
取樣網格 (EGSG)、區塊堆疊 (EGPT)、3D 熱圖 (EGHM) 與去噪模型檢查點 (EGDM)。
所有格式皆為 little-endian，以 4 位元組魔術字與 u32 版本開頭，讀取時版本不符即拒絕。
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Dict, List, Tuple, Union

import numpy as np

from src.core.errors import FormatError, FormatVersionError
from src.core.heatmap3d import Heatmap3D
from src.core.motion_prior import Normalizer
from src.core.patch_sampler import PatchGridConfig, SamplingGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GRID_MAGIC = b"EGSG"
PATCH_MAGIC = b"EGPT"
HEATMAP_MAGIC = b"EGHM"
CHECKPOINT_MAGIC = b"EGDM"

VERSIONS: Dict[bytes, int] = {
    GRID_MAGIC: 1,
    PATCH_MAGIC: 1,
    HEATMAP_MAGIC: 1,
    CHECKPOINT_MAGIC: 1,
}

_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")


@dataclass
class _Preamble:
    magic: bytes
    version: int

    segment: ClassVar[struct.Struct] = struct.Struct("<4sI")

    def pack(self) -> bytes:
        return self.segment.pack(self.magic, self.version)


class _Reader:
    """依序讀取位元組緩衝區"""

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def unpack(self, segment: struct.Struct) -> tuple:
        end = self.offset + segment.size
        if end > len(self.data):
            raise FormatError(f"{self.source} is truncated")
        values = segment.unpack_from(self.data, self.offset)
        self.offset = end
        return values

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        end = self.offset + dtype.itemsize * count
        if end > len(self.data):
            raise FormatError(f"{self.source} is truncated")
        values = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset = end
        return values.astype(np.float64)

    def raw(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise FormatError(f"{self.source} is truncated")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk


def _open(path: PathLike, magic: bytes) -> _Reader:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e

    reader = _Reader(data, str(path))
    found_magic, version = reader.unpack(_Preamble.segment)
    kind = magic.decode("ascii")
    if found_magic != magic:
        raise FormatError(f"{path} is not a {kind} file (magic {found_magic!r})")
    if version != VERSIONS[magic]:
        raise FormatVersionError(kind, VERSIONS[magic], version)
    return reader


def _write(path: PathLike, chunks: List[bytes]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(b"".join(chunks))
    logger.debug("wrote %s", target)
    return target


# 取樣網格
_GRID_HEADER = struct.Struct("<IIIIdd")


def write_grid(path: PathLike, grid: SamplingGrid) -> Path:
    cfg = grid.config
    header = _GRID_HEADER.pack(
        cfg.n_patches_per_side, cfg.patch_resolution, cfg.image_height, cfg.image_width,
        cfg.orientation_offset, cfg.patch_side,
    )
    return _write(path, [
        _Preamble(GRID_MAGIC, VERSIONS[GRID_MAGIC]).pack(),
        header,
        np.ascontiguousarray(grid.pixel_coords, dtype=_F32).tobytes(),
    ])


def read_grid(path: PathLike) -> SamplingGrid:
    """讀回的網格不含切平面座標系"""
    reader = _open(path, GRID_MAGIC)
    n, m, h, w, d, side = reader.unpack(_GRID_HEADER)
    config = PatchGridConfig(
        n_patches_per_side=n, patch_resolution=m, orientation_offset=d,
        patch_side=side, image_height=h, image_width=w,
    )
    count = n * n * m * m
    coords = reader.array(_F32, count * 2).reshape(count, 2)
    return SamplingGrid(config=config, pixel_coords=coords)


# 區塊堆疊
_PATCH_HEADER = struct.Struct("<IIII")


def write_patches(path: PathLike, patches: np.ndarray) -> Path:
    """patches 形狀為 (N², M, M, c)"""
    if patches.ndim != 4:
        raise FormatError(f"patch stack must be 4-D, got shape {patches.shape}")
    return _write(path, [
        _Preamble(PATCH_MAGIC, VERSIONS[PATCH_MAGIC]).pack(),
        _PATCH_HEADER.pack(*patches.shape),
        np.ascontiguousarray(patches, dtype=_F32).tobytes(),
    ])


def read_patches(path: PathLike) -> np.ndarray:
    reader = _open(path, PATCH_MAGIC)
    shape = reader.unpack(_PATCH_HEADER)
    return reader.array(_F32, int(np.prod(shape))).reshape(shape)


# 3D 熱圖
_HEATMAP_HEADER = struct.Struct("<IIIIIIdd")


def write_heatmap(path: PathLike, heatmap: Heatmap3D) -> Path:
    j, d, h, w = heatmap.values.shape
    header = _HEATMAP_HEADER.pack(
        j, d, h, w, heatmap.image_size[0], heatmap.image_size[1], *heatmap.depth_range
    )
    return _write(path, [
        _Preamble(HEATMAP_MAGIC, VERSIONS[HEATMAP_MAGIC]).pack(),
        header,
        np.ascontiguousarray(heatmap.values, dtype=_F32).tobytes(),
    ])


def read_heatmap(path: PathLike) -> Heatmap3D:
    reader = _open(path, HEATMAP_MAGIC)
    j, d, h, w, image_h, image_w, d_min, d_max = reader.unpack(_HEATMAP_HEADER)
    values = reader.array(_F32, j * d * h * w).reshape(j, d, h, w)
    return Heatmap3D(values=values, depth_range=(d_min, d_max), image_size=(image_h, image_w))


# 去噪模型檢查點
_U32 = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_OFFSET = struct.Struct("<Q")


def _pack_string(text: str, length: struct.Struct) -> bytes:
    raw = text.encode("utf-8")
    return length.pack(len(raw)) + raw


def write_checkpoint(
    path: PathLike,
    config: dict,
    normalizer: Normalizer,
    tensors: Dict[str, np.ndarray],
) -> Path:
    """
    設定區塊（JSON）、正規化平均與標準差（f64）、張量目錄（名稱、形狀、位移），最後是 f32 參數

    張量依名稱排序寫入，使相同參數產生相同位元組
    """
    chunks = [
        _Preamble(CHECKPOINT_MAGIC, VERSIONS[CHECKPOINT_MAGIC]).pack(),
        _pack_string(json.dumps(config, sort_keys=True), _U32),
        _U32.pack(len(normalizer.mean)),
        np.ascontiguousarray(normalizer.mean, dtype=_F64).tobytes(),
        np.ascontiguousarray(normalizer.std, dtype=_F64).tobytes(),
        _U32.pack(len(tensors)),
    ]

    payload = []
    offset = 0
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=_F32)
        chunks.append(_pack_string(name, _NAME_LEN))
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(s) for s in array.shape)
        chunks.append(_OFFSET.pack(offset))
        data = array.tobytes()
        payload.append(data)
        offset += len(data)

    return _write(path, chunks + payload)


def read_checkpoint(path: PathLike) -> Tuple[dict, Normalizer, Dict[str, np.ndarray]]:
    """
    Returns:
        (設定字典, 正規化統計, 參數字典)
    """
    reader = _open(path, CHECKPOINT_MAGIC)
    (config_len,) = reader.unpack(_U32)
    try:
        config = json.loads(reader.raw(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path} has a malformed config block: {e}") from e

    (dim,) = reader.unpack(_U32)
    mean = reader.array(_F64, dim)
    std = reader.array(_F64, dim)

    (count,) = reader.unpack(_U32)
    directory = []
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN)
        name = reader.raw(name_len).decode("utf-8")
        (ndim,) = reader.unpack(_U32)
        shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
        (offset,) = reader.unpack(_OFFSET)
        directory.append((name, shape, offset))

    base = reader.offset
    tensors = {}
    for name, shape, offset in directory:
        reader.offset = base + offset
        tensors[name] = reader.array(_F32, int(np.prod(shape))).reshape(shape).astype(np.float32)
    return config, Normalizer(mean=mean, std=std), tensors
