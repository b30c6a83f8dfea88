"""
資料集匯入匯出工具
處理合成資料集清單與逐幀熱圖目錄
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

from src.core.errors import FormatError
from src.core.heatmap3d import Heatmap3D
from src.core.storage import StorageManager
from src.utils.binary_formats import read_heatmap, write_heatmap

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
HEATMAP_SUFFIX = ".eghm"


@dataclass
class SequenceEntry:
    """清單中的一條序列，路徑相對於清單所在目錄"""
    name: str
    family: str
    seed: int
    frames: int
    motion: str
    camera_motion: Optional[str] = None
    heatmaps: Optional[str] = None
    hands: Optional[str] = None

    def to_dict(self) -> dict:
        data = {
            "name": self.name,
            "family": self.family,
            "seed": int(self.seed),
            "frames": int(self.frames),
            "motion": self.motion,
        }
        for key in ("camera_motion", "heatmaps", "hands"):
            value = getattr(self, key)
            if value is not None:
                data[key] = value
        return data


@dataclass
class DatasetManifest:
    """資料集清單：產生時的種子、動作類型與各序列檔案"""
    seed: int
    families: List[str]
    fps: float
    sequences: List[SequenceEntry] = field(default_factory=list)
    camera: Optional[str] = None

    def to_dict(self) -> dict:
        data = {
            "format": "dataset_manifest",
            "version": MANIFEST_VERSION,
            "seed": int(self.seed),
            "families": list(self.families),
            "fps": float(self.fps),
            "sequences": [s.to_dict() for s in self.sequences],
        }
        if self.camera is not None:
            data["camera"] = self.camera
        return data


class DatasetManager:
    """資料集匯入匯出管理器"""

    def __init__(self, storage_manager: StorageManager):
        """
        初始化資料集管理器

        Args:
            storage_manager: 儲存管理器實例
        """
        self.storage_manager = storage_manager

    def save_manifest(self, manifest: DatasetManifest, directory: PathLike) -> Path:
        return self.storage_manager.write_json(Path(directory) / MANIFEST_NAME, manifest.to_dict())

    def load_manifest(self, directory: PathLike) -> DatasetManifest:
        """
        讀取資料集清單

        Args:
            directory: 資料集目錄或清單檔路徑

        Raises:
            FormatError: 清單格式錯誤
            FormatVersionError: 版本不符
        """
        path = Path(directory)
        if path.is_dir():
            path = path / MANIFEST_NAME
        data = self.storage_manager.read_json(path)
        self.storage_manager._check_format(data, "dataset_manifest", MANIFEST_VERSION)
        try:
            sequences = [SequenceEntry(**item) for item in data.get("sequences", [])]
            return DatasetManifest(
                seed=int(data["seed"]),
                families=list(data["families"]),
                fps=float(data["fps"]),
                sequences=sequences,
                camera=data.get("camera"),
            )
        except (KeyError, TypeError) as e:
            raise FormatError(f"manifest {path} is malformed: {e}") from e

    @staticmethod
    def resolve(directory: PathLike, relative: str) -> Path:
        """清單中的相對路徑換成實際路徑"""
        base = Path(directory)
        if base.is_file():
            base = base.parent
        return base / relative

    def export_heatmaps(self, heatmaps: Sequence[Heatmap3D], directory: PathLike) -> List[Path]:
        """
        逐幀寫出熱圖

        Returns:
            List[Path]: 依幀序排列的檔案路徑 frame_00000.eghm, ...
        """
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        paths = [write_heatmap(target / f"frame_{i:05d}{HEATMAP_SUFFIX}", hm) for i, hm in enumerate(heatmaps)]
        logger.debug("exported %d heatmaps to %s", len(paths), target)
        return paths

    def import_heatmaps(self, source: PathLike) -> List[Heatmap3D]:
        """
        從單一檔案或目錄讀取熱圖（目錄中依檔名排序）

        Raises:
            FormatError: 目錄中沒有熱圖
        """
        path = Path(source)
        if path.is_file():
            return [read_heatmap(path)]
        if not path.is_dir():
            raise FormatError(f"heatmap path {path} does not exist")

        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() == HEATMAP_SUFFIX)
        if not files:
            raise FormatError(f"no {HEATMAP_SUFFIX} files in {path}")
        return [read_heatmap(p) for p in files]
