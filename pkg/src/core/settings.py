"""
管線設定管理
集中保存各模組的預設常數，可由命令列指定的 JSON 設定檔覆寫
"""
import copy
import json
import logging
from pathlib import Path
from threading import Lock
from typing import Any, Dict, Optional, Union

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)


class SettingsManager:
    """設定管理器"""

    _instance = None
    _lock = Lock()

    def __new__(cls):
        """確保單例模式"""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """初始化設定管理器"""
        if hasattr(self, '_initialized'):
            return

        self._initialized = True
        self.config_file: Optional[Path] = None

        # 預設設定
        self.default_settings: Dict[str, Any] = {
            "language": "en_US",
            "logging": {
                "level": "INFO"
            },
            "camera": {
                "fov_deg": 190.0,         # 全視角，theta_max = fov / 2
                "fit_samples": 512,       # 反向多項式擬合的半徑取樣數
                "fit_tolerance_px": 0.5,  # 合成相機建構時的往返誤差上限
                "validate_samples": 1000
            },
            "patch_grid": {
                "n_patches_per_side": 16,
                "patch_resolution": 16,
                "orientation_offset": 8.0,
                "patch_side": 0.2,
                "image_height": 256,
                "image_width": 256
            },
            "heatmap": {
                "dims": [64, 64, 64],     # D_h, H_h, W_h
                "depth_range": [0.1, 2.1],
                "temperature": 1.0,
                "smooth_sigma": 1.0,
                "max_uncertainty": 0.05,
                "render_sigma": 2.0
            },
            "prior": {
                "steps": 1000,
                "beta_min": 1e-4,
                "beta_max": 0.02,
                "k": 0.1,
                "t_start": 1000,
                "fast_t_start": 200,
                "window": 196,
                "overlap": 0.5,
                "layers": 4,
                "width": 256,
                "heads": 4,
                "epochs": 30,
                "batch_size": 16,  # 桌面規模；原始設定為 256，可用 --batch-size 覆寫
                "learning_rate": 2e-4
            },
            "synth": {
                "length": 196,
                "fps": 30.0,
                "v_max": 4.0,
                "families": ["walk", "reach", "wave", "hand"]
            },
            "metrics": {
                "with_scale": True
            }
        }

        # 當前設定
        self._settings: Dict[str, Any] = copy.deepcopy(self.default_settings)

    def load(self, config_file: Union[str, Path]) -> None:
        """
        載入設定檔並與預設值合併

        Args:
            config_file: JSON 設定檔路徑

        Raises:
            ConfigError: 檔案不存在或不是 JSON 物件
        """
        path = Path(config_file)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                loaded_settings = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e

        if not isinstance(loaded_settings, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")

        self._settings = self._merge_settings(self.default_settings, loaded_settings)
        self.config_file = path
        logger.debug("loaded settings from %s", path)

    def get(self, key: str, default: Any = None) -> Any:
        """
        取得設定值

        Args:
            key: 設定鍵值，支援巢狀鍵值如 "prior.k"
            default: 預設值

        Returns:
            Any: 設定值
        """
        value = self._settings
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """
        設定值（僅存在記憶體中）

        Args:
            key: 設定鍵值，支援巢狀鍵值如 "prior.k"
            value: 設定值
        """
        keys = key.split('.')
        current = self._settings

        # 導航到最後一層
        for k in keys[:-1]:
            if k not in current:
                current[k] = {}
            elif not isinstance(current[k], dict):
                raise ConfigError(f"cannot set nested key '{key}': '{k}' is not a section")
            current = current[k]

        current[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """取得整個區段的副本"""
        return copy.deepcopy(self._settings.get(name, {}))

    def reset_to_defaults(self) -> None:
        """重設為預設設定"""
        self._settings = copy.deepcopy(self.default_settings)
        self.config_file = None

    def export_settings(self, file_path: Union[str, Path]) -> None:
        """
        導出目前設定到檔案

        Args:
            file_path: 導出檔案路徑
        """
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(self._settings, f, indent=2, ensure_ascii=False)

    def _merge_settings(self, default: Dict[str, Any], loaded: Dict[str, Any]) -> Dict[str, Any]:
        """
        合併設定（遞迴合併巢狀字典）

        Args:
            default: 預設設定
            loaded: 載入的設定

        Returns:
            Dict[str, Any]: 合併後的設定
        """
        result = copy.deepcopy(default)

        for key, value in loaded.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_settings(result[key], value)
            else:
                result[key] = value

        return result


# 創建全域實例
settings = SettingsManager()
