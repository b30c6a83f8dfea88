"""Utils 模組"""

from src.utils.dataset_io import DatasetManager
from src.utils.i18n import t

__all__ = [
    "DatasetManager",
    "t",
]
