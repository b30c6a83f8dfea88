"""
子命令共用工具
"""
import sys
from pathlib import Path
from typing import List, Optional

from src.core.storage import StorageManager
from src.utils.i18n import t

storage = StorageManager()


def emit(key: str, **kwargs) -> None:
    """輸出一則翻譯後的訊息到 stdout"""
    print(t(key, **kwargs), file=sys.stdout)


def add_output(parser, required: bool = True, help_text: Optional[str] = None) -> None:
    parser.add_argument("-o", "--output", required=required, help=help_text or "output path")


def add_seed(parser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="random seed (required)")


def sample_paths(output: str, n_samples: int) -> List[Path]:
    """多樣本輸出檔名：out.json -> out_s000.json, out_s001.json, ..."""
    path = Path(output)
    if n_samples == 1:
        return [path]
    return [path.with_name(f"{path.stem}_s{i:03d}{path.suffix}") for i in range(n_samples)]
