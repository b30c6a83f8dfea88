"""命令列介面"""

from src.cli.app import build_parser, run

__all__ = [
    "build_parser",
    "run",
]
