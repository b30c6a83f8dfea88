"""
命令列入口
建立 argparse 解析器並執行單一子命令；成功回傳 0，領域錯誤 1，用法錯誤 2
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from src import __description__, __version__
from src.cli.commands import assemble, camera, evaluate, grid, heatmap, patches, prior, synth
from src.core.errors import EgoMocapError
from src.core.settings import settings
from src.utils.i18n import i18n, t

logger = logging.getLogger(__name__)

COMMAND_MODULES = (camera, grid, patches, heatmap, assemble, synth, prior, evaluate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ego_mocap", description=__description__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="JSON settings file merged over the defaults")
    parser.add_argument("--lang", default=None, choices=i18n.get_available_languages() or None,
                        help="message language")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, str(settings.get("logging.level", "INFO")).upper(),
                                                   logging.INFO)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    執行一個子命令

    Args:
        argv: 參數列表，None 表示 sys.argv[1:]

    Returns:
        int: 結束代碼
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse 在用法錯誤時以 2 結束，--help / --version 以 0 結束
        return e.code if isinstance(e.code, int) else 2

    try:
        if args.config:
            settings.load(args.config)
        _configure_logging(args.verbose)
        i18n.set_language(args.lang or str(settings.get("language", "en_US")))
        return int(args.handler(args) or 0)
    except EgoMocapError as e:
        logger.debug("command failed", exc_info=True)
        print(t("cli.error", kind=type(e).__name__, message=str(e)), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
