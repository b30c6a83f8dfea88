"""
國際化 (i18n) 語言管理系統
使用單例模式載入命令列訊息目錄
"""
import json
import logging
import re
from pathlib import Path
from threading import Lock
from typing import Any, Dict, List

logger = logging.getLogger(__name__)

DEFAULT_LANGUAGE = "en_US"


class LanguageManager:
    """語言管理器 (單例模式)"""

    _instance = None
    _lock = Lock()

    # 語言代碼驗證模式
    VALID_LANGUAGE_PATTERN = re.compile(r'^[a-zA-Z]{2}_[a-zA-Z]{2}$')

    def __new__(cls):
        """確保單例模式"""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """初始化語言管理器"""
        if hasattr(self, '_initialized'):
            return

        self._initialized = True
        self._current_language = DEFAULT_LANGUAGE
        self._translations: Dict[str, Dict[str, Any]] = {}
        self._locales_dir = Path(__file__).resolve().parent.parent / "assets" / "locales"

        # 載入預設語言
        self._load_language(self._current_language)

    def _validate_language_code(self, code: str) -> bool:
        if not code or not isinstance(code, str):
            return False
        return bool(self.VALID_LANGUAGE_PATTERN.match(code))

    def _load_language(self, language_code: str) -> bool:
        """
        載入指定語言的翻譯檔案

        Args:
            language_code: 語言代碼 (如 zh_TW, en_US)

        Returns:
            bool: 是否載入成功
        """
        if not self._validate_language_code(language_code):
            logger.warning("invalid language code %s", language_code)
            return False

        locale_file = self._locales_dir / f"{language_code}.json"
        if not locale_file.exists():
            logger.warning("locale file %s does not exist", locale_file)
            return False

        try:
            with open(locale_file, 'r', encoding='utf-8') as f:
                self._translations[language_code] = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("cannot load locale %s: %s", locale_file, e)
            return False
        return True

    def set_language(self, language_code: str) -> bool:
        """
        設定當前語言

        Returns:
            bool: 是否設定成功，失敗時保留原語言
        """
        if language_code not in self._translations and not self._load_language(language_code):
            return False
        self._current_language = language_code
        return True

    def get_current_language(self) -> str:
        return self._current_language

    def get_available_languages(self) -> List[str]:
        """掃描翻譯檔案目錄，回傳可用的語言代碼"""
        if not self._locales_dir.exists():
            return []
        return sorted(
            f.stem for f in self._locales_dir.glob("*.json") if self._validate_language_code(f.stem)
        )

    def t(self, key: str, **kwargs) -> str:
        """
        取得翻譯文字

        當前語言缺少的鍵值退回預設語言，兩者皆無時回傳鍵值本身

        Args:
            key: 翻譯鍵值，支援巢狀鍵值如 "cli.camera.created"
            **kwargs: 用於字串格式化的參數

        Returns:
            str: 翻譯後的文字
        """
        value = self._lookup(self._current_language, key)
        if value is None and self._current_language != DEFAULT_LANGUAGE:
            value = self._lookup(DEFAULT_LANGUAGE, key)
        if value is None:
            return key

        if kwargs:
            try:
                return value.format(**kwargs)
            except (KeyError, ValueError, IndexError):
                # 格式化失敗，回傳原始值
                return value
        return value

    def _lookup(self, language: str, key: str):
        value: Any = self._translations.get(language, {})
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return None
        return value if isinstance(value, str) else None

    def get_language_name(self, language_code: str) -> str:
        """目錄中 app.language_name 的值；無法載入時回傳代碼本身"""
        if language_code not in self._translations and not self._load_language(language_code):
            return language_code
        return self._lookup(language_code, "app.language_name") or language_code


# 創建全域實例
i18n = LanguageManager()


def t(key: str, **kwargs) -> str:
    """快速翻譯函數"""
    return i18n.t(key, **kwargs)
