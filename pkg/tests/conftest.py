"""
測試共用 fixture
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# 將專案根目錄加入 Python 路徑
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.core.fisheye_camera import make_equidistant_camera
from src.core.settings import settings
from src.utils.i18n import i18n


@pytest.fixture(autouse=True)
def reset_settings():
    """每個測試都從預設設定與英文訊息開始"""
    settings.reset_to_defaults()
    i18n.set_language("en_US")
    yield
    settings.reset_to_defaults()
    i18n.set_language("en_US")


@pytest.fixture(scope="session")
def camera():
    """f_c = 100、256x256 的等距相機"""
    return make_equidistant_camera(100.0, 256, 6)


@pytest.fixture(scope="session")
def grid_camera():
    """f_c = 120：16x16 網格的角落區塊仍在視野內"""
    return make_equidistant_camera(120.0, 256, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
