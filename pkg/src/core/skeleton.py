"""
骨架定義
15 個身體關節、21 個手部關節與 57 個全身關節的順序、父節點與參考骨長
"""
import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ConfigError, MetricError, ShapeError

logger = logging.getLogger(__name__)

LAYOUT_VERSION = 1

BODY_JOINT_NAMES = (
    "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle", "r_toe",
    "l_hip", "l_knee", "l_ankle", "l_toe",
)
# -1 表示骨頭起點為骨盆（兩髖中點）
BODY_PARENTS = (-1, 0, 1, 2, 0, 4, 5, -1, 7, 8, 9, -1, 11, 12, 13)

FINGERS = ("thumb", "index", "middle", "ring", "pinky")
HAND_JOINT_NAMES = ("wrist",) + tuple(f"{f}_{k}" for f in FINGERS for k in range(1, 5))
HAND_PARENTS = (-1,) + tuple(
    0 if k == 0 else 1 + 4 * f + k - 1 for f in range(5) for k in range(4)
)

N_BODY = 15
N_HAND = 21
N_WHOLE = N_BODY + 2 * N_HAND

R_WRIST = 3
L_WRIST = 6
R_HIP = 7
L_HIP = 11
LEFT_HAND = slice(N_BODY, N_BODY + N_HAND)
RIGHT_HAND = slice(N_BODY + N_HAND, N_WHOLE)

# 靜止姿勢的骨頭方向：y 朝上，身體面向 +z，左手側為 +x
_DOWN = (0.0, -1.0, 0.0)
BODY_REST_DIRECTIONS = (
    (0.0, 1.0, 0.0),
    (-1.0, 0.0, 0.0), _DOWN, _DOWN,
    (1.0, 0.0, 0.0), _DOWN, _DOWN,
    (-1.0, 0.0, 0.0), _DOWN, _DOWN, (0.0, 0.0, 1.0),
    (1.0, 0.0, 0.0), _DOWN, _DOWN, (0.0, 0.0, 1.0),
)

# 手部在自身座標系中：手指沿 +y 伸展，拇指在 -x 側
_FINGER_BASE = {
    "thumb": (-0.6, 0.8, 0.0),
    "index": (-0.25, 1.0, 0.0),
    "middle": (0.0, 1.0, 0.0),
    "ring": (0.2, 1.0, 0.0),
    "pinky": (0.4, 1.0, 0.0),
}
_FINGER_SEGMENT = {
    "thumb": (-0.4, 1.0, 0.0),
    "index": (-0.05, 1.0, 0.0),
    "middle": (0.0, 1.0, 0.0),
    "ring": (0.05, 1.0, 0.0),
    "pinky": (0.1, 1.0, 0.0),
}
HAND_REST_DIRECTIONS = ((0.0, 0.0, 0.0),) + tuple(
    _FINGER_BASE[f] if k == 0 else _FINGER_SEGMENT[f] for f in FINGERS for k in range(4)
)


def _reference_file() -> Path:
    current = Path(__file__).parent
    project_root = current.parent.parent  # src/core -> src -> project_root
    return project_root / "src" / "assets" / "reference_skeleton.json"


def load_reference_lengths(path: Optional[Path] = None) -> Dict[str, Dict[str, float]]:
    """
    讀取參考骨長檔案

    Returns:
        Dict: {"body": {關節: 長度}, "hand": {關節: 長度}}

    Raises:
        ConfigError: 檔案無法讀取或缺少關節
    """
    path = Path(path) if path is not None else _reference_file()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read reference skeleton {path}: {e}") from e

    if data.get("layout_version") != LAYOUT_VERSION:
        raise ConfigError(
            f"reference skeleton layout version {data.get('layout_version')} != {LAYOUT_VERSION}"
        )

    lengths = {"body": data.get("body", {}), "hand": data.get("hand", {})}
    missing = [n for n in BODY_JOINT_NAMES if n not in lengths["body"]]
    missing += [n for n in HAND_JOINT_NAMES[1:] if n not in lengths["hand"]]
    if missing:
        raise ConfigError(f"reference skeleton is missing bones: {', '.join(missing)}")
    return lengths


@dataclass(frozen=True, eq=False)
class SkeletonLayout:
    """
    關節樹

    parents 為 -1 的關節接在虛擬根節點上，根節點位置為 root_joints 的平均；
    pinned 中的關節與其父節點重合（手腕接到身體手腕）。
    """
    names: Tuple[str, ...]
    parents: Tuple[int, ...]
    root_joints: Tuple[int, ...]
    rest_directions: np.ndarray
    bone_lengths: np.ndarray
    pinned: frozenset = frozenset()

    def __post_init__(self):
        n = len(self.names)
        if len(self.parents) != n or self.rest_directions.shape != (n, 3) or self.bone_lengths.shape != (n,):
            raise ConfigError("skeleton layout arrays disagree on the joint count")
        for j, p in enumerate(self.parents):
            # 父節點必須排在子節點之前，保證由根往下走訪即可
            if p >= j or p < -1:
                raise ConfigError(f"joint {self.names[j]} has invalid parent {p}")
        if not self.root_joints:
            raise ConfigError("layout needs at least one root joint")

    @property
    def n_joints(self) -> int:
        return len(self.names)

    def bone_name(self, joint: int) -> str:
        parent = self.parents[joint]
        start = "root" if parent < 0 else self.names[parent]
        return f"{start}->{self.names[joint]}"

    def root_position(self, points: np.ndarray) -> np.ndarray:
        """(..., J, 3) -> (..., 3)"""
        return points[..., list(self.root_joints), :].mean(axis=-2)

    def check(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        if p.shape[-2:] != (self.n_joints, 3):
            raise ShapeError(f"expected (..., {self.n_joints}, 3) joints, got shape {p.shape}")
        return p

    def measure_lengths(self, points: np.ndarray) -> np.ndarray:
        """量測每根骨頭的長度（以子關節索引），輸入 (..., J, 3)"""
        p = self.check(points)
        root = self.root_position(p)
        lengths = np.empty(p.shape[:-1])
        for j, parent in enumerate(self.parents):
            start = root if parent < 0 else p[..., parent, :]
            lengths[..., j] = np.linalg.norm(p[..., j, :] - start, axis=-1)
        return lengths

    def rest_pose(self, root: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
        """以參考骨長與靜止方向建立的 (J, 3) 姿勢"""
        offsets = self.rest_directions * self.bone_lengths[:, None]
        origin = np.asarray(root, dtype=np.float64)
        out = np.zeros((self.n_joints, 3))
        for j, parent in enumerate(self.parents):
            start = origin if parent < 0 else out[parent]
            out[j] = start + offsets[j]
        return out

    def normalize_bones(self, points: np.ndarray, lengths: Optional[np.ndarray] = None) -> np.ndarray:
        """
        由根節點往下走訪，把每根骨頭縮放到參考長度並保留方向

        Args:
            points: (J, 3) 姿勢
            lengths: 目標骨長，預設為參考骨長

        Raises:
            MetricError: 輸入含長度為零的骨頭（訊息帶骨頭名稱）
        """
        p = self.check(points)
        if p.ndim != 2:
            raise ShapeError(f"normalize_bones expects a single (J, 3) pose, got shape {p.shape}")
        target = self.bone_lengths if lengths is None else np.asarray(lengths, dtype=np.float64)

        root = self.root_position(p)
        out = np.empty_like(p)
        for j, parent in enumerate(self.parents):
            start_in = root if parent < 0 else p[parent]
            start_out = root if parent < 0 else out[parent]
            if j in self.pinned:
                out[j] = start_out
                continue
            bone = p[j] - start_in
            norm = float(np.linalg.norm(bone))
            if norm < 1e-12:
                raise MetricError("zero-length bone", bone=self.bone_name(j))
            out[j] = start_out + bone / norm * target[j]
        return out


def _as_array(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    return np.divide(arr, norms, out=np.zeros_like(arr), where=norms > 0)


@lru_cache(maxsize=None)
def body_layout() -> SkeletonLayout:
    lengths = load_reference_lengths()["body"]
    return SkeletonLayout(
        names=BODY_JOINT_NAMES,
        parents=BODY_PARENTS,
        root_joints=(R_HIP, L_HIP),
        rest_directions=_as_array(BODY_REST_DIRECTIONS),
        bone_lengths=np.array([lengths[n] for n in BODY_JOINT_NAMES], dtype=np.float64),
    )


@lru_cache(maxsize=None)
def hand_layout() -> SkeletonLayout:
    lengths = load_reference_lengths()["hand"]
    return SkeletonLayout(
        names=HAND_JOINT_NAMES,
        parents=HAND_PARENTS,
        root_joints=(0,),
        rest_directions=_as_array(HAND_REST_DIRECTIONS),
        bone_lengths=np.array([0.0] + [lengths[n] for n in HAND_JOINT_NAMES[1:]], dtype=np.float64),
        pinned=frozenset({0}),
    )


@lru_cache(maxsize=None)
def whole_body_layout() -> SkeletonLayout:
    """57 關節：身體 0-14，左手 15-35（手腕接 l_wrist），右手 36-56（手腕接 r_wrist）"""
    body = body_layout()
    hand = hand_layout()

    names = list(body.names)
    parents = list(body.parents)
    for prefix, wrist, offset in (("lh", L_WRIST, LEFT_HAND.start), ("rh", R_WRIST, RIGHT_HAND.start)):
        names += [f"{prefix}_{n}" for n in hand.names]
        parents += [wrist] + [p + offset for p in hand.parents[1:]]

    return SkeletonLayout(
        names=tuple(names),
        parents=tuple(parents),
        root_joints=(R_HIP, L_HIP),
        rest_directions=np.concatenate([body.rest_directions, hand_rest_in_body(False), hand_rest_in_body(True)]),
        bone_lengths=np.concatenate([body.bone_lengths, hand.bone_lengths, hand.bone_lengths]),
        pinned=frozenset({LEFT_HAND.start, RIGHT_HAND.start}),
    )


def hand_rest_in_body(right: bool) -> np.ndarray:
    """
    手部靜止方向轉到身體座標系：手指朝下，掌心朝身體

    右手以 x 鏡像，讓拇指都朝前方
    """
    dirs = hand_layout().rest_directions
    # 手部 (x, y, z) -> 身體 (-z, -y, -x)：手指 +y 朝下，拇指 -x 朝前 +z
    mapped = np.stack([-dirs[:, 2], -dirs[:, 1], -dirs[:, 0]], axis=-1)
    if right:
        mapped = mapped * np.array([-1.0, 1.0, 1.0])
    return mapped


def pelvis(points: np.ndarray) -> np.ndarray:
    """骨盆代理點：兩髖中點，輸入 (..., J, 3)，J 可為 15 或 57"""
    p = np.asarray(points, dtype=np.float64)
    return 0.5 * (p[..., R_HIP, :] + p[..., L_HIP, :])
