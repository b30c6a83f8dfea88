"""
合成資料產生器
以前向運動學產生全身動作序列，轉到頭戴式下視相機座標系，
並渲染 3D 熱圖與模擬手部估計，作為動作先驗的訓練資料與解碼器的驗證基準
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.errors import DomainError, GeometryError, OutOfFOVError, UnknownFamilyError
from src.core.fisheye_camera import FisheyeCamera
from src.core.heatmap3d import Heatmap3D, uvd_to_voxel
from src.core.motion_prior import MotionSequence
from src.core.patch_sampler import tangent_frame
from src.core.settings import settings
from src.core.skeleton import (
    L_HIP,
    L_WRIST,
    LEFT_HAND,
    N_BODY,
    R_HIP,
    R_WRIST,
    RIGHT_HAND,
    whole_body_layout,
)

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]

SCORE_FLOOR = -50.0
PELVIS_HEIGHT = 0.9
CAMERA_MOUNT = np.array([0.0, 0.18, 0.10])  # 相對頸部：上方、前方

X_AXIS = np.array([1.0, 0.0, 0.0])
Y_AXIS = np.array([0.0, 1.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])

# 關節 -> [(旋轉軸, 角度序列)]
Curves = Dict[int, List[Tuple[np.ndarray, np.ndarray]]]


def _wave(t: np.ndarray, amp: float, freq: float, phase: float) -> Tuple[np.ndarray, float]:
    """A sin(2π f t + φ) 與其角速度上限"""
    return amp * np.sin(2.0 * np.pi * freq * t + phase), abs(amp) * 2.0 * np.pi * freq


def _rise(t: np.ndarray, amp: float, freq: float, phase: float) -> Tuple[np.ndarray, float]:
    """A (1 - cos(2π f t + φ)) / 2，從 0 平滑升到 A"""
    return amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * freq * t + phase)), abs(amp) * np.pi * freq


class _CurveBuilder:
    def __init__(self):
        self.curves: Curves = {}
        self.speeds: Dict[int, float] = {}

    def add(self, joint: int, axis: np.ndarray, curve: Tuple[np.ndarray, float]) -> None:
        angle, speed = curve
        self.curves.setdefault(joint, []).append((axis, angle))
        self.speeds[joint] = self.speeds.get(joint, 0.0) + speed


def _fingers(builder: _CurveBuilder, t: np.ndarray, rng: np.random.Generator, amp: float, freq: float) -> None:
    """兩手手指的屈伸"""
    for part in (LEFT_HAND, RIGHT_HAND):
        base_phase = rng.uniform(0.0, 2.0 * np.pi)
        for finger in range(5):
            phase = base_phase + 0.4 * finger
            for k in range(3):
                joint = part.start + 1 + 4 * finger + k
                builder.add(joint, X_AXIS, _rise(t, amp * (0.6 + 0.2 * k), freq, phase))


def _walk(t: np.ndarray, rng: np.random.Generator, builder: _CurveBuilder) -> Tuple[Callable, float]:
    speed = rng.uniform(0.8, 1.4)
    freq = speed / 1.4
    hip = rng.uniform(0.3, 0.45)
    knee = rng.uniform(0.5, 0.8)
    arm = rng.uniform(0.2, 0.4)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    # 繞 +x 的負角度讓大腿向前擺
    builder.add(R_HIP, X_AXIS, _wave(t, -hip, freq, phase))
    builder.add(L_HIP, X_AXIS, _wave(t, -hip, freq, phase + np.pi))
    builder.add(R_HIP + 1, X_AXIS, _rise(t, knee, freq, phase + 0.5 * np.pi))
    builder.add(L_HIP + 1, X_AXIS, _rise(t, knee, freq, phase + 1.5 * np.pi))
    builder.add(1, X_AXIS, _wave(t, -arm, freq, phase + np.pi))
    builder.add(4, X_AXIS, _wave(t, -arm, freq, phase))
    builder.add(2, X_AXIS, _rise(t, -0.3, freq, phase))
    builder.add(5, X_AXIS, _rise(t, -0.3, freq, phase + np.pi))
    _fingers(builder, t, rng, 0.3, 0.5)

    bob = 0.02
    bob_speed = bob * 2.0 * np.pi * 2.0 * freq

    def root_velocity(times: np.ndarray) -> np.ndarray:
        vel = np.zeros((len(times), 3))
        vel[:, 2] = speed
        vel[:, 1] = bob * 2.0 * np.pi * 2.0 * freq * np.cos(2.0 * np.pi * 2.0 * freq * times + phase)
        return vel

    return root_velocity, speed + bob_speed


def _reach(t: np.ndarray, rng: np.random.Generator, builder: _CurveBuilder) -> Tuple[Callable, float]:
    right = rng.random() < 0.5
    shoulder, elbow = (1, 2) if right else (4, 5)
    freq = rng.uniform(0.25, 0.5)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    builder.add(shoulder, X_AXIS, _rise(t, -rng.uniform(0.8, 1.4), freq, phase))
    builder.add(elbow, X_AXIS, _rise(t, -rng.uniform(0.2, 0.6), freq, phase + np.pi))
    builder.add(0, X_AXIS, _rise(t, rng.uniform(0.05, 0.2), freq, phase))
    _fingers(builder, t, rng, 0.5, freq)
    return (lambda times: np.zeros((len(times), 3))), 0.0


def _wave_hand(t: np.ndarray, rng: np.random.Generator, builder: _CurveBuilder) -> Tuple[Callable, float]:
    right = rng.random() < 0.5
    shoulder, elbow, wrist = (1, 2, 3) if right else (4, 5, 6)
    side = -1.0 if right else 1.0
    freq = rng.uniform(1.0, 2.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    # 手臂側舉後以手肘來回擺動
    builder.add(shoulder, Z_AXIS, _rise(t, side * rng.uniform(0.6, 1.0), 0.2, -0.5 * np.pi))
    builder.add(shoulder, X_AXIS, _rise(t, -0.5, 0.2, -0.5 * np.pi))
    builder.add(elbow, X_AXIS, _wave(t, rng.uniform(0.3, 0.5), freq, phase))
    builder.add(wrist, Z_AXIS, _wave(t, 0.3, freq, phase + 0.5 * np.pi))
    _fingers(builder, t, rng, 0.2, 0.5)
    return (lambda times: np.zeros((len(times), 3))), 0.0


def _hand(t: np.ndarray, rng: np.random.Generator, builder: _CurveBuilder) -> Tuple[Callable, float]:
    # 雙手手肘彎曲把手放到身前，手指做抓握
    for shoulder, elbow in ((1, 2), (4, 5)):
        builder.add(shoulder, X_AXIS, _rise(t, -0.4, 0.1, -0.5 * np.pi))
        builder.add(elbow, X_AXIS, _rise(t, -rng.uniform(1.0, 1.4), 0.1, -0.5 * np.pi))
    freq = rng.uniform(0.5, 1.0)
    _fingers(builder, t, rng, 1.0, freq)
    builder.add(R_WRIST, Y_AXIS, _wave(t, 0.4, 0.3, rng.uniform(0.0, 2.0 * np.pi)))
    builder.add(L_WRIST, Y_AXIS, _wave(t, 0.4, 0.3, rng.uniform(0.0, 2.0 * np.pi)))
    return (lambda times: np.zeros((len(times), 3))), 0.0


FAMILIES = {
    "walk": _walk,
    "reach": _reach,
    "wave": _wave_hand,
    "hand": _hand,
}


def _levers(parents: Sequence[int], lengths: np.ndarray) -> np.ndarray:
    """每個關節到最遠子孫的路徑長，用於速度上限"""
    lever = np.zeros(len(parents))
    for j in range(len(parents) - 1, -1, -1):
        p = parents[j]
        if p >= 0:
            lever[p] = max(lever[p], lever[j] + lengths[j])
    return lever


def forward_kinematics(rotvecs: np.ndarray, root_pos: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """
    Args:
        rotvecs: (L, J, 3) 每個關節相對父節點的旋轉向量
        root_pos: (L, 3) 骨盆位置
        heading: 3x3 根節點朝向

    Returns:
        np.ndarray: (L, J, 3) 關節位置
    """
    layout = whole_body_layout()
    offsets = layout.rest_directions * layout.bone_lengths[:, None]
    frames, joints = rotvecs.shape[:2]

    local = Rotation.from_rotvec(rotvecs.reshape(-1, 3)).as_matrix().reshape(frames, joints, 3, 3)
    world_rot = np.empty_like(local)
    pos = np.empty((frames, joints, 3))
    root_rot = np.broadcast_to(heading, (frames, 3, 3))

    for j, parent in enumerate(layout.parents):
        parent_rot = root_rot if parent < 0 else world_rot[:, parent]
        start = root_pos if parent < 0 else pos[:, parent]
        pos[:, j] = start + np.einsum("lab,b->la", parent_rot, offsets[j])
        world_rot[:, j] = parent_rot @ local[:, j]
    return pos


def _one_sequence(family: str, length: int, fps: float, v_max: float, rng: np.random.Generator) -> MotionSequence:
    layout = whole_body_layout()
    t = np.arange(length, dtype=np.float64) / fps
    builder = _CurveBuilder()
    root_velocity, root_speed = FAMILIES[family](t, rng, builder)

    # |v| <= 根速度 + Σ |ω_j| * lever_j；超過上限時整體縮小振幅
    lever = _levers(layout.parents, layout.bone_lengths)
    bound = root_speed + sum(speed * lever[j] for j, speed in builder.speeds.items())
    scale = min(1.0, 0.95 * v_max / bound) if bound > 0 else 1.0

    rotvecs = np.zeros((length, layout.n_joints, 3))
    for joint, terms in builder.curves.items():
        for axis, angle in terms:
            rotvecs[:, joint] += scale * angle[:, None] * axis

    heading = Rotation.from_euler("y", rng.uniform(0.0, 2.0 * np.pi)).as_matrix()
    start = np.array([rng.uniform(-1.0, 1.0), PELVIS_HEIGHT, rng.uniform(-1.0, 1.0)])
    velocity = scale * root_velocity(t) @ heading.T
    # 梯形積分；速度平滑，位移不超過 max|v| / fps
    steps = 0.5 * (velocity[1:] + velocity[:-1]) / fps
    root_pos = start + np.concatenate([np.zeros((1, 3)), np.cumsum(steps, axis=0)])

    return MotionSequence(frames=forward_kinematics(rotvecs, root_pos, heading), fps=fps)


def gen_motion(
    n_sequences: int,
    seed: int,
    length: Optional[int] = None,
    fps: Optional[float] = None,
    families: Optional[Sequence[str]] = None,
    v_max: Optional[float] = None,
) -> List[MotionSequence]:
    """
    產生合成動作序列（y 朝上的世界座標系）

    第 i 條序列使用 families[i % len(families)]，亂數由 (seed, i) 決定

    Raises:
        UnknownFamilyError: 未知的動作類型
        DomainError: length < 2 或 n_sequences < 1
    """
    cfg = settings.section("synth")
    length = int(cfg["length"] if length is None else length)
    fps = float(cfg["fps"] if fps is None else fps)
    v_max = float(cfg["v_max"] if v_max is None else v_max)
    families = list(cfg["families"] if families is None else families)

    if length < 2:
        raise DomainError(f"sequence length must be >= 2, got {length}")
    if n_sequences < 1:
        raise DomainError(f"n_sequences must be >= 1, got {n_sequences}")
    unknown = [f for f in families if f not in FAMILIES]
    if unknown or not families:
        raise UnknownFamilyError(
            f"unknown motion family '{unknown[0] if unknown else ''}', expected one of {', '.join(FAMILIES)}"
        )

    sequences = []
    for i in range(n_sequences):
        family = families[i % len(families)]
        rng = np.random.default_rng([seed, i])
        sequences.append(_one_sequence(family, length, fps, v_max, rng))
        logger.debug("generated sequence %d (%s)", i, family)
    return sequences


def to_camera_frame(seq: MotionSequence) -> MotionSequence:
    """
    轉到頭戴式下視相機座標系

    相機位於頸部上方 0.18 m、前方 0.10 m；z 朝重力方向，x 朝身體左側，y 朝前。
    回傳序列的 up_axis 為 (0, 0, -1)。
    """
    up = seq.up_axis
    hipline = seq.frames[:, L_HIP] - seq.frames[:, R_HIP]
    hipline = hipline - np.outer(hipline @ up, up)
    norms = np.linalg.norm(hipline, axis=-1, keepdims=True)
    if np.any(norms < 1e-9):
        raise DomainError("hip line is vertical; cannot place the head camera")
    left = hipline / norms
    forward = np.cross(left, up)
    down = np.broadcast_to(-up, left.shape)

    # 每幀的相機旋轉，各欄為 (x_c, y_c, z_c)
    cam_rot = np.stack([left, forward, down], axis=-1)
    neck = seq.frames[:, 0]
    position = neck + CAMERA_MOUNT[1] * up + CAMERA_MOUNT[2] * forward

    local = np.einsum("lji,lkj->lki", cam_rot, seq.frames - position[:, None, :])
    return MotionSequence(frames=local, fps=seq.fps, uncertainty=seq.uncertainty, up_axis=np.array([0.0, 0.0, -1.0]))


def _add_peak(volume: np.ndarray, center: np.ndarray, sigma: float) -> None:
    """在連續體素位置 (w, h, d) 寫入截斷於 3σ 的對數高斯分數（峰值 1），與既有分數取最大"""
    d_n, h_n, w_n = volume.shape
    radius = 3.0 * sigma
    lo = np.maximum(np.floor(center - radius).astype(int), 0)
    hi = np.minimum(np.ceil(center + radius).astype(int) + 1, [w_n, h_n, d_n])
    if np.any(hi <= lo):
        return
    w, h, d = np.meshgrid(
        np.arange(lo[0], hi[0]), np.arange(lo[1], hi[1]), np.arange(lo[2], hi[2]), indexing="ij"
    )
    r2 = (w - center[0]) ** 2 + (h - center[1]) ** 2 + (d - center[2]) ** 2
    score = np.where(r2 <= radius * radius, 1.0 - r2 / (2.0 * sigma * sigma), SCORE_FLOOR)
    block = volume[lo[2]:hi[2], lo[1]:hi[1], lo[0]:hi[0]]
    np.maximum(block, score.transpose(2, 1, 0), out=block)


def _heatmap_params(dims, sigma, depth_range):
    hm = settings.section("heatmap")
    dims = tuple(int(x) for x in (hm["dims"] if dims is None else dims))
    sigma = float(hm["render_sigma"] if sigma is None else sigma)
    depth_range = tuple(float(x) for x in (hm["depth_range"] if depth_range is None else depth_range))
    return dims, sigma, depth_range


def _joint_voxels(joints: np.ndarray, camera: FisheyeCamera, dims, depth_range) -> Tuple[np.ndarray, np.ndarray]:
    """每個關節的連續體素位置與是否可渲染"""
    voxels = np.zeros((len(joints), 3))
    valid = np.zeros(len(joints), dtype=bool)
    upper = np.array([dims[2] - 1, dims[1] - 1, dims[0] - 1], dtype=np.float64)
    for j, point in enumerate(joints):
        try:
            uv = camera.project(point)
        except OutOfFOVError:
            continue
        uvd = np.array([uv[0], uv[1], np.linalg.norm(point)])
        voxels[j] = uvd_to_voxel(uvd, dims, camera.image_size, depth_range)
        valid[j] = bool(np.all(voxels[j] >= 0.0) and np.all(voxels[j] <= upper))
    return voxels, valid


def render_voxels(
    peaks: Sequence[Sequence[np.ndarray]],
    dims: Tuple[int, int, int],
    sigma: float,
    depth_range: Tuple[float, float],
    image_size: Tuple[int, int],
) -> Heatmap3D:
    """每個關節可有零個或多個峰值（連續體素位置 (w, h, d)）"""
    values = np.full((len(peaks),) + tuple(dims), SCORE_FLOOR, dtype=np.float64)
    for j, centers in enumerate(peaks):
        for center in centers:
            _add_peak(values[j], np.asarray(center, dtype=np.float64), sigma)
    return Heatmap3D(values=values, depth_range=depth_range, image_size=image_size)


def render_heatmap(
    joints: np.ndarray,
    camera: FisheyeCamera,
    dims: Optional[Sequence[int]] = None,
    sigma_voxels: Optional[float] = None,
    depth_range: Optional[Sequence[float]] = None,
) -> Tuple[Heatmap3D, np.ndarray]:
    """
    渲染相機座標系關節的 3D 熱圖

    視野外或超出體積的關節不寫入峰值，只在回傳的旗標中標記

    Returns:
        (Heatmap3D, valid): valid 為每個關節是否成功渲染
    """
    dims, sigma, depth_range = _heatmap_params(dims, sigma_voxels, depth_range)
    points = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
    voxels, valid = _joint_voxels(points, camera, dims, depth_range)
    peaks = [[voxels[j]] if valid[j] else [] for j in range(len(points))]
    return render_voxels(peaks, dims, sigma, depth_range, camera.image_size), valid


def render_sequence_heatmaps(
    seq: MotionSequence,
    camera: FisheyeCamera,
    seed: SeedLike,
    dims: Optional[Sequence[int]] = None,
    sigma_voxels: Optional[float] = None,
    depth_range: Optional[Sequence[float]] = None,
    jitter_voxels: float = 0.5,
    distractor_fraction: float = 0.1,
    distractor_distance: Tuple[float, float] = (5.0, 9.0),
) -> List[Heatmap3D]:
    """
    模擬身體熱圖估計器

    每幀 15 個身體關節；峰值位置加上高斯抖動，另以 distractor_fraction 的機率
    為關節加入等高的干擾峰，模擬遮擋造成的模糊（解碼後不確定度高）
    """
    dims, sigma, depth_range = _heatmap_params(dims, sigma_voxels, depth_range)
    rng = np.random.default_rng(seed)
    upper = np.array([dims[2] - 1, dims[1] - 1, dims[0] - 1], dtype=np.float64)
    heatmaps = []
    for frame in seq.frames:
        voxels, valid = _joint_voxels(frame[:N_BODY], camera, dims, depth_range)
        jitter = rng.normal(0.0, jitter_voxels, size=voxels.shape)
        distract = rng.random(N_BODY) < distractor_fraction
        direction = rng.normal(size=(N_BODY, 3))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        distance = rng.uniform(*distractor_distance, size=N_BODY)

        peaks = []
        for j in range(N_BODY):
            if not valid[j]:
                peaks.append([])
                continue
            centers = [np.clip(voxels[j] + jitter[j], 0.0, upper)]
            if distract[j]:
                centers.append(np.clip(voxels[j] + distance[j] * direction[j], 0.0, upper))
            peaks.append(centers)
        heatmaps.append(render_voxels(peaks, dims, sigma, depth_range, camera.image_size))
    return heatmaps


def simulate_hand_estimates(
    seq: MotionSequence,
    camera: FisheyeCamera,
    seed: SeedLike,
    noise_m: float = 0.005,
    dropout: float = 0.05,
    bbox_margin: float = 1.2,
) -> List[dict]:
    """
    模擬手部偵測與估計

    每幀每隻手回傳偵測框中心、邊長，以及裁切座標系中的 21 個關節（加上雜訊）
    與不確定度；偵測失敗或偵測框超出視野時為 None

    Returns:
        List[dict]: [{"left": {...} | None, "right": {...} | None}] 逐幀
    """
    max_u = float(settings.get("heatmap.max_uncertainty", 0.05))
    rng = np.random.default_rng(seed)
    result = []
    for frame in seq.frames:
        entry = {}
        for name, part in (("left", LEFT_HAND), ("right", RIGHT_HAND)):
            hand = frame[part]
            noise = rng.normal(0.0, noise_m, size=hand.shape)
            noise[0] = 0.0
            drop = rng.random() < dropout
            entry[name] = None if drop else _hand_estimate(hand, noise, camera, bbox_margin, noise_m, max_u)
        result.append(entry)
    return result


def _hand_estimate(hand, noise, camera, margin, noise_m, max_u) -> Optional[dict]:
    try:
        pixels = camera.project(hand)
        center = pixels.mean(axis=0)
        bbox = max(float(np.max(pixels.max(axis=0) - pixels.min(axis=0))) * margin, 8.0)
        frame = tangent_frame(center, bbox / 2.0, camera)
    except (OutOfFOVError, DomainError, GeometryError) as e:
        logger.debug("hand detection dropped: %s", e)
        return None

    local = (hand - hand[0]) @ frame.axes + noise
    spread = np.linalg.norm(noise, axis=-1) / max(noise_m, 1e-12)
    unc = np.clip(0.01 * spread, 0.0, max_u)
    return {
        "center": [float(center[0]), float(center[1])],
        "bbox": bbox,
        "joints": local.tolist(),
        "uncertainty": unc.tolist(),
    }
