"""
擴散動作先驗
雜訊排程、前向加噪、動作正規化（骨盆相對、朝向對齊）以及以不確定度引導的精修取樣
"""
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation
from scipy.special import expit

from src.core.errors import ConfigError, DomainError, GeometryError, ShapeError
from src.core.settings import settings
from src.core.skeleton import L_HIP, LAYOUT_VERSION, N_WHOLE, R_HIP, pelvis

if TYPE_CHECKING:
    from src.core.denoiser import DenoiserModel

logger = logging.getLogger(__name__)

Y_UP = np.array([0.0, 1.0, 0.0])
FEATURES = N_WHOLE * 3

WeightFn = Callable[[int, np.ndarray], np.ndarray]


@dataclass
class MotionSequence:
    """
    L 幀 57 關節的動作（公尺）

    up_axis 為關節所在座標系中的重力向上方向
    """
    frames: np.ndarray
    fps: float = 30.0
    uncertainty: Optional[np.ndarray] = None
    up_axis: np.ndarray = field(default_factory=lambda: Y_UP.copy())

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.up_axis = np.asarray(self.up_axis, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (N_WHOLE, 3) or self.frames.shape[0] < 1:
            raise ShapeError(f"motion must be (L >= 1, {N_WHOLE}, 3), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DomainError("motion contains non-finite values")
        if self.uncertainty is not None:
            self.uncertainty = np.asarray(self.uncertainty, dtype=np.float64)
            if self.uncertainty.shape != self.frames.shape[:2]:
                raise ShapeError(
                    f"uncertainty must be {self.frames.shape[:2]}, got {self.uncertainty.shape}"
                )
        norm = float(np.linalg.norm(self.up_axis))
        if self.up_axis.shape != (3,) or norm < 1e-12:
            raise DomainError("up axis must be a non-zero 3-vector")
        self.up_axis = self.up_axis / norm

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    def to_dict(self) -> dict:
        data = {
            "layout_version": LAYOUT_VERSION,
            "fps": float(self.fps),
            "frames": self.frames.tolist(),
        }
        if self.uncertainty is not None:
            data["uncertainty"] = self.uncertainty.tolist()
        if not np.allclose(self.up_axis, Y_UP):
            data["up_axis"] = self.up_axis.tolist()
        return data


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """DDPM 排程；posterior_variance 為 β̃_t"""
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray
    posterior_variance: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.betas)


def make_schedule(steps: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """
    線性 β 排程

    Raises:
        ConfigError: 0 < beta_min <= beta_max < 1 或 steps >= 1 不成立
    """
    if steps < 1:
        raise ConfigError(f"schedule needs at least one step, got {steps}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")

    betas = np.linspace(beta_min, beta_max, steps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    posterior = betas * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bar=alpha_bar, posterior_variance=posterior)


def schedule_from_settings() -> NoiseSchedule:
    cfg = settings.section("prior")
    return make_schedule(int(cfg["steps"]), float(cfg["beta_min"]), float(cfg["beta_max"]))


def q_sample(x0: np.ndarray, t: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """x_t = sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) noise"""
    if not 0 <= t < schedule.steps:
        raise DomainError(f"timestep {t} outside [0, {schedule.steps})")
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ShapeError(f"noise shape {noise.shape} does not match {x0.shape}")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


@dataclass(frozen=True, eq=False)
class CanonicalTransform:
    """
    正規化所用的剛體變換

    canonical = yaw @ (up_rotation @ p - translations[l])
    """
    up_rotation: np.ndarray
    yaw: np.ndarray
    translations: np.ndarray
    up_axis: np.ndarray


def _up_rotation(up: np.ndarray) -> np.ndarray:
    """把 up 轉到 +y 的固定旋轉"""
    cos = float(np.clip(np.dot(up, Y_UP), -1.0, 1.0))
    if cos > 1.0 - 1e-12:
        return np.eye(3)
    if cos < -1.0 + 1e-12:
        return Rotation.from_rotvec([np.pi, 0.0, 0.0]).as_matrix()
    axis = np.cross(up, Y_UP)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * np.arccos(cos)).as_matrix()


def canonicalize(seq: MotionSequence) -> Tuple[MotionSequence, CanonicalTransform]:
    """
    骨盆相對、朝向對齊

    先把 up_axis 轉到 +y，每幀平移使骨盆代理點（兩髖中點）位於原點，
    再以整段的平均髖線方向求一個偏航角，讓髖線（左 - 右）朝 +x、面向朝 +z。

    Raises:
        GeometryError: 兩髖重合或平均髖線垂直於地面
    """
    hip_gap = np.linalg.norm(seq.frames[:, L_HIP] - seq.frames[:, R_HIP], axis=-1)
    if np.any(hip_gap < 1e-9):
        raise GeometryError(f"hips coincide in frame {int(np.argmin(hip_gap))}")

    up_rot = _up_rotation(seq.up_axis)
    upright = seq.frames @ up_rot.T
    translations = pelvis(upright)
    centered = upright - translations[:, None, :]

    hipline = (centered[:, L_HIP] - centered[:, R_HIP]).mean(axis=0)
    horizontal = float(np.hypot(hipline[0], hipline[2]))
    if horizontal < 1e-9:
        raise GeometryError("mean hip line has no horizontal component")
    yaw = Rotation.from_euler("y", np.arctan2(hipline[2], hipline[0])).as_matrix()

    canonical = replace(seq, frames=centered @ yaw.T, up_axis=Y_UP.copy())
    record = CanonicalTransform(up_rotation=up_rot, yaw=yaw, translations=translations, up_axis=seq.up_axis.copy())
    return canonical, record


def decanonicalize(seq: MotionSequence, record: CanonicalTransform) -> MotionSequence:
    """canonicalize 的反變換"""
    if seq.length != len(record.translations):
        raise ShapeError(f"sequence has {seq.length} frames, transform has {len(record.translations)}")
    upright = seq.frames @ record.yaw + record.translations[:, None, :]
    return replace(seq, frames=upright @ record.up_rotation, up_axis=record.up_axis.copy())


@dataclass(frozen=True, eq=False)
class Normalizer:
    """逐維 z-score"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0.0):
            raise ConfigError("normalization std must be strictly positive")

    def normalize(self, flat: np.ndarray) -> np.ndarray:
        return (flat - self.mean) / self.std

    def denormalize(self, flat: np.ndarray) -> np.ndarray:
        return flat * self.std + self.mean


def fit_normalizer(sequences: Sequence[MotionSequence], std_floor: float = 1e-3) -> Normalizer:
    """由正規化後的訓練動作計算逐維平均與標準差"""
    if not sequences:
        raise DomainError("cannot fit normalization on an empty dataset")
    flat = np.concatenate([s.frames.reshape(s.length, FEATURES) for s in sequences], axis=0)
    return Normalizer(mean=flat.mean(axis=0), std=np.maximum(flat.std(axis=0), std_floor))


def weight(t: float, u: np.ndarray, steps: int, k: float) -> np.ndarray:
    """w = 1 / (1 + exp(-k (t - T u)))"""
    return expit(k * (t - steps * np.asarray(u, dtype=np.float64)))


def weight_curve(
    k_values: Sequence[float],
    u: float,
    steps: int,
    t_values: Sequence[int],
) -> Dict[float, np.ndarray]:
    """對每個 k 列出 w(t)"""
    t = np.asarray(t_values, dtype=np.float64)
    return {float(k): weight(t, u, steps, k) for k in k_values}


def window_starts(length: int, window: int, overlap: float) -> List[int]:
    """
    視窗起點；最後一個視窗對齊序列尾端

    序列短於視窗時只有一個起點 0（之後以邊緣值補齊）
    """
    if window < 1 or not 0.0 <= overlap < 1.0:
        raise ConfigError(f"invalid windowing: window={window}, overlap={overlap}")
    if length <= window:
        return [0]
    stride = max(1, int(round(window * (1.0 - overlap))))
    starts = list(range(0, length - window + 1, stride))
    if starts[-1] + window < length:
        starts.append(length - window)
    return starts


def split_windows(array: np.ndarray, window: int, starts: Sequence[int]) -> List[np.ndarray]:
    if array.shape[0] < window:
        pad = [(0, window - array.shape[0])] + [(0, 0)] * (array.ndim - 1)
        return [np.pad(array, pad, mode="edge")]
    return [array[s:s + window] for s in starts]


def blend_windows(windows: Sequence[np.ndarray], starts: Sequence[int], length: int) -> np.ndarray:
    """以三角權重 min(i+1, win-i) 疊加各視窗並正規化"""
    window = windows[0].shape[0]
    if length < window:
        return windows[0][:length].copy()

    i = np.arange(window, dtype=np.float64)
    tent = np.minimum(i + 1.0, window - i)
    shape = (window,) + (1,) * (windows[0].ndim - 1)
    tent = tent.reshape(shape)

    total = np.zeros((length,) + windows[0].shape[1:])
    norm = np.zeros((length,) + (1,) * (windows[0].ndim - 1))
    for win, start in zip(windows, starts):
        total[start:start + window] += tent * win
        norm[start:start + window] += tent
    return total / norm


def training_windows(sequences: Sequence[MotionSequence], window: int, overlap: float) -> List[MotionSequence]:
    """正規化並切成固定長度的訓練視窗"""
    result = []
    for seq in sequences:
        canonical, _ = canonicalize(seq)
        starts = window_starts(canonical.length, window, overlap)
        for frames in split_windows(canonical.frames, window, starts):
            result.append(MotionSequence(frames=frames, fps=seq.fps))
    return result


def refine(
    estimate: MotionSequence,
    model: "DenoiserModel",
    schedule: NoiseSchedule,
    k: Optional[float] = None,
    t_start: Optional[int] = None,
    seed: int = 0,
    sample: int = 0,
    uncertainty_guidance: bool = True,
    weight_fn: Optional[WeightFn] = None,
) -> MotionSequence:
    """
    不確定度引導的精修

    x_{t_start} = x_e；每一步 x̂0 = D(x_t, t)，mean = (1 - w) x̂0 + w x_e，
    除最後一步外再加上 sqrt(Σ_t) ξ。去噪器與 Σ 以 t - 1 索引。

    Args:
        estimate: 帶有逐關節不確定度的估計動作
        model: 去噪模型
        schedule: 與模型相同步數的排程
        k: 權重函數斜率，預設取自設定
        t_start: 起始步，介於 (0, T]
        seed: 隨機種子
        sample: 多樣本時的樣本編號
        uncertainty_guidance: False 時所有關節使用整段平均不確定度
        weight_fn: 取代預設權重函數 (t, u) -> w

    Returns:
        MotionSequence: 精修後的動作，座標系與輸入相同
    """
    if estimate.uncertainty is None:
        raise DomainError("refinement needs per-joint uncertainty")
    if k is None:
        k = float(settings.get("prior.k", 0.1))
    if t_start is None:
        t_start = int(settings.get("prior.t_start", schedule.steps))
    if model.config.steps != schedule.steps:
        raise ConfigError(f"model trained with T={model.config.steps}, schedule has T={schedule.steps}")
    if not 0 < t_start <= schedule.steps:
        raise ConfigError(f"t_start must lie in (0, {schedule.steps}], got {t_start}")

    u = estimate.uncertainty
    if not uncertainty_guidance:
        u = np.full_like(u, float(u.mean()))
    if weight_fn is None:
        weight_fn = lambda t, unc: weight(t, unc, schedule.steps, k)  # noqa: E731

    canonical, record = canonicalize(estimate)
    window = model.config.window
    overlap = float(settings.get("prior.overlap", 0.5))
    starts = window_starts(canonical.length, window, overlap)
    x_windows = split_windows(canonical.frames.reshape(canonical.length, FEATURES), window, starts)
    u_windows = split_windows(np.repeat(u, 3, axis=1), window, starts)

    refined = []
    for index, (x_win, u_win) in enumerate(zip(x_windows, u_windows)):
        x_e = model.normalizer.normalize(x_win)
        rng = np.random.default_rng([seed, sample, index])
        x_t = x_e.copy()
        for t in range(t_start, 0, -1):
            x0_hat = model.predict_x0(x_t, t - 1)
            w = weight_fn(t, u_win)
            mean = (1.0 - w) * x0_hat + w * x_e
            if t > 1:
                x_t = mean + np.sqrt(schedule.posterior_variance[t - 1]) * rng.standard_normal(mean.shape)
            else:
                x_t = mean
        refined.append(model.normalizer.denormalize(x_t))
        logger.debug("refined window %d/%d", index + 1, len(x_windows))

    frames = blend_windows(refined, starts, canonical.length).reshape(canonical.length, N_WHOLE, 3)
    return decanonicalize(replace(canonical, frames=frames), record)


def refine_samples(
    estimate: MotionSequence,
    model: "DenoiserModel",
    schedule: NoiseSchedule,
    n_samples: int,
    seed: int,
    **kwargs,
) -> List[MotionSequence]:
    """以不同樣本編號重複精修，取得多個樣本"""
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    return [refine(estimate, model, schedule, seed=seed, sample=s, **kwargs) for s in range(n_samples)]


def temporal_smooth(seq: MotionSequence, sigma_frames: float) -> MotionSequence:
    """沿時間軸逐關節高斯平滑（比較用基準）"""
    if not sigma_frames > 0.0:
        raise DomainError(f"sigma must be > 0, got {sigma_frames}")
    frames = ndimage.gaussian_filter1d(seq.frames, sigma_frames, axis=0, mode="nearest")
    return replace(seq, frames=frames)
