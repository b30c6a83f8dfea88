"""
動作去噪網路
小型時序 Transformer，直接預測乾淨訊號 x̂0，並提供訓練迴圈
"""
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from src.core.errors import ConfigError, DomainError, ShapeError, TrainingError
from src.core.motion_prior import (
    FEATURES,
    MotionSequence,
    NoiseSchedule,
    Normalizer,
    fit_normalizer,
)
from src.core.settings import settings
from src.utils.binary_formats import read_checkpoint, write_checkpoint

logger = logging.getLogger(__name__)


@dataclass
class DenoiserConfig:
    """網路大小與訓練參數"""
    layers: int = 4
    width: int = 256
    heads: int = 4
    window: int = 196
    steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 2e-4
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.width < 1 or self.heads < 1 or self.window < 1:
            raise ConfigError("denoiser sizes must be >= 1")
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.width % 2:
            raise ConfigError("width must be even for sinusoidal embeddings")

    @classmethod
    def from_settings(cls, **overrides) -> "DenoiserConfig":
        prior = settings.section("prior")
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in prior.items() if k in names}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_embedding(positions: torch.Tensor, width: int) -> torch.Tensor:
    """(N,) -> (N, width)"""
    half = width // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    angles = positions.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class MotionDenoiser(nn.Module):
    """輸入 (B, L, 171) 與時間步 (B,)，輸出 x̂0"""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        width = config.width

        self.in_proj = nn.Linear(FEATURES, width)
        self.register_buffer(
            "frame_embedding",
            sinusoidal_embedding(torch.arange(config.window), width),
            persistent=False,
        )
        self.time_mlp = nn.Sequential(
            nn.Linear(width, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )
        # 與輸入無關的可學習條件向量
        self.null_condition = nn.Parameter(torch.zeros(width))

        layer = nn.TransformerEncoderLayer(
            d_model=width,
            nhead=config.heads,
            dim_feedforward=2 * width,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.layers, enable_nested_tensor=False)
        self.out_proj = nn.Linear(width, FEATURES)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        length = x.shape[1]
        if length > self.config.window:
            raise ShapeError(f"sequence of {length} frames exceeds window {self.config.window}")
        cond = self.time_mlp(sinusoidal_embedding(t, self.config.width)) + self.null_condition
        h = self.in_proj(x) + self.frame_embedding[:length][None] + cond[:, None, :]
        return self.out_proj(self.encoder(h))


@dataclass
class DenoiserModel:
    """去噪網路與其正規化統計"""
    config: DenoiserConfig
    network: MotionDenoiser
    normalizer: Normalizer
    loss_history: List[float] = field(default_factory=list)

    def predict_x0(self, x_t: np.ndarray, t: int) -> np.ndarray:
        """
        Args:
            x_t: (L, 171) 或 (B, L, 171) 已正規化的雜訊動作
            t: 時間步索引，介於 [0, T)

        Returns:
            np.ndarray: 與 x_t 同形狀的 float64 預測
        """
        single = x_t.ndim == 2
        batch = x_t[None] if single else x_t
        self.network.eval()
        with torch.no_grad():
            x = torch.as_tensor(batch, dtype=torch.float32)
            steps = torch.full((x.shape[0],), int(t), dtype=torch.long)
            out = self.network(x, steps).double().numpy()
        return out[0] if single else out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.network.parameters())


def train_denoiser(
    dataset: Sequence[MotionSequence],
    config: DenoiserConfig,
    schedule: NoiseSchedule,
    progress: bool = True,
) -> DenoiserModel:
    """
    以簡化目標 E||x0 - D(x_t, t)||² 訓練

    Args:
        dataset: 已正規化、長度等於視窗的動作
        config: 網路與訓練設定
        schedule: 雜訊排程
        progress: 是否顯示 tqdm 進度列

    Raises:
        DomainError: 資料集為空
        ShapeError: 序列長度不等於視窗
        TrainingError: 損失出現 NaN
    """
    if not dataset:
        raise DomainError("training dataset is empty")
    bad = [s.length for s in dataset if s.length != config.window]
    if bad:
        raise ShapeError(f"training sequences must have {config.window} frames, got {bad[0]}")
    if schedule.steps != config.steps:
        raise ConfigError(f"schedule has T={schedule.steps}, config expects T={config.steps}")

    torch.use_deterministic_algorithms(True)
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    normalizer = fit_normalizer(dataset)
    data = np.stack([normalizer.normalize(s.frames.reshape(s.length, FEATURES)) for s in dataset])
    data = torch.as_tensor(data, dtype=torch.float32)
    alpha_bar = torch.as_tensor(schedule.alpha_bar, dtype=torch.float32)

    network = MotionDenoiser(config)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
    history: List[float] = []

    epochs = tqdm(range(config.epochs), desc="train", unit="epoch", disable=not progress)
    for epoch in epochs:
        network.train()
        order = torch.randperm(len(data), generator=generator)
        total = 0.0
        batches = 0
        for step, start in enumerate(range(0, len(data), config.batch_size)):
            x0 = data[order[start:start + config.batch_size]]
            t = torch.randint(0, config.steps, (x0.shape[0],), generator=generator)
            noise = torch.randn(x0.shape, generator=generator)
            ab = alpha_bar[t][:, None, None]
            x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * noise

            loss = nn.functional.mse_loss(network(x_t, t), x0)
            if not torch.isfinite(loss):
                raise TrainingError("loss is not finite", epoch=epoch, step=step)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.item())
            batches += 1

        history.append(total / batches)
        epochs.set_postfix(loss=f"{history[-1]:.4f}")
        logger.debug("epoch %d: loss %.6f", epoch, history[-1])

    return DenoiserModel(config=config, network=network, normalizer=normalizer, loss_history=history)


def build_model(config: DenoiserConfig, normalizer: Normalizer, state: Optional[dict] = None) -> DenoiserModel:
    """由設定與（選用的）參數字典重建模型"""
    network = MotionDenoiser(config)
    if state is not None:
        try:
            network.load_state_dict({k: torch.as_tensor(v) for k, v in state.items()})
        except RuntimeError as e:
            raise ConfigError(f"checkpoint does not match the model config: {e}") from e
    return DenoiserModel(config=config, network=network, normalizer=normalizer)


def save_model(model: DenoiserModel, path) -> Path:
    """寫出 EGDM 檢查點"""
    tensors = {k: v.detach().cpu().numpy() for k, v in model.network.state_dict().items()}
    return write_checkpoint(path, model.config.to_dict(), model.normalizer, tensors)


def load_model(path) -> DenoiserModel:
    """
    讀取 EGDM 檢查點

    Raises:
        FormatError: 檔案格式錯誤
        ConfigError: 設定區塊不合法或參數與設定不符
    """
    config_dict, normalizer, tensors = read_checkpoint(path)
    names = {f.name for f in fields(DenoiserConfig)}
    unknown = sorted(set(config_dict) - names)
    if unknown:
        raise ConfigError(f"checkpoint config has unknown keys: {', '.join(unknown)}")
    try:
        config = DenoiserConfig(**config_dict)
    except TypeError as e:
        raise ConfigError(f"checkpoint config is malformed: {e}") from e
    logger.debug("loaded denoiser from %s (%d tensors)", path, len(tensors))
    return build_model(config, normalizer, tensors)
