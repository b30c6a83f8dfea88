"""Core 模組"""

from src.core.fisheye_camera import FisheyeCamera, make_equidistant_camera
from src.core.heatmap3d import DecodedJoints, Heatmap3D, decode
from src.core.motion_prior import MotionSequence, refine
from src.core.patch_sampler import PatchGridConfig, SamplingGrid, extract_patches, precompute_grid
from src.core.pose_assembly import HandEstimate, WholeBodyPose, assemble
from src.core.settings import settings
from src.core.storage import StorageManager

__all__ = [
    "FisheyeCamera",
    "make_equidistant_camera",
    "DecodedJoints",
    "Heatmap3D",
    "decode",
    "MotionSequence",
    "refine",
    "PatchGridConfig",
    "SamplingGrid",
    "extract_patches",
    "precompute_grid",
    "HandEstimate",
    "WholeBodyPose",
    "assemble",
    "settings",
    "StorageManager",
]
