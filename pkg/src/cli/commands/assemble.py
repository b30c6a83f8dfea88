"""
assemble 子命令：身體解碼結果與手部估計組合為全身動作
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from src.cli.commands import add_output, emit, storage
from src.core.errors import FormatError, GeometryError, OutOfFOVError, ShapeError
from src.core.fisheye_camera import FisheyeCamera
from src.core.motion_prior import MotionSequence
from src.core.pose_assembly import HandEstimate, assemble, hand_frame
from src.core.settings import settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("assemble", help="integrate hands into the body pose per frame")
    parser.add_argument("--decoded", required=True, help="decoded body joints JSON")
    parser.add_argument("--hands", default=None, help="hand estimates JSON")
    parser.add_argument("--camera", required=True, help="calibration JSON")
    parser.add_argument("--fps", type=float, default=None, help="frame rate of the output motion")
    parser.add_argument("--up-axis", type=float, nargs=3, default=(0.0, 0.0, -1.0), metavar=("X", "Y", "Z"),
                        help="gravity-up direction in the camera frame")
    parser.add_argument("--poses-dir", default=None, help="also write one pose JSON per frame")
    add_output(parser)
    parser.set_defaults(handler=assemble_command)


def _hand(entry: Optional[dict], camera: FisheyeCamera, side: str, index: int) -> Optional[HandEstimate]:
    if entry is None:
        return None
    try:
        frame = hand_frame(entry["center"], float(entry["bbox"]), camera)
    except (OutOfFOVError, GeometryError) as e:
        logger.warning("frame %d: %s hand box unusable (%s), treating it as missing", index, side, e)
        return None
    except (TypeError, ValueError) as e:
        raise FormatError(f"frame {index}: {side} hand box is malformed: {e}") from e
    try:
        return HandEstimate(joints=entry["joints"], uncertainty=entry["uncertainty"], frame=frame)
    except (TypeError, ValueError) as e:
        raise FormatError(f"frame {index}: {side} hand joints are malformed: {e}") from e


def assemble_command(args) -> int:
    """
    Raises:
        ShapeError: 手部估計與解碼結果的幀數不同
    """
    camera = storage.load_camera(args.camera)
    decoded = storage.load_decoded(args.decoded)
    hands = storage.load_hand_estimates(args.hands) if args.hands else [{} for _ in decoded]
    if len(hands) != len(decoded):
        raise ShapeError(f"{len(hands)} hand frames for {len(decoded)} decoded frames")

    poses = []
    for i, (body, pair) in enumerate(zip(decoded, hands)):
        left = _hand(pair.get("left"), camera, "left", i)
        right = _hand(pair.get("right"), camera, "right", i)
        poses.append(assemble(body["xyz"], body["uncertainty"], left, right))

    fps = args.fps if args.fps is not None else float(settings.get("synth.fps", 30.0))
    seq = MotionSequence(
        frames=np.stack([p.joints for p in poses]),
        fps=fps,
        uncertainty=np.stack([p.uncertainty for p in poses]),
        up_axis=np.asarray(args.up_axis, dtype=np.float64),
    )
    storage.save_motion(seq, args.output)
    if args.poses_dir:
        for i, pose in enumerate(poses):
            storage.save_pose(pose, Path(args.poses_dir) / f"pose_{i:05d}.json")

    missing = sum(not p.valid[side] for p in poses for side in ("left", "right"))
    emit("cli.assemble.written", path=args.output, frames=len(poses), missing=missing)
    return 0
