"""
heatmap 子命令：解碼 3D 熱圖為關節與不確定度
"""
import logging

from src.cli.commands import add_output, emit, storage
from src.core.heatmap3d import decode
from src.utils.dataset_io import DatasetManager

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    heatmap = subparsers.add_parser("heatmap", help="3D heatmap tools")
    actions = heatmap.add_subparsers(dest="action", required=True)

    dec = actions.add_parser("decode", help="soft-argmax decode with uncertainty")
    dec.add_argument("heatmaps", help="EGHM file or directory of per-frame EGHM files")
    dec.add_argument("--camera", required=True, help="calibration JSON")
    dec.add_argument("--temperature", type=float, default=None, help="softmax temperature")
    dec.add_argument("--smooth-sigma", type=float, default=None, help="confidence smoothing sigma in voxels")
    add_output(dec)
    dec.set_defaults(handler=decode_command)


def decode_command(args) -> int:
    camera = storage.load_camera(args.camera)
    heatmaps = DatasetManager(storage).import_heatmaps(args.heatmaps)
    frames = [decode(hm, camera, args.temperature, args.smooth_sigma) for hm in heatmaps]
    outside = sum(int((~f.in_fov).sum()) for f in frames)
    if outside:
        logger.warning("%d decoded joints fall outside the field of view", outside)
    storage.save_decoded(frames, camera.image_size, args.output)
    emit("cli.heatmap.decoded", path=args.output, frames=len(frames), joints=heatmaps[0].joints)
    return 0
