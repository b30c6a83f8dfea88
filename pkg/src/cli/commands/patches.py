"""
patches 子命令：以預先計算的網格擷取去畸變區塊、擷取手部裁切
"""
from src.cli.commands import add_output, emit, storage
from src.core.patch_sampler import extract_patches, hand_crop_grid
from src.utils.binary_formats import read_grid, write_patches
from src.utils.image_io import load_image, save_patch_preview


def register(subparsers) -> None:
    patches = subparsers.add_parser("patches", help="undistorted patch extraction")
    actions = patches.add_subparsers(dest="action", required=True)

    extract = actions.add_parser("extract", help="sample every patch of a fisheye image")
    extract.add_argument("image", help="8-bit or 16-bit PNG")
    extract.add_argument("--grid", required=True, help="EGSG sampling grid")
    extract.add_argument("--preview", default=None, help="optional PNG mosaic of the patches")
    add_output(extract)
    extract.set_defaults(handler=extract_command)

    crop = actions.add_parser("hand-crop", help="undistorted crop around a detected hand")
    crop.add_argument("image", help="8-bit or 16-bit PNG")
    crop.add_argument("--camera", required=True, help="calibration JSON")
    crop.add_argument("--center", type=float, nargs=2, required=True, metavar=("U", "V"),
                      help="hand box center in pixels")
    crop.add_argument("--bbox", type=float, required=True, help="hand box side in pixels")
    crop.add_argument("--resolution", type=int, default=64, help="crop resolution M")
    crop.add_argument("--preview", default=None, help="optional PNG of the crop")
    add_output(crop)
    crop.set_defaults(handler=hand_crop_command)


def extract_command(args) -> int:
    grid = read_grid(args.grid)
    image = load_image(args.image)
    stack = extract_patches(image, grid)
    write_patches(args.output, stack)
    if args.preview:
        save_patch_preview(stack, args.preview)
    emit("cli.patches.written", path=args.output, count=stack.shape[0])
    return 0


def hand_crop_command(args) -> int:
    camera = storage.load_camera(args.camera)
    grid, _ = hand_crop_grid(args.center, args.bbox, camera, args.resolution)
    stack = extract_patches(load_image(args.image), grid)
    write_patches(args.output, stack)
    if args.preview:
        save_patch_preview(stack, args.preview)
    emit("cli.patches.written", path=args.output, count=stack.shape[0])
    return 0
