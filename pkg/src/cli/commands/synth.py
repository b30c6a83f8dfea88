"""
synth 子命令：產生合成動作資料集，並模擬熱圖與手部估計
"""
import logging
from pathlib import Path

from src.cli.commands import add_seed, emit, storage
from src.core.settings import settings
from src.core.synth import (
    FAMILIES,
    gen_motion,
    render_sequence_heatmaps,
    simulate_hand_estimates,
    to_camera_frame,
)
from src.utils.dataset_io import DatasetManager, DatasetManifest, SequenceEntry

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    synth = subparsers.add_parser("synth", help="synthetic data")
    actions = synth.add_subparsers(dest="action", required=True)

    motion = actions.add_parser("motion", help="generate world-frame motion sequences")
    motion.add_argument("--n", type=int, required=True, help="number of sequences")
    add_seed(motion)
    motion.add_argument("--length", type=int, default=None, help="frames per sequence")
    motion.add_argument("--fps", type=float, default=None)
    motion.add_argument("--families", nargs="+", default=None, choices=sorted(FAMILIES),
                        help="motion families, cycled over the sequences")
    motion.add_argument("--v-max", type=float, default=None, help="joint speed bound in m/s")
    motion.add_argument("-o", "--output", required=True, help="dataset directory")
    motion.set_defaults(handler=motion_command)

    heat = actions.add_parser("heatmaps", help="render camera-frame heatmaps and hand estimates")
    heat.add_argument("dataset", help="dataset directory written by 'synth motion'")
    heat.add_argument("--camera", required=True, help="calibration JSON")
    add_seed(heat)
    heat.add_argument("--dims", type=int, nargs=3, default=None, metavar=("D", "H", "W"))
    heat.add_argument("--sigma", type=float, default=None, help="Gaussian sigma in voxels")
    heat.add_argument("--depth-range", type=float, nargs=2, default=None, metavar=("MIN", "MAX"))
    heat.add_argument("--jitter", type=float, default=0.5, help="peak jitter in voxels")
    heat.add_argument("--distractors", type=float, default=0.1, help="fraction of joints with a distractor peak")
    heat.add_argument("--hand-noise", type=float, default=0.005, help="hand joint noise in meters")
    heat.add_argument("--hand-dropout", type=float, default=0.05, help="probability a hand is not detected")
    heat.set_defaults(handler=heatmaps_command)


def motion_command(args) -> int:
    families = args.families or list(settings.get("synth.families"))
    sequences = gen_motion(args.n, args.seed, length=args.length, fps=args.fps,
                           families=families, v_max=args.v_max)

    root = Path(args.output)
    manifest = DatasetManifest(seed=args.seed, families=families, fps=sequences[0].fps)
    for i, seq in enumerate(sequences):
        name = f"seq_{i:03d}"
        storage.save_motion(seq, root / name / "motion.json")
        manifest.sequences.append(SequenceEntry(
            name=name,
            family=families[i % len(families)],
            seed=args.seed,
            frames=seq.length,
            motion=f"{name}/motion.json",
        ))
    DatasetManager(storage).save_manifest(manifest, root)
    emit("cli.synth.motion_written", path=args.output, count=len(sequences))
    return 0


def heatmaps_command(args) -> int:
    datasets = DatasetManager(storage)
    root = Path(args.dataset)
    manifest = datasets.load_manifest(root)
    camera = storage.load_camera(args.camera)
    manifest.camera = str(args.camera)

    for i, entry in enumerate(manifest.sequences):
        seq = storage.load_motion(datasets.resolve(root, entry.motion))
        local = to_camera_frame(seq)
        entry.camera_motion = f"{entry.name}/camera_motion.json"
        entry.heatmaps = f"{entry.name}/heatmaps"
        entry.hands = f"{entry.name}/hands.json"
        storage.save_motion(local, root / entry.camera_motion)

        heatmaps = render_sequence_heatmaps(
            local, camera, seed=[args.seed, i, 0],
            dims=args.dims, sigma_voxels=args.sigma, depth_range=args.depth_range,
            jitter_voxels=args.jitter, distractor_fraction=args.distractors,
        )
        datasets.export_heatmaps(heatmaps, root / entry.heatmaps)

        hands = simulate_hand_estimates(
            local, camera, seed=[args.seed, i, 1],
            noise_m=args.hand_noise, dropout=args.hand_dropout,
        )
        storage.save_hand_estimates(hands, root / entry.hands)
        logger.info("rendered %s (%d frames)", entry.name, local.length)

    datasets.save_manifest(manifest, root)
    emit("cli.synth.heatmaps_written", path=args.dataset, count=len(manifest.sequences))
    return 0
