"""
prior 子命令：訓練去噪網路、以動作先驗精修、時間平滑基準、權重曲線
"""
import logging
from pathlib import Path
from typing import List

import numpy as np

from src.cli.commands import add_output, add_seed, emit, sample_paths, storage
from src.core.denoiser import DenoiserConfig, load_model, save_model, train_denoiser
from src.core.errors import DomainError
from src.core.motion_prior import (
    MotionSequence,
    make_schedule,
    refine_samples,
    temporal_smooth,
    training_windows,
    weight_curve,
)
from src.core.settings import settings
from src.utils.dataset_io import MANIFEST_NAME, DatasetManager

logger = logging.getLogger(__name__)

DEFAULT_K_VALUES = (0.01, 0.1, 1.0)


def register(subparsers) -> None:
    prior = subparsers.add_parser("prior", help="diffusion motion prior")
    actions = prior.add_subparsers(dest="action", required=True)

    train = actions.add_parser("train", help="train the motion denoiser")
    train.add_argument("inputs", nargs="+", help="dataset directories or motion JSON files")
    add_seed(train)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--layers", type=int, default=None)
    train.add_argument("--width", type=int, default=None)
    train.add_argument("--heads", type=int, default=None)
    train.add_argument("--window", type=int, default=None)
    train.add_argument("--steps", type=int, default=None, help="diffusion steps T")
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--lr", type=float, default=None, help="learning rate")
    train.add_argument("--quiet", action="store_true", help="hide the progress bar")
    add_output(train)
    train.set_defaults(handler=train_command)

    refine = actions.add_parser("refine", help="uncertainty-guided refinement of an estimated motion")
    refine.add_argument("motion", help="motion JSON with per-joint uncertainty")
    refine.add_argument("--model", required=True, help="EGDM checkpoint")
    add_seed(refine)
    refine.add_argument("--samples", type=int, default=1, help="number of refined samples")
    refine.add_argument("--k", type=float, default=None, help="weight function slope")
    refine.add_argument("--t-start", type=int, default=None, help="first denoising step")
    refine.add_argument("--fast", action="store_true", help="start from the fast t_start")
    refine.add_argument("--no-uncertainty", action="store_true",
                        help="use the mean uncertainty for every joint")
    add_output(refine)
    refine.set_defaults(handler=refine_command)

    smooth = actions.add_parser("smooth", help="Gaussian temporal smoothing baseline")
    smooth.add_argument("motion", help="motion JSON")
    smooth.add_argument("--sigma", type=float, required=True, help="sigma in frames")
    add_output(smooth)
    smooth.set_defaults(handler=smooth_command)

    curve = actions.add_parser("weight-curve", help="tabulate the weight function")
    curve.add_argument("--k", type=float, nargs="+", default=list(DEFAULT_K_VALUES))
    curve.add_argument("--u", type=float, default=0.05, help="joint uncertainty")
    curve.add_argument("--steps", type=int, default=None, help="diffusion steps T")
    curve.add_argument("--t", type=int, nargs="+", default=None, help="timesteps to tabulate")
    add_output(curve, required=False, help_text="optional JSON table")
    curve.set_defaults(handler=weight_curve_command)


def _load_training_set(inputs: List[str]) -> List[MotionSequence]:
    datasets = DatasetManager(storage)
    sequences = []
    for item in inputs:
        path = Path(item)
        if path.is_dir() or path.name == MANIFEST_NAME:
            manifest = datasets.load_manifest(path)
            sequences.extend(storage.load_motion(datasets.resolve(path, e.motion)) for e in manifest.sequences)
        else:
            sequences.append(storage.load_motion(path))
    if not sequences:
        raise DomainError("no training motions found")
    return sequences


def train_command(args) -> int:
    config = DenoiserConfig.from_settings(
        epochs=args.epochs, layers=args.layers, width=args.width, heads=args.heads,
        window=args.window, steps=args.steps, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed,
    )
    sequences = _load_training_set(args.inputs)
    windows = training_windows(sequences, config.window, float(settings.get("prior.overlap", 0.5)))
    schedule = make_schedule(config.steps, config.beta_min, config.beta_max)
    logger.info("training on %d windows from %d sequences", len(windows), len(sequences))

    model = train_denoiser(windows, config, schedule, progress=not args.quiet)
    save_model(model, args.output)
    emit("cli.prior.trained", path=args.output, windows=len(windows),
         loss=f"{model.loss_history[-1]:.5f}" if model.loss_history else "n/a")
    return 0


def refine_command(args) -> int:
    model = load_model(args.model)
    schedule = make_schedule(model.config.steps, model.config.beta_min, model.config.beta_max)
    estimate = storage.load_motion(args.motion)

    t_start = args.t_start
    if t_start is None:
        key = "prior.fast_t_start" if args.fast else "prior.t_start"
        t_start = min(int(settings.get(key)), schedule.steps)

    results = refine_samples(
        estimate, model, schedule, n_samples=args.samples, seed=args.seed,
        k=args.k, t_start=t_start, uncertainty_guidance=not args.no_uncertainty,
    )
    paths = sample_paths(args.output, args.samples)
    for path, seq in zip(paths, results):
        storage.save_motion(seq, path)
    emit("cli.prior.refined", path=args.output, samples=len(results), t_start=t_start)
    return 0


def smooth_command(args) -> int:
    seq = storage.load_motion(args.motion)
    storage.save_motion(temporal_smooth(seq, args.sigma), args.output)
    emit("cli.prior.smoothed", path=args.output, sigma=args.sigma)
    return 0


def weight_curve_command(args) -> int:
    steps = args.steps or int(settings.get("prior.steps", 1000))
    t_values = args.t or [int(t) for t in np.linspace(0, steps, 11)]
    table = weight_curve(args.k, args.u, steps, t_values)

    emit("cli.prior.weight_header", u=args.u, steps=steps)
    print("t\t" + "\t".join(f"k={k:g}" for k in table))
    for i, t in enumerate(t_values):
        print(f"{t}\t" + "\t".join(f"{curve[i]:.4f}" for curve in table.values()))

    if args.output:
        storage.write_json(args.output, {
            "u": args.u,
            "steps": steps,
            "t": list(t_values),
            "curves": {f"{k:g}": curve.tolist() for k, curve in table.items()},
        })
    return 0
