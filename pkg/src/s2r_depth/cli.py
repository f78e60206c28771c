"""Command-line entry points: ``s2r`` and ``toyworld``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure
(including training divergence, whose message names the last-good checkpoint).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import Checkpoint
from .config import TrainConfig, load_config
from .errors import InvalidConfigError, S2RError, StageOrderError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
STAGES = ("1", "2", "3", "4", "baseline")


class _Parser(argparse.ArgumentParser):
    # argparse already exits with 2 on usage errors; keep that but print full usage.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_samples(path, config: TrainConfig, what: str):
    from .data import preprocess, read_dataset
    if not path:
        raise InvalidConfigError(f"config key paths.{what} is not set")
    return [preprocess(s, config.data) for s in read_dataset(path)]


def cmd_train(args) -> int:
    from .training import run_stage, train_baseline

    config = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    stage = args.stage
    if stage != "baseline":
        config = config.replace(stage=int(stage))
    ckpt = Checkpoint.load(args.resume) if args.resume else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr, force=True)

    if stage == "baseline":
        result = train_baseline(config, _load_samples(config.paths.source, config, "source"), out_dir=out)
    elif stage == "1":
        result = run_stage(1, config, _load_samples(config.paths.source, config, "source"),
                           style_data=_load_samples(config.paths.style, config, "style"), out_dir=out)
    else:
        key = "labeled" if stage == "4" else "source"
        data = _load_samples(getattr(config.paths, key), config, key)
        if ckpt is None:
            raise StageOrderError(f"stage {stage} needs --resume with a stage {int(stage) - 1} checkpoint")
        result = run_stage(int(stage), config, data, ckpt, out_dir=out)
    path = result.save(out / f"stage{stage}.safetensors")
    print(path)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_dataset

    ckpt = Checkpoint.load(args.ckpt)
    scaling = args.scaling or ckpt.metadata.get("eval_scaling", "median")
    report = evaluate_dataset(ckpt, args.data, cap=float(args.cap), scaling=scaling)
    text = report.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_visualize(args) -> int:
    from .viz import visualize

    for path in visualize(args.ckpt, args.image, args.out):
        print(path)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .data import write_dataset
    from .toyworld import generate_samples

    samples = generate_samples(args.count, args.domain, args.seed, tuple(args.resolution),
                               max_depth=args.max_depth)
    print(write_dataset(args.out, samples))
    return EXIT_OK


def _add_generate(sub):
    p = sub.add_parser("generate", help="render toy scenes into the dataset directory layout")
    p.add_argument("--count", type=int, required=True, help="number of scenes")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--domain", choices=("A", "B", "corpus"), default="A",
                   help="style: A (source), B (held-out target) or corpus (random styles)")
    p.add_argument("--seed", type=int, default=0, help="first geometry seed; scenes use seed..seed+count-1")
    p.add_argument("--resolution", type=int, nargs=2, default=(32, 64), metavar=("H", "W"),
                   help="image height and width (default 32 64)")
    p.add_argument("--max-depth", type=float, default=80.0, help="far clipping depth in meters")
    p.set_defaults(func=cmd_generate)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="s2r", description="Structure-guided depth estimation: train, evaluate, visualize.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", choices=STAGES, required=True,
                   help="1 translation, 2 structure decoder + depth, 3 attention + depth, "
                        "4 fine-tune on labeled target images, baseline = depth predictor on RGB")
    p.add_argument("--config", help="key = value config file (defaults if omitted)")
    p.add_argument("--resume", help="checkpoint from the previous stage (required for stages 2-4)")
    p.add_argument("--out", required=True, help="directory for the checkpoint and last-good snapshots")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset directory")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="dataset directory (index.txt, images/, depths/)")
    p.add_argument("--cap", type=int, choices=(80, 50), default=80, help="ground-truth depth cap in meters")
    p.add_argument("--scaling", choices=("median", "none"),
                   help="per-image median scaling; defaults to the checkpoint's setting, else median")
    p.add_argument("--out", help="write the JSON report here as well as to stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("visualize", help="export structure, attention, product and depth maps")
    p.add_argument("--ckpt", required=True, help="stage 3 or 4 checkpoint")
    p.add_argument("--image", required=True, help="input RGB image")
    p.add_argument("--out", required=True, help="output directory for the PNGs and sidecar")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("toyworld", help="procedural scene generator")
    tw = p.add_subparsers(dest="toy_command", required=True, parser_class=_Parser)
    _add_generate(tw)
    return parser


def build_toyworld_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toyworld", description="Procedural scenes with exact depth.")
    _add_generate(parser.add_subparsers(dest="toy_command", required=True, parser_class=_Parser))
    return parser


def _run(parser, argv) -> int:
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InvalidConfigError, StageOrderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (S2RError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    return _run(build_parser(), argv)


def toyworld_main(argv=None) -> int:
    return _run(build_toyworld_parser(), argv)


def entry():
    sys.exit(main())


def toyworld_entry():
    sys.exit(toyworld_main())
