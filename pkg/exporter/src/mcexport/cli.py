"""Command line: train the toy network, export MC-dropout stacks."""

from __future__ import annotations

import argparse
import logging
import sys

import torch

from .export import export_stack, load_image
from .model import DilatedDensityNet
from .training import load_pair_directory, train

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcexport",
        description="Dilated-conv density network: toy training and MC-dropout export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit the network on <name>.png/<name>.npy pairs")
    p_train.add_argument("--data", required=True, help="directory of image/density pairs")
    p_train.add_argument("--lr", type=float, default=7e-3, help="Adam learning rate")
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--patience", type=int, default=None,
                         help="early-stop after this many non-improving epochs")
    p_train.add_argument("--no-augment", action="store_true",
                         help="disable random horizontal flips")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="output model checkpoint (.pt)")

    p_export = sub.add_parser("export", help="write a (T, H, W) NPY stack of dropout passes")
    p_export.add_argument("--image", required=True, help="input PNG/JPEG image")
    p_export.add_argument("--model", default=None,
                          help="checkpoint from train; random init when omitted")
    p_export.add_argument("--t", type=int, default=10, help="number of forward passes")
    p_export.add_argument("--p-drop", type=float, default=0.5,
                          help="dropout probability during the passes")
    p_export.add_argument("--seed", type=int, default=0)
    p_export.add_argument("--out", required=True, help="output NPY stack path")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            dataset = load_pair_directory(args.data)
            model = train(
                dataset,
                lr=args.lr,
                epochs=args.epochs,
                augment=not args.no_augment,
                patience=args.patience,
                seed=args.seed,
            )
            torch.save(model.state_dict(), args.out)
            logger.info("wrote %s", args.out)
            return 0
        if args.command == "export":
            torch.manual_seed(args.seed)
            model = DilatedDensityNet()
            if args.model is not None:
                model.load_state_dict(torch.load(args.model, weights_only=True))
            stack = export_stack(
                model, load_image(args.image), args.t, args.p_drop, args.seed, args.out
            )
            logger.info("wrote %s with shape %s", args.out, stack.shape)
            return 0
        raise ValueError(f"unknown command {args.command!r}")
    except (RuntimeError, ValueError, FileNotFoundError) as exc:
        print(f"mcexport: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mcexport: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
