"""Mock detector as a standalone process speaking the adapter file protocol.

    python -m loopmark.mock_detector train --dataset DIR --weights-out FILE \
        --ground-truth DIR [--model FILE.json] [--seed N]
    python -m loopmark.mock_detector detect --weights FILE --images DIR \
        --out DIR --ground-truth DIR

Training just measures the dataset and writes scaled error parameters;
detection perturbs the hidden ground truth per image. Both are deterministic
for a given model seed, so loop runs are exactly reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .labels import load_label_file, load_label_map, save_label_file
from .simulation import (
    MockDetectorModel,
    load_mock_weights,
    mock_detect_boxes,
    mock_train,
    save_mock_weights,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _images_in(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _load_model(args: argparse.Namespace) -> MockDetectorModel:
    if args.model:
        data = json.loads(Path(args.model).read_text(encoding="utf-8"))
        model = MockDetectorModel.from_dict(data)
    else:
        model = MockDetectorModel()
    if args.seed is not None:
        model = MockDetectorModel.from_dict({**model.to_dict(), "seed": args.seed})
    return model


def cmd_train(args: argparse.Namespace) -> int:
    dataset = Path(args.dataset)
    images = _images_in(dataset / "images")
    if not images:
        print(f"no images under {dataset}/images", file=sys.stderr)
        return 1
    label_map = load_label_map(dataset / "classes.txt")
    model = _load_model(args)
    weights = mock_train(model, len(images), len(label_map))
    save_mock_weights(args.weights_out, weights)
    print(f"trained mock detector on {len(images)} images "
          f"-> {args.weights_out}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    weights = load_mock_weights(args.weights)
    truth_dir = Path(args.ground_truth)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = _images_in(Path(args.images))
    if not images:
        print(f"no images under {args.images}", file=sys.stderr)
        return 1
    for image in images:
        truth_file = truth_dir / f"{image.stem}.txt"
        truths = load_label_file(truth_file) if truth_file.is_file() else []
        preds = mock_detect_boxes(weights, image.stem, truths)
        save_label_file(out_dir / f"{image.stem}.txt", preds)
    print(f"wrote {len(images)} prediction files to {out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="loopmark.mock_detector", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="write mock weights for a dataset")
    train.add_argument("--dataset", required=True)
    train.add_argument("--weights-out", required=True)
    train.add_argument("--ground-truth", required=False, help="unused; kept for symmetry")
    train.add_argument("--model", help="JSON file with mock model parameters")
    train.add_argument("--seed", type=int)
    train.set_defaults(func=cmd_train)

    detect = sub.add_parser("detect", help="write prediction files for an image dir")
    detect.add_argument("--weights", required=True)
    detect.add_argument("--images", required=True)
    detect.add_argument("--out", required=True)
    detect.add_argument("--ground-truth", required=True)
    detect.set_defaults(func=cmd_detect)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
