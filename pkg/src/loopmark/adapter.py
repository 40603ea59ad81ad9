"""Process-boundary protocol for pluggable detectors.

A detector is any pair of commands that speaks files: training consumes a
dataset directory (images/, labels/, classes.txt, data.yaml) and must
produce the weights file named by {weights_out}; detection consumes weights
plus an image directory and must write one parseable prediction file per
image into {predictions_dir}. Exit code 0 means success. The host passes
LOOPMARK_ITER through the environment so adapters can tag their artifacts.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

from .labels import LabelFormatError, load_label_file
from .workspace import Workspace

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

_TRAIN_PLACEHOLDERS = ("{dataset_dir}", "{weights_out}")
_DETECT_PLACEHOLDERS = ("{weights_in}", "{images_dir}", "{predictions_dir}")

HEARTBEAT_EVERY_S = 10.0


class AdapterError(Exception):
    """Base for detector adapter failures; message carries process output."""


class TrainFailed(AdapterError):
    pass


class DetectFailed(AdapterError):
    pass


class AdapterTimeout(AdapterError):
    pass


class MissingWeights(AdapterError):
    pass


class BadPrediction(AdapterError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Command templates for the train and detect sides of a detector."""

    train_command: str
    detect_command: str
    timeout_s: float = 3600.0
    workdir: str | None = None

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        for placeholder in _TRAIN_PLACEHOLDERS:
            if placeholder not in self.train_command:
                raise ValueError(f"train_command is missing {placeholder}")
        for placeholder in _DETECT_PLACEHOLDERS:
            if placeholder not in self.detect_command:
                raise ValueError(f"detect_command is missing {placeholder}")

    def to_dict(self) -> dict:
        return {"train_command": self.train_command,
                "detect_command": self.detect_command,
                "timeout_s": self.timeout_s,
                "workdir": self.workdir}

    @classmethod
    def from_dict(cls, data: dict) -> "AdapterConfig":
        return cls(**data)


def list_images(images_dir: Path) -> list[Path]:
    return sorted(p for p in Path(images_dir).iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def _render_command(template: str, values: dict[str, str]) -> list[str]:
    # Split first, substitute per token: paths with spaces stay one argument.
    tokens = shlex.split(template)
    rendered = []
    for token in tokens:
        try:
            rendered.append(token.format(**values))
        except KeyError as exc:
            raise ValueError(f"unknown placeholder {{{exc.args[0]}}} in command template") from None
    return rendered


def _run(argv: list[str], cfg: AdapterConfig, iteration: int, what: str) -> str:
    env = dict(os.environ)
    env["LOOPMARK_ITER"] = str(iteration)
    log.info("%s: %s", what, " ".join(argv))
    started = time.monotonic()
    proc = subprocess.Popen(argv, cwd=cfg.workdir, env=env,
                            stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                            text=True)
    next_beat = started + HEARTBEAT_EVERY_S
    while True:
        try:
            output = proc.communicate(timeout=min(1.0, cfg.timeout_s))[0]
            break
        except subprocess.TimeoutExpired:
            now = time.monotonic()
            if now - started >= cfg.timeout_s:
                proc.kill()
                proc.communicate()
                raise AdapterTimeout(f"{what} exceeded {cfg.timeout_s:g}s") from None
            if now >= next_beat:
                log.info("%s still running after %.0fs", what, now - started)
                next_beat = now + HEARTBEAT_EVERY_S
    if proc.returncode != 0:
        tail = (output or "").strip()[-2000:]
        raise (TrainFailed if what == "train" else DetectFailed)(
            f"{what} exited with code {proc.returncode}\n{tail}")
    return output or ""


def run_train(cfg: AdapterConfig, dataset_dir: Path | str, weights_out: Path | str,
              weights_in: Path | str | None = None, iteration: int = 0) -> Path:
    """Invoke the training command; succeeds iff it exits 0 and wrote weights."""
    dataset_dir = Path(dataset_dir)
    weights_out = Path(weights_out)
    values = {
        "dataset_dir": str(dataset_dir),
        "weights_out": str(weights_out),
        "weights_in": str(weights_in) if weights_in else "",
        "images_dir": "",
        "predictions_dir": "",
    }
    _run(_render_command(cfg.train_command, values), cfg, iteration, "train")
    if not weights_out.is_file():
        raise MissingWeights(f"training exited 0 but did not write {weights_out}")
    return weights_out


def run_detect(cfg: AdapterConfig, weights: Path | str, images_dir: Path | str,
               predictions_dir: Path | str, iteration: int = 0) -> int:
    """Invoke the detect command and validate its output files.

    Requires one prediction file per input image (possibly zero bytes), every
    line parseable as `class cx cy w h confidence`. Returns the file count.
    """
    weights = Path(weights)
    images_dir = Path(images_dir)
    predictions_dir = Path(predictions_dir)
    if not weights.is_file():
        raise DetectFailed(f"weights file {weights} does not exist")
    images = list_images(images_dir)
    if not images:
        raise DetectFailed(f"no images found in {images_dir}")
    predictions_dir.mkdir(parents=True, exist_ok=True)
    values = {
        "dataset_dir": "",
        "weights_out": "",
        "weights_in": str(weights),
        "images_dir": str(images_dir),
        "predictions_dir": str(predictions_dir),
    }
    _run(_render_command(cfg.detect_command, values), cfg, iteration, "detect")

    count = 0
    for image in images:
        pred_file = predictions_dir / f"{image.stem}.txt"
        if not pred_file.is_file():
            raise DetectFailed(f"no prediction file for image {image.name} "
                               f"(expected {pred_file})")
        try:
            load_label_file(pred_file, expect_confidence=True)
        except LabelFormatError as exc:
            raise BadPrediction(str(exc)) from exc
        count += 1
    return count


def build_dataset_dir(ws: Workspace, dest: Path | str) -> Path:
    """Materialize the training handoff: images/, labels/, classes.txt, data.yaml.

    Contains the train pool plus its augmented companions, hardlinked when
    the filesystem allows. Any off-the-shelf trainer that understands the
    plain-text layout can consume it unmodified.
    """
    dest = Path(dest)
    images_dir = dest / "images"
    labels_dir = dest / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    def place(src: Path, target: Path) -> None:
        if target.exists():
            target.unlink()
        try:
            os.link(src, target)
        except OSError:
            target.write_bytes(src.read_bytes())

    count = 0
    for image_id in ws.manifest.splits["train"] + ws.manifest.splits["augmented"]:
        entry = ws.image_entry(image_id)
        if entry.label_path is None:
            raise AdapterError(f"train image {image_id} has no labels")
        place(ws.abspath(entry.path), images_dir / Path(entry.path).name)
        place(ws.abspath(entry.label_path), labels_dir / Path(entry.label_path).name)
        count += 1

    (dest / "classes.txt").write_text(
        "\n".join(ws.manifest.label_map.names) + "\n", encoding="utf-8")
    names = "".join(f"  {i}: {n}\n" for i, n in enumerate(ws.manifest.label_map.names))
    (dest / "data.yaml").write_text(
        f"path: {dest}\ntrain: images\nval: images\nnc: {len(ws.manifest.label_map)}\n"
        f"names:\n{names}", encoding="utf-8")
    log.info("dataset handoff at %s with %d images", dest, count)
    return dest
