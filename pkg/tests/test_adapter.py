from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import pytest

from loopmark.adapter import (
    AdapterConfig,
    AdapterTimeout,
    BadPrediction,
    DetectFailed,
    MissingWeights,
    TrainFailed,
    build_dataset_dir,
    run_detect,
    run_train,
)
from loopmark.labels import LabelMap
from loopmark.workspace import Workspace

from conftest import random_box
from test_workspace import TWO_CLASSES, make_images

PY = sys.executable

OK_TRAIN = AdapterConfig(
    train_command=f"{PY} -c \"import sys; open(sys.argv[1], 'w').write('w')\" {{weights_out}} {{dataset_dir}}",
    detect_command="x {weights_in} {images_dir} {predictions_dir}",
    timeout_s=30,
)


def adapter(train_body: str = None, detect_body: str = None, timeout: float = 30) -> AdapterConfig:
    train = (f"{PY} -c \"{train_body}\" {{dataset_dir}} {{weights_out}}"
             if train_body else OK_TRAIN.train_command)
    detect = (f"{PY} -c \"{detect_body}\" {{weights_in}} {{images_dir}} {{predictions_dir}}"
              if detect_body else OK_TRAIN.detect_command)
    return AdapterConfig(train_command=train, detect_command=detect, timeout_s=timeout)


class TestConfigValidation:
    def test_missing_train_placeholder(self):
        with pytest.raises(ValueError, match="weights_out"):
            AdapterConfig(train_command="train {dataset_dir}",
                          detect_command="d {weights_in} {images_dir} {predictions_dir}")

    def test_missing_detect_placeholder(self):
        with pytest.raises(ValueError, match="predictions_dir"):
            AdapterConfig(train_command="t {dataset_dir} {weights_out}",
                          detect_command="d {weights_in} {images_dir}")

    def test_bad_timeout(self):
        with pytest.raises(ValueError, match="timeout"):
            AdapterConfig(train_command="t {dataset_dir} {weights_out}",
                          detect_command="d {weights_in} {images_dir} {predictions_dir}",
                          timeout_s=0)

    def test_round_trip(self):
        assert AdapterConfig.from_dict(OK_TRAIN.to_dict()) == OK_TRAIN


class TestRunTrain:
    def test_success_requires_weights_file(self, tmp_path):
        cfg = adapter(train_body="import sys; open(sys.argv[2],'w').write('trained')")
        weights = run_train(cfg, tmp_path, tmp_path / "weights.out")
        assert weights.read_text() == "trained"

    def test_nonzero_exit_carries_output(self, tmp_path):
        cfg = adapter(train_body="import sys; print('boom diagnostics'); sys.exit(1)")
        with pytest.raises(TrainFailed, match="boom diagnostics"):
            run_train(cfg, tmp_path, tmp_path / "weights.out")

    def test_timeout_on_sleeping_command(self, tmp_path):
        cfg = adapter(train_body="import time; time.sleep(30)", timeout=1.0)
        with pytest.raises(AdapterTimeout):
            run_train(cfg, tmp_path, tmp_path / "weights.out")

    def test_exit_zero_but_no_weights(self, tmp_path):
        cfg = adapter(train_body="pass")
        with pytest.raises(MissingWeights):
            run_train(cfg, tmp_path, tmp_path / "weights.out")

    def test_iteration_passed_through_env(self, tmp_path):
        cfg = adapter(train_body="import sys, os; open(sys.argv[2],'w').write(os.environ['LOOPMARK_ITER'])")
        weights = run_train(cfg, tmp_path, tmp_path / "weights.out", iteration=7)
        assert weights.read_text() == "7"


DETECT_ALL = ("import sys, pathlib; "
              "imgs=sorted(pathlib.Path(sys.argv[2]).glob('*.png')); "
              "[ (pathlib.Path(sys.argv[3])/(p.stem+'.txt')).write_text('0 0.500000 0.500000 0.200000 0.200000 0.900000\\n') for p in imgs ]")


class TestRunDetect:
    def _images(self, tmp_path, count=3):
        return make_images(tmp_path / "imgs", count)[0].parent

    def test_one_prediction_file_per_image(self, tmp_path):
        images_dir = self._images(tmp_path)
        weights = tmp_path / "w"
        weights.write_text("w")
        cfg = adapter(detect_body=DETECT_ALL)
        count = run_detect(cfg, weights, images_dir, tmp_path / "preds")
        assert count == 3

    def test_empty_prediction_file_accepted(self, tmp_path):
        images_dir = self._images(tmp_path, count=2)
        weights = tmp_path / "w"
        weights.write_text("w")
        body = ("import sys, pathlib; "
                "[ (pathlib.Path(sys.argv[3])/(p.stem+'.txt')).write_text('') "
                "for p in pathlib.Path(sys.argv[2]).glob('*.png') ]")
        cfg = adapter(detect_body=body)
        assert run_detect(cfg, weights, images_dir, tmp_path / "preds") == 2

    def test_missing_prediction_file(self, tmp_path):
        images_dir = self._images(tmp_path, count=2)
        weights = tmp_path / "w"
        weights.write_text("w")
        cfg = adapter(detect_body="pass")
        with pytest.raises(DetectFailed, match="no prediction file"):
            run_detect(cfg, weights, images_dir, tmp_path / "preds")

    def test_five_field_lines_rejected(self, tmp_path):
        images_dir = self._images(tmp_path, count=1)
        weights = tmp_path / "w"
        weights.write_text("w")
        body = ("import sys, pathlib; "
                "[ (pathlib.Path(sys.argv[3])/(p.stem+'.txt')).write_text('0 0.5 0.5 0.2 0.2\\n') "
                "for p in pathlib.Path(sys.argv[2]).glob('*.png') ]")
        cfg = adapter(detect_body=body)
        with pytest.raises(BadPrediction, match="line 1"):
            run_detect(cfg, weights, images_dir, tmp_path / "preds")


class TestDatasetHandoffAndMockAdapter:
    def _workspace(self, tmp_path, rng, n=5):
        ws = Workspace.init(tmp_path / "ws", TWO_CLASSES)
        paths = make_images(tmp_path / "src", n)
        ws.import_images(paths, "train",
                         labels={p.stem: [random_box(rng, class_count=2)] for p in paths})
        return ws

    def test_build_dataset_dir_layout(self, tmp_path, rng):
        ws = self._workspace(tmp_path, rng)
        dataset = build_dataset_dir(ws, tmp_path / "handoff")
        assert sorted(p.name for p in (dataset / "images").iterdir()) == \
            sorted(p.name for p in (ws.root / "images").iterdir())
        assert (dataset / "classes.txt").read_text() == "ballast\nplant\n"
        assert "nc: 2" in (dataset / "data.yaml").read_text()

    def test_mock_adapter_records_train_size(self, tmp_path, rng):
        ws = self._workspace(tmp_path, rng, n=5)
        dataset = build_dataset_dir(ws, tmp_path / "handoff")
        cfg = AdapterConfig(
            train_command=(f"{PY} -m loopmark.mock_detector train "
                           "--dataset {dataset_dir} --weights-out {weights_out} --seed 3"),
            detect_command=(f"{PY} -m loopmark.mock_detector detect --weights {{weights_in}} "
                            f"--images {{images_dir}} --out {{predictions_dir}} "
                            f"--ground-truth {ws.root / 'labels'}"),
            timeout_s=60,
        )
        weights = run_train(cfg, dataset, tmp_path / "weights.json")
        recorded = json.loads(weights.read_text())
        assert recorded["train_size"] == 5
        assert recorded["num_classes"] == 2

        count = run_detect(cfg, weights, ws.root / "images", tmp_path / "preds")
        assert count == 5

    def test_adapter_writes_only_inside_its_outputs(self, tmp_path, rng):
        ws = self._workspace(tmp_path, rng, n=3)
        dataset = build_dataset_dir(ws, tmp_path / "handoff")
        before = {str(p) for p in tmp_path.rglob("*")}
        cfg = AdapterConfig(
            train_command=(f"{PY} -m loopmark.mock_detector train "
                           "--dataset {dataset_dir} --weights-out {weights_out}"),
            detect_command=(f"{PY} -m loopmark.mock_detector detect --weights {{weights_in}} "
                            f"--images {{images_dir}} --out {{predictions_dir}} "
                            f"--ground-truth {ws.root / 'labels'}"),
            timeout_s=60,
        )
        (tmp_path / "out").mkdir()
        weights = run_train(cfg, dataset, tmp_path / "out" / "weights.json")
        run_detect(cfg, weights, ws.root / "images", tmp_path / "out" / "preds")
        after = {str(p) for p in tmp_path.rglob("*")}
        created = after - before
        assert all(p.startswith(str(tmp_path / "out")) for p in created), created
