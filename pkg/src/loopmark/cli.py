"""Command-line entry point.

Workspace-mutating commands operate on the local filesystem through the
core package; `review-serve` hosts the HTTP review service (plus the built
review UI when present) for the browser-based correction step.

Exit codes: 0 ok (including "review pending"), 2 user error, 3 detector
adapter failure, 4 corrupt workspace.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapter import AdapterError
from .geometry import AugmentationSpec
from .labels import LabelFormatError, LabelMap, load_label_map
from .orchestrator import (
    LoopConfig,
    OrchestratorError,
    ReviewPending,
    export_for_review,
    merge_from_review_dir,
    report_csv,
    report_text,
    run_cycles,
    run_simulation,
    seed as seed_loop,
    step,
)
from .workspace import Workspace, WorkspaceCorrupt, WorkspaceError

log = logging.getLogger("loopmark")

EXIT_OK = 0
EXIT_USER = 2
EXIT_ADAPTER = 3
EXIT_CORRUPT = 4

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class UserError(Exception):
    pass


def _expand_images(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            out.extend(sorted(p for p in path.iterdir()
                              if p.suffix.lower() in IMAGE_SUFFIXES))
        elif path.is_file():
            out.append(path)
        else:
            raise UserError(f"no such file or directory: {path}")
    if not out:
        raise UserError("no images found")
    return out


def _load_config(args: argparse.Namespace) -> LoopConfig:
    if getattr(args, "config", None):
        cfg = LoopConfig.from_json_file(args.config)
    else:
        cfg = LoopConfig()
    if getattr(args, "seed", None) is not None:
        aug = AugmentationSpec.from_dict({**cfg.augmentation.to_dict(), "seed": args.seed})
        cfg.augmentation = aug
    return cfg


def _workspace(args: argparse.Namespace) -> Workspace:
    return Workspace.load(Path(args.workspace))


def cmd_init(args) -> int:
    if args.classes:
        label_map = LabelMap(tuple(args.classes.split(",")))
    elif args.label_map:
        label_map = load_label_map(args.label_map)
    else:
        raise UserError("provide --classes a,b,... or --label-map classes.txt")
    ws = Workspace.init(Path(args.workspace), label_map)
    print(f"initialized workspace at {ws.root} with {len(label_map)} classes")
    return EXIT_OK


def cmd_import(args) -> int:
    ws = _workspace(args)
    images = _expand_images(args.paths)
    labels = None
    if args.labels:
        labels_dir = Path(args.labels)
        labels = {}
        for image in images:
            label_file = labels_dir / f"{image.stem}.txt"
            if label_file.is_file():
                from .labels import load_label_file
                labels[image.stem] = load_label_file(label_file)
    with ws.lock():
        report = ws.import_images(images, args.split, labels=labels)
    print(f"imported {len(report.added)} image(s) into {args.split}; "
          f"{len(report.duplicates)} duplicate(s) skipped")
    return EXIT_OK


def cmd_seed(args) -> int:
    ws = _workspace(args)
    cfg = _load_config(args)
    images = _expand_images(args.paths)
    labels_dir = Path(args.labels) if args.labels else images[0].parent
    with ws.lock():
        result = seed_loop(ws, images, labels_dir, cfg)
    print(result.message)
    return EXIT_OK


def cmd_step(args) -> int:
    ws = _workspace(args)
    cfg = _load_config(args)
    with ws.lock():
        result = step(ws, cfg)
    print(f"[iteration {result.iteration}] {result.phase}: {result.message}")
    return EXIT_OK


def cmd_run(args) -> int:
    ws = _workspace(args)
    cfg = _load_config(args)
    with ws.lock():
        results = run_cycles(ws, cfg, args.cycles)
    for result in results:
        print(f"[iteration {result.iteration}] {result.phase}: {result.message}")
    return EXIT_OK


def cmd_export_review(args) -> int:
    ws = _workspace(args)
    cfg = _load_config(args)
    iteration = args.iteration or int(ws.manifest.loop.get("iteration", 0))
    bundle = export_for_review(ws, cfg, iteration)
    print(f"review bundle at {bundle}")
    return EXIT_OK


def cmd_merge(args) -> int:
    ws = _workspace(args)
    cfg = _load_config(args)
    with ws.lock():
        result = merge_from_review_dir(ws, cfg)
    print(result.message)
    return EXIT_OK


def cmd_report(args) -> int:
    ws = _workspace(args)
    if args.csv:
        Path(args.csv).write_text(report_csv(ws), encoding="utf-8")
        print(f"wrote {args.csv}")
    print(report_text(ws), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario_dir = Path(args.scenario)
    if not (scenario_dir / "scenario.json").is_file():
        from .simulation import make_scenario
        print(f"generating synthetic scenario at {scenario_dir} "
              f"({args.loop_images} loop + {args.val_images} val images)")
        make_scenario(scenario_dir, n_loop=args.loop_images, n_val=args.val_images,
                      seed=args.seed or 0)
    out_dir = Path(args.out) if args.out else scenario_dir / "results"
    seeds = list(range(args.seeds))
    result = run_simulation(scenario_dir, out_dir, seeds,
                            batch_size=args.batch_size, baseline=args.baseline)
    print(f"simulation reports written to {out_dir}")
    for row in result["median"]:
        f1 = row["best_f1"]
        labor = row["labor_per_image"]
        print(f"  iteration {row['iteration']}: median train={row['train_size']:.0f} "
              f"best_f1={f1:.4f}" + (f" labor/image={labor:.2f}" if labor is not None else ""))
    return EXIT_OK


def cmd_verify(args) -> int:
    ws = _workspace(args)
    problems = ws.verify()
    if problems:
        for problem in problems:
            print(f"PROBLEM: {problem}")
        raise WorkspaceCorrupt(f"{len(problems)} problem(s) found")
    print("workspace verified: manifest and disk agree")
    return EXIT_OK


def cmd_review_serve(args) -> int:
    import uvicorn

    from .service import create_app

    static_dir = Path(args.static_dir) if args.static_dir else None
    app = create_app(Path(args.workspace), static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopmark",
        description="Model-assisted annotation loop: detect, review, merge, retrain.")
    parser.add_argument("--workspace", default=".", help="workspace root directory")
    parser.add_argument("--config", help="LoopConfig JSON file")
    parser.add_argument("--seed", type=int, help="override the augmentation seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an empty workspace")
    p.add_argument("--classes", help="comma-separated class names")
    p.add_argument("--label-map", help="existing classes.txt to copy")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("import", help="import images into a split pool")
    p.add_argument("paths", nargs="+", help="image files or directories")
    p.add_argument("--split", required=True, choices=("train", "val", "unlabeled"))
    p.add_argument("--labels", help="directory of label files paired by stem")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("seed", help="import the manually labeled seed set")
    p.add_argument("paths", nargs="+", help="image files or directories")
    p.add_argument("--labels", help="label directory (defaults to the image directory)")
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("step", help="advance the loop by one phase")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("run", help="run full loop cycles")
    p.add_argument("--cycles", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export-review", help="re-export the current review bundle")
    p.add_argument("--iteration", type=int)
    p.set_defaults(func=cmd_export_review)

    p = sub.add_parser("merge", help="adopt the edited labels of the review bundle")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("report", help="print the per-iteration results table")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="run the loop against a synthetic scenario")
    p.add_argument("--scenario", required=True, help="scenario directory (generated if missing)")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--loop-images", type=int, default=400)
    p.add_argument("--val-images", type=int, default=100)
    p.add_argument("--out", help="report output directory")
    p.add_argument("--baseline", action="store_true",
                   help="also run the all-manual baseline")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="cross-check manifest and disk")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("review-serve", help="serve the review API and UI")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8137)
    p.add_argument("--static-dir", help="built UI bundle to host at /")
    p.set_defaults(func=cmd_review_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ReviewPending as exc:
        print(f"review pending: {exc}")
        return EXIT_OK
    except WorkspaceCorrupt as exc:
        print(f"error: corrupt workspace: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except AdapterError as exc:
        print(f"error: detector adapter: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except (UserError, OrchestratorError, WorkspaceError, LabelFormatError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    raise SystemExit(main())
