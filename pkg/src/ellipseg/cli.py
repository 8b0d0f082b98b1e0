"""Command-line entry point: ``ellipseg {generate,segment,evaluate,embed-demo}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .demo import embed_demo
from .embedding import DivergenceError
from .pipeline import MODES, ManifestMismatch, PipelineConfig, evaluate_dataset, segment_dataset
from .scenegen import SceneGenerationError, SceneSpec, generate_suite, load_scene, suite_specs

log = logging.getLogger("ellipseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}")


def load_config(args) -> PipelineConfig:
    raw = _read_json(args.config) if args.config else {}
    try:
        cfg = PipelineConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"config: {exc}")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def specs_from_file(raw, seed_override=None) -> list[SceneSpec]:
    """Scene specs from a list, ``{"scenes": [...]}`` or ``{"suite": {...}}`` document."""
    if isinstance(raw, dict) and "suite" in raw:
        s = dict(raw["suite"])
        if seed_override is not None:
            s["seed"] = seed_override
        return suite_specs(s.get("count", 1), s.get("seed", 0), s.get("n_animals", (3, 6)),
                           **s.get("template", {}))
    items = raw["scenes"] if isinstance(raw, dict) else raw
    specs = [SceneSpec.from_dict(d) for d in items]
    if seed_override is not None:
        specs = [replace(sp, seed=seed_override + k) for k, sp in enumerate(specs)]
    return specs


def cmd_generate(args) -> int:
    raw = _read_json(args.spec)
    cfg = load_config(args)
    try:
        specs = specs_from_file(raw, args.seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.spec}: invalid scene spec: {exc}")
    if not specs:
        raise DataError(f"{args.spec}: no scenes specified")
    core = raw.get("core_factor", cfg.core_factor) if isinstance(raw, dict) else cfg.core_factor
    head = raw.get("head_fraction", cfg.head_fraction) if isinstance(raw, dict) else cfg.head_fraction
    try:
        generate_suite(specs, args.output, core, head)
    except SceneGenerationError as exc:
        raise DataError(str(exc))
    print(f"wrote {len(specs)} scene(s) to {args.output}")
    return EXIT_OK


def _check_dataset(path):
    if not (Path(path) / "manifest.json").exists():
        raise DataError(f"{path}: no manifest.json (not a dataset directory)")


def cmd_segment(args) -> int:
    _check_dataset(args.dataset)
    cfg = load_config(args)
    failures = segment_dataset(args.dataset, args.output, args.mode, cfg, args.jobs)
    if failures:
        print(f"{len(failures)} scene(s) failed:", file=sys.stderr)
        for name, kind, msg in failures:
            print(f"  {name}: {kind}: {msg}", file=sys.stderr)
        numeric = any(k in ("DivergenceError", "FloatingPointError") for _, k, _ in failures)
        return EXIT_NUMERIC if numeric else EXIT_DATA
    print(f"segmented scenes written to {args.output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _check_dataset(args.dataset)
    cfg = load_config(args)
    try:
        agg = evaluate_dataset(args.predictions, args.dataset, args.output, cfg, args.mode,
                               args.jobs)
    except ManifestMismatch as exc:
        raise DataError(str(exc))
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"PQ {fmt(agg.pq)}  F1 {fmt(agg.f1)}  precision {fmt(agg.precision)}  "
          f"recall {fmt(agg.recall)}  Jaccard {fmt(agg.jaccard_accuracy)}  "
          f"orientation {fmt(agg.orientation_accuracy)}")
    return EXIT_OK


def cmd_embed_demo(args) -> int:
    _check_dataset(args.dataset)
    cfg = load_config(args)
    try:
        steps = [int(s) for s in args.snapshots.split(",") if s.strip()]
    except ValueError:
        raise DataError(f"invalid snapshot list {args.snapshots!r}")
    if not steps or min(steps) < 0:
        raise DataError("snapshot steps must be non-negative integers")
    data = load_scene(args.dataset, args.scene)
    embed_demo(data["features"], data["instance"], data["binary"], args.output, steps,
               cfg.discriminative(), cfg.optimizer(), cfg.clustering(), cfg.include_background)
    io.dump_json(Path(args.output) / "effective-config.json", cfg.to_dict())
    print(f"{len(steps)} snapshot pair(s) written to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with PipelineConfig fields")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--output", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="ellipseg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate a synthetic dataset")
    g.add_argument("spec", help="JSON scene spec file")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("segment", parents=[common], help="segment every scene of a dataset")
    s.add_argument("dataset")
    s.add_argument("--mode", choices=MODES, default="combined")
    s.set_defaults(func=cmd_segment)

    e = sub.add_parser("evaluate", parents=[common], help="score predictions against a dataset")
    e.add_argument("predictions")
    e.add_argument("dataset")
    e.add_argument("--mode", choices=MODES, default=None,
                   help="defaults to the mode recorded by 'segment'")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("embed-demo", parents=[common], help="embedding snapshots of one scene")
    d.add_argument("dataset")
    d.add_argument("--scene", default="scene_0000")
    d.add_argument("--snapshots", default="1,2,3,10,80")
    d.set_defaults(func=cmd_embed_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
