"""Command-line entry point: ``synthwords {prep,synth,compose,detect,eval,report}``.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from synthwords import __version__
from synthwords.annotation_io import DatasetManifest, LabelParseError, ManifestError, write_predictions
from synthwords.baseline_detector import DetectParams, TemplateBank, detect
from synthwords.core import ConfigError, LetterClass
from synthwords.evaluation import EvalConfig, evaluate, render_table, save_report
from synthwords.glyph_synth import SynthConfig, synth_pool
from synthwords.letter_prep import export_pool, load_letter_pool, read_image, to_grayscale
from synthwords.word_composer import ComposerConfig, default_workers, generate_dataset

log = logging.getLogger("synthwords")

SYNTH_DEFAULTS = {"per_class_count": 40}
COMPOSE_DEFAULTS = {"n_images": 200, "split": [0.8, 0.2, 0.0]}
DETECT_DEFAULTS = {"split": "val"}
EVAL_DEFAULTS = {"split": "val"}


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    unknown = set(cfg) - {"seed", "synth", "compose", "detect", "eval"}
    if unknown:
        raise ConfigError(f"config {path}: unknown section(s) {sorted(unknown)}")
    return cfg


def _section(cfg: dict, name: str, defaults: dict) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return {**defaults, **sec}


def _build(klass, values: dict, section: str):
    names = {f.name for f in fields(klass)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {sorted(unknown)}")
    try:
        obj = klass(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    return obj


def _seed(args, cfg: dict, section: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(section.get("rng_seed", cfg.get("seed", 0)))


def _echo(title: str, effective: dict) -> None:
    print(f"[{title}] effective config: {json.dumps(effective, sort_keys=True)}")


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_prep(args) -> int:
    pool = load_letter_pool(args.input_dir, args.bin_threshold)
    export_pool(pool, args.output_dir)
    counts = pool.counts()
    for cls in LetterClass:
        print(f"{cls.display}: {counts[cls]}")
    print(f"skipped: {pool.skipped}")
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "synth", SYNTH_DEFAULTS)
    if args.per_class is not None:
        sec["per_class_count"] = args.per_class
    per_class = int(sec.pop("per_class_count"))
    sec["rng_seed"] = _seed(args, cfg, sec)
    scfg = _build(SynthConfig, sec, "synth")
    scfg.validate()
    effective = {"per_class_count": per_class, **asdict(scfg), "tool_version": __version__}
    _echo("synth", effective)
    pool = synth_pool(scfg, per_class)
    out = Path(args.out)
    export_pool(pool, out)
    _write_json(out / "synth_config.json", effective)
    print(f"wrote {3 * per_class} glyphs to {out}")
    return 0


def cmd_compose(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "compose", COMPOSE_DEFAULTS)
    if args.n_images is not None:
        sec["n_images"] = args.n_images
    n_images = int(sec.pop("n_images"))
    split = tuple(float(v) for v in sec.pop("split"))
    sec["rng_seed"] = _seed(args, cfg, sec)
    ccfg = ComposerConfig.from_dict(sec)
    ccfg.validate()
    pool = load_letter_pool(args.pool)
    for cls in LetterClass:
        if ccfg.mixture.probs()[cls] > 0 and not pool.samples[cls]:
            raise ConfigError(f"pool {args.pool}: no {cls.display} samples but the mixture requests them")
    effective = {"n_images": n_images, "split": list(split), "composer": ccfg.to_dict()}
    _echo("compose", effective)
    manifest = generate_dataset(pool, ccfg, n_images, split, args.out, workers=args.workers)
    for name, items in manifest.splits.items():
        print(f"{name}: {len(items)} images")
    return 0


def _detect_job(job):
    image_path, out_path, bank, params, image_id, size = job
    canvas = to_grayscale(read_image(image_path))
    write_predictions(detect(canvas, bank, params, image_id), out_path, size)
    return image_id


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "detect", DETECT_DEFAULTS)
    split = args.split or sec.pop("split")
    sec.pop("split", None)
    params = _build(DetectParams, sec, "detect")
    manifest = DatasetManifest.load(args.manifest)
    manifest.validate()
    pool = load_letter_pool(args.templates)
    try:
        bank = TemplateBank.from_pool(pool)
    except ValueError as exc:
        raise ConfigError(f"templates {args.templates}: {exc}") from exc
    effective = {"split": split, **asdict(params), "templates": str(args.templates),
                 "dataset_fingerprint": manifest.config_hash, "master_seed": manifest.master_seed}
    _echo("detect", effective)
    out = Path(args.out)
    jobs = [(img, out / split / f"{image_id}.txt", bank, params, image_id, manifest.image_size)
            for image_id, img, _ in manifest.items(split)]
    (out / split).mkdir(parents=True, exist_ok=True)
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            list(ex.map(_detect_job, jobs, chunksize=max(1, len(jobs) // (4 * args.workers))))
    else:
        for job in jobs:
            _detect_job(job)
    _write_json(out / "detect_config.json", effective)
    print(f"wrote predictions for {len(jobs)} images to {out / split}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "eval", EVAL_DEFAULTS)
    split = args.split or sec.pop("split")
    sec.pop("split", None)
    ecfg = _build(EvalConfig, sec, "eval")
    ecfg.validate()
    manifest = DatasetManifest.load(args.manifest)
    _echo("eval", {"split": split, **asdict(ecfg)})
    report = evaluate(manifest, args.predictions, ecfg, split)
    if args.out:
        save_report(report, args.out)
    print(report.render_table())
    return 0


def cmd_report(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {args.report}: {exc}") from exc
    print(render_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthwords", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, workers=False):
        p.add_argument("--config", help="JSON config file with per-subcommand sections")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if workers:
            p.add_argument("--workers", type=int, default=default_workers())

    p = sub.add_parser("prep", help="normalize a Normal/Reversal/Corrected letter tree")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.add_argument("--bin-threshold", type=int, default=128)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("synth", help="generate a procedural letter pool")
    common(p, seed=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compose", help="compose word scenes and labels from a pool")
    common(p, seed=True, workers=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("detect", help="run the baseline detector over a split")
    common(p, workers=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--templates", required=True, help="letter pool directory used as templates")
    p.add_argument("--split")
    p.add_argument("--out", required=True, help="predictions root")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score predictions against a split")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split")
    p.add_argument("--out", help="write report.json here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print the table of a saved report.json")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ManifestError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (LabelParseError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
