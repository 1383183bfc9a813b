"""Command-line entry point: ``cropgcn <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CropGcnError, InputError
from .features_rf import extract_features
from .graph import Connectivity, grid_graph
from .io_formats import (
    atomic_write,
    load_labeled_scene,
    read_label,
    read_scene,
    write_label,
    write_scene,
    write_tensor,
)
from .metrics import EvalReport, evaluate, summarize
from .model import count_parameters, load_model, model_file_size, save_model
from .numerics import set_threads
from .preprocess import PreprocConfig
from .resample import Interpolation
from .synth import SynthConfig, generate_synthetic
from .training import TrainConfig, infer_scene, train

log = logging.getLogger("cropgcn")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pair(values, flag):
    if len(values) != 2:
        raise InputError(f"{flag} needs two comma-separated values, got {values}")
    return tuple(values)


def _add_preproc_flags(p, with_k=True):
    if with_k:
        p.add_argument("--k", type=int, default=80, help="pooled feature length per pixel")
    p.add_argument("--patch-size", type=int, default=100, help="patch side in low-res pixels")
    p.add_argument("--interpolation", choices=[m.value for m in Interpolation], default="bicubic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cropgcn", description="Graph-convolutional cultivated-land segmentation")
    parser.add_argument("--config", type=Path, help="text file of 'key = value' lines; flags override it")
    parser.add_argument(
        "--threads", type=int, default=None, help="worker threads (default: $GCN_THREADS, else all cores)"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labelled synthetic scenes")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed of the first scene; scene i uses seed + i")
    p.add_argument("--times", type=int, default=8)
    p.add_argument("--bands", type=int, default=12)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--min-parcels", type=int, default=4)
    p.add_argument("--max-parcels", type=int, default=10)
    p.add_argument("--parcel-size", type=_int_list, default=(24, 96), help="min,max parcel side in label pixels")
    p.add_argument("--amplitude", type=float, default=0.3, help="seasonal amplitude of the cultivated class")
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--clouds", type=float, default=0.05, help="cloudy fraction of each image")
    p.add_argument("--border", type=int, default=4, help="excluded frame width in label pixels")

    p = sub.add_parser("train", help="train a model on a directory of .scs/.msk pairs")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file")
    p.add_argument("--log", type=Path, help="TrainLog CSV (default: model path with .csv)")
    p.add_argument("--val-data", type=Path, help="validation directory (default: split --data)")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--patience", type=int, default=12)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--val-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=_int_list, default=(64, 32, 16, 8), help="hidden widths, e.g. 64,32,16,8")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-reproducibility)")
    _add_preproc_flags(p)

    p = sub.add_parser("infer", help="segment one scene")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="label-format output map")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_preproc_flags(p, with_k=False)

    p = sub.add_parser("eval", help="score predicted maps against ground truth")
    p.add_argument("--pred", type=Path, nargs="+", required=True)
    p.add_argument("--gt", type=Path, nargs="+", required=True)
    p.add_argument("--exclusion", type=Path, nargs="+", help="rasters whose nonzero pixels Mask scoring skips")
    p.add_argument("--csv", type=Path, help="also write per-scene rows and the aggregate as CSV")

    p = sub.add_parser("inspect", help="describe a model file")
    p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("features", help="write neighbourhood statistics for the random-forest baseline")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--window", type=int, default=5)

    p = sub.add_parser("graph-dump", help="print (node, neighbour, value) triples of a normalized grid graph")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--connectivity", choices=[c.value for c in Connectivity], default="eight")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return parser.parse_args(argv)
    if not known.config.is_file():
        raise InputError(f"config file {known.config} does not exist")
    values = read_config_file(known.config)
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    argv_list = sys.argv[1:] if argv is None else list(argv)
    command = next((tok for tok in argv_list if tok in action.choices), None)
    if command is None:
        return parser.parse_args(argv)
    sub = action.choices[command]
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    defaults = {}
    for key, raw in values.items():
        if key not in actions:
            raise InputError(f"config key {key!r} is not a flag of '{command}'")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        convert = act.type or str
        try:
            value = [convert(v) for v in raw.split()] if act.nargs == "+" else convert(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise InputError(f"config key {key!r}: {exc}") from None
        if act.choices is not None and value not in act.choices:
            raise InputError(f"config key {key!r}: {value!r} is not one of {sorted(act.choices)}")
        defaults[key] = value
        act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _resolve_threads(args) -> int | None:
    threads = args.threads
    if threads is None and os.environ.get("GCN_THREADS"):
        try:
            threads = int(os.environ["GCN_THREADS"])
        except ValueError:
            raise InputError(f"GCN_THREADS must be an integer, got {os.environ['GCN_THREADS']!r}") from None
    if threads is not None and threads < 1:
        raise InputError(f"thread count must be >= 1, got {threads}")
    return threads


def _scene_pairs(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise InputError(f"data directory {directory} does not exist")
    scenes = sorted(directory.glob("*.scs"))
    if not scenes:
        raise InputError(f"no .scs scene files in {directory}")
    missing = [s.name for s in scenes if not s.with_suffix(".msk").is_file()]
    if missing:
        raise InputError(f"scenes without a .msk label in {directory}: {', '.join(missing)}")
    return scenes


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise InputError(f"{what} {path} does not exist")


def cmd_synth(args) -> None:
    if args.scenes < 1:
        raise InputError(f"--scenes must be >= 1, got {args.scenes}")
    configs = [
        SynthConfig(
            seed=args.seed + i,
            n_times=args.times,
            n_bands=args.bands,
            height=args.height,
            width=args.width,
            parcels=(args.min_parcels, args.max_parcels),
            parcel_size=_pair(args.parcel_size, "--parcel-size"),
            temporal_amplitude=args.amplitude,
            noise_std=args.noise,
            cloud_fraction=args.clouds,
            border=args.border,
        )
        for i in range(args.scenes)
    ]
    args.out.mkdir(parents=True, exist_ok=True)
    for i, cfg in enumerate(configs):
        scene = generate_synthetic(cfg)
        stem = args.out / f"scene_{i:03d}"
        write_scene(stem.with_suffix(".scs"), scene)
        write_label(stem.with_suffix(".msk"), scene.label)
        log.info("wrote %s (seed %d)", stem, cfg.seed)
    print(f"wrote {len(configs)} scenes to {args.out}")


def _train_config(args) -> TrainConfig:
    preproc = PreprocConfig(k=args.k, patch_size=args.patch_size, interpolation=args.interpolation)
    if any(h < 1 for h in args.hidden):
        raise InputError(f"--hidden widths must be positive, got {args.hidden}")
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        patience=args.patience,
        max_epochs=args.max_epochs,
        validation_fraction=args.val_fraction,
        seed=args.seed,
        preproc=preproc,
        threshold=args.threshold,
        hidden=tuple(args.hidden),
    )


def cmd_train(args) -> None:
    cfg = _train_config(args)
    paths = _scene_pairs(args.data)
    val_paths = _scene_pairs(args.val_data) if args.val_data else None
    if val_paths is None and len(paths) < 2:
        raise InputError("need at least 2 scenes to split off validation data; pass --val-data otherwise")
    scenes = [load_labeled_scene(p) for p in paths]
    validation = [load_labeled_scene(p) for p in val_paths] if val_paths else None
    for s in scenes + (validation or []):
        t, b = s.images.shape[:2]
        if t * b < cfg.preproc.k:
            raise InputError(f"scene {s.name} has T*B={t * b} channels, fewer than k={cfg.preproc.k}")
    model, result = train(scenes, cfg, validation=validation)
    save_model(model, args.out)
    log_path = args.log or args.out.with_suffix(".csv")
    atomic_write(log_path, result.to_csv(include_time=args.timing).encode())
    best = result.records[result.best_epoch - 1]
    print(
        f"trained {len(result.records)} epochs, best epoch {result.best_epoch} "
        f"(val_bce {best.val_bce:.5f}, val_mcc {best.val_mcc:.4f}); model -> {args.out}, log -> {log_path}"
    )


def cmd_infer(args) -> None:
    if not 0 < args.threshold < 1:
        raise InputError(f"--threshold must lie in (0, 1), got {args.threshold}")
    _require_file(args.model, "model file")
    _require_file(args.scene, "scene file")
    model = load_model(args.model)
    cfg = PreprocConfig(k=model.dims[0], patch_size=args.patch_size, interpolation=args.interpolation)
    scene = read_scene(args.scene)
    out = infer_scene(model, scene, cfg, threshold=args.threshold)
    write_label(args.out, out)
    print(f"wrote {out.shape[0]}x{out.shape[1]} map to {args.out}")


def _format_report(name: str, r: EvalReport) -> str:
    return f"{name:<24}" + "".join(f"{getattr(r, k):>10.4f}" for k in EvalReport.FIELDS)


def cmd_eval(args) -> None:
    if len(args.pred) != len(args.gt):
        raise InputError(f"got {len(args.pred)} --pred files but {len(args.gt)} --gt files")
    if args.exclusion and len(args.exclusion) != len(args.gt):
        raise InputError(f"got {len(args.exclusion)} --exclusion files for {len(args.gt)} scenes")
    for p in [*args.pred, *args.gt, *(args.exclusion or [])]:
        _require_file(p, "raster")
    reports = []
    for i, (pp, gp) in enumerate(zip(args.pred, args.gt)):
        pred, gt = read_label(pp), read_label(gp)
        if pred.shape != gt.shape:
            raise InputError(f"{pp} is {pred.shape[0]}x{pred.shape[1]} but {gp} is {gt.shape[0]}x{gt.shape[1]}")
        if np.any(pred == 255):
            raise InputError(f"prediction {pp} contains excluded (255) pixels")
        excl = read_label(args.exclusion[i]) if args.exclusion else None
        reports.append((pp.stem, evaluate(pred, gt, excl)))

    lines = [f"{'scene':<24}" + "".join(f"{k:>10}" for k in EvalReport.FIELDS)]
    lines += [_format_report(name, r) for name, r in reports]
    stats = summarize(r for _, r in reports)
    lines.append(f"{'mean':<24}" + "".join(f"{m:>10.4f}" for m, _ in stats.values()))
    lines.append(f"{'std':<24}" + "".join(f"{sd:>10.4f}" for _, sd in stats.values()))
    print("\n".join(lines))
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scene", *EvalReport.FIELDS])
        for name, r in reports:
            writer.writerow([name, *(repr(getattr(r, k)) for k in EvalReport.FIELDS)])
        writer.writerow(["mean", *(repr(m) for m, _ in stats.values())])
        writer.writerow(["std", *(repr(s) for _, s in stats.values())])
        atomic_write(args.csv, buf.getvalue().encode())


def cmd_inspect(args) -> None:
    _require_file(args.model, "model file")
    model = load_model(args.model)
    size = args.model.stat().st_size
    print(f"dims: {' -> '.join(str(d) for d in model.dims)}")
    print(f"params: {count_parameters(model)}")
    print(f"bytes: {size} (format: {model_file_size(model.dims)})")


def cmd_features(args) -> None:
    if args.window < 1 or args.window % 2 == 0:
        raise InputError(f"--window must be a positive odd number, got {args.window}")
    _require_file(args.scene, "scene file")
    feats = extract_features(read_scene(args.scene), window=args.window)
    write_tensor(args.out, feats)
    print(f"wrote {feats.shape[0]}x{feats.shape[1]}x{feats.shape[2]} features to {args.out}")


def cmd_graph_dump(args) -> None:
    if args.height < 1 or args.width < 1:
        raise InputError(f"grid must be at least 1x1, got {args.height}x{args.width}")
    adj = grid_graph(args.height, args.width, Connectivity(args.connectivity)).adjacency
    owner = np.repeat(np.arange(adj.rows), np.diff(adj.row_ptr))
    out = sys.stdout
    for r, c, v in zip(owner.tolist(), adj.col_idx.tolist(), adj.values.tolist()):
        out.write(f"{r} {c} {v!r}\n")


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "features": cmd_features,
    "graph-dump": cmd_graph_dump,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        threads = _resolve_threads(args)
        if threads is not None:
            set_threads(threads)
        COMMANDS[args.command](args)
    except (CropGcnError, ValueError, OSError) as exc:
        print(f"cropgcn: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
