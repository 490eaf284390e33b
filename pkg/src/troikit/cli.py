"""Command-line entry points: gen, train, eval, ablate, gradcheck.

Every option can also come from a `key = value` config file passed with
--config; explicit flags win over the file, the file wins over built-in
defaults, and unknown keys are rejected. Training writes a sidecar
`<checkpoint>.cfg` in the same format so that eval (and a rerun of
train) can reproduce the exact model.

Exit codes: 0 success, 2 usage or configuration, 3 data/IO,
4 numeric-check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backbone import BackboneSpec, VideoClassifier, load_checkpoint
from .errors import ConfigError, DataError, TroikitError
from .gradcheck import ALL_OPS, format_report, run_checks
from .synth import CLASSES, CORRUPT_MODES, build_dataset, load_dataset, save_dataset
from .tensor import precision
from .train import TrainConfig, completed_epochs, evaluate, train_model
from .troi import INSERTION_POINTS, TroiConfig

GEN_DEFAULTS = {
    "out": None,
    "per_class": 100,
    "classes": 6,
    "seed": 7,
    "frames": 8,
    "size": 32,
    "force": False,
}

TRAIN_DEFAULTS = {
    "data": None,
    "val_data": None,
    "out": None,
    "log": None,
    "epochs": 20,
    "batch_size": 16,
    "lr": 0.01,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "lr_boundaries": None,
    "seed": 0,
    "precision": "f32",
    "topk": 5,
    "channels": "16,32,64,64",
    "no_troi": False,
    "troi_at": "conv4",
    "troi_layers": 1,
    "heads": 2,
    "variant": "none",
    "ordering": "left-right",
    "resume": False,
}

# extra keys a train sidecar records so eval can rebuild the model
_SIDECAR_EXTRAS = {"frames": 8, "size": 32, "num_classes": 6}

EVAL_DEFAULTS = {
    "data": None,
    "checkpoint": None,
    "model_config": None,
    "corrupt": None,
    "topk": 5,
    "batch_size": 32,
}

ABLATE_DEFAULTS = {
    "data": None,
    "val_data": None,
    "out_dir": None,
    "epochs": 8,
    "batch_size": 16,
    "lr": 0.01,
    "seed": 0,
    "heads": 2,
}

GRADCHECK_DEFAULTS = {
    "op": None,
    "points": 10,
    "tol": 1e-4,
    "seed": 0,
    "perturb": 0.0,
}


def _parse_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file {path} does not exist")
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _coerce(key: str, raw: str, default):
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _merge(defaults: dict, args: argparse.Namespace, required=()) -> dict:
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in _parse_config_file(config_path).items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            probe = defaults[key]
            if probe is None:  # untyped defaults stay strings
                probe = ""
            cfg[key] = _coerce(key, raw, probe)
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            cfg[key] = value
    missing = [k for k in required if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _parse_boundaries(raw):
    if raw is None or raw == "none":
        return None
    try:
        b1, b2 = (int(p) for p in str(raw).split(","))
    except ValueError:
        raise ConfigError(f"lr_boundaries must be 'b1,b2', got {raw!r}") from None
    return (b1, b2)


def _parse_channels(raw) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in str(raw).split(","))
    except ValueError:
        raise ConfigError(f"channels must be comma-separated ints, got {raw!r}") from None


def _troi_config(cfg: dict) -> TroiConfig | None:
    if cfg["no_troi"]:
        return None
    variant = cfg.get("variant") or "none"
    parts = {p.strip() for p in variant.split(",") if p.strip() and p.strip() != "none"}
    unknown = parts - {"scene", "coord"}
    if unknown:
        raise ConfigError(f"unknown variant(s) {sorted(unknown)}; expected scene and/or coord")
    return TroiConfig(
        insert_at=cfg["troi_at"],
        layers=cfg["troi_layers"],
        heads=cfg["heads"],
        scene_token="scene" in parts,
        coord_encoding="coord" in parts,
        ordering=cfg["ordering"],
    )


def _dataset_shape(videos):
    frames, size = videos[0].frames.shape[0], videos[0].frames.shape[1]
    num_classes = max(v.label for v in videos) + 1
    return frames, size, max(num_classes, 2)


def _write_sidecar(path, cfg: dict, frames: int, size: int, num_classes: int) -> None:
    values = dict(cfg)
    if isinstance(values.get("lr_boundaries"), tuple):
        values["lr_boundaries"] = ",".join(str(b) for b in values["lr_boundaries"])
    lines = [f"{key} = {values[key]}" for key in TRAIN_DEFAULTS]
    lines += [f"frames = {frames}", f"size = {size}", f"num_classes = {num_classes}"]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _merge(GEN_DEFAULTS, args, required=("out",))
    if not 2 <= cfg["classes"] <= len(CLASSES):
        raise ConfigError(f"classes must be between 2 and {len(CLASSES)}, got {cfg['classes']}")
    videos = build_dataset(
        cfg["seed"], cfg["per_class"], cfg["frames"], cfg["size"], classes=CLASSES[: cfg["classes"]]
    )
    manifest = save_dataset(cfg["out"], videos, force=cfg["force"])
    print(f"wrote {len(videos)} videos ({cfg['per_class']} per class) to {manifest.parent}")
    return 0


def cmd_train(args) -> int:
    # sidecar shape keys are accepted so a recorded config can be fed
    # straight back in; the actual shape always comes from the dataset
    cfg = _merge({**TRAIN_DEFAULTS, **_SIDECAR_EXTRAS}, args, required=("data", "val_data", "out"))
    cfg["lr_boundaries"] = _parse_boundaries(cfg["lr_boundaries"])
    channels = _parse_channels(cfg["channels"])
    train_videos = load_dataset(cfg["data"])
    val_videos = load_dataset(cfg["val_data"])
    frames, size, num_classes = _dataset_shape(train_videos)

    log_path = cfg["log"] or str(cfg["out"]) + ".log"
    for target in (cfg["out"], log_path):
        Path(target).parent.mkdir(parents=True, exist_ok=True)
    start_epoch = 0
    tcfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        lr_boundaries=cfg["lr_boundaries"],
        seed=cfg["seed"],
        precision=cfg["precision"],
        topk=cfg["topk"],
    )
    with precision(cfg["precision"]):
        spec = BackboneSpec(frames=frames, size=size, channels=channels, classes=num_classes)
        model = VideoClassifier(spec, _troi_config(cfg), seed=cfg["seed"])
        if cfg["resume"] and Path(cfg["out"]).exists():
            load_checkpoint(cfg["out"], model)
            start_epoch = completed_epochs(log_path)
            print(f"resuming from epoch {start_epoch}")
        elif not cfg["resume"]:
            Path(log_path).unlink(missing_ok=True)
        _write_sidecar(str(cfg["out"]) + ".cfg", cfg, frames, size, num_classes)
        if start_epoch >= cfg["epochs"]:
            print("nothing to do: training already complete")
            return 0
        lines = train_model(
            model,
            train_videos,
            val_videos,
            tcfg,
            log_path=log_path,
            checkpoint_path=cfg["out"],
            start_epoch=start_epoch,
        )
    for line in lines:
        print(line)
    print(f"checkpoint: {cfg['out']}")
    return 0


def _model_from_sidecar(sidecar: dict, ckpt_path) -> VideoClassifier:
    spec = BackboneSpec(
        frames=sidecar["frames"],
        size=sidecar["size"],
        channels=_parse_channels(sidecar["channels"]),
        classes=sidecar["num_classes"],
    )
    model = VideoClassifier(spec, _troi_config(sidecar), seed=sidecar["seed"])
    load_checkpoint(ckpt_path, model)
    return model


def cmd_eval(args) -> int:
    cfg = _merge(EVAL_DEFAULTS, args, required=("data", "checkpoint"))
    if cfg["corrupt"] is not None and cfg["corrupt"] not in CORRUPT_MODES:
        raise ConfigError(f"unknown corruption mode {cfg['corrupt']!r}; expected one of {CORRUPT_MODES}")
    ckpt = Path(cfg["checkpoint"])
    if not ckpt.exists():
        raise DataError(f"checkpoint {ckpt} does not exist")
    sidecar_path = cfg["model_config"] or str(ckpt) + ".cfg"
    sidecar = _read_train_config(sidecar_path)
    videos = load_dataset(cfg["data"])
    with precision(sidecar["precision"]):
        model = _model_from_sidecar(sidecar, ckpt)
        metrics = evaluate(model, videos, k=cfg["topk"], corrupt=cfg["corrupt"], batch_size=cfg["batch_size"])
    mode = cfg["corrupt"] or "none"
    print(f"videos={len(videos)} corrupt={mode}")
    print(f"top1={metrics['top1']!r} top{cfg['topk']}={metrics['topk']!r}")
    for cls_id, acc in sorted(metrics["per_class"].items()):
        name = CLASSES[cls_id] if cls_id < len(CLASSES) else str(cls_id)
        print(f"class {cls_id} ({name}): {acc!r}")
    return 0


def _read_train_config(path) -> dict:
    known = dict(TRAIN_DEFAULTS)
    known.update(_SIDECAR_EXTRAS)
    cfg = dict(known)
    for key, raw in _parse_config_file(path).items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in model config {path}")
        probe = known[key]
        if probe is None:
            probe = ""
        cfg[key] = _coerce(key, raw, probe)
    return cfg


def cmd_ablate(args) -> int:
    cfg = _merge(ABLATE_DEFAULTS, args, required=("data", "val_data", "out_dir"))
    train_videos = load_dataset(cfg["data"])
    val_videos = load_dataset(cfg["val_data"])
    frames, size, num_classes = _dataset_shape(train_videos)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for placement in INSERTION_POINTS:
        for layers in (1, 2):
            spec = BackboneSpec(frames=frames, size=size, classes=num_classes)
            troi = TroiConfig(insert_at=placement, layers=layers, heads=cfg["heads"])
            model = VideoClassifier(spec, troi, seed=cfg["seed"])
            tcfg = TrainConfig(
                epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"]
            )
            train_model(model, train_videos, val_videos, tcfg)
            metrics = evaluate(model, val_videos)
            rows.append((placement, layers, metrics["top1"], metrics["topk"]))
            print(f"done: {placement} layers={layers} top1={metrics['top1']:.4f}")

    lines = ["placement  layers  val_top1  val_topk"]
    lines += [f"{p:<9}  {l:<6}  {t1:.4f}    {tk:.4f}" for p, l, t1, tk in rows]
    table = "\n".join(lines)
    (out_dir / "ablation.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _merge(GRADCHECK_DEFAULTS, args)
    ops = None
    if cfg["op"]:
        ops = [o.strip() for o in str(cfg["op"]).split(",") if o.strip()]
        unknown = [o for o in ops if o not in ALL_OPS]
        if unknown:
            raise ConfigError(f"unknown op(s) {unknown}; known: {sorted(ALL_OPS)}")
    results = run_checks(ops=ops, points=cfg["points"], tol=cfg["tol"], seed=cfg["seed"], perturb=cfg["perturb"])
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 4


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="troikit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--force", action="store_true", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a classifier")
    _add_common(p)
    p.add_argument("--data", help="training dataset directory")
    p.add_argument("--val-data", dest="val_data", help="validation dataset directory")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--log", help="metrics log path (default: <out>.log)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--lr-boundaries", dest="lr_boundaries", help="e.g. 20,40")
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--topk", type=int)
    p.add_argument("--channels", help="e.g. 16,32,64,64")
    p.add_argument("--no-troi", dest="no_troi", action="store_true", default=None)
    p.add_argument("--troi-at", dest="troi_at", choices=INSERTION_POINTS)
    p.add_argument("--troi-layers", dest="troi_layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--variant", help="comma list of scene,coord")
    p.add_argument("--ordering", choices=("left-right", "right-left"))
    p.add_argument("--resume", action="store_true", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--model-config", dest="model_config", help="sidecar config (default: <checkpoint>.cfg)")
    p.add_argument("--corrupt", choices=CORRUPT_MODES)
    p.add_argument("--topk", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="placement x depth comparison table")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--val-data", dest="val_data")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--heads", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    _add_common(p)
    p.add_argument("--op", help="comma list; default all")
    p.add_argument("--points", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--perturb", type=float, help="offset analytic grads (negative control)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TroikitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
