"""Command line entry points.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every subcommand is
seeded, and identical argv produce identical outputs."""

from __future__ import annotations

import argparse
import json
import os
import sys

CONFIG_KEYS = {
    "epochs", "batch_size", "seed", "dataset_dir", "partial_fraction",
    "lr_start", "lr_end", "warmup_epochs", "h_d", "enc_layers", "dec_layers",
    "heads", "m", "d_model", "refiner_layers", "grid_res", "bind",
    "model", "refiner", "mask_low", "mask_high",
}


def _load_config_file(path: str) -> dict:
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def _setting(args, name: str, default, cast=None):
    """Precedence: explicit flag > SENS_ env var > config file > default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    env = os.environ.get(f"SENS_{name.upper().replace('-', '_')}")
    if env is not None:
        return cast(env) if cast else env
    cfg = getattr(args, "_config_data", None) or {}
    if name in cfg:
        return cfg[name]
    return default


def _model_config(args, m: int, d_model: int):
    from .model import ModelConfig

    return ModelConfig(
        h_d=_setting(args, "h_d", 64, int),
        enc_layers=_setting(args, "enc_layers", 2, int),
        dec_layers=_setting(args, "dec_layers", 2, int),
        heads=_setting(args, "heads", 4, int),
        m=m,
        d_model=d_model,
        refiner_layers=_setting(args, "refiner_layers", 2, int),
    )


def _train_config(args, model_cfg):
    from .nn import LrSchedule
    from .trainer import TrainConfig

    return TrainConfig(
        epochs=_setting(args, "epochs", 50, int),
        batch_size=_setting(args, "batch_size", 16, int),
        schedule=LrSchedule(
            lr_start=_setting(args, "lr_start", 1e-5, float),
            lr_end=_setting(args, "lr_end", 2e-3, float),
            warmup_epochs=_setting(args, "warmup_epochs", 1, int),
        ),
        seed=_setting(args, "seed", 0, int),
        dataset_dir=args.data,
        partial_fraction=_setting(args, "partial_fraction", 0.5, float),
        model=model_cfg,
        mask_range=(_setting(args, "mask_low", 0.05, float),
                    _setting(args, "mask_high", 0.40, float)),
    )


# -- subcommand bodies ----------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    from .dataset import CLASSES, generate_dataset, write_dataset
    from .render import standard_views

    classes = list(CLASSES) if args.shape_class == "mixed" else [args.shape_class]
    samples = generate_dataset(
        n_shapes=args.count,
        classes=classes,
        views=standard_views(args.views),
        partial_fraction=_setting(args, "partial_fraction", 0.5, float),
        seed=_setting(args, "seed", 0, int),
        m=_setting(args, "m", 8, int),
        d_model=_setting(args, "d_model", 32, int),
    )
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .dataset import read_dataset
    from .trainer import train_sketch2shape

    samples = read_dataset(args.data)
    manifest = json.load(open(os.path.join(args.data, "manifest.json")))
    cfg = _train_config(args, _model_config(args, manifest["m"], manifest["d_model"]))
    result = train_sketch2shape(cfg, samples=samples, out_dir=args.out,
                                max_steps=args.max_steps, stop_loss_full=args.stop_loss)
    print(f"trained {result.steps} steps, final loss_full {result.final_loss_full:.6f}")
    return 0


def _cmd_train_refiner(args) -> int:
    from .dataset import read_dataset
    from .trainer import train_refiner

    samples = read_dataset(args.data)
    manifest = json.load(open(os.path.join(args.data, "manifest.json")))
    targets, seen = [], set()
    for s in samples:
        if s.id not in seen:
            seen.add(s.id)
            targets.append(s.target)
    cfg = _train_config(args, _model_config(args, manifest["m"], manifest["d_model"]))
    result = train_refiner(cfg, targets, out_dir=args.out,
                           max_steps=args.max_steps, stop_loss=args.stop_loss)
    print(f"trained {result.steps} steps, final loss_refine {result.curve[-1]['loss_part']:.6f}")
    return 0


def _matched_meshes(pred_dir: str, ref_dir: str):
    from .shapes import load_mesh

    def table(d):
        names = sorted(n for n in os.listdir(d) if n.endswith((".obj", ".json")))
        return {os.path.splitext(n)[0]: os.path.join(d, n) for n in names}

    pred, ref = table(pred_dir), table(ref_dir)
    common = sorted(set(pred) & set(ref))
    if not common:
        raise ValueError("no mesh ids shared between pred and ref directories")
    return ([(k, load_mesh(pred[k])) for k in common],
            [(k, load_mesh(ref[k])) for k in common])


def _cmd_eval(args) -> int:
    from .metrics import evaluation_report

    pred, ref = _matched_meshes(args.pred, args.ref)
    report = evaluation_report(pred, ref, n_points=args.points,
                               seed=_setting(args, "seed", 0, int), views=args.views)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _cmd_infer(args) -> int:
    from .render import Sketch, normalize_sketch
    from .shapes import decode_partset, extract_mesh, mesh_to_obj
    from .trainer import load_model

    model = load_model(args.model, "sketch2shape")
    sketch = normalize_sketch(Sketch.load_png(args.sketch).pixels)
    pred = model.predict(sketch.pixels)
    from .shapes import PartSet

    ps = PartSet(m=model.cfg.m, d_model=model.cfg.d_model,
                 z=pred.z.tolist(), c=(pred.c >= 0.5).astype(float).tolist())
    parts, _ = decode_partset(ps, threshold=0.5)
    if not parts:
        from .errors import EmptyShapeError

        raise EmptyShapeError("no part cleared the presence threshold")
    mesh = extract_mesh(parts, grid_res=_setting(args, "grid_res", 48, int))
    with open(args.out, "w") as f:
        f.write(mesh_to_obj(mesh))
    print(f"wrote {len(mesh.faces)} faces to {args.out}")
    return 0


def _cmd_outline(args) -> int:
    from .dataset import generate_shape
    from .render import Camera, render_outline

    rec = generate_shape(args.shape_seed, args.shape_class,
                         m=_setting(args, "m", 8, int),
                         d_model=_setting(args, "d_model", 32, int))
    cam = Camera(azimuth=args.azimuth, elevation=args.elevation, distance=3.0)
    sketch = render_outline(rec.parts, cam)
    sketch.save_png(args.out)
    print(f"wrote outline of {rec.id} to {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    from .metrics import retrieval_topk
    from .shapes import load_mesh

    query = load_mesh(args.query)
    names = sorted(n for n in os.listdir(args.set) if n.endswith((".obj", ".json")))
    training = [(os.path.splitext(n)[0], load_mesh(os.path.join(args.set, n))) for n in names]
    ranked = retrieval_topk(query, training, k=args.k, n_points=args.points,
                            seed=_setting(args, "seed", 0, int))
    print(json.dumps(ranked, indent=2))
    print(f"{'rank':>4}  {'id':<24} {'chamfer':>12}")
    for rank, row in enumerate(ranked, start=1):
        print(f"{rank:>4}  {row['id']:<24} {row['cd']:>12.6f}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(
        bind=_setting(args, "bind", "127.0.0.1:8000"),
        model_path=_setting(args, "model", None),
        refiner_path=_setting(args, "refiner", None),
        grid_res=_setting(args, "grid_res", 48, int),
    )
    return 0


# -- parser ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    p = _Parser(prog="sketchparts", description=__doc__)
    p.add_argument("--config", help="JSON config file; flags override its values")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a procedural sketch dataset")
    g.add_argument("--class", dest="shape_class", required=True,
                   choices=["chair", "table", "lamp", "mixed"])
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--views", type=int, default=2)
    g.add_argument("--partial-fraction", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--d-model", type=int)
    g.set_defaults(func=_cmd_gen_data)

    for name, fn in (("train", _cmd_train), ("train-refiner", _cmd_train_refiner)):
        t = sub.add_parser(name, help=f"{name} on a generated dataset")
        t.add_argument("--data", required=True)
        t.add_argument("--out", required=True)
        t.add_argument("--epochs", type=int)
        t.add_argument("--batch-size", type=int)
        t.add_argument("--seed", type=int)
        t.add_argument("--lr-start", type=float)
        t.add_argument("--lr-end", type=float)
        t.add_argument("--warmup-epochs", type=int)
        t.add_argument("--max-steps", type=int, default=None)
        t.add_argument("--stop-loss", type=float, default=None)
        t.add_argument("--partial-fraction", type=float)
        for flag in ("--h-d", "--enc-layers", "--dec-layers", "--heads", "--refiner-layers"):
            t.add_argument(flag, type=int)
        t.add_argument("--mask-low", type=float)
        t.add_argument("--mask-high", type=float)
        t.set_defaults(func=fn)

    e = sub.add_parser("eval", help="score prediction meshes against references")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--points", type=int, default=1000)
    e.add_argument("--seed", type=int)
    e.add_argument("--views", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=_cmd_eval)

    i = sub.add_parser("infer", help="sketch PNG to mesh OBJ")
    i.add_argument("--model", required=True)
    i.add_argument("--sketch", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--grid-res", type=int)
    i.set_defaults(func=_cmd_infer)

    o = sub.add_parser("outline", help="render a procedural shape's outline sketch")
    o.add_argument("--class", dest="shape_class", required=True,
                   choices=["chair", "table", "lamp"])
    o.add_argument("--shape-seed", type=int, default=0)
    o.add_argument("--azimuth", type=float, default=0.6)
    o.add_argument("--elevation", type=float, default=0.35)
    o.add_argument("--out", required=True)
    o.add_argument("--m", type=int)
    o.add_argument("--d-model", type=int)
    o.set_defaults(func=_cmd_outline)

    r = sub.add_parser("retrieve", help="top-k nearest training meshes by chamfer")
    r.add_argument("--query", required=True)
    r.add_argument("--set", required=True)
    r.add_argument("--k", type=int, default=3)
    r.add_argument("--points", type=int, default=2000)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=_cmd_retrieve)

    s = sub.add_parser("serve", help="run the editing service")
    s.add_argument("--bind")
    s.add_argument("--model")
    s.add_argument("--refiner")
    s.add_argument("--grid-res", type=int)
    s.set_defaults(func=_cmd_serve)

    return p


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args._config_data = _load_config_file(args.config) if args.config else {}
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except Exception as exc:
        from .errors import (
            BadSelectionError,
            EmptyShapeError,
            EmptySketchError,
            SessionNotFoundError,
        )

        code = {
            EmptySketchError: "empty_sketch",
            EmptyShapeError: "empty_shape",
            BadSelectionError: "bad_selection",
            SessionNotFoundError: "no_session",
        }.get(type(exc), type(exc).__name__)
        print(f"error: {code}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
