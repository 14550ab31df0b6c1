"""Training loops, warmup scheduling, checkpointing, and the evaluation pass."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainSample, read_dataset
from .model import (
    ModelConfig,
    RefineMask,
    RefinerModel,
    SketchToPartsModel,
    loss_cls,
    loss_full,
    loss_part,
    loss_refine,
)
from .nn import Adam, LrSchedule, load_checkpoint, save_checkpoint, warmup_lr
from .shapes import PartSet, decode_partset, extract_mesh, sample_surface


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(1e-5, 2e-3, 1))
    seed: int = 0
    dataset_dir: str = ""
    partial_fraction: float = 0.5
    model: ModelConfig = field(default_factory=ModelConfig)
    mask_range: tuple = (0.05, 0.40)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        lo, hi = self.mask_range
        if not (0.0 < lo < hi < 1.0):
            raise ValueError("mask_range must satisfy 0 < low < high < 1")


def _check_dataset_matches(cfg: TrainConfig, samples: list) -> None:
    for s in samples:
        if s.target.m != cfg.model.m or s.target.d_model != cfg.model.d_model:
            raise ValueError(
                f"dataset slots ({s.target.m}, {s.target.d_model}) do not match "
                f"model ({cfg.model.m}, {cfg.model.d_model})"
            )


def _zero_grads(params) -> None:
    for p in params:
        p.grad = None


def save_model(path: str, model, kind: str) -> None:
    arrays = {name: p.data for name, p in model.named_parameters()}
    meta = dict(model.cfg.to_dict())
    meta["kind"] = kind
    save_checkpoint(path, arrays, meta)


def load_model(path: str, expect_kind: str):
    meta, arrays = load_checkpoint(path)
    kind = meta.pop("kind", "sketch2shape")
    if kind != expect_kind:
        raise ValueError(f"checkpoint holds a {kind} model, expected {expect_kind}")
    cfg = ModelConfig.from_dict(meta)
    model = SketchToPartsModel(cfg) if expect_kind == "sketch2shape" else RefinerModel(cfg)
    model.load_state(arrays)
    return model


@dataclass
class TrainResult:
    model: object
    curve: list  # rows of {"epoch", "lr", "loss_full", "loss_cls", "loss_part"}
    steps: int
    final_loss_full: float
    opt_state: dict | None = None


def train_sketch2shape(cfg: TrainConfig, samples: list | None = None,
                       out_dir: str | None = None, max_steps: int | None = None,
                       stop_loss_full: float | None = None,
                       warm_start: SketchToPartsModel | None = None,
                       warm_opt: dict | None = None) -> TrainResult:
    """Optimize the sketch network. Full-style samples train L_full + L_cls;
    partial-style samples train L_part + L_cls (their absent slots carry no
    latent target). Stops early once the epoch mean of L_full drops below
    stop_loss_full, if given. warm_start continues from an existing model
    instead of a seed-fresh one; pass warm_opt (the opt_state of the previous
    run's TrainResult) as well to resume the optimizer moments, otherwise the
    optimizer starts fresh."""
    if samples is None:
        samples = read_dataset(cfg.dataset_dir)
    if not samples:
        raise ValueError("no training samples")
    _check_dataset_matches(cfg, samples)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    model = warm_start if warm_start is not None else SketchToPartsModel(cfg.model, seed=cfg.seed)
    if model.cfg.to_dict() != cfg.model.to_dict():
        raise ValueError("warm-start model config does not match cfg.model")
    params = [p for _, p in model.named_parameters()]
    opt = Adam(params)
    if warm_opt is not None:
        opt.load_state_dict(warm_opt)
    rng = np.random.default_rng(cfg.seed)

    curve = []
    best = np.inf
    steps = 0
    final_full = np.inf
    for epoch in range(cfg.epochs):
        opt.lr = warmup_lr(epoch, cfg.schedule)
        order = rng.permutation(len(samples))
        sums = {"loss_full": 0.0, "loss_cls": 0.0, "loss_part": 0.0}
        counts = {"loss_full": 0, "loss_cls": 0, "loss_part": 0}
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start:start + cfg.batch_size]]
            if all(s.style != "partial" for s in batch):
                # one stacked forward; row-mean losses over the stacked slots
                # equal the per-sample mean exactly, so this branch is a pure
                # speedup for all-full batches
                b, m, d = len(batch), cfg.model.m, cfg.model.d_model
                z, c = model.forward(np.stack([s.sketch.pixels for s in batch]))
                lf = loss_full(z.reshape(b * m, d),
                               np.concatenate([np.asarray(s.target.z, dtype=float) for s in batch]))
                lc = loss_cls(c.reshape(b * m),
                              np.concatenate([np.asarray(s.target.c, dtype=float) for s in batch]))
                mean_loss = lf + lc
                sums["loss_full"] += float(lf.data) * b
                counts["loss_full"] += b
                sums["loss_cls"] += float(lc.data) * b
                counts["loss_cls"] += b
            else:
                total = None
                for s in batch:
                    z, c = model.forward(s.sketch.pixels)
                    lc = loss_cls(c, np.array(s.target.c, dtype=float))
                    if s.style == "partial":
                        lp = loss_part(z, s.target.z, np.array(s.target.c, dtype=float))
                        term = lp + lc
                        sums["loss_part"] += float(lp.data)
                        counts["loss_part"] += 1
                    else:
                        lf = loss_full(z, s.target.z)
                        term = lf + lc
                        sums["loss_full"] += float(lf.data)
                        counts["loss_full"] += 1
                    sums["loss_cls"] += float(lc.data)
                    counts["loss_cls"] += 1
                    total = term if total is None else total + term
                mean_loss = total * (1.0 / len(batch))
            _zero_grads(params)
            mean_loss.backward()
            opt.step()
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break

        row = {"epoch": epoch, "lr": opt.lr}
        for key in ("loss_full", "loss_cls", "loss_part"):
            row[key] = sums[key] / counts[key] if counts[key] else 0.0
        curve.append(row)
        final_full = row["loss_full"]

        if out_dir is not None and row["loss_full"] < best:
            best = row["loss_full"]
            save_model(os.path.join(out_dir, "checkpoint_best.ckpt"), model, "sketch2shape")
        if max_steps is not None and steps >= max_steps:
            break
        if stop_loss_full is not None and counts["loss_full"] and row["loss_full"] < stop_loss_full:
            break

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(os.path.join(out_dir, "checkpoint_final.ckpt"), model, "sketch2shape")
        if not os.path.exists(os.path.join(out_dir, "checkpoint_best.ckpt")):
            save_model(os.path.join(out_dir, "checkpoint_best.ckpt"), model, "sketch2shape")
        write_loss_curve(os.path.join(out_dir, "loss_curve.csv"), curve)
    return TrainResult(model, curve, steps, final_full, opt.state_dict())


def write_loss_curve(path: str, curve: list) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "lr", "loss_full", "loss_cls", "loss_part"])
        for row in curve:
            writer.writerow([row["epoch"], row["lr"], row["loss_full"],
                             row["loss_cls"], row["loss_part"]])


def _draw_mask(rng: np.random.Generator, m: int, lo: float, hi: float) -> RefineMask:
    u = rng.uniform(lo, hi)
    k = max(1, round(u * m))
    idx = rng.choice(m, size=k, replace=False)
    bits = [0] * m
    for i in idx:
        bits[int(i)] = 1
    return RefineMask(tuple(bits))


def train_refiner(cfg: TrainConfig, frozen_targets: list,
                  out_dir: str | None = None, max_steps: int | None = None,
                  stop_loss: float | None = None,
                  warm_start: RefinerModel | None = None,
                  warm_opt: dict | None = None) -> TrainResult:
    """Masked-slot reconstruction on fixed latent matrices. Only refiner
    weights are optimized; targets are ground-truth latents. warm_start
    continues from an existing refiner; warm_opt resumes its optimizer
    moments as well."""
    if not frozen_targets:
        raise ValueError("no refiner targets")
    for ps in frozen_targets:
        if ps.m != cfg.model.m or ps.d_model != cfg.model.d_model:
            raise ValueError(
                f"target slots ({ps.m}, {ps.d_model}) do not match "
                f"model ({cfg.model.m}, {cfg.model.d_model})"
            )

    refiner = warm_start if warm_start is not None else RefinerModel(cfg.model, seed=cfg.seed)
    if refiner.cfg.to_dict() != cfg.model.to_dict():
        raise ValueError("warm-start refiner config does not match cfg.model")
    params = [p for _, p in refiner.named_parameters()]
    opt = Adam(params)
    if warm_opt is not None:
        opt.load_state_dict(warm_opt)
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.mask_range

    curve = []
    steps = 0
    final = np.inf
    for epoch in range(cfg.epochs):
        opt.lr = warmup_lr(epoch, cfg.schedule)
        order = rng.permutation(len(frozen_targets))
        loss_sum, n_batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [frozen_targets[i] for i in order[start:start + cfg.batch_size]]
            total = None
            for ps in batch:
                mask = _draw_mask(rng, cfg.model.m, lo, hi)
                z_true = np.array(ps.z, dtype=float)
                z_in = z_true.copy()
                z_in[np.array(mask.bits, dtype=bool)] = 0.0
                assert np.all(z_in[np.array(mask.bits, dtype=bool)] == 0.0)
                out = refiner.refine(z_in, mask)
                term = loss_refine(out, z_true, mask)
                total = term if total is None else total + term
            _zero_grads(params)
            (total * (1.0 / len(batch))).backward()
            opt.step()
            loss_sum += float(total.data) / len(batch)
            n_batches += 1
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        final = loss_sum / max(1, n_batches)
        curve.append({"epoch": epoch, "lr": opt.lr, "loss_full": 0.0,
                      "loss_cls": 0.0, "loss_part": final})
        if max_steps is not None and steps >= max_steps:
            break
        if stop_loss is not None and final < stop_loss:
            break

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(os.path.join(out_dir, "refiner_final.ckpt"), refiner, "refiner")
    return TrainResult(refiner, curve, steps, final, opt.state_dict())


def evaluate_epoch(model: SketchToPartsModel, heldout: list, grid_res: int = 48,
                   n_points: int = 2000, seed: int = 0,
                   include_threshold: float = 0.5) -> dict:
    """Mean Chamfer against ground-truth meshes, presence accuracy, mean L_full.

    Samples whose prediction has no present part are counted and skipped for
    the Chamfer average."""
    from .metrics import chamfer

    if not heldout:
        raise ValueError("held-out set is empty")
    cds = []
    acc_hits = 0
    acc_total = 0
    lf_sum = 0.0
    empty = 0
    for i, s in enumerate(heldout):
        pred = model.predict(s.sketch.pixels)
        lf_sum += float(loss_full(pred.z, np.array(s.target.z)).data)
        want = np.array(s.target.c)
        got = (pred.c >= include_threshold).astype(float)
        acc_hits += int(np.sum(got == want))
        acc_total += want.size

        pred_set = PartSet(m=s.target.m, d_model=s.target.d_model,
                           z=pred.z.tolist(), c=got.tolist())
        parts, _ = decode_partset(pred_set, threshold=include_threshold)
        if not parts:
            empty += 1
            continue
        mesh = extract_mesh(parts, grid_res=grid_res)
        gt_parts, _ = decode_partset(s.target, threshold=include_threshold)
        gt_mesh = extract_mesh(gt_parts, grid_res=grid_res)
        if mesh.is_empty or gt_mesh.is_empty:
            empty += 1
            continue
        a = sample_surface(mesh, n_points, seed=seed + 2 * i)
        b = sample_surface(gt_mesh, n_points, seed=seed + 2 * i + 1)
        cds.append(chamfer(a, b))

    return {
        "mean_cd": float(np.mean(cds)) if cds else float("nan"),
        "presence_accuracy": acc_hits / acc_total,
        "mean_loss_full": lf_sum / len(heldout),
        "empty_predictions": empty,
        "evaluated": len(cds),
    }
