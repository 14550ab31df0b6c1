"""Procedural shapes, ground-truth part sets, training samples, and dataset IO.

Slot layout is fixed per class so presence patterns are learnable:
chair 0 seat, 1 back, 2-5 legs, 6-7 armrests; table 0 top, 2-5 legs;
lamp 0 base, 1 pole, 2 shade. Everything fits m >= 8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyShapeError
from .render import Camera, Sketch, AugmentParams, apply_augment, render_outline, render_partial, standard_views
from .shapes import PartPrimitive, PartSet, encode_parts

CLASSES = ("chair", "table", "lamp")
STYLES = ("outline", "partial", "abstract_substitute")

DATASET_FORMAT_VERSION = 1


class DatasetParseError(ValueError):
    """Corrupt dataset record; message names the offending line."""


@dataclass
class ShapeRecord:
    id: str
    shape_class: str
    parts: list  # PartPrimitive, in ascending slot order
    slots: list  # slot index per part
    part_set: PartSet


@dataclass
class TrainSample:
    id: str
    shape_class: str
    sketch: Sketch
    target: PartSet
    style: str
    view: int
    # present-part primitives and their slots; kept so dataset files round-trip
    # bit-exactly (re-encoding a decoded yaw would drift in the last ulp)
    parts: list = field(default_factory=list)
    slots: list = field(default_factory=list)

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        if len(self.parts) != len(self.slots):
            raise ValueError("parts and slots must align")


# -- procedural generators ------------------------------------------------------
#
# All shapes are y-up, floor near y=-0.9, and stay inside [-1,1]^3 including
# rotated supports (checked by test over many seeds).


def _rotate_y(v, yaw):
    cy, sy = math.cos(yaw), math.sin(yaw)
    return (cy * v[0] + sy * v[2], v[1], -sy * v[0] + cy * v[2])


def _wrap_yaw(yaw: float) -> float:
    yaw = (yaw + math.pi) % (2 * math.pi) - math.pi
    return yaw if yaw < math.pi else -math.pi


def _spin(parts_slots: list, yaw: float) -> list:
    """Rotate whole shape about +y: move centers, add yaw to each part."""
    out = []
    for part, slot in parts_slots:
        out.append(
            (
                PartPrimitive(
                    part.kind,
                    _rotate_y(part.center, yaw),
                    part.half_extents,
                    _wrap_yaw(part.yaw + yaw),
                ),
                slot,
            )
        )
    return out


def _chair(rng) -> list:
    seat_y = rng.uniform(-0.05, 0.1)
    sw = rng.uniform(0.35, 0.48)
    st = rng.uniform(0.04, 0.08)
    sd = rng.uniform(0.35, 0.48)
    seat = PartPrimitive("box", (0, seat_y, 0), (sw, st, sd), 0.0)

    bh = rng.uniform(0.28, 0.4)
    bt = rng.uniform(0.03, 0.06)
    back = PartPrimitive(
        "box", (0, seat_y + st + bh, -(sd - bt)), (sw * rng.uniform(0.85, 1.0), bh, bt), 0.0
    )

    lw = rng.uniform(0.04, 0.07)
    floor = rng.uniform(-0.92, -0.82)
    lh = (seat_y - st - floor) / 2.0
    leg_kind = "cylinder" if rng.random() < 0.4 else "box"
    n_legs = 4 if rng.random() < 0.8 else 3
    inset_x, inset_z = sw - lw, sd - lw
    corners = [(-inset_x, -inset_z), (inset_x, -inset_z), (-inset_x, inset_z), (inset_x, inset_z)]
    if n_legs == 3:
        corners = [corners[2], corners[3], (0.0, -inset_z)]
    legs = [
        (
            PartPrimitive(leg_kind, (cx, seat_y - st - lh, cz), (lw, lh, lw), 0.0),
            2 + i,
        )
        for i, (cx, cz) in enumerate(corners)
    ]

    parts = [(seat, 0), (back, 1)] + legs
    if rng.random() < 0.4:
        aw = rng.uniform(0.03, 0.05)
        ah = rng.uniform(0.12, 0.2)
        for j, sx in enumerate((-1, 1)):
            arm = PartPrimitive(
                "box", (sx * (sw - aw), seat_y + st + ah, 0.0), (aw, ah, sd * 0.7), 0.0
            )
            parts.append((arm, 6 + j))
    return _spin(parts, rng.uniform(-0.35, 0.35))


def _table(rng) -> list:
    top_y = rng.uniform(0.15, 0.4)
    tt = rng.uniform(0.03, 0.06)
    round_top = rng.random() < 0.35
    if round_top:
        radius = rng.uniform(0.4, 0.58)
        top = PartPrimitive("cylinder", (0, top_y, 0), (radius, tt, radius), 0.0)
        inset = radius * 0.6
    else:
        tw = rng.uniform(0.4, 0.58)
        td = rng.uniform(0.4, 0.58)
        top = PartPrimitive("box", (0, top_y, 0), (tw, tt, td), 0.0)
        inset = None

    lw = rng.uniform(0.03, 0.06)
    floor = rng.uniform(-0.92, -0.82)
    lh = (top_y - tt - floor) / 2.0
    leg_kind = "cylinder" if rng.random() < 0.5 else "box"
    if inset is None:
        xs, zs = top.half_extents[0] - lw - 0.02, top.half_extents[2] - lw - 0.02
        corners = [(-xs, -zs), (xs, -zs), (-xs, zs), (xs, zs)]
    else:
        corners = [(-inset, -inset), (inset, -inset), (-inset, inset), (inset, inset)]
    legs = [
        (PartPrimitive(leg_kind, (cx, top_y - tt - lh, cz), (lw, lh, lw), 0.0), 2 + i)
        for i, (cx, cz) in enumerate(corners)
    ]
    return _spin([(top, 0)] + legs, rng.uniform(-0.35, 0.35))


def _lamp(rng) -> list:
    floor = rng.uniform(-0.92, -0.85)
    bt = rng.uniform(0.03, 0.06)
    br = rng.uniform(0.15, 0.3)
    base = PartPrimitive("cylinder", (0, floor + bt, 0), (br, bt, br), 0.0)

    pr = rng.uniform(0.02, 0.04)
    top_y = rng.uniform(0.45, 0.8)
    ph = (top_y - (floor + 2 * bt)) / 2.0
    pole = PartPrimitive("cylinder", (0, floor + 2 * bt + ph, 0), (pr, ph, pr), 0.0)

    sr = rng.uniform(0.15, 0.32)
    sh = rng.uniform(0.1, min(0.18, (0.97 - top_y) / 1.6))  # keep shade top below y=1
    shade_kind = "ellipsoid" if rng.random() < 0.4 else "cylinder"
    shade = PartPrimitive(shade_kind, (0, top_y + sh * 0.6, 0), (sr, sh, sr), 0.0)
    return _spin([(base, 0), (pole, 1), (shade, 2)], rng.uniform(-0.35, 0.35))


_GENERATORS = {"chair": _chair, "table": _table, "lamp": _lamp}


def generate_shape(seed: int, shape_class: str, m: int = 8, d_model: int = 32) -> ShapeRecord:
    """Deterministic class-conditional shape with exact ground-truth latents."""
    if shape_class not in _GENERATORS:
        raise ValueError(f"unsupported class {shape_class!r}; choose from {CLASSES}")
    rng = np.random.default_rng(seed)
    parts_slots = _GENERATORS[shape_class](rng)
    parts_slots.sort(key=lambda ps: ps[1])
    parts = [p for p, _ in parts_slots]
    slots = [s for _, s in parts_slots]
    part_set = encode_parts(parts, slots, m=m, d_model=d_model)
    return ShapeRecord(
        id=f"{shape_class}_{seed:06d}",
        shape_class=shape_class,
        parts=parts,
        slots=slots,
        part_set=part_set,
    )


def shape_support(parts: list) -> float:
    """Max |coordinate| reached by any part, exact per primitive kind."""
    worst = 0.0
    for p in parts:
        h = np.asarray(p.half_extents)
        cy, sy = abs(math.cos(p.yaw)), abs(math.sin(p.yaw))
        if p.kind == "box":
            ext = np.array([h[0] * cy + h[2] * sy, h[1], h[0] * sy + h[2] * cy])
        elif p.kind == "cylinder":
            ext = np.array([h[0], h[1], h[0]])
        else:
            ext = np.array(
                [
                    math.sqrt((h[0] * cy) ** 2 + (h[2] * sy) ** 2),
                    h[1],
                    math.sqrt((h[0] * sy) ** 2 + (h[2] * cy) ** 2),
                ]
            )
        worst = max(worst, float(np.max(np.abs(np.asarray(p.center)) + ext)))
    return worst


# -- sample assembly ----------------------------------------------------------------


def _partial_target(full: PartSet, keep_slots: set) -> PartSet:
    c = np.zeros_like(full.c)
    z = np.zeros_like(full.z)
    for s in keep_slots:
        c[s] = 1.0
        z[s] = full.z[s]
    return PartSet(full.m, full.d_model, z, c)


def build_samples(
    record: ShapeRecord,
    views: list | None = None,
    partial_fraction: float = 0.5,
    seed: int = 0,
) -> list:
    """Per view: a full outline sample, an abstract (warped + stroke-dropout)
    sample, and with probability partial_fraction a partial-view sample over a
    strict non-empty subset of present parts."""
    if views is None:
        views = standard_views()
    if not views:
        raise ValueError("views must be non-empty")
    rng = np.random.default_rng(seed)
    samples = []
    for view_idx, camera in enumerate(views):
        full_sketch = render_outline(record.parts, camera)
        samples.append(
            TrainSample(record.id, record.shape_class, full_sketch, record.part_set.copy(),
                        "outline", view_idx, list(record.parts), list(record.slots))
        )

        if rng.random() < partial_fraction:
            k = len(record.parts)
            j = int(rng.integers(1, k))  # strict subset: 1..k-1 parts
            chosen = sorted(int(i) for i in rng.choice(k, size=j, replace=False))
            flags = np.zeros(k)
            flags[chosen] = 1.0
            sketch = render_partial(record.parts, flags, camera)
            keep = {record.slots[i] for i in chosen}
            samples.append(
                TrainSample(record.id, record.shape_class, sketch,
                            _partial_target(record.part_set, keep), "partial", view_idx,
                            [record.parts[i] for i in chosen],
                            [record.slots[i] for i in chosen])
            )

        # abstraction substitute: mild warp, stroke-width change, run dropout.
        # No flip here: targets stay tied to the unmirrored shape.
        jitter = rng.uniform(-0.04, 0.04, size=(4, 2)) * 256
        params = AugmentParams(
            flip=False,
            corners=AugmentParams.identity().corners + jitter,
            morph_radius=int(rng.integers(0, 3)) * (1 if rng.random() < 0.5 else -1),
            dropout=float(rng.uniform(0.05, 0.2)),
        )
        samples.append(
            TrainSample(record.id, record.shape_class, apply_augment(full_sketch, params),
                        record.part_set.copy(), "abstract_substitute", view_idx,
                        list(record.parts), list(record.slots))
        )
    return samples


def part_ink_contributions(parts: list, camera: Camera) -> list:
    """Outline pixels each part uniquely contributes from this view (ink lost
    when the part is removed). A part occluded into near-invisibility gets a
    count near zero."""
    full = render_outline(parts, camera).pixels < 0.5
    counts = []
    for j in range(len(parts)):
        rest = [p for i, p in enumerate(parts) if i != j]
        if rest:
            remaining = render_outline(rest, camera).pixels < 0.5
        else:
            remaining = np.zeros_like(full)
        counts.append(int(np.logical_xor(full, remaining).sum()))
    return counts


def pick_view(parts: list, candidates: list, min_part_ink: int = 250) -> Camera:
    """First candidate camera from which every part contributes at least
    min_part_ink outline pixels; falls back to the candidate with the best
    worst-part count. A view that hides a part starves its latent rows of
    gradient signal, so memorization sets want every part visible."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    best, best_score = candidates[0], -1
    for cam in candidates:
        score = min(part_ink_contributions(parts, cam), default=0)
        if score >= min_part_ink:
            return cam
        if score > best_score:
            best, best_score = cam, score
    return best


# -- dataset files -----------------------------------------------------------------


def _sample_filename(s: TrainSample) -> str:
    return f"{s.id}_{s.view}_{s.style}.png"


def _present_parts(s: TrainSample) -> list:
    if s.parts:
        return [p.to_dict() for p in s.parts]
    # fall back to decoding the latent rows for externally built samples
    from .shapes import decode_part

    return [decode_part(s.target.z[i]).to_dict() for i in range(s.target.m) if s.target.c[i] >= 0.5]


def write_dataset(samples: list, out_dir) -> None:
    out = Path(out_dir)
    (out / "sketches").mkdir(parents=True, exist_ok=True)
    if not samples:
        raise ValueError("no samples to write")
    m = samples[0].target.m
    d_model = samples[0].target.d_model
    with open(out / "targets.jsonl", "w") as f:
        for s in samples:
            if s.target.m != m or s.target.d_model != d_model:
                raise ValueError("mixed part-set sizes in one dataset")
            row = {
                "id": s.id,
                "class": s.shape_class,
                "style": s.style,
                "view": s.view,
                "c": [int(v) for v in s.target.c],
                "parts": _present_parts(s),
            }
            f.write(json.dumps(row) + "\n")
            s.sketch.save_png(out / "sketches" / _sample_filename(s))
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "count": len(samples),
        "m": m,
        "d_model": d_model,
        "classes": sorted({s.shape_class for s in samples}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_dataset(in_dir) -> list:
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise DatasetParseError(f"missing manifest.json in {src}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetParseError(f"unsupported dataset format {manifest.get('format_version')}")
    m, d_model = manifest["m"], manifest["d_model"]

    samples = []
    with open(src / "targets.jsonl") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                parts = [PartPrimitive.from_dict(d) for d in row["parts"]]
                slots = [i for i, v in enumerate(row["c"]) if v]
                if len(slots) != len(parts):
                    raise ValueError("presence flags disagree with parts list")
                target = encode_parts(parts, slots, m=m, d_model=d_model)
                sketch_path = src / "sketches" / f"{row['id']}_{row['view']}_{row['style']}.png"
                sketch = Sketch.load_png(sketch_path)
                samples.append(
                    TrainSample(row["id"], row["class"], sketch, target, row["style"],
                                row["view"], parts, slots)
                )
            except DatasetParseError:
                raise
            except Exception as exc:
                raise DatasetParseError(f"targets.jsonl line {lineno}: {exc}") from exc
    if len(samples) != manifest["count"]:
        raise DatasetParseError(
            f"targets.jsonl line {len(samples)}: expected {manifest['count']} records, file ends early"
        )
    return samples


def generate_dataset(
    n_shapes: int,
    classes: list | None = None,
    views: list | None = None,
    partial_fraction: float = 0.5,
    seed: int = 0,
    m: int = 8,
    d_model: int = 32,
) -> list:
    """Round-robin class sampler over n_shapes procedural shapes."""
    classes = list(classes or ("chair",))
    for k in classes:
        if k not in CLASSES:
            raise ValueError(f"unsupported class {k!r}")
    samples = []
    for i in range(n_shapes):
        klass = classes[i % len(classes)]
        record = generate_shape(seed + i, klass, m=m, d_model=d_model)
        samples.extend(build_samples(record, views, partial_fraction, seed=seed + 10_000 + i))
    return samples
