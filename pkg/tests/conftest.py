"""Shared fixtures: the overfit smoke artifacts are trained once per session
and reused by every acceptance test that needs a converged model.

The heavy fixtures are session-scoped and lazy, so running a single module's
tests never triggers training.
"""

import time
from functools import lru_cache

import numpy as np
import pytest

from sketchparts.dataset import build_samples, generate_shape, pick_view
from sketchparts.model import desk_config
from sketchparts.nn import LrSchedule
from sketchparts.render import Camera
from sketchparts.trainer import TrainConfig, train_refiner, train_sketch2shape

N_SMOKE_SHAPES = 32
SMOKE_MAX_STEPS = 3000
# early-stop targets sit under the 0.05 acceptance bound with margin
SMOKE_STOP_FULL = 0.035
SMOKE_STOP_REFINE = 0.030

# Memorization runs in phases, each a warm start of the previous one:
# small-batch gradient noise is what breaks the early all-slots-identical
# plateau, so discovery runs at batch 4; the later full-batch phases descend
# at a rate proportional to lr but also oscillate around a floor proportional
# to lr, so the schedule steps down until the floor sits under the stop loss.
# Budgets are (batch_size, schedule, max_steps); a phase list stays within
# the 3000-step and wall-clock ceilings asserted by the acceptance gate.
SMOKE_PHASES = [
    (4, LrSchedule(1e-4, 2e-3, 40), 1200),
    (32, LrSchedule(1e-3, 6e-3, 30), 400),
    (32, LrSchedule(1e-3, 1e-3, 1), 250),
    (32, LrSchedule(4e-4, 4e-4, 1), 350),
]

# The refiner sees a fresh random mask every step, so conflicting targets for
# the masked slots set an oscillation floor that only comes down with lr;
# phase one travels, phase two settles.
REFINER_PHASES = [
    (32, LrSchedule(1e-4, 1.2e-2, 5), 1800),
    (32, LrSchedule(5e-4, 5e-4, 1), 1200),
]

# criterion pass/fail lines, printed by the terminal-summary hook below
_criterion_lines = []


def record_criterion(name: str, ok: bool) -> None:
    _criterion_lines.append(f"[{name}] {'PASS' if ok else 'FAIL'}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _criterion_lines:
        terminalreporter.write_line(line)


@lru_cache(maxsize=None)
def smoke_camera(index: int) -> Camera:
    # one viewpoint per shape, spread around the turntable so the 32
    # outlines stay visually distinguishable; a chair whose turntable slot
    # hides a part (armrests seen edge-on starve their latent rows of
    # gradient) walks forward in azimuth until every part clears the floor
    base = 2.0 * np.pi * index / N_SMOKE_SHAPES
    rec = generate_shape(index, "chair", m=8, d_model=32)
    ladder = [Camera(azimuth=base + k * np.pi / 8, elevation=0.35, distance=3.0)
              for k in range(8)]
    return pick_view(rec.parts, ladder, min_part_ink=250)


@pytest.fixture(scope="session")
def smoke_dataset():
    records, samples = [], []
    for seed in range(N_SMOKE_SHAPES):
        rec = generate_shape(seed, "chair", m=8, d_model=32)
        records.append(rec)
        built = build_samples(rec, views=[smoke_camera(seed)],
                              partial_fraction=0.0, seed=seed)
        samples.extend(s for s in built if s.style == "outline")
    assert len(samples) == N_SMOKE_SHAPES
    return {"records": records, "samples": samples}


@pytest.fixture(scope="session")
def smoke_run(smoke_dataset):
    model = None
    steps = 0
    result = None
    t0 = time.time()
    for batch_size, schedule, budget in SMOKE_PHASES:
        cfg = TrainConfig(
            epochs=10**6,  # step budget is the binding limit
            batch_size=batch_size,
            schedule=schedule,
            seed=0,
            model=desk_config(),
        )
        result = train_sketch2shape(cfg, samples=smoke_dataset["samples"],
                                    max_steps=budget,
                                    stop_loss_full=SMOKE_STOP_FULL,
                                    warm_start=model)
        model = result.model
        steps += result.steps
        if result.final_loss_full <= SMOKE_STOP_FULL:
            break
    wall = time.time() - t0
    return {"result": result, "steps": steps, "wall": wall,
            "samples": smoke_dataset["samples"],
            "records": smoke_dataset["records"]}


@pytest.fixture(scope="session")
def refiner_run(smoke_dataset):
    targets = [rec.part_set for rec in smoke_dataset["records"]]
    model = None
    steps = 0
    result = None
    t0 = time.time()
    for batch_size, schedule, budget in REFINER_PHASES:
        cfg = TrainConfig(
            epochs=10**6,
            batch_size=batch_size,
            schedule=schedule,
            seed=0,
            model=desk_config(),
        )
        result = train_refiner(cfg, targets, max_steps=budget,
                               stop_loss=SMOKE_STOP_REFINE,
                               warm_start=model)
        model = result.model
        steps += result.steps
        if result.final_loss_full <= SMOKE_STOP_REFINE:
            break
    wall = time.time() - t0
    return {"result": result, "steps": steps, "wall": wall, "targets": targets}
