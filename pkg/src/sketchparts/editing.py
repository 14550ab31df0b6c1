"""Session-level shape editing: generate from a sketch, select parts, refine
selected slots, blend a new sketch into the selection, re-render outlines,
undo. Unselected latent rows are never touched by refine or blend."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSelectionError, EmptyShapeError, SessionNotFoundError
from .model import RefineMask, flag_completed
from .render import Camera, Sketch, extract_outline, normalize_sketch, render_depth
from .shapes import LabeledMesh, PartSet, decode_partset, extract_mesh

DEFAULT_CAMERA = Camera(azimuth=0.6, elevation=0.35, distance=3.0)
HISTORY_CAP = 32
INCLUDE_THRESHOLD = 0.5
COMPLETED_THRESHOLD = 0.01


@dataclass
class Session:
    id: str
    current: PartSet
    camera: Camera = DEFAULT_CAMERA
    selected: set = field(default_factory=set)
    history: list = field(default_factory=list)  # (op name, PartSet snapshot)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass
class EditResult:
    mesh: LabeledMesh
    presence: list  # m floats
    completed: list  # m bools, strict < threshold rule
    empty: bool  # true when no slot clears the inclusion threshold


class Editor:
    """Owns the two networks and every live session."""

    def __init__(self, model, refiner, grid_res: int = 48,
                 include_threshold: float = INCLUDE_THRESHOLD,
                 completed_threshold: float = COMPLETED_THRESHOLD):
        self.model = model
        self.refiner = refiner
        self.grid_res = grid_res
        self.include_threshold = include_threshold
        self.completed_threshold = completed_threshold
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # -- session registry ------------------------------------------------------

    def create_session(self, camera: Camera | None = None) -> Session:
        cfg = self.model.cfg
        blank = PartSet(m=cfg.m, d_model=cfg.d_model,
                        z=[[0.0] * cfg.d_model for _ in range(cfg.m)],
                        c=[0.0] * cfg.m)
        session = Session(id=uuid.uuid4().hex, current=blank,
                          camera=camera or DEFAULT_CAMERA)
        session.history.append(("init", blank.copy()))
        with self._registry_lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            if session_id not in self.sessions:
                raise SessionNotFoundError(f"no session {session_id!r}")
            return self.sessions[session_id]

    def drop(self, session_id: str) -> None:
        with self._registry_lock:
            if session_id not in self.sessions:
                raise SessionNotFoundError(f"no session {session_id!r}")
            del self.sessions[session_id]

    # -- editing operations ------------------------------------------------------

    def _mesh_of(self, ps: PartSet) -> tuple[LabeledMesh, bool]:
        parts, slots = decode_partset(ps, threshold=self.include_threshold)
        if not parts:
            return LabeledMesh.empty(), True
        mesh = extract_mesh(parts, grid_res=self.grid_res)
        # responsibility labels index into the decoded subset; map back to slots
        remapped = np.array([slots[i] for i in mesh.face_part], dtype=int) \
            if len(mesh.face_part) else mesh.face_part
        return LabeledMesh(mesh.vertices, mesh.faces, remapped), False

    def _result(self, session: Session) -> EditResult:
        mesh, empty = self._mesh_of(session.current)
        c = np.array(session.current.c)
        completed = flag_completed(c, self.completed_threshold)
        return EditResult(mesh=mesh, presence=c.tolist(),
                          completed=completed.tolist(), empty=empty)

    def _snapshot(self, session: Session, op: str) -> None:
        session.history.append((op, session.current.copy()))
        if len(session.history) > HISTORY_CAP:
            del session.history[0]

    def generate(self, session: Session, sketch_pixels: np.ndarray) -> EditResult:
        with session.lock:
            sketch = normalize_sketch(np.asarray(sketch_pixels, dtype=np.float64))
            pred = self.model.predict(sketch.pixels)
            session.current = PartSet(m=self.model.cfg.m, d_model=self.model.cfg.d_model,
                                      z=pred.z.tolist(), c=pred.c.tolist())
            self._snapshot(session, "generate")
            return self._result(session)

    def select_parts(self, session: Session, ids) -> set:
        with session.lock:
            ids = set(int(i) for i in ids)
            m = session.current.m
            bad = [i for i in ids if not 0 <= i < m]
            if bad:
                raise BadSelectionError(f"part ids out of range [0, {m}): {sorted(bad)}")
            session.selected = ids
            return set(ids)

    def refine_selected(self, session: Session) -> EditResult:
        with session.lock:
            if not session.selected:
                raise BadSelectionError("nothing selected to refine")
            m, d = session.current.m, session.current.d_model
            bits = tuple(1 if i in session.selected else 0 for i in range(m))
            mask = RefineMask(bits)
            z = np.array(session.current.z, dtype=np.float64)
            z_in = z.copy()
            sel = np.array(bits, dtype=bool)
            z_in[sel] = 0.0
            out = self.refiner.refine(z_in, mask).data
            z[sel] = out[sel]
            c = list(session.current.c)
            for i in session.selected:
                c[i] = 1.0 - 1e-7  # refined slots counted present
            session.current = PartSet(m=m, d_model=d, z=z.tolist(), c=c)
            self._snapshot(session, "refine")
            return self._result(session)

    def blend(self, session: Session, sketch_pixels: np.ndarray) -> EditResult:
        with session.lock:
            if not session.selected:
                raise BadSelectionError("nothing selected to blend into")
            sketch = normalize_sketch(np.asarray(sketch_pixels, dtype=np.float64))
            pred = self.model.predict(sketch.pixels)
            m, d = session.current.m, session.current.d_model
            z = [list(row) for row in session.current.z]
            c = list(session.current.c)
            for i in session.selected:
                z[i] = pred.z[i].tolist()
                c[i] = float(pred.c[i])
            session.current = PartSet(m=m, d_model=d, z=z, c=c)
            self._snapshot(session, "blend")
            return self._result(session)

    def outline_current(self, session: Session, camera: Camera | None = None) -> Sketch:
        with session.lock:
            cam = camera or session.camera
            parts, _ = decode_partset(session.current, threshold=self.include_threshold)
            if not parts:
                raise EmptyShapeError("current shape has no present parts")
            depth = render_depth(parts, cam)
            return normalize_sketch(extract_outline(depth).pixels)

    def undo(self, session: Session) -> EditResult:
        with session.lock:
            if len(session.history) < 2:
                raise ValueError("nothing to undo")
            session.history.pop()
            session.current = session.history[-1][1].copy()
            return self._result(session)
