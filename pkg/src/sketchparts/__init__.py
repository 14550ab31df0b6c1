"""Part-aware sketch-to-shape generation and editing on an analytic primitive backend."""

from .editing import Editor, EditResult, Session
from .errors import (
    BadSelectionError,
    EmptyShapeError,
    EmptySketchError,
    SessionNotFoundError,
)
from .estimators import LatentRefiner, SketchToShape
from .metrics import chamfer, emd, frechet_distance, retrieval_topk
from .model import (
    ModelConfig,
    Prediction,
    RefineMask,
    RefinerModel,
    SketchToPartsModel,
    desk_config,
    flag_completed,
    full_scale_config,
    loss_cls,
    loss_full,
    loss_part,
    loss_refine,
    sample_mask,
)
from .render import Camera, Sketch, normalize_sketch, render_outline, standard_views
from .service import create_app, serve
from .shapes import (
    LabeledMesh,
    PartPrimitive,
    PartSet,
    decode_part,
    decode_partset,
    encode_part,
    extract_mesh,
    sample_surface,
    sdf,
)
from .trainer import TrainConfig, evaluate_epoch, train_refiner, train_sketch2shape

__version__ = "0.1.0"

__all__ = [
    "BadSelectionError", "Camera", "EditResult", "Editor", "EmptyShapeError",
    "EmptySketchError", "LabeledMesh", "LatentRefiner", "ModelConfig",
    "PartPrimitive", "PartSet", "Prediction", "RefineMask", "RefinerModel",
    "Session", "SessionNotFoundError", "Sketch", "SketchToPartsModel",
    "SketchToShape", "TrainConfig", "chamfer", "create_app", "decode_part",
    "decode_partset", "desk_config", "emd", "encode_part", "evaluate_epoch",
    "extract_mesh", "flag_completed", "frechet_distance", "full_scale_config",
    "loss_cls", "loss_full", "loss_part", "loss_refine", "normalize_sketch",
    "render_outline", "retrieval_topk", "sample_mask", "sample_surface", "sdf",
    "serve", "standard_views", "train_refiner", "train_sketch2shape",
]
