"""Scribble-driven interactive editing of sparse volumetric segmentations.

Core layers: grid primitives (`grids`), sweep geometry (`geometry`),
synthetic cases (`phantom`), edit synthesis and encoding (`interaction`),
losses (`losses`), editing engines and training (`engines`, `cnn`), the
editing metric (`metrics`), the experiment harness (`harness`), and the
interactive HTTP service (`service`).
"""

from .grids import (
    BinaryMask,
    GridMeta,
    ScalarField,
    VoxelSet,
    complement_map,
    make_gaussian_map,
    manhattan_distance_transform,
    percentile,
    signed_distance,
    threshold_map,
)
from .geometry import (
    FramePose,
    FrameStack,
    extract_plane_contour,
    project_pixel_to_voxel,
    rasterize_frame_plane,
    synthesize_sweep,
    unproject_voxel_to_pixel,
)
from .phantom import (
    CaseBundle,
    PhantomParams,
    extract_cas_contours,
    generate_initial_seg,
    generate_phantom,
    load_case,
    make_case,
    save_case,
)
from .interaction import (
    EditRecord,
    Scribble,
    encode_edit,
    scribble_from_pixels,
    select_test_edit,
    synthesize_training_edit,
)
from .losses import LossValue, ce_loss, dice_loss, editing_loss
from .engines import (
    CnnEditor,
    EngineInput,
    GeometricEditor,
    TrainConfig,
    apply_engine,
    geometric_blend_edit,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .metrics import MetricReport, d_edit, d_preserve, evaluate, no_edit_baseline
from .harness import (
    ExperimentConfig,
    make_corpus,
    run_sequential_experiment,
    run_single_edit_experiment,
    train_engine,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "GridMeta", "ScalarField", "VoxelSet",
    "complement_map", "make_gaussian_map", "manhattan_distance_transform",
    "percentile", "signed_distance", "threshold_map",
    "FramePose", "FrameStack", "extract_plane_contour",
    "project_pixel_to_voxel", "rasterize_frame_plane", "synthesize_sweep",
    "unproject_voxel_to_pixel",
    "CaseBundle", "PhantomParams", "extract_cas_contours",
    "generate_initial_seg", "generate_phantom", "load_case", "make_case",
    "save_case",
    "EditRecord", "Scribble", "encode_edit", "scribble_from_pixels",
    "select_test_edit", "synthesize_training_edit",
    "LossValue", "ce_loss", "dice_loss", "editing_loss",
    "CnnEditor", "EngineInput", "GeometricEditor", "TrainConfig",
    "apply_engine", "geometric_blend_edit", "load_checkpoint",
    "save_checkpoint", "train",
    "MetricReport", "d_edit", "d_preserve", "evaluate", "no_edit_baseline",
    "ExperimentConfig", "make_corpus", "run_sequential_experiment",
    "run_single_edit_experiment", "train_engine",
]
