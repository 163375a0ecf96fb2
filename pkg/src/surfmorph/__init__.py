"""Deformable 3D surface models over a fixed template mesh.

A hypernetwork maps a latent code to the weights of a small sine-activated
MLP that displaces template surface points; training, landmark fitting,
point-handle editing and semantic latent directions are built on top of
that representation.
"""

from .mesh import (
    SurfacePoint,
    TriMesh,
    load_obj,
    resolve,
    resolve_many,
    sample_uniform,
    save_obj,
    subdivide,
    vertex_samples,
)
from .model import (
    HyperDecoder,
    build_hyperdecoder,
    decode,
    decode_mesh,
    generate_params,
    grads_through,
    sample_latent,
)
from .training import (
    TrainConfig,
    TrainExample,
    build_dataset_samples,
    build_sample_set,
    build_vertex_sample_set,
    fit_latent,
    train,
)
from .fitting import (
    HandleConstraint,
    LandmarkSpec,
    Pose,
    edit_point_handles,
    estimate_pose,
    reconstruct_from_landmarks,
)
from .semantics import (
    SemanticDirection,
    apply_semantic,
    pca_complexity,
    train_direction,
)
from .datagen import SynthSpec, make_dataset, make_template
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "SurfacePoint", "TriMesh", "load_obj", "resolve", "resolve_many",
    "sample_uniform", "save_obj", "subdivide", "vertex_samples",
    "HyperDecoder", "build_hyperdecoder", "decode", "decode_mesh",
    "generate_params", "grads_through", "sample_latent",
    "TrainConfig", "TrainExample", "build_dataset_samples",
    "build_sample_set", "build_vertex_sample_set", "fit_latent", "train",
    "HandleConstraint", "LandmarkSpec", "Pose", "edit_point_handles",
    "estimate_pose", "reconstruct_from_landmarks",
    "SemanticDirection", "apply_semantic", "pca_complexity", "train_direction",
    "SynthSpec", "make_dataset", "make_template",
    "load_checkpoint", "save_checkpoint",
    "__version__",
]
