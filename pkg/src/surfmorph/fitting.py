"""Latent-space applications: landmark-based reconstruction and point-handle
editing.

Landmark reconstruction alternates a closed-form scaled-orthographic pose
estimate with Adam optimization of the latent code against the reprojection
loss. Point-handle editing optimizes the latent code so chosen surface
vertices move to displaced targets while an L1 term keeps the code near the
original shape.

2D landmark coordinates follow the y-down pixel convention; the math is
convention-agnostic, the convention only fixes how inputs are produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, PoseEstimationError
from .model import BatchEval, HyperDecoder, decode_positions
from .netcore import AdamState, adam_step

REL_CHANGE_TOL = 1e-10
OUTER_ITERATIONS = 4
SHAPE_STEP_CAP = 2000
DEFAULT_LAMBDA_REG = 1.0e6
DEFAULT_LAMBDA_CON = 3.0e3
DEFAULT_LAMBDA_PRE = 1.0e5


@dataclass
class Pose:
    """Scaled-orthographic camera: x -> scale * (R x)_xy + translation."""

    scale: float
    rotation: np.ndarray  # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (2,)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.scale <= 0:
            raise PoseEstimationError(f"scale must be positive, got {self.scale}")
        if np.abs(self.rotation @ self.rotation.T - np.eye(3)).max() > 1e-9:
            raise PoseEstimationError("rotation is not orthonormal")

    def project(self, points: np.ndarray) -> np.ndarray:
        """(N, 3) model-space points to (N, 2) image points."""
        rotated = np.asarray(points) @ self.rotation.T
        return self.scale * rotated[:, :2] + self.translation

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "image_convention": "y-down",
        }


@dataclass
class LandmarkSpec:
    """2D landmark targets paired with template vertex indices."""

    vertex_indices: np.ndarray  # (B,)
    targets_2d: np.ndarray  # (B, 2)

    def __post_init__(self):
        self.vertex_indices = np.asarray(self.vertex_indices, dtype=np.int64)
        self.targets_2d = np.asarray(self.targets_2d, dtype=np.float64)
        if len(self.vertex_indices) != len(self.targets_2d):
            raise DataError("one 2D target per landmark vertex is required")
        if len(self.vertex_indices) < 4:
            raise DataError("at least 4 landmarks are required for pose recovery")

    def __len__(self) -> int:
        return len(self.vertex_indices)

    @classmethod
    def from_json(cls, path) -> "LandmarkSpec":
        with open(path, "r", encoding="utf-8") as fh:
            rows = json.load(fh)
        try:
            idx = [int(r["vertex"]) for r in rows]
            xy = [[float(r["x"]), float(r["y"])] for r in rows]
        except (KeyError, TypeError) as exc:
            raise DataError(f"landmark rows need vertex/x/y fields: {exc}") from exc
        return cls(np.array(idx), np.array(xy))

    def to_json(self, path) -> None:
        rows = [
            {"vertex": int(v), "x": float(x), "y": float(y)}
            for v, (x, y) in zip(self.vertex_indices, self.targets_2d)
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")


@dataclass
class HandleConstraint:
    """One edit handle: a template vertex index and its 3D displacement."""

    vertex: int
    delta: np.ndarray  # (3,)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.delta.shape != (3,):
            raise DataError("handle displacement must be a 3-vector")
        if not np.isfinite(self.delta).all():
            raise DataError("handle displacement must be finite")


def load_handles(path) -> list[HandleConstraint]:
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    try:
        return [
            HandleConstraint(int(r["vertex"]),
                             np.array([r["dx"], r["dy"], r["dz"]], dtype=np.float64))
            for r in rows
        ]
    except (KeyError, TypeError) as exc:
        raise DataError(f"handle rows need vertex/dx/dy/dz fields: {exc}") from exc


def save_handles(handles, path) -> None:
    rows = [
        {"vertex": int(h.vertex), "dx": float(h.delta[0]),
         "dy": float(h.delta[1]), "dz": float(h.delta[2])}
        for h in handles
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pose estimation


def estimate_pose(points3d: np.ndarray, targets2d: np.ndarray) -> Pose:
    """Least-squares scaled-orthographic pose from 3D/2D correspondences.

    Both point sets are centered, the 2x3 projection is solved by least
    squares and factored onto the nearest scaled rotation rows via SVD; the
    third rotation row completes a right-handed frame and the translation
    comes from the centroids. Raises for fewer than 4 points or a
    rank-deficient (collinear) 3D configuration.
    """
    x = np.asarray(points3d, dtype=np.float64)
    b = np.asarray(targets2d, dtype=np.float64)
    if len(x) != len(b):
        raise PoseEstimationError("point counts differ")
    if len(x) < 4:
        raise PoseEstimationError("at least 4 correspondences are required")
    x_mean, b_mean = x.mean(axis=0), b.mean(axis=0)
    xc, bc = x - x_mean, b - b_mean

    sv = np.linalg.svd(xc, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise PoseEstimationError("3D points are collinear; pose is ambiguous")

    a_t, *_ = np.linalg.lstsq(xc, bc, rcond=None)  # (3, 2)
    u, s, vt = np.linalg.svd(a_t.T, full_matrices=False)
    r12 = u @ vt  # (2, 3), orthonormal rows
    scale = float(s.mean())
    if scale <= 1e-300:
        raise PoseEstimationError("degenerate zero-scale projection")
    r3 = np.cross(r12[0], r12[1])
    rotation = np.vstack([r12, r3])
    translation = b_mean - scale * (rotation @ x_mean)[:2]
    return Pose(scale, rotation, translation)


# ---------------------------------------------------------------------------
# landmark reconstruction


@dataclass
class StageInfo:
    steps: int
    final_loss: float
    stop_rule_fired: bool


@dataclass
class ReconstructionResult:
    z: np.ndarray
    pose: Pose
    stages: list[StageInfo] = field(default_factory=list)
    reprojection_rmse: float = np.nan

    @property
    def warning(self) -> bool:
        """Set when any shape stage hit the step cap without converging."""
        return any(not s.stop_rule_fired for s in self.stages)


def _landmark_loss_grad(model, z, positions, pose: Pose, targets, lambda_reg):
    """L_rec value and its z-gradient for a fixed pose."""
    m = len(z)
    count = len(targets)
    ev = BatchEval(model, z[None], positions[None])
    decoded = ev.predictions()[0]
    resid = pose.project(decoded) - targets  # (B, 2)
    value = float(np.mean(np.sum(resid**2, axis=1))
                  + lambda_reg / m * np.sum(z**2))
    d_decoded = (2.0 * pose.scale / count) * resid @ pose.rotation[:2]
    _, z_grads = ev.backward(d_decoded[None], with_param_grads=False)
    z_grad = z_grads[0] + 2.0 * lambda_reg / m * z
    return value, z_grad, decoded


def reconstruct_from_landmarks(model: HyperDecoder, spec: LandmarkSpec,
                               lambda_reg: float = DEFAULT_LAMBDA_REG,
                               lr: float = 1e-4, beta1: float = 0.9,
                               beta2: float = 0.999,
                               outer_iterations: int = OUTER_ITERATIONS,
                               step_cap: int = SHAPE_STEP_CAP,
                               rng: np.random.Generator | None = None
                               ) -> ReconstructionResult:
    """Recover (latent code, pose) from 2D landmarks.

    Alternates ``outer_iterations`` times between closed-form pose estimation
    on the currently decoded landmark vertices and Adam shape optimization of
    the latent code; each shape stage stops once the relative loss decrease
    falls below 1e-10 or at the step cap (which raises the result's warning
    flag).
    """
    if spec.vertex_indices.min() < 0 or spec.vertex_indices.max() >= model.template.n_vertices:
        raise DataError("landmark vertex index out of range")
    rng = rng or np.random.default_rng(0)
    positions = model.template.vertices[spec.vertex_indices]
    targets = spec.targets_2d
    z = rng.normal(0.0, 0.01, size=model.latent_dim)

    pose = None
    stages = []
    # the relative-change rule is evaluated on the running-best loss so a
    # single non-monotone optimizer step cannot end a stage prematurely
    plateau_patience = 50
    for _ in range(outer_iterations):
        decoded = decode_positions(model, z, positions)
        pose = estimate_pose(decoded, targets)

        adam = AdamState.for_params([z], lr=lr, beta1=beta1, beta2=beta2)
        best_loss = np.inf
        best_z = z.copy()
        since_improve = 0
        fired = False
        steps = 0
        value = np.nan
        for steps in range(1, step_cap + 1):
            value, z_grad, _ = _landmark_loss_grad(
                model, z, positions, pose, targets, lambda_reg
            )
            improved = value < best_loss - REL_CHANGE_TOL * max(abs(best_loss), 1e-300)
            if value < best_loss:
                best_loss, best_z = value, z.copy()
            since_improve = 0 if improved else since_improve + 1
            if since_improve >= plateau_patience:
                fired = True
                break
            adam_step(adam, [z], [z_grad])
        z = best_z
        stages.append(StageInfo(steps=steps, final_loss=best_loss,
                                stop_rule_fired=fired))

    decoded = decode_positions(model, z, positions)
    rmse = float(np.sqrt(np.mean(np.sum((pose.project(decoded) - targets) ** 2, axis=1))))
    return ReconstructionResult(z=z, pose=pose, stages=stages, reprojection_rmse=rmse)


# ---------------------------------------------------------------------------
# point-handle editing


@dataclass
class EditResult:
    z: np.ndarray
    residual_before: np.ndarray  # (H,) distances at z0
    residual_after: np.ndarray  # (H,) distances at the edited z
    steps: int
    converged: bool


def edit_point_handles(model: HyperDecoder, z0, handles,
                       lambda_con: float = DEFAULT_LAMBDA_CON,
                       lambda_pre: float = DEFAULT_LAMBDA_PRE,
                       lr: float = 1e-4, steps: int = 500,
                       plateau_patience: int = 25) -> EditResult:
    """Solve for a latent code moving handle vertices to displaced targets.

    Targets are the handle vertices decoded at z0 plus each handle's
    displacement. The constraint term is weighted by lambda_con and the L1
    preservation term on (z0 - z) by lambda_pre; the L1 subgradient at zero
    is zero, so a zero-displacement edit returns z0 unchanged.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if not handles:
        empty = np.zeros(0)
        return EditResult(z=z0.copy(), residual_before=empty,
                          residual_after=empty, steps=0, converged=True)
    idx = np.array([h.vertex for h in handles], dtype=np.int64)
    if idx.min() < 0 or idx.max() >= model.template.n_vertices:
        raise DataError("handle vertex index out of range")
    deltas = np.stack([h.delta for h in handles])
    positions = model.template.vertices[idx]
    base = decode_positions(model, z0, positions)
    targets = base + deltas
    count = len(handles)
    m = len(z0)

    z = z0.copy()
    adam = AdamState.for_params([z], lr=lr)
    best_loss = np.inf
    best_z = z.copy()
    since_improve = 0
    converged = False
    taken = 0
    for taken in range(1, steps + 1):
        ev = BatchEval(model, z[None], positions[None])
        decoded = ev.predictions()[0]
        resid = decoded - targets
        value = float(lambda_con / count * np.sum(resid**2)
                      + lambda_pre / m * np.sum(np.abs(z0 - z)))
        d_decoded = (2.0 * lambda_con / count) * resid
        _, z_grads = ev.backward(d_decoded[None], with_param_grads=False)
        z_grad = z_grads[0] + lambda_pre / m * np.sign(z - z0)
        improved = value < best_loss - REL_CHANGE_TOL * max(abs(best_loss), 1e-300)
        if value < best_loss:
            best_loss, best_z = value, z.copy()
        since_improve = 0 if improved else since_improve + 1
        if since_improve >= plateau_patience:
            converged = True
            break
        adam_step(adam, [z], [z_grad])

    final = decode_positions(model, best_z, positions)
    return EditResult(
        z=best_z,
        residual_before=np.linalg.norm(deltas, axis=1),
        residual_after=np.linalg.norm(final - targets, axis=1),
        steps=taken,
        converged=converged,
    )
