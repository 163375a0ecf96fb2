"""Semantic latent directions and dataset-complexity analysis.

A labeled attribute over the training shapes induces a direction in latent
space: the normal of a linear SVM hyperplane separating the two label
classes. Adding a scaled direction to a latent code edits the corresponding
attribute. PCA complexity measures how many principal components a vertex
dataset needs to explain a variance fraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

LOW_CONFIDENCE_ACCURACY = 0.7


@dataclass
class SemanticDirection:
    """A unit latent direction for one labeled attribute."""

    label: str
    n: np.ndarray  # unit normal, shape (M,)
    bias: float
    train_accuracy: float

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        norm = np.linalg.norm(self.n)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction normal must be unit length, got {norm}")

    @property
    def low_confidence(self) -> bool:
        return self.train_accuracy < LOW_CONFIDENCE_ACCURACY

    def decision_value(self, z) -> float:
        return float(self.n @ np.asarray(z) + self.bias)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n.tolist(),
            "bias": self.bias,
            "train_accuracy": self.train_accuracy,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SemanticDirection":
        return cls(
            label=data["label"],
            n=np.asarray(data["n"], dtype=np.float64),
            bias=float(data["bias"]),
            train_accuracy=float(data["train_accuracy"]),
        )


def save_directions(directions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([d.to_dict() for d in directions], fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_directions(path) -> list[SemanticDirection]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [SemanticDirection.from_dict(d) for d in data]


@dataclass
class SvmConfig:
    c: float = 1.0
    steps: int = 10_000
    lr: float = 1e-3  # decayed as lr / sqrt(t)


def train_direction(latents, labels, label_name: str = "",
                    cfg: SvmConfig | None = None) -> SemanticDirection:
    """Fit a soft-margin linear SVM and return its normalized hyperplane.

    latents is (n, M) and labels a +-1 vector with both classes present.
    The primal objective 0.5*||w||^2 + C * mean(hinge) is minimized by
    full-batch subgradient descent with a fixed 1/sqrt(t) schedule, so the
    result is reproducible and independent of sample order.
    """
    cfg = cfg or SvmConfig()
    x = np.asarray(latents, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise DataError("latents must be (n, M) with one label per row")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DataError("both label classes must be present")

    n, m = x.shape
    w = np.zeros(m)
    b = 0.0
    for t in range(1, cfg.steps + 1):
        margin = y * (x @ w + b)
        active = margin < 1.0
        gw = w - cfg.c / n * (y[active] @ x[active])
        gb = -cfg.c / n * y[active].sum()
        step = cfg.lr / np.sqrt(t)
        w -= step * gw
        b -= step * gb

    norm = np.linalg.norm(w)
    if norm < 1e-12:
        raise DataError("SVM collapsed to a zero weight vector")
    accuracy = float(np.mean(np.sign(x @ w + b) == np.sign(y)))
    return SemanticDirection(label=label_name, n=w / norm, bias=b / norm,
                             train_accuracy=accuracy)


def apply_semantic(z, direction: SemanticDirection, alpha: float) -> np.ndarray:
    """Edit a latent code along a direction: z + alpha * n.

    Positive alpha moves toward the positive label class; the map is exactly
    additive in alpha.
    """
    return np.asarray(z, dtype=np.float64) + alpha * direction.n


def pca_complexity(vertex_matrices, threshold: float = 0.99) -> int:
    """Number of principal components explaining a variance fraction.

    Each entry of ``vertex_matrices`` is one example's (V, 3) vertex array;
    rows are flattened, centered, and decomposed by SVD. Returns the
    smallest k with sum of the top-k squared singular values >= threshold of
    the total; a dataset of identical examples has complexity 0.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError("threshold must be in (0, 1]")
    mats = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vertex_matrices]
    if len(mats) < 2:
        raise DataError("need at least two examples")
    if len({m.shape for m in mats}) != 1:
        raise DataError("examples must have consistent vertex counts")
    data = np.stack(mats)
    raw_power = float((data**2).sum())
    data = data - data.mean(axis=0)
    sv = np.linalg.svd(data, compute_uv=False)
    power = sv**2
    total = power.sum()
    # identical examples leave only centering round-off; call that zero variance
    if total <= 1e-24 * max(raw_power, 1e-300):
        return 0
    ratio = np.cumsum(power) / total
    return int(np.searchsorted(ratio, threshold - 1e-12) + 1)
