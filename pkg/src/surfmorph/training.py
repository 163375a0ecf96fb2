"""Auto-decoder training and latent-only fitting.

The decoder's parameters and one latent code per training example are
optimized jointly with Adam on

    L = (lambda_mse / N) * sum_i ||p_i - S(p_hat_i, H(z_k)) - p_hat_i||^2
        + (lambda_reg / M) * ||z_k||^2

averaged over the examples in a batch. Point pairs (p_hat, p) are sampled
statically before training: template vertices plus uniform surface samples,
resolved on the template and on each example through the shared face list.

Unseen shapes are represented by optimizing a fresh latent code against the
same loss restricted to vertex pairs, with the decoder frozen.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .mesh import SurfacePoint, TriMesh, resolve_many, sample_uniform, vertex_samples
from .model import HyperDecoder, build_hyperdecoder
from .netcore import AdamState, adam_step

DIVERGENCE_LIMIT = 1e12
REL_CHANGE_TOL = 1e-10


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are the reference recipe."""

    lambda_mse: float = 3.0e3
    lambda_reg: float = 1.0e6
    latent_dim: int = 128  # M
    n_samples: int = 23_132  # N, template vertices + uniform surface samples
    batch_size: int = 128
    lr: float = 1.0e-4
    beta1: float = 0.9
    beta2: float = 0.999
    latent_init_std: float = 0.01
    adam_eps: float = 1e-8
    max_epochs: int = 2000
    early_stop_patience: int = 5  # validation rounds without improvement
    seed: int = 0
    # architecture
    siren_hidden: int = 128
    hyper_hidden: int = 256
    omega0: float = 30.0
    # validation / fitting protocol
    val_every: int = 100
    val_fit_steps: int = 200
    fit_steps: int = 500
    stop_train_rmse: float | None = None  # optional convergence exit

    def __post_init__(self):
        numeric = [
            self.lambda_mse, self.lambda_reg, self.latent_dim, self.n_samples,
            self.batch_size, self.lr, self.beta1, self.beta2,
            self.latent_init_std, self.max_epochs, self.early_stop_patience,
            self.siren_hidden, self.hyper_hidden, self.omega0,
            self.val_every, self.val_fit_steps, self.fit_steps,
        ]
        if any(x <= 0 for x in numeric):
            raise ConfigError("all training config values must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainExample:
    """Static sample set for one example: N template/target point pairs."""

    example_id: str
    points: list[SurfacePoint]
    template_pos: np.ndarray  # (N, 3)
    target_pos: np.ndarray  # (N, 3)

    def __len__(self) -> int:
        return len(self.points)


def build_sample_set(example: TriMesh, template: TriMesh, cfg: TrainConfig,
                     rng: np.random.Generator | None = None,
                     example_id: str = "") -> TrainExample:
    """Sample N point pairs for one example: all template vertices, then
    uniform surface samples to reach cfg.n_samples."""
    if not template.same_connectivity(example):
        raise DataError(f"example {example_id!r} does not share template connectivity")
    points = vertex_samples(template)
    if cfg.n_samples < len(points):
        raise ConfigError(
            f"n_samples={cfg.n_samples} is smaller than the vertex count "
            f"{len(points)}"
        )
    extra = cfg.n_samples - len(points)
    if extra:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        points = points + sample_uniform(template, extra, rng)
    return TrainExample(
        example_id=example_id,
        points=points,
        template_pos=resolve_many(template, points),
        target_pos=resolve_many(example, points),
    )


def build_vertex_sample_set(example: TriMesh, template: TriMesh,
                            example_id: str = "") -> TrainExample:
    """Vertex-pairs-only sample set, used for latent fitting and validation."""
    if not template.same_connectivity(example):
        raise DataError(f"example {example_id!r} does not share template connectivity")
    points = vertex_samples(template)
    return TrainExample(
        example_id=example_id,
        points=points,
        template_pos=resolve_many(template, points),
        target_pos=resolve_many(example, points),
    )


def build_dataset_samples(template: TriMesh, examples: Sequence[TriMesh],
                          cfg: TrainConfig) -> list[TrainExample]:
    """Static per-example sample sets with per-example derived seeds."""
    out = []
    for i, ex in enumerate(examples):
        rng = np.random.default_rng([cfg.seed, i])
        out.append(build_sample_set(ex, template, cfg, rng, example_id=str(i)))
    return out


# ---------------------------------------------------------------------------
# metrics


def point_rmse(pred: np.ndarray, target: np.ndarray) -> float:
    """Root-mean-square euclidean distance between corresponding points."""
    return float(np.sqrt(np.mean(np.sum((pred - target) ** 2, axis=-1))))


def mean_vertex_error(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean l2 distance between corresponding vertices."""
    return float(np.mean(np.linalg.norm(pred - target, axis=-1)))


def dataset_bbox_diagonal(meshes: Sequence[TriMesh]) -> float:
    lo = np.min([m.vertices.min(axis=0) for m in meshes], axis=0)
    hi = np.max([m.vertices.max(axis=0) for m in meshes], axis=0)
    return float(np.linalg.norm(hi - lo))


# ---------------------------------------------------------------------------
# loss


def loss(z_batch: np.ndarray, batch: Sequence[TrainExample], model,
         cfg: TrainConfig, with_param_grads: bool = True):
    """Batch loss and exact gradients.

    Returns (value, hyper_grads, z_grads, data_mse) where value is the mean
    of per-example losses, z_grads is (K, M) and data_mse the mean squared
    point residual (useful as a convergence readout).
    """
    k = len(batch)
    if z_batch.shape[0] != k:
        raise ValueError("one latent per example is required")
    template_pos = np.stack([ex.template_pos for ex in batch])
    target_pos = np.stack([ex.target_pos for ex in batch])
    n = template_pos.shape[1]

    pred, cache = model.predict_batch(z_batch, template_pos)
    resid = pred - target_pos
    sq = np.sum(resid**2, axis=(1, 2))  # per-example sum of squared distances
    m = z_batch.shape[1]
    per_example = cfg.lambda_mse / n * sq + cfg.lambda_reg / m * np.sum(
        z_batch**2, axis=1
    )
    value = float(per_example.mean())
    if not np.isfinite(value):
        ids = [ex.example_id for ex in batch]
        raise NumericalError(f"non-finite loss on examples {ids}")

    d_pred = (2.0 * cfg.lambda_mse / (n * k)) * resid
    hyper_grads, z_grads = model.predict_grads(
        cache, d_pred, with_param_grads=with_param_grads
    )
    z_grads = z_grads + (2.0 * cfg.lambda_reg / (m * k)) * z_batch
    data_mse = float(np.mean(sq) / n)
    return value, hyper_grads, z_grads, data_mse


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: HyperDecoder
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_error: float | None = None
    stopped_early: bool = False
    diverged: bool = False

    def history_csv_rows(self):
        """(epoch, train_loss, val_error) rows; val_error blank when unset."""
        for row in self.history:
            val = row.get("val_error")
            yield (row["epoch"], row["train_loss"], "" if val is None else val)


def _snapshot(decoder) -> list[np.ndarray]:
    return [a.copy() for a in decoder.param_arrays()] + [decoder.latent_table.copy()]


def _restore(decoder, snap) -> None:
    for a, saved in zip(decoder.param_arrays(), snap[:-1]):
        a[:] = saved
    decoder.latent_table[:] = snap[-1]


def train(template: TriMesh, train_samples: Sequence[TrainExample],
          cfg: TrainConfig, val_meshes: Sequence[TriMesh] | None = None,
          decoder=None) -> TrainResult:
    """Jointly optimize the decoder and one latent code per example.

    Latent codes start at N(0, latent_init_std^2). One epoch is a pass over
    all examples in shuffled batches of min(batch_size, n_examples). When a
    validation set is given, held-out shapes are fitted by latent-only
    optimization every ``val_every`` epochs and the best-validation
    checkpoint is returned; otherwise the final state is returned.
    """
    if not train_samples:
        raise DataError("training set is empty")
    sizes = {len(ex) for ex in train_samples}
    if len(sizes) != 1:
        raise DataError("all sample sets must have the same size")

    rng = np.random.default_rng(cfg.seed)
    if decoder is None:
        decoder = build_hyperdecoder(
            template, len(train_samples), rng,
            latent_dim=cfg.latent_dim, siren_hidden=cfg.siren_hidden,
            hyper_hidden=cfg.hyper_hidden, omega0=cfg.omega0,
            latent_init_std=cfg.latent_init_std,
        )
    if len(decoder.latent_table) != len(train_samples):
        raise DataError("decoder latent table does not match the training set")

    params = decoder.param_arrays() + [decoder.latent_table]
    adam = AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1,
                                beta2=cfg.beta2, eps=cfg.adam_eps)
    result = TrainResult(model=decoder)
    k_total = len(train_samples)
    batch_size = min(cfg.batch_size, k_total)

    best_snap = None
    patience_left = cfg.early_stop_patience
    last_good = _snapshot(decoder)

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(k_total)
        epoch_loss = 0.0
        epoch_mse = 0.0
        n_batches = 0
        for start in range(0, k_total, batch_size):
            idx = perm[start:start + batch_size]
            batch = [train_samples[i] for i in idx]
            z_batch = decoder.latent_table[idx]
            value, hyper_grads, z_grads, data_mse = loss(z_batch, batch, decoder, cfg)
            table_grad = np.zeros_like(decoder.latent_table)
            table_grad[idx] = z_grads
            adam_step(adam, params, hyper_grads + [table_grad])
            epoch_loss += value
            epoch_mse += data_mse
            n_batches += 1
        row = {
            "epoch": epoch,
            "train_loss": epoch_loss / n_batches,
            "train_rmse": float(np.sqrt(epoch_mse / n_batches)),
        }

        if row["train_loss"] > DIVERGENCE_LIMIT:
            result.diverged = True
            _restore(decoder, best_snap if best_snap is not None else last_good)
            result.history.append(row)
            break

        if val_meshes and epoch % cfg.val_every == 0:
            val_error = validation_error(decoder, template, val_meshes, cfg)
            row["val_error"] = val_error
            if result.best_val_error is None or val_error < result.best_val_error:
                result.best_val_error = val_error
                result.best_epoch = epoch
                best_snap = _snapshot(decoder)
                patience_left = cfg.early_stop_patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    result.history.append(row)
                    result.stopped_early = True
                    break
        result.history.append(row)
        if epoch % cfg.val_every == 0:
            last_good = _snapshot(decoder)
        if cfg.stop_train_rmse is not None and row["train_rmse"] < cfg.stop_train_rmse:
            break

    if best_snap is not None and not result.diverged:
        _restore(decoder, best_snap)
    return result


def validation_error(decoder, template: TriMesh, val_meshes: Sequence[TriMesh],
                     cfg: TrainConfig) -> float:
    """Mean vertex l2 error after a fixed-step latent fit per held-out shape."""
    errors = []
    for i, mesh in enumerate(val_meshes):
        target = build_vertex_sample_set(mesh, template, example_id=f"val{i}")
        fit = fit_latent(decoder, target, cfg, steps=cfg.val_fit_steps,
                         rng=np.random.default_rng([cfg.seed, 7, i]))
        pred, _ = decoder.predict_batch(fit.z[None], target.template_pos[None])
        errors.append(mean_vertex_error(pred[0], target.target_pos))
    return float(np.mean(errors))


# ---------------------------------------------------------------------------
# latent-only fitting


@dataclass
class FitResult:
    z: np.ndarray
    loss: float
    steps: int
    converged: bool

    @property
    def warning(self) -> bool:
        """Set when the step cap was reached before the stopping rule fired."""
        return not self.converged


def fit_latent(model, target: TrainExample, cfg: TrainConfig | None = None,
               steps: int | None = None, rng: np.random.Generator | None = None,
               init_z: np.ndarray | None = None,
               plateau_patience: int = 25) -> FitResult:
    """Optimize a fresh latent code against a frozen decoder.

    Runs Adam on the training loss restricted to the target's point pairs
    (vertex pairs for unseen meshes). Converged means the best loss stopped
    improving (relative change below 1e-10) for ``plateau_patience``
    consecutive steps; hitting the step cap first sets the warning flag.
    The decoder is never mutated.
    """
    cfg = cfg or TrainConfig()
    steps = steps if steps is not None else cfg.fit_steps
    rng = rng or np.random.default_rng(cfg.seed)
    if init_z is None:
        z = rng.normal(0.0, cfg.latent_init_std, size=model.latent_dim)
    else:
        z = np.array(init_z, dtype=np.float64)
    adam = AdamState.for_params([z], lr=cfg.lr, beta1=cfg.beta1,
                                beta2=cfg.beta2, eps=cfg.adam_eps)

    best_z, best_loss = z.copy(), np.inf
    since_improve = 0
    converged = False
    taken = 0
    for taken in range(1, steps + 1):
        value, _, z_grads, _ = loss(z[None], [target], model, cfg,
                                    with_param_grads=False)
        improved = value < best_loss - REL_CHANGE_TOL * max(abs(best_loss), 1e-300)
        if value < best_loss:
            best_loss, best_z = value, z.copy()
        since_improve = 0 if improved else since_improve + 1
        adam_step(adam, [z], [z_grads[0]])
        if since_improve >= plateau_patience:
            converged = True
            break
    return FitResult(z=best_z, loss=best_loss, steps=taken, converged=converged)
