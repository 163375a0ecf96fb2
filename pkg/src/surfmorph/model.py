"""The deformable surface model.

A latent code z is mapped by a hypernetwork H to the parameters of a small
sine-activated MLP S (the displacement field). The deformable map is

    D(p, z) = S(p, H(z)) + p

for p a 3D position on the template surface. Decoding a shape evaluates D at
template surface points; training and fitting differentiate through S into H
and z with the hand-written backward passes from :mod:`surfmorph.netcore`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import netcore
from .errors import DataError
from .mesh import SurfacePoint, TriMesh, resolve_many, subdivide
from .netcore import DenseLayer, Tape, backward, forward, linear, relu, sine

DEFAULT_LATENT_DIM = 128
DEFAULT_SIREN_HIDDEN = 128
DEFAULT_HYPER_HIDDEN = 256
DEFAULT_OMEGA0 = 30.0
SIREN_LAYER_COUNT = 5  # 3 -> h -> h -> h -> h -> 3


def siren_layer_shapes(hidden: int) -> list[tuple[int, int]]:
    """(out, in) shapes of the displacement MLP's five dense layers."""
    return [(hidden, 3), (hidden, hidden), (hidden, hidden), (hidden, hidden), (3, hidden)]


@dataclass
class SirenParams:
    """Per-layer (weights, biases) of one generated displacement MLP."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    omega0: float = DEFAULT_OMEGA0

    def total_scalars(self) -> int:
        return int(sum(w.size + b.size for w, b in self.layers))

    def as_dense_layers(self) -> list[DenseLayer]:
        out = []
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            act = linear() if i == last else sine(self.omega0)
            out.append(DenseLayer(w, b, act))
        return out


@dataclass
class Generator:
    """One hypernetwork head: a ReLU MLP emitting a flat parameter tensor."""

    layers: list[DenseLayer]
    target_shape: tuple[int, ...]

    @property
    def out_size(self) -> int:
        return int(np.prod(self.target_shape))


@dataclass
class HyperNet:
    """Hypernetwork: a weight generator and a bias generator per MLP layer.

    Each generator is latent -> hidden -> hidden -> flat-parameters with ReLU
    on the two hidden layers and a linear output.
    """

    generators: list[Generator]  # order: [w0, b0, w1, b1, ..., w4, b4]
    latent_dim: int
    siren_hidden: int
    omega0: float

    def param_arrays(self) -> list[np.ndarray]:
        arrays = []
        for gen in self.generators:
            for layer in gen.layers:
                arrays.append(layer.weights)
                arrays.append(layer.biases)
        return arrays

    def param_count(self) -> int:
        return int(sum(a.size for a in self.param_arrays()))


def build_hypernet(rng: np.random.Generator,
                   latent_dim: int = DEFAULT_LATENT_DIM,
                   siren_hidden: int = DEFAULT_SIREN_HIDDEN,
                   hyper_hidden: int = DEFAULT_HYPER_HIDDEN,
                   omega0: float = DEFAULT_OMEGA0) -> HyperNet:
    """Construct an initialized hypernetwork.

    The final layer of every generator gets 1e-2-scaled weights and a bias
    equal to a draw from the standard sine-MLP initialization, so the fields
    generated from small latent codes start in the well-conditioned regime
    instead of saturating the sine activations.
    """
    generators = []
    for l, (out_dim, in_dim) in enumerate(siren_layer_shapes(siren_hidden)):
        target_w, target_b = netcore.siren_layer_init(
            rng, out_dim, in_dim, first=(l == 0), omega0=omega0
        )
        for target, shape in ((target_w, (out_dim, in_dim)), (target_b, (out_dim,))):
            flat = target.ravel().copy()
            w1, b1 = netcore.kaiming_uniform_init(rng, hyper_hidden, latent_dim)
            w2, b2 = netcore.kaiming_uniform_init(rng, hyper_hidden, hyper_hidden)
            w3, _ = netcore.kaiming_uniform_init(rng, flat.size, hyper_hidden)
            layers = [
                DenseLayer(w1, b1, relu()),
                DenseLayer(w2, b2, relu()),
                DenseLayer(w3 * 1e-2, flat, linear()),
            ]
            generators.append(Generator(layers, shape))
    return HyperNet(generators, latent_dim, siren_hidden, omega0)


@dataclass
class HyperDecoder:
    """A trained deformable model: hypernetwork, template, and latent table."""

    hypernet: HyperNet
    template: TriMesh
    latent_table: np.ndarray  # (n_examples, latent_dim)
    config: dict = field(default_factory=dict)

    @property
    def latent_dim(self) -> int:
        return self.hypernet.latent_dim

    def param_arrays(self) -> list[np.ndarray]:
        return self.hypernet.param_arrays()

    # -- training interface (shared with the decoder variants) --------------

    def predict_batch(self, z_batch: np.ndarray, positions: np.ndarray):
        """Decode a latent batch at per-example template positions.

        z_batch is (K, M) and positions (K, N, 3); returns ((K, N, 3)
        predicted positions, cache for :meth:`predict_grads`).
        """
        ev = BatchEval(self, z_batch, positions)
        return ev.predictions(), ev

    def predict_grads(self, cache: "BatchEval", d_pred: np.ndarray,
                      with_param_grads: bool = True):
        return cache.backward(d_pred, with_param_grads=with_param_grads)


def build_hyperdecoder(template: TriMesh, n_examples: int,
                       rng: np.random.Generator,
                       latent_dim: int = DEFAULT_LATENT_DIM,
                       siren_hidden: int = DEFAULT_SIREN_HIDDEN,
                       hyper_hidden: int = DEFAULT_HYPER_HIDDEN,
                       omega0: float = DEFAULT_OMEGA0,
                       latent_init_std: float = 0.01) -> HyperDecoder:
    hypernet = build_hypernet(rng, latent_dim, siren_hidden, hyper_hidden, omega0)
    table = rng.normal(0.0, latent_init_std, size=(n_examples, latent_dim))
    config = {
        "latent_dim": latent_dim,
        "siren_hidden": siren_hidden,
        "hyper_hidden": hyper_hidden,
        "omega0": omega0,
        "latent_init_std": latent_init_std,
        "n_examples": n_examples,
    }
    return HyperDecoder(hypernet, template, table, config)


# ---------------------------------------------------------------------------
# forward / backward machinery


def _stack_generated(hypernet: HyperNet, z_batch: np.ndarray, tapes=None):
    """Run all generators on a latent batch.

    Returns stacked per-example layer parameters: a list of (W, b) with W of
    shape (K, out, in) and b (K, out), one entry per displacement-MLP layer.
    """
    k = z_batch.shape[0]
    stacked = []
    for l in range(SIREN_LAYER_COUNT):
        wg, bg = hypernet.generators[2 * l], hypernet.generators[2 * l + 1]
        w_tape = b_tape = None
        if tapes is not None:
            w_tape, b_tape = Tape(), Tape()
            tapes.extend([w_tape, b_tape])
        w_flat = forward(wg.layers, z_batch, w_tape)
        b_flat = forward(bg.layers, z_batch, b_tape)
        stacked.append((w_flat.reshape((k,) + wg.target_shape), b_flat))
    return stacked


class BatchEval:
    """One recorded forward pass of D over a latent batch, ready for backward."""

    def __init__(self, model: HyperDecoder, z_batch: np.ndarray,
                 positions: np.ndarray, record: bool = True):
        z_batch = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
        if z_batch.shape[1] != model.latent_dim:
            raise ValueError(
                f"latent dim {z_batch.shape[1]} != model latent dim {model.latent_dim}"
            )
        if positions.ndim != 3 or positions.shape[0] != z_batch.shape[0]:
            raise ValueError("positions must be (K, N, 3) matching the latent batch")
        self.model = model
        self.positions = positions
        self.gen_tapes: list[Tape] | None = [] if record else None
        stacked = _stack_generated(model.hypernet, z_batch, self.gen_tapes)
        self.siren_layers = [
            DenseLayer(w, b, sine(model.hypernet.omega0)) for w, b in stacked[:-1]
        ] + [DenseLayer(stacked[-1][0], stacked[-1][1], linear())]
        self.siren_tape = Tape() if record else None
        self.displacement = forward(self.siren_layers, positions, self.siren_tape)

    def predictions(self) -> np.ndarray:
        return self.displacement + self.positions

    def backward(self, d_pred: np.ndarray, with_param_grads: bool = True):
        """Chain gradients of the predictions back into H parameters and z.

        d_pred is (K, N, 3): the gradient of some scalar objective w.r.t. the
        predicted positions (equivalently the displacements, since the
        template positions are constant). Per-layer parameter gradients of
        the generated MLPs are accumulated over all points, then pushed
        through each generator. Returns (hypernet_grads, z_grads) with
        hypernet_grads aligned to ``HyperNet.param_arrays()`` (None when
        ``with_param_grads`` is false) and z_grads of shape (K, M).
        """
        siren_grads, _ = backward(self.siren_layers, self.siren_tape, d_pred)
        k = d_pred.shape[0]
        hyper_grads: list[np.ndarray] | None = [] if with_param_grads else None
        z_grads = np.zeros((k, self.model.latent_dim))
        for l, (dw, db) in enumerate(siren_grads):
            for tape, gen, grad_out in (
                (self.gen_tapes[2 * l], self.model.hypernet.generators[2 * l],
                 dw.reshape(k, -1)),
                (self.gen_tapes[2 * l + 1], self.model.hypernet.generators[2 * l + 1],
                 db),
            ):
                gen_grads, dz = backward(gen.layers, tape, grad_out,
                                         with_param_grads=with_param_grads)
                z_grads += dz
                if with_param_grads:
                    for pair in gen_grads:
                        hyper_grads.extend(pair)
        return hyper_grads, z_grads


# ---------------------------------------------------------------------------
# public operations


def generate_params(hypernet: HyperNet, z) -> SirenParams:
    """Map one latent code to the parameters of its displacement MLP."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    if z.shape[1] != hypernet.latent_dim:
        raise ValueError(f"latent code must be {hypernet.latent_dim}-dimensional")
    stacked = _stack_generated(hypernet, z)
    return SirenParams([(w[0], b[0]) for w, b in stacked], hypernet.omega0)


def decode_positions(model: HyperDecoder, z, positions: np.ndarray) -> np.ndarray:
    """Evaluate D at raw 3D template-surface positions, shape (N, 3)."""
    positions = np.asarray(positions, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    ev = BatchEval(model, z, positions[None], record=False)
    return ev.predictions()[0]


def decode(model: HyperDecoder, z, points: Sequence[SurfacePoint]) -> np.ndarray:
    """Decode a shape at template surface points; returns (N, 3) positions.

    A pure per-point map: the output at each point depends only on that
    point's template position, so results are permutation-equivariant.
    """
    positions = resolve_many(model.template, points)
    return decode_positions(model, z, positions)


def decode_mesh(model: HyperDecoder, z, subdiv_level: int = 0) -> TriMesh:
    """Decode a full mesh at the template connectivity, optionally refined.

    The template is midpoint-subdivided ``subdiv_level`` times (new vertices
    stay on the original surface) and D is evaluated at every vertex, so one
    trained model emits meshes at any of these resolutions.
    """
    if subdiv_level < 0:
        raise ValueError("subdiv_level must be >= 0")
    mesh = model.template
    for _ in range(subdiv_level):
        mesh = subdivide(mesh)
    return mesh.with_vertices(decode_positions(model, z, mesh.vertices))


def grads_through(model: HyperDecoder, z, points: Sequence[SurfacePoint],
                  per_point_output_grads: np.ndarray):
    """Reverse-mode gradients of a per-point objective through S into H and z.

    ``per_point_output_grads`` is (N, 3): dObjective/dD(p_i, z). Returns
    (hypernet_grads aligned with HyperNet.param_arrays(), z_grad (M,)).
    """
    positions = resolve_many(model.template, points)
    grads = np.asarray(per_point_output_grads, dtype=np.float64)
    if grads.shape != positions.shape:
        raise ValueError("output grads must be (N, 3) matching the points")
    ev = BatchEval(model, np.asarray(z).reshape(1, -1), positions[None])
    hyper_grads, z_grads = ev.backward(grads[None])
    return hyper_grads, z_grads[0]


def sample_latent(model: HyperDecoder, rng: np.random.Generator) -> np.ndarray:
    """Draw a latent code from a diagonal Gaussian fit to the latent table."""
    table = np.asarray(model.latent_table)
    if table.size == 0:
        raise DataError("latent table is empty; train or load a model first")
    mean = table.mean(axis=0)
    std = table.std(axis=0) if len(table) > 1 else np.zeros_like(mean)
    return mean + std * rng.standard_normal(mean.shape)
