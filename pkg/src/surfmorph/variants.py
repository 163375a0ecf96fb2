"""Alternative decoder architectures for the ablation benchmark.

All decoders expose the same training interface as the hypernetwork model
(``latent_table``, ``param_arrays``, ``predict_batch``, ``predict_grads``),
so one trainer and one benchmark harness drive all of them:

- ``siren_concat``: one shared sine MLP conditioned by concatenating the
  latent code to the input position and to the mid-network features.
- ``vertex_position_mlp``: latent -> 400 -> 3V array of absolute vertex
  positions (leaky-ReLU slope 0.1 after the first layer).
- ``vertex_displacement_mlp``: same network, output added to the template
  vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .errors import DataError
from .mesh import TriMesh
from .model import DEFAULT_OMEGA0, build_hyperdecoder
from .netcore import DenseLayer, Tape, backward, forward, leaky_relu, linear, sine

VARIANT_TAGS = (
    "siren_hyper",
    "siren_concat",
    "vertex_position_mlp",
    "vertex_displacement_mlp",
)
VERTEX_MLP_HIDDEN = 400
VERTEX_MLP_SLOPE = 0.1


@dataclass
class SirenConcatDecoder:
    """Shared sine MLP with the latent code concatenated at two stages.

    Layer dims for hidden width h and latent dim M:
    (3+M) -> h -> h -> h, then [features; z] (h+M) -> h -> 3.
    """

    layers: list[DenseLayer]
    template: TriMesh
    latent_table: np.ndarray
    latent_dim: int
    hidden: int

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def predict_batch(self, z_batch: np.ndarray, positions: np.ndarray):
        k, n, _ = positions.shape
        z_rows = np.repeat(np.asarray(z_batch, dtype=np.float64), n, axis=0)
        x1 = np.concatenate([positions.reshape(k * n, 3), z_rows], axis=1)
        tape_a = Tape()
        h3 = forward(self.layers[:3], x1, tape_a)
        x2 = np.concatenate([h3, z_rows], axis=1)
        tape_b = Tape()
        disp = forward(self.layers[3:], x2, tape_b)
        pred = positions + disp.reshape(k, n, 3)
        return pred, (tape_a, tape_b, k, n)

    def predict_grads(self, cache, d_pred: np.ndarray, with_param_grads: bool = True):
        tape_a, tape_b, k, n = cache
        grads_b, dx2 = backward(self.layers[3:], tape_b,
                                d_pred.reshape(k * n, 3),
                                with_param_grads=with_param_grads)
        dh3 = dx2[:, : self.hidden]
        dz = dx2[:, self.hidden:]
        grads_a, dx1 = backward(self.layers[:3], tape_a, dh3,
                                with_param_grads=with_param_grads)
        dz = dz + dx1[:, 3:]
        z_grads = dz.reshape(k, n, self.latent_dim).sum(axis=1)
        if not with_param_grads:
            return None, z_grads
        flat = []
        for pair in grads_a + grads_b:
            flat.extend(pair)
        return flat, z_grads


def build_siren_concat(template: TriMesh, n_examples: int,
                       rng: np.random.Generator, latent_dim: int,
                       hidden: int, omega0: float = DEFAULT_OMEGA0,
                       latent_init_std: float = 0.01) -> SirenConcatDecoder:
    dims = [(hidden, 3 + latent_dim), (hidden, hidden), (hidden, hidden),
            (hidden, hidden + latent_dim), (3, hidden)]
    layers = []
    for i, (out_dim, in_dim) in enumerate(dims):
        w, b = netcore.siren_layer_init(rng, out_dim, in_dim, first=(i == 0),
                                        omega0=omega0)
        act = linear() if i == len(dims) - 1 else sine(omega0)
        layers.append(DenseLayer(w, b, act))
    table = rng.normal(0.0, latent_init_std, size=(n_examples, latent_dim))
    return SirenConcatDecoder(layers, template, table, latent_dim, hidden)


@dataclass
class VertexArrayDecoder:
    """Latent-to-vertex-array MLP, absolute positions or template offsets."""

    layers: list[DenseLayer]
    template: TriMesh
    latent_table: np.ndarray
    latent_dim: int
    displacement: bool  # False: absolute positions

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def predict_batch(self, z_batch: np.ndarray, positions: np.ndarray):
        k, n, _ = positions.shape
        if n != self.template.n_vertices:
            raise DataError(
                "vertex-array decoders require vertex-only sample sets "
                f"(got {n} points for {self.template.n_vertices} vertices)"
            )
        tape = Tape()
        out = forward(self.layers, np.asarray(z_batch, dtype=np.float64), tape)
        pred = out.reshape(k, n, 3)
        if self.displacement:
            pred = pred + self.template.vertices
        return pred, (tape, k, n)

    def predict_grads(self, cache, d_pred: np.ndarray, with_param_grads: bool = True):
        tape, k, n = cache
        grads, dz = backward(self.layers, tape, d_pred.reshape(k, n * 3),
                             with_param_grads=with_param_grads)
        if not with_param_grads:
            return None, dz
        flat = []
        for pair in grads:
            flat.extend(pair)
        return flat, dz


def vertex_array_param_count(n_vertices: int, latent_dim: int = 128,
                             hidden: int = VERTEX_MLP_HIDDEN) -> int:
    """Trainable scalars of the vertex-array MLP for a given template size."""
    out = 3 * n_vertices
    return latent_dim * hidden + hidden + hidden * out + out


def build_vertex_array(template: TriMesh, n_examples: int,
                       rng: np.random.Generator, latent_dim: int,
                       displacement: bool, hidden: int = VERTEX_MLP_HIDDEN,
                       latent_init_std: float = 0.01) -> VertexArrayDecoder:
    out_dim = 3 * template.n_vertices
    w1, b1 = netcore.kaiming_uniform_init(rng, hidden, latent_dim,
                                          slope=VERTEX_MLP_SLOPE)
    w2, b2 = netcore.kaiming_uniform_init(rng, out_dim, hidden)
    # start near zero output so both modes begin at a well-defined shape
    layers = [
        DenseLayer(w1, b1, leaky_relu(VERTEX_MLP_SLOPE)),
        DenseLayer(w2 * 1e-2, b2 * 0.0, linear()),
    ]
    table = rng.normal(0.0, latent_init_std, size=(n_examples, latent_dim))
    return VertexArrayDecoder(layers, template, table, latent_dim, displacement)


def build_variant(tag: str, template: TriMesh, n_examples: int,
                  rng: np.random.Generator, latent_dim: int,
                  siren_hidden: int, hyper_hidden: int,
                  omega0: float = DEFAULT_OMEGA0,
                  latent_init_std: float = 0.01):
    """Construct any of the four benchmark decoders behind one interface."""
    if tag == "siren_hyper":
        return build_hyperdecoder(template, n_examples, rng,
                                  latent_dim=latent_dim,
                                  siren_hidden=siren_hidden,
                                  hyper_hidden=hyper_hidden, omega0=omega0,
                                  latent_init_std=latent_init_std)
    if tag == "siren_concat":
        return build_siren_concat(template, n_examples, rng, latent_dim,
                                  siren_hidden, omega0, latent_init_std)
    if tag == "vertex_position_mlp":
        return build_vertex_array(template, n_examples, rng, latent_dim,
                                  displacement=False,
                                  latent_init_std=latent_init_std)
    if tag == "vertex_displacement_mlp":
        return build_vertex_array(template, n_examples, rng, latent_dim,
                                  displacement=True,
                                  latent_init_std=latent_init_std)
    raise DataError(f"unknown decoder variant {tag!r}")
