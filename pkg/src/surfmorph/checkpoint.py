"""Bit-exact binary checkpoints for trained models.

Layout: the 5-byte magic ``DFRM1``, a little-endian u32 byte length of the
UTF-8 JSON metadata, the metadata itself, then every tensor named in the
metadata manifest as raw little-endian IEEE-754 float64 in manifest order.
The JSON is serialized with sorted keys and no whitespace so identical
models produce identical files. Face indices are stored as a float64 tensor
(exact for any realistic mesh size) to keep the payload homogeneous.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError
from .mesh import TriMesh
from .model import (
    DenseLayer,
    Generator,
    HyperDecoder,
    HyperNet,
    siren_layer_shapes,
)
from .netcore import linear, relu

MAGIC = b"DFRM1"


def _manifest_tensors(model: HyperDecoder):
    """(name, array) pairs in canonical order."""
    pairs = []
    for l in range(len(siren_layer_shapes(model.hypernet.siren_hidden))):
        for kind, gen_idx in (("weight", 2 * l), ("bias", 2 * l + 1)):
            gen = model.hypernet.generators[gen_idx]
            for i, layer in enumerate(gen.layers):
                base = f"hypernet.layer{l}.{kind}_gen.{i}"
                pairs.append((f"{base}.W", layer.weights))
                pairs.append((f"{base}.b", layer.biases))
    pairs.append(("latent_table", model.latent_table))
    pairs.append(("template.vertices", model.template.vertices))
    pairs.append(("template.faces", model.template.faces.astype(np.float64)))
    return pairs


def save_checkpoint(model: HyperDecoder, path) -> None:
    tensors = _manifest_tensors(model)
    meta = {
        "format": MAGIC.decode(),
        "config": model.config,
        "latent_dim": model.hypernet.latent_dim,
        "siren_hidden": model.hypernet.siren_hidden,
        "omega0": model.hypernet.omega0,
        "counts": {
            "hypernet_params": model.hypernet.param_count(),
            "latent_table": int(model.latent_table.size),
            "template_vertices": model.template.n_vertices,
            "template_faces": model.template.n_faces,
        },
        "manifest": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors
        ],
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> HyperDecoder:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"not a model checkpoint (bad magic {magic!r})")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        tensors = {}
        for entry in meta["manifest"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataError(f"checkpoint truncated at tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise DataError("trailing bytes after the last manifest tensor")

    latent_dim = int(meta["latent_dim"])
    siren_hidden = int(meta["siren_hidden"])
    omega0 = float(meta["omega0"])
    generators = []
    for l, shape in enumerate(siren_layer_shapes(siren_hidden)):
        for kind, target_shape in (("weight", shape), ("bias", (shape[0],))):
            layers = []
            for i in range(3):
                base = f"hypernet.layer{l}.{kind}_gen.{i}"
                act = relu() if i < 2 else linear()
                layers.append(DenseLayer(tensors[f"{base}.W"], tensors[f"{base}.b"], act))
            generators.append(Generator(layers, target_shape))
    hypernet = HyperNet(generators, latent_dim, siren_hidden, omega0)

    if hypernet.param_count() != meta["counts"]["hypernet_params"]:
        raise DataError(
            "checkpoint parameter count mismatch: "
            f"{hypernet.param_count()} != {meta['counts']['hypernet_params']}"
        )
    latent_table = tensors["latent_table"]
    if latent_table.size != meta["counts"]["latent_table"]:
        raise DataError("latent table size mismatch")
    template = TriMesh(
        tensors["template.vertices"],
        tensors["template.faces"].astype(np.int64),
    )
    if (template.n_vertices != meta["counts"]["template_vertices"]
            or template.n_faces != meta["counts"]["template_faces"]):
        raise DataError("template size mismatch")
    return HyperDecoder(hypernet, template, latent_table, dict(meta["config"]))
