"""Synthetic desk-scale datasets: procedural templates plus families of
smooth deformations with known latent factors.

Every dataset is a template mesh and a set of examples sharing its
connectivity. Examples are built as template + sum_j c_ij * f_j(vertices)
where the f_j are smooth low-frequency sinusoid fields, so the ground-truth
factor count and coefficients are available as oracles for tests.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .mesh import TriMesh, load_obj, save_obj, subdivide

TEMPLATE_KINDS = ("icosphere", "grid_dome")
MAX_DISPLACEMENT_FRACTION = 0.5  # of the template bbox diagonal


@dataclass
class SynthSpec:
    """Recipe for one synthetic dataset."""

    template_kind: str = "icosphere"
    template_param: int = 3  # icosphere subdivisions or grid resolution
    k: int = 4  # number of deformation basis fields
    coeff_std: float = 1.0
    n_examples: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.template_kind not in TEMPLATE_KINDS:
            raise ConfigError(f"unknown template kind {self.template_kind!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n_examples < 1:
            raise ConfigError("n_examples must be >= 1")
        if self.coeff_std <= 0:
            raise ConfigError("coeff_std must be positive")


def icosahedron() -> TriMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriMesh(v, f)


def icosphere(subdivisions: int) -> TriMesh:
    """Unit sphere from a subdivided icosahedron (vertices projected back)."""
    mesh = icosahedron()
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
        v = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        mesh = TriMesh(v, mesh.faces)
    return mesh


def grid_dome(res: int) -> TriMesh:
    """A smooth dome over [-1, 1]^2 triangulated at the given resolution."""
    if res < 1:
        raise ConfigError("grid resolution must be >= 1")
    coords = np.linspace(-1.0, 1.0, res + 1)
    gx, gy = np.meshgrid(coords, coords, indexing="ij")
    r2 = gx**2 + gy**2
    gz = 0.6 * np.exp(-1.5 * r2)
    verts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    faces = []
    n = res + 1
    for i in range(res):
        for j in range(res):
            a, b, c, d = i * n + j, (i + 1) * n + j, (i + 1) * n + j + 1, i * n + j + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriMesh(verts, faces)


def large_face_template(res: int = 6, extent: float = 2.0) -> TriMesh:
    """A benchmark template mixing a fine grid with a fan of large faces.

    The left unit square is triangulated at ``res``; the right region of
    width ``extent`` is covered by a handful of large triangles with no
    interior vertices, so vertex-only point sets leave its interior
    unsupervised while area-uniform sampling covers it.
    """
    n = res + 1
    coords = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(coords, coords, indexing="ij")
    verts = [np.stack([gx.ravel(), gy.ravel(), np.zeros(n * n)], axis=1)]
    faces = []
    for i in range(res):
        for j in range(res):
            a, b, c, d = i * n + j, (i + 1) * n + j, (i + 1) * n + j + 1, i * n + j + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    apex = n * n
    verts.append(np.array([[1.0 + extent, 0.5, 0.0]]))
    # boundary vertices of the fine grid at x = 1 are row i = res
    boundary = [res * n + j for j in range(n)]
    for j in range(n - 1):
        faces.append([boundary[j], apex, boundary[j + 1]])
    return TriMesh(np.concatenate(verts), faces)


def make_template(spec: SynthSpec) -> TriMesh:
    if spec.template_kind == "icosphere":
        return icosphere(spec.template_param)
    return grid_dome(spec.template_param)


@dataclass
class DeformationBasis:
    """k smooth vector fields f_j(x) = a_j * sin(B_j x + phi_j), componentwise."""

    amplitudes: np.ndarray  # (k, 3)
    frequencies: np.ndarray  # (k, 3, 3), spectral norm <= 3
    phases: np.ndarray  # (k, 3)

    @property
    def k(self) -> int:
        return len(self.amplitudes)

    def evaluate(self, positions: np.ndarray) -> np.ndarray:
        """Stack of field values at positions: shape (k, N, 3)."""
        out = np.empty((self.k, len(positions), 3))
        for j in range(self.k):
            out[j] = self.amplitudes[j] * np.sin(
                positions @ self.frequencies[j].T + self.phases[j]
            )
        return out

    def displace(self, positions: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """positions + sum_j coeffs[j] * f_j(positions); linear in coeffs."""
        fields = self.evaluate(positions)
        return positions + np.tensordot(coeffs, fields, axes=(0, 0))


def make_basis(rng: np.random.Generator, k: int, bbox_diag: float) -> DeformationBasis:
    amplitudes = rng.uniform(0.02, 0.05, size=(k, 3)) * bbox_diag
    amplitudes *= rng.choice([-1.0, 1.0], size=(k, 3))
    freq = np.empty((k, 3, 3))
    for j in range(k):
        raw = rng.uniform(-1.0, 1.0, size=(3, 3))
        norm = np.linalg.norm(raw, 2)
        freq[j] = raw * (rng.uniform(0.8, 1.0) * 3.0 / max(norm, 1e-12))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(k, 3))
    return DeformationBasis(amplitudes, freq, phases)


def make_dataset(spec: SynthSpec, template: TriMesh | None = None):
    """Build (template, examples, true_coeffs) deterministically from a spec.

    Coefficients are N(0, coeff_std^2); any example whose displacement would
    exceed half the template bbox diagonal has its coefficient row rescaled,
    and the returned coefficients are the rescaled ones.
    """
    rng = np.random.default_rng(spec.seed)
    if template is None:
        template = make_template(spec)
    diag = template.bbox_diagonal()
    basis = make_basis(rng, spec.k, diag)
    coeffs = rng.normal(0.0, spec.coeff_std, size=(spec.n_examples, spec.k))
    fields = basis.evaluate(template.vertices)  # (k, V, 3)
    examples = []
    for i in range(spec.n_examples):
        disp = np.tensordot(coeffs[i], fields, axes=(0, 0))
        max_disp = np.linalg.norm(disp, axis=1).max()
        limit = MAX_DISPLACEMENT_FRACTION * diag
        if max_disp >= limit:
            scale = 0.9 * limit / max_disp
            coeffs[i] *= scale
            disp *= scale
        examples.append(template.with_vertices(template.vertices + disp))
    return template, examples, coeffs


# ---------------------------------------------------------------------------
# on-disk layout: a directory of OBJ files plus a manifest


def save_dataset(directory, template: TriMesh, examples, spec: SynthSpec,
                 true_coeffs: np.ndarray) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_obj(template, directory / "template.obj")
    names = []
    for i, ex in enumerate(examples):
        name = f"example_{i:04d}.obj"
        save_obj(ex, directory / name)
        names.append(name)
    manifest = {
        "template": "template.obj",
        "examples": names,
        "seed": spec.seed,
        "spec": asdict(spec),
        "true_coeffs": np.asarray(true_coeffs).tolist(),
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory):
    """Load (template, examples, manifest) from a dataset directory."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest.json in {directory}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    template = load_obj(directory / manifest["template"])
    examples = [load_obj(directory / name) for name in manifest["examples"]]
    for i, ex in enumerate(examples):
        if not template.same_connectivity(ex):
            raise DataError(f"example {i} does not share the template face list")
    return template, examples, manifest
