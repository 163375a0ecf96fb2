"""Triangle meshes, OBJ I/O, barycentric surface points, and 1-to-4 subdivision.

A :class:`TriMesh` is an indexed triangle surface. All shapes in a dataset
share one face list, so a :class:`SurfacePoint` (face index + barycentric
coordinates) names the same semantic location on every mesh; resolving it on
the template and on an example yields a corresponding point pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ObjParseError, UnsupportedFormatError

BARY_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SurfacePoint:
    """A point on a triangulated surface: face index plus barycentric weights.

    Invariant: the weights are non-negative and sum to 1 (within 1e-9).
    """

    face: int
    bary: tuple[float, float, float]

    def __post_init__(self):
        b = self.bary
        if len(b) != 3:
            raise ValueError("barycentric coordinates must have 3 components")
        if min(b) < -BARY_SUM_TOL:
            raise ValueError(f"negative barycentric coordinate: {b}")
        if abs(sum(b) - 1.0) > BARY_SUM_TOL:
            raise ValueError(f"barycentric coordinates must sum to 1, got {sum(b)!r}")


class TriMesh:
    """Immutable indexed triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
        Vertex positions (model units, scale-free).
    faces : array_like, shape (F, 3)
        Vertex-index triples, zero-based.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"vertices must have shape (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise DataError(f"faces must have shape (F, 3), got {f.shape}")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise DataError("face index out of range")
            degenerate = (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            )
            if degenerate.any():
                raise DataError(
                    f"face {int(np.nonzero(degenerate)[0][0])} repeats a vertex index"
                )
        v.flags.writeable = False
        f.flags.writeable = False
        self.vertices = v
        self.faces = f

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        """Per-face areas, shape (F,)."""
        p0, p1, p2 = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    def bbox_diagonal(self) -> float:
        """Length of the axis-aligned bounding-box diagonal."""
        return float(
            np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0))
        )

    def same_connectivity(self, other: "TriMesh") -> bool:
        """True when both meshes share an identical face list."""
        return self.faces.shape == other.faces.shape and bool(
            np.array_equal(self.faces, other.faces)
        )

    def with_vertices(self, vertices) -> "TriMesh":
        """A new mesh with the same connectivity and replaced positions."""
        return TriMesh(vertices, self.faces)

    def __repr__(self):
        return f"TriMesh(V={self.n_vertices}, F={self.n_faces})"


def load_obj(path) -> TriMesh:
    """Load a Wavefront OBJ file (ASCII, triangles only).

    Only ``v`` and ``f`` records are semantic; normals, texture coordinates
    and material statements are ignored. Face indices may carry ``/.../...``
    suffixes; only the position index is used.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex needs 3 coordinates", lineno)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise ObjParseError(f"bad vertex coordinate: {exc}", lineno) from exc
            elif tag == "f":
                idx = parts[1:]
                if len(idx) != 3:
                    raise UnsupportedFormatError(
                        f"line {lineno}: only triangle faces are supported, "
                        f"got {len(idx)} vertices"
                    )
                face = []
                for token in idx:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise ObjParseError(f"bad face index {token!r}", lineno) from exc
                    if i < 1:
                        raise ObjParseError(
                            f"face index {i} must be positive (1-based)", lineno
                        )
                    face.append(i - 1)
                faces.append(face)
            # every other record type (vn, vt, usemtl, ...) is ignored
    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), faces or np.zeros((0, 3), np.int64))


def save_obj(mesh: TriMesh, path) -> None:
    """Write a mesh as ASCII OBJ with 9-significant-digit positions."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def resolve(mesh: TriMesh, sp: SurfacePoint) -> np.ndarray:
    """3D position of a surface point: b0*v0 + b1*v1 + b2*v2 of its face."""
    if not 0 <= sp.face < mesh.n_faces:
        raise DataError(f"face index {sp.face} out of range (F={mesh.n_faces})")
    tri = mesh.vertices[mesh.faces[sp.face]]
    return np.asarray(sp.bary, dtype=np.float64) @ tri


def resolve_many(mesh: TriMesh, points) -> np.ndarray:
    """Vectorized :func:`resolve` over a sequence of surface points, (N, 3)."""
    if len(points) == 0:
        return np.zeros((0, 3))
    face_idx = np.array([sp.face for sp in points], dtype=np.int64)
    if face_idx.min() < 0 or face_idx.max() >= mesh.n_faces:
        raise DataError("face index out of range")
    bary = np.array([sp.bary for sp in points], dtype=np.float64)
    tris = mesh.vertices[mesh.faces[face_idx]]  # (N, 3, 3)
    return np.einsum("nk,nkd->nd", bary, tris)


def barycentric_on_face(mesh: TriMesh, face: int, position, tol: float = 1e-6) -> SurfacePoint:
    """Recover the surface point on ``face`` closest to a 3D position.

    Solves the in-plane least-squares system; the position is implicitly
    projected onto the face plane. Raises if it lies farther from the plane
    than ``tol`` times the mesh bounding-box diagonal.
    """
    if not 0 <= face < mesh.n_faces:
        raise DataError(f"face index {face} out of range (F={mesh.n_faces})")
    v0, v1, v2 = mesh.vertices[mesh.faces[face]]
    e1, e2 = v1 - v0, v2 - v0
    d = np.asarray(position, dtype=np.float64) - v0
    # 2x2 normal equations of [e1 e2] @ (b1, b2) = d
    g = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    rhs = np.array([e1 @ d, e2 @ d])
    b1, b2 = np.linalg.solve(g, rhs)
    residual = d - b1 * e1 - b2 * e2
    if np.linalg.norm(residual) > tol * max(mesh.bbox_diagonal(), 1e-300):
        raise DataError("position is too far from the face plane")
    b = (1.0 - b1 - b2, float(b1), float(b2))
    b = tuple(min(max(x, 0.0), 1.0) for x in b)
    s = sum(b)
    return SurfacePoint(face, (b[0] / s, b[1] / s, b[2] / s))


def sample_uniform(mesh: TriMesh, n: int, rng: np.random.Generator) -> list[SurfacePoint]:
    """Draw ``n`` points uniformly over the surface area.

    Faces are chosen with probability proportional to area; within a face,
    (u, v) ~ U(0,1)^2 is reflected when u+v > 1 and mapped to barycentric
    (1-u-v, u, v). Bit-reproducible for a given generator state.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise DataError("mesh has zero total area")
    face_idx = rng.choice(mesh.n_faces, size=n, p=areas / total)
    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    u, v = uv[:, 0], uv[:, 1]
    w = 1.0 - u - v
    # clip tiny negatives from the reflection arithmetic
    w = np.maximum(w, 0.0)
    return [
        SurfacePoint(int(f), (float(wi), float(ui), float(vi)))
        for f, wi, ui, vi in zip(face_idx, w, u, v)
    ]


def vertex_samples(mesh: TriMesh) -> list[SurfacePoint]:
    """One surface point per vertex, via its lowest-index incident face.

    ``resolve`` on the result returns each vertex position exactly. Raises
    for vertices referenced by no face.
    """
    flat = mesh.faces.ravel()
    referenced, first_flat = np.unique(flat, return_index=True)
    if len(referenced) != mesh.n_vertices:
        missing = np.setdiff1d(np.arange(mesh.n_vertices), referenced)
        raise DataError(f"vertex {int(missing[0])} is not referenced by any face")
    first_face = np.empty(mesh.n_vertices, dtype=np.int64)
    corner = np.empty(mesh.n_vertices, dtype=np.int64)
    first_face[referenced] = first_flat // 3
    corner[referenced] = first_flat % 3
    unit = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    return [
        SurfacePoint(int(first_face[vi]), unit[int(corner[vi])])
        for vi in range(mesh.n_vertices)
    ]


def subdivide(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four by inserting edge midpoints.

    Original vertex positions are kept unchanged; one new vertex appears at
    each unique (unordered) edge, so V' = V + E and F' = 4F. Total surface
    area is preserved exactly up to rounding. Boundary edges are allowed.
    """
    verts = [mesh.vertices]
    new_verts: list[np.ndarray] = []
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        idx = midpoint.get(key)
        if idx is None:
            idx = mesh.n_vertices + len(new_verts)
            midpoint[key] = idx
            new_verts.append(0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]]))
        return idx

    faces = np.empty((4 * mesh.n_faces, 3), dtype=np.int64)
    for fi, (a, b, c) in enumerate(mesh.faces):
        ab, bc, ca = mid(int(a), int(b)), mid(int(b), int(c)), mid(int(c), int(a))
        faces[4 * fi + 0] = (a, ab, ca)
        faces[4 * fi + 1] = (b, bc, ab)
        faces[4 * fi + 2] = (c, ca, bc)
        faces[4 * fi + 3] = (ab, bc, ca)
    if new_verts:
        verts.append(np.array(new_verts))
    return TriMesh(np.concatenate(verts, axis=0), faces)
