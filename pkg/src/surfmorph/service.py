"""HTTP editing service over a trained model.

Exposes decode/fit/edit operations for browser UIs and scripted clients.
The model is shared read-only across requests; each edit session owns a
lock, its base latent code and its current latent code. Handle edits always
restart from the session's base latent so repeated drags do not drift; a
``commit`` flag rebases the session after an accepted edit.

Mesh payloads are binary: little-endian u32 vertex count, u32 face count,
float32 xyz positions, u32 face indices (content type
``application/octet-stream``). JSON responses embed the same payload
base64-encoded in a ``mesh`` field.
"""

from __future__ import annotations

import base64
import struct
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .errors import NumericalError, SurfmorphError
from .fitting import (
    HandleConstraint,
    LandmarkSpec,
    edit_point_handles,
    reconstruct_from_landmarks,
)
from .mesh import TriMesh
from .model import HyperDecoder, decode_mesh, sample_latent
from .semantics import SemanticDirection, apply_semantic

DEFAULT_SESSION_TTL = 30 * 60.0  # seconds


def mesh_payload(mesh: TriMesh) -> bytes:
    """Binary wire format for one mesh (float32 positions, u32 indices)."""
    header = struct.pack("<II", mesh.n_vertices, mesh.n_faces)
    verts = np.ascontiguousarray(mesh.vertices, dtype="<f4").tobytes()
    faces = np.ascontiguousarray(mesh.faces, dtype="<u4").tobytes()
    return header + verts + faces


def parse_mesh_payload(raw: bytes) -> TriMesh:
    """Inverse of :func:`mesh_payload`, for clients and tests."""
    n_v, n_f = struct.unpack("<II", raw[:8])
    verts = np.frombuffer(raw[8 : 8 + 12 * n_v], dtype="<f4").reshape(n_v, 3)
    faces = np.frombuffer(raw[8 + 12 * n_v :], dtype="<u4").reshape(n_f, 3)
    return TriMesh(verts.astype(np.float64), faces.astype(np.int64))


def _mesh_b64(mesh: TriMesh) -> str:
    return base64.b64encode(mesh_payload(mesh)).decode("ascii")


class DecodeRequest(BaseModel):
    z: list[float] | None = None
    sample: bool = False
    subdiv: int = 0
    seed: int = 0


class SessionRequest(BaseModel):
    z: list[float] | None = None
    sample: bool = False
    seed: int = 0


class HandleItem(BaseModel):
    vertex: int
    dx: float
    dy: float
    dz: float


class HandlesRequest(BaseModel):
    handles: list[HandleItem]
    commit: bool = False


class SemanticRequest(BaseModel):
    label: str
    alpha: float


class LandmarkItem(BaseModel):
    vertex: int
    x: float
    y: float


class LandmarksRequest(BaseModel):
    landmarks: list[LandmarkItem]


class EditSession:
    def __init__(self, z0: np.ndarray):
        self.id = uuid.uuid4().hex
        self.z0 = z0.copy()
        self.z = z0.copy()
        self.lock = threading.Lock()
        self.created = time.monotonic()
        self.last_used = self.created


def create_app(model: HyperDecoder,
               directions: list[SemanticDirection] | None = None,
               session_ttl: float = DEFAULT_SESSION_TTL,
               edit_steps: int = 500, edit_lr: float = 1e-4,
               lambda_con: float = 3.0e3, lambda_pre: float = 1.0e5,
               fit_lambda_reg: float = 1.0e6) -> FastAPI:
    """Build the service application around one read-only model."""
    app = FastAPI(title="surfmorph service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )
    directions = {d.label: d for d in (directions or [])}
    sessions: dict[str, EditSession] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(NumericalError)
    async def numerical_failure(request: Request, exc: NumericalError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(SurfmorphError)
    async def domain_error(request: Request, exc: SurfmorphError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def evict_expired():
        now = time.monotonic()
        with registry_lock:
            dead = [sid for sid, s in sessions.items()
                    if now - s.last_used > session_ttl]
            for sid in dead:
                del sessions[sid]

    def get_session(session_id: str) -> EditSession:
        evict_expired()
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise _http_error(404, f"unknown session {session_id}")
        session.last_used = time.monotonic()
        return session

    def resolve_latent(z_list, sample: bool, seed: int) -> np.ndarray:
        if z_list is not None:
            z = np.asarray(z_list, dtype=np.float64)
            if z.shape != (model.latent_dim,):
                raise _http_error(
                    400, f"z must have {model.latent_dim} entries, got {len(z)}"
                )
            return z
        if sample:
            return sample_latent(model, np.random.default_rng(seed))
        return model.latent_table.mean(axis=0)

    def checked_mesh(z, subdiv: int = 0) -> TriMesh:
        mesh = decode_mesh(model, z, subdiv)
        if not np.isfinite(mesh.vertices).all():
            raise NumericalError("decoded mesh contains non-finite coordinates")
        return mesh

    @app.get("/model/info")
    def model_info():
        return {
            "latent_dim": model.latent_dim,
            "template_vertices": model.template.n_vertices,
            "template_faces": model.template.n_faces,
            "n_train_examples": int(len(model.latent_table)),
            "directions": sorted(directions),
            "mesh_content_type": "application/octet-stream",
            "image_convention": "y-down",
        }

    @app.post("/decode")
    def decode_endpoint(body: DecodeRequest):
        if body.subdiv < 0 or body.subdiv > 4:
            raise _http_error(400, "subdiv must be in [0, 4]")
        z = resolve_latent(body.z, body.sample, body.seed)
        mesh = checked_mesh(z, body.subdiv)
        return Response(content=mesh_payload(mesh),
                        media_type="application/octet-stream")

    @app.post("/session")
    def create_session(body: SessionRequest):
        z = resolve_latent(body.z, body.sample, body.seed)
        session = EditSession(z)
        with registry_lock:
            sessions[session.id] = session
        return {
            "session_id": session.id,
            "z": session.z.tolist(),
            "mesh": _mesh_b64(checked_mesh(session.z)),
        }

    @app.post("/session/{session_id}/handles")
    def edit_handles(session_id: str, body: HandlesRequest):
        session = get_session(session_id)
        if not session.lock.acquire(blocking=False):
            raise _http_error(409, "session is being mutated by another request")
        try:
            handles = [
                HandleConstraint(h.vertex, np.array([h.dx, h.dy, h.dz]))
                for h in body.handles
            ]
            result = edit_point_handles(
                model, session.z0, handles, lambda_con=lambda_con,
                lambda_pre=lambda_pre, lr=edit_lr, steps=edit_steps,
            )
            session.z = result.z
            if body.commit:
                session.z0 = result.z.copy()
            return {
                "z": session.z.tolist(),
                "mesh": _mesh_b64(checked_mesh(session.z)),
                "residual_before": result.residual_before.tolist(),
                "residual_after": result.residual_after.tolist(),
            }
        finally:
            session.lock.release()

    @app.post("/session/{session_id}/semantic")
    def edit_semantic(session_id: str, body: SemanticRequest):
        session = get_session(session_id)
        direction = directions.get(body.label)
        if direction is None:
            raise _http_error(404, f"unknown semantic label {body.label!r}")
        if not session.lock.acquire(blocking=False):
            raise _http_error(409, "session is being mutated by another request")
        try:
            session.z = apply_semantic(session.z, direction, body.alpha)
            return {
                "z": session.z.tolist(),
                "mesh": _mesh_b64(checked_mesh(session.z)),
            }
        finally:
            session.lock.release()

    @app.post("/fit/landmarks")
    def fit_landmarks(body: LandmarksRequest):
        spec = LandmarkSpec(
            np.array([l.vertex for l in body.landmarks], dtype=np.int64),
            np.array([[l.x, l.y] for l in body.landmarks], dtype=np.float64),
        )
        result = reconstruct_from_landmarks(model, spec,
                                            lambda_reg=fit_lambda_reg)
        return {
            "z": result.z.tolist(),
            "pose": result.pose.to_dict(),
            "reprojection_rmse": result.reprojection_rmse,
            "mesh": _mesh_b64(checked_mesh(result.z)),
        }

    return app


def _http_error(status: int, detail: str):
    from fastapi import HTTPException

    return HTTPException(status_code=status, detail=detail)
