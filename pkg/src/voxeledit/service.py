"""Interactive editing HTTP service.

Sessions hold a case, an engine, the current segmentation and an undoable
edit history.  Edits arrive as frame-pixel scribbles, run the engine with
the session's current mask as the initial segmentation, and return updated
contours plus metrics.  Every mutation is serialized per session; a losing
concurrent submit gets a conflict error instead of interleaved state.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .engines import CnnEditor, GeometricEditor, apply_engine, load_checkpoint
from .geometry import FramePose, extract_plane_contour, unproject_voxel_to_pixel
from .grids import BinaryMask
from .harness import DESK_SIGMA
from .interaction import InteractionError, encode_edit, scribble_from_pixels
from .metrics import MetricReport, evaluate
from .phantom import CaseBundle, load_case


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# Contour helpers
# ---------------------------------------------------------------------------

def _order_polyline(points: np.ndarray) -> np.ndarray:
    """Greedy nearest-neighbor ordering of 2D integer points for display."""
    if len(points) <= 2:
        return points
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    remaining = list(range(len(pts)))
    order = [remaining.pop(0)]
    while remaining:
        cur = pts[order[-1]]
        d = np.abs(pts[remaining] - cur).sum(axis=1)
        nxt = int(np.argmin(d))
        order.append(remaining.pop(nxt))
    return pts[order]


def contour_pixels(mask_or_set, pose: FramePose) -> list[list[int]]:
    """Frame-pixel polyline of a mask's contour (or a voxel set) on a pose."""
    if isinstance(mask_or_set, BinaryMask):
        vs = extract_plane_contour(mask_or_set, pose)
        pts = vs.points
    else:
        pts = mask_or_set.points
    if pts.shape[0] == 0:
        return []
    px = np.array(
        [unproject_voxel_to_pixel(pose, p) for p in pts.astype(np.float64)]
    )
    px = np.floor(px + 0.5).astype(np.int64)
    px = np.unique(px, axis=0)
    return [[int(r), int(c)] for r, c in _order_polyline(px)]


def frame_image_u8(case: CaseBundle, pose: FramePose) -> np.ndarray:
    """8-bit grayscale render of the intensity volume on a frame."""
    from .geometry import project_pixel_to_voxel

    rows, cols = pose.frame_dims
    img = np.zeros((rows, cols), dtype=np.uint8)
    dims = case.meta.dims
    for r in range(rows):
        for c in range(cols):
            v = project_pixel_to_voxel(pose, (r, c))
            vi = tuple(int(round(x)) for x in v)
            if all(0 <= x < d for x, d in zip(vi, dims)):
                img[r, c] = int(np.floor(case.x.data[vi] * 255.0 + 0.5))
    return img


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

@dataclass
class _HistoryEntry:
    scribble_px: dict
    mask: BinaryMask
    report: MetricReport
    y_init_before: BinaryMask
    changed_frames: list[int]


@dataclass
class Session:
    session_id: str
    case_id: str
    case: CaseBundle
    engine_id: str
    engine: object
    sigma_enc: float
    sigma_edit: float
    y_init: BinaryMask = None
    history: list[_HistoryEntry] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if self.y_init is None:
            self.y_init = self.case.y_init

    @property
    def t(self) -> int:
        return len(self.history) - 1

    def frame_contours(self, frame_id: int) -> dict:
        pose = self.case.frames.pose(frame_id)
        pos = [p.frame_id for p in self.case.frames.poses].index(frame_id)
        return {
            "cas": contour_pixels(self.case.cas_contours[pos], pose),
            "current": contour_pixels(self.y_init, pose),
            "initial": contour_pixels(self.case.y_init, pose),
        }

    def export_bytes(self) -> bytes:
        return np.ascontiguousarray(self.y_init.data, dtype=np.uint8).tobytes()

    def submit(self, frame_id: int, pixel_path) -> dict:
        try:
            pose = self.case.frames.pose(frame_id)
        except Exception:
            raise ServiceError(404, "unknown_frame", f"no frame {frame_id}")
        try:
            scribble = scribble_from_pixels(self.case.meta, pose, pixel_path, frame_id)
        except InteractionError as e:
            raise ServiceError(422, "invalid_scribble", str(e))
        t = len(self.history)
        edit = encode_edit(scribble, self.sigma_enc, self.sigma_edit, t=t)
        before = self.y_init
        working = self.case.with_initial(before)
        mask, _ = apply_engine(self.engine, working, edit)
        report = evaluate(working, mask, edit)
        changed = []
        for pose_f in self.case.frames.poses:
            prev = extract_plane_contour(before, pose_f).points
            new = extract_plane_contour(mask, pose_f).points
            if prev.shape != new.shape or not (prev == new).all():
                changed.append(pose_f.frame_id)
        self.history.append(
            _HistoryEntry(
                scribble_px={"frame_id": frame_id,
                             "path": [list(map(float, p)) for p in pixel_path]},
                mask=mask,
                report=report,
                y_init_before=before,
                changed_frames=changed,
            )
        )
        self.y_init = mask
        return {"t": t, "metrics": report.to_json(), "changed_frames": changed}

    def undo(self) -> dict:
        if not self.history:
            raise ServiceError(409, "nothing_to_undo", "nothing to undo")
        entry = self.history.pop()
        self.y_init = entry.y_init_before
        top = self.history[-1].report.to_json() if self.history else None
        return {
            "t": self.t,
            "metrics": top,
            "changed_frames": entry.changed_frames,
        }

    def scribble_log(self) -> dict:
        return {
            "case": self.case_id,
            "engine": self.engine_id,
            "sigma_enc": self.sigma_enc,
            "sigma_edit": self.sigma_edit,
            "edits": [e.scribble_px for e in self.history],
        }


class SessionManager:
    def __init__(self, case_dir: str, checkpoint_dir: str | None = None,
                 session_dir: str | None = None,
                 sigma_enc: float = DESK_SIGMA, sigma_edit: float = DESK_SIGMA):
        self.case_dir = case_dir
        self.checkpoint_dir = checkpoint_dir
        self.session_dir = session_dir
        self.sigma_enc = sigma_enc
        self.sigma_edit = sigma_edit
        self.sessions: dict[str, Session] = {}
        self._cases: dict[str, CaseBundle] = {}
        self._images: dict[tuple[str, int], bytes] = {}
        self._lock = threading.Lock()

    # -- catalog ------------------------------------------------------------
    def list_cases(self) -> list[str]:
        if not os.path.isdir(self.case_dir):
            return []
        return sorted(
            d for d in os.listdir(self.case_dir)
            if os.path.exists(os.path.join(self.case_dir, d, "manifest.json"))
        )

    def list_engines(self) -> list[str]:
        names = ["geometric"]
        if self.checkpoint_dir and os.path.isdir(self.checkpoint_dir):
            for d in sorted(os.listdir(self.checkpoint_dir)):
                if os.path.exists(os.path.join(self.checkpoint_dir, d, "manifest.json")):
                    names.append(d)
        return names

    def load_case(self, case_id: str) -> CaseBundle:
        with self._lock:
            if case_id not in self._cases:
                path = os.path.join(self.case_dir, case_id)
                if not os.path.isdir(path):
                    raise ServiceError(
                        404, "unknown_case",
                        f"unknown case {case_id!r}; available: {self.list_cases()}",
                    )
                self._cases[case_id] = load_case(path)
            return self._cases[case_id]

    def resolve_engine(self, engine_id: str):
        if engine_id == "geometric":
            return GeometricEditor()
        available = self.list_engines()
        if engine_id not in available:
            raise ServiceError(
                404, "unknown_engine",
                f"unknown engine {engine_id!r}; available: {available}",
            )
        model, _ = load_checkpoint(os.path.join(self.checkpoint_dir, engine_id))
        return CnnEditor(model, engine_id)

    # -- sessions -----------------------------------------------------------
    def create(self, case_id: str, engine_id: str) -> Session:
        case = self.load_case(case_id)
        engine = self.resolve_engine(engine_id)
        session = Session(
            session_id=uuid.uuid4().hex,
            case_id=case_id,
            case=case,
            engine_id=engine_id,
            engine=engine,
            sigma_enc=self.sigma_enc,
            sigma_edit=self.sigma_edit,
        )
        with self._lock:
            self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ServiceError(404, "unknown_session", f"unknown session {session_id!r}")

    def frame_png(self, session: Session, frame_id: int) -> bytes:
        from PIL import Image

        key = (session.case_id, frame_id)
        with self._lock:
            if key not in self._images:
                pose = session.case.frames.pose(frame_id)
                img = frame_image_u8(session.case, pose)
                buf = io.BytesIO()
                Image.fromarray(img, mode="L").save(buf, format="PNG")
                self._images[key] = buf.getvalue()
            return self._images[key]

    def persist(self, session: Session) -> None:
        if not self.session_dir:
            return
        os.makedirs(self.session_dir, exist_ok=True)
        path = os.path.join(self.session_dir, f"{session.session_id}.json")
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(session.scribble_log(), fh, sort_keys=True, indent=1)
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------

def create_app(case_dir: str, checkpoint_dir: str | None = None,
               frontend_dir: str | None = None, session_dir: str | None = None,
               sigma_enc: float = DESK_SIGMA, sigma_edit: float = DESK_SIGMA) -> FastAPI:
    app = FastAPI(title="voxeledit", docs_url=None, redoc_url=None)
    manager = SessionManager(case_dir, checkpoint_dir, session_dir, sigma_enc, sigma_edit)
    app.state.manager = manager

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.post("/api/sessions")
    def create_session(body: dict):
        case_id = body.get("case")
        engine_id = body.get("engine", "geometric")
        if not case_id:
            raise ServiceError(422, "missing_case", "body must include 'case'")
        session = manager.create(case_id, engine_id)
        return {"session_id": session.session_id}

    @app.get("/api/sessions/{sid}/frames")
    def list_frames(sid: str):
        session = manager.get(sid)
        return [
            {
                "frame_id": p.frame_id,
                "angle_rad": p.angle_rad,
                "rows": p.frame_dims[0],
                "cols": p.frame_dims[1],
            }
            for p in session.case.frames.poses
        ]

    @app.get("/api/sessions/{sid}/frames/{frame_id}/image.png")
    def frame_image(sid: str, frame_id: int):
        session = manager.get(sid)
        try:
            session.case.frames.pose(frame_id)
        except Exception:
            raise ServiceError(404, "unknown_frame", f"no frame {frame_id}")
        return Response(manager.frame_png(session, frame_id), media_type="image/png")

    @app.get("/api/sessions/{sid}/frames/{frame_id}/image.json")
    def frame_image_json(sid: str, frame_id: int):
        session = manager.get(sid)
        try:
            pose = session.case.frames.pose(frame_id)
        except Exception:
            raise ServiceError(404, "unknown_frame", f"no frame {frame_id}")
        img = frame_image_u8(session.case, pose)
        return {
            "frame_id": frame_id,
            "rows": int(img.shape[0]),
            "cols": int(img.shape[1]),
            "values": img.tolist(),
        }

    @app.get("/api/sessions/{sid}/frames/{frame_id}/contours")
    def frame_contours(sid: str, frame_id: int):
        session = manager.get(sid)
        try:
            return session.frame_contours(frame_id)
        except ValueError:
            raise ServiceError(404, "unknown_frame", f"no frame {frame_id}")

    @app.post("/api/sessions/{sid}/edits")
    def submit_edit(sid: str, body: dict):
        session = manager.get(sid)
        if not session.lock.acquire(blocking=False):
            raise ServiceError(409, "conflict", "another edit is in flight")
        try:
            frame_id = body.get("frame_id")
            path = body.get("path")
            if frame_id is None or not isinstance(path, list):
                raise ServiceError(422, "invalid_scribble",
                                   "body must include frame_id and path")
            out = session.submit(int(frame_id), path)
            manager.persist(session)
            return out
        finally:
            session.lock.release()

    @app.post("/api/sessions/{sid}/undo")
    def undo(sid: str):
        session = manager.get(sid)
        if not session.lock.acquire(blocking=False):
            raise ServiceError(409, "conflict", "another edit is in flight")
        try:
            out = session.undo()
            manager.persist(session)
            return out
        finally:
            session.lock.release()

    @app.get("/api/sessions/{sid}/metrics")
    def metrics(sid: str):
        session = manager.get(sid)
        return {
            "t": session.t,
            "history": [e.report.to_json() for e in session.history],
        }

    @app.get("/api/sessions/{sid}/mask.bin")
    def export_mask(sid: str):
        session = manager.get(sid)
        return Response(session.export_bytes(), media_type="application/octet-stream")

    @app.get("/api/sessions/{sid}/log")
    def scribble_log(sid: str):
        session = manager.get(sid)
        return session.scribble_log()

    if frontend_dir and os.path.isdir(frontend_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    return app


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def replay_session_log(log_path: str, case_dir: str | None = None,
                       checkpoint_dir: str | None = None) -> dict:
    """Re-submit a recorded scribble log into a fresh in-memory session and
    return the resulting metrics plus a digest of the final mask."""
    with open(log_path) as fh:
        log = json.load(fh)
    case_path = log["case"] if case_dir is None else os.path.join(case_dir, log["case"])
    if case_dir is None and not os.path.isdir(case_path):
        raise FileNotFoundError(f"case directory not found: {case_path}")
    case = load_case(case_path)
    engine_id = log.get("engine", "geometric")
    if engine_id == "geometric":
        engine = GeometricEditor()
    else:
        if not checkpoint_dir:
            raise FileNotFoundError(f"engine {engine_id!r} needs a checkpoint directory")
        model, _ = load_checkpoint(os.path.join(checkpoint_dir, engine_id))
        engine = CnnEditor(model, engine_id)
    session = Session(
        session_id="replay",
        case_id=log["case"],
        case=case,
        engine_id=engine_id,
        engine=engine,
        sigma_enc=float(log.get("sigma_enc", DESK_SIGMA)),
        sigma_edit=float(log.get("sigma_edit", DESK_SIGMA)),
    )
    responses = [session.submit(e["frame_id"], e["path"]) for e in log["edits"]]
    return {
        "case": log["case"],
        "engine": engine_id,
        "iterations": len(responses),
        "final_mask_sha256": hashlib.sha256(session.export_bytes()).hexdigest(),
        "metrics": [r["metrics"] for r in responses],
    }
