"""HTTP/WebSocket service around a SimSession.

Single-session, single-writer: one lock guards the sampler and render path,
WS clients stream frames produced under it, and basis refits run on a
background thread while frames keep flowing under the previous config
snapshot (served stale, flagged `refitting`) until the new basis swaps in.
"""

from __future__ import annotations

import asyncio
import struct
import threading
import time

import numpy as np
from fastapi import FastAPI, Query, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict
from starlette.concurrency import run_in_threadpool

from .config import OpticalConfig
from .errors import FormatError, InvalidArgument
from .images import decode_image, encode_png
from .pipeline import SimSession, basis_compatible, basis_seed
from .psf import p2s_fit

__all__ = ["create_app", "ParamsUpdate"]


class ParamsUpdate(BaseModel):
    """Partial config update; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    aperture_diameter_m: float | None = None
    wavelength_m: float | None = None
    path_length_m: float | None = None
    focal_length_m: float | None = None
    d_over_r0: float | None = None
    cn2: float | None = None
    num_modes: int | None = None
    image_width: int | None = None
    image_height: int | None = None
    scene_width_m: float | None = None
    psf_kernel_px: int | None = None
    phase_grid_px: int | None = None


class Engine:
    """Thread-safe wrapper: active session, pending config, refit worker."""

    def __init__(self, session: SimSession):
        self.session = session
        self.lock = threading.Lock()
        self.refitting = False
        self.pending_config: OpticalConfig | None = None
        self.latest: dict | None = None
        self._events: list[tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = []

    # -- event fanout ------------------------------------------------------

    def subscribe(self, loop: asyncio.AbstractEventLoop) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=16)
        self._events.append((loop, q))
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        self._events = [(l, x) for (l, x) in self._events if x is not q]

    def post_status(self) -> None:
        msg = self.status()
        for loop, q in list(self._events):
            try:
                loop.call_soon_threadsafe(self._offer, q, msg)
            except RuntimeError:
                self.unsubscribe(q)

    @staticmethod
    def _offer(q: asyncio.Queue, msg: dict) -> None:
        if q.full():
            try:
                q.get_nowait()
            except asyncio.QueueEmpty:
                pass
        q.put_nowait(msg)

    def status(self) -> dict:
        stats = self.session.stats()
        return {
            "status": "refitting" if self.refitting else "live",
            "refitting": self.refitting,
            "fps": stats["fps"],
            "frame_counter": stats["frame_counter"],
            "config_hash": stats["config_hash"],
        }

    # -- config and refit ----------------------------------------------------

    def apply_params(self, updates: dict) -> dict:
        """Apply a partial update; cheap changes land now, costly ones refit.

        Returns the acknowledged (target) config plus the refitting flag.
        Frames keep rendering under the previous snapshot until a pending
        refit finishes, then everything swaps atomically.
        """
        with self.lock:
            target = self.session.config.with_updates(**updates)
            sig_basis = self.session.basis_cache.get(
                (target.num_modes, target.psf_kernel_px, target.phase_grid_px)
            )
            ok = sig_basis is not None and basis_compatible(sig_basis, target)
            if ok or target.d_over_r0 == 0:
                if not ok:
                    rng = np.random.Generator(
                        np.random.Philox(key=np.uint64(basis_seed(self.session.seed)))
                    )
                    basis = p2s_fit(target, rng=rng)
                    self.session.config = target
                    self.session.config_epoch += 1
                    self.session.sampler = None
                    self.session.adopt_basis(basis)
                self._swap_to(target)
                acked = target
            else:
                self.pending_config = target
                if not self.refitting:
                    self.refitting = True
                    threading.Thread(target=self._refit_worker, daemon=True).start()
                acked = target
        self.post_status()
        return {**acked.to_dict(), "refitting": self.refitting}

    def _swap_to(self, target: OpticalConfig) -> None:
        if self.session.config != target:
            self.session.config = target
            self.session.config_epoch += 1
            self.session.sampler = None
        if self.session.source is not None and self.session.source.shape[:2] != (
            target.image_height,
            target.image_width,
        ):
            self.session.source = None
            self.session.__post_init__()
        self.pending_config = None

    def _refit_worker(self) -> None:
        while True:
            with self.lock:
                target = self.pending_config
            if target is None:
                break
            rng = np.random.Generator(
                np.random.Philox(key=np.uint64(basis_seed(self.session.seed)))
            )
            basis = p2s_fit(target, rng=rng)
            with self.lock:
                if self.pending_config is not None and self.pending_config != target:
                    continue  # superseded mid-fit; fit the newer target
                self._swap_to(target)
                self.session.adopt_basis(basis)
                self.refitting = False
            self.post_status()
            break

    # -- frames -----------------------------------------------------------

    def produce_frame(self) -> dict:
        with self.lock:
            frame = self.session.next_frame()
            t0 = time.perf_counter()
            png = encode_png(frame.image)
            self.session.perf_ms["encode"] = 1e3 * (time.perf_counter() - t0)
            h, w = frame.image.shape[:2]
            self.latest = {
                "index": self.session.frame_counter,
                "width": w,
                "height": h,
                "png": png,
            }
            return self.latest


def create_app(
    config: OpticalConfig | None = None,
    *,
    seed: int = 0,
    static_dir=None,
) -> FastAPI:
    """Build the service; `static_dir` optionally serves the UI bundle at /."""
    session = SimSession(config=config or OpticalConfig(), seed=seed)
    engine = Engine(session)
    app = FastAPI(title="turbsim", docs_url=None, redoc_url=None)
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        fields = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": fields})

    @app.exception_handler(InvalidArgument)
    async def _invalid_handler(request: Request, exc: InvalidArgument):
        return JSONResponse(status_code=400, content={"errors": [{"message": str(exc)}]})

    class UnknownSession(Exception):
        def __init__(self, sid):
            self.sid = sid

    def _check_session(session_id: str) -> None:
        if session_id != session.session_id:
            raise UnknownSession(session_id)

    @app.exception_handler(UnknownSession)
    async def _unknown_session(request: Request, exc: UnknownSession):
        return JSONResponse(
            status_code=404, content={"errors": [{"message": f"unknown session {exc.sid!r}"}]}
        )

    @app.get("/api/params")
    async def get_params(session_q: str = Query("default", alias="session")):
        _check_session(session_q)
        return {**session.config.to_dict(), "refitting": engine.refitting}

    @app.put("/api/params")
    async def put_params(
        update: ParamsUpdate, session_q: str = Query("default", alias="session")
    ):
        _check_session(session_q)
        fields = {k: v for k, v in update.model_dump().items() if v is not None}
        return await run_in_threadpool(engine.apply_params, fields)

    @app.post("/api/source")
    async def post_source(request: Request):
        data = await request.body()
        try:
            img = decode_image(data)
        except FormatError as exc:
            return JSONResponse(status_code=400, content={"errors": [{"message": str(exc)}]})
        with engine.lock:
            session.set_source(img)
        return {"ok": True, "height": img.shape[0], "width": img.shape[1]}

    @app.get("/api/frame")
    async def get_frame():
        latest = await run_in_threadpool(engine.produce_frame)
        return Response(content=latest["png"], media_type="image/png")

    @app.get("/api/psf-grid")
    async def get_psf_grid(n: int = Query(8, ge=1, le=16)):
        def build():
            with engine.lock:
                return encode_png(session.psf_grid(n))

        png = await run_in_threadpool(build)
        return Response(content=png, media_type="image/png")

    @app.get("/api/displacement")
    async def get_displacement(step: int = Query(16, ge=1, le=128)):
        def build():
            with engine.lock:
                return session.displacement_rows(step)

        return await run_in_threadpool(build)

    @app.get("/api/stats")
    async def get_stats():
        with engine.lock:
            return session.stats()

    @app.websocket("/api/stream")
    async def ws_stream(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                latest = await run_in_threadpool(engine.produce_frame)
                header = struct.pack(
                    "<III", latest["index"], latest["width"], latest["height"]
                )
                await ws.send_bytes(header + latest["png"])
        except (WebSocketDisconnect, RuntimeError):
            return

    @app.websocket("/api/events")
    async def ws_events(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        q = engine.subscribe(loop)
        try:
            await ws.send_json(engine.status())
            while True:
                try:
                    msg = await asyncio.wait_for(q.get(), timeout=1.0)
                except asyncio.TimeoutError:
                    msg = engine.status()
                await ws.send_json(msg)
        except (WebSocketDisconnect, RuntimeError):
            return
        finally:
            engine.unsubscribe(q)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
