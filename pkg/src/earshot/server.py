"""HTTP facade over the session service.

Endpoints (JSON in/out unless noted)::

    POST /v1/sessions                                create + instruction payload
    POST /v1/sessions/{id}/instructions              rater acknowledged the screen
    GET  /v1/sessions/{id}/trial                     current trial (serves = presents)
    POST /v1/sessions/{id}/trials/{tid}/playback     interval events -> coverage status
    POST /v1/sessions/{id}/trials/{tid}/response     submit judgment
    POST /v1/sessions/{id}/complete                  completion code + redirect URL
    GET  /v1/studies/{id}/progress                   operator dashboard counts
    GET  /v1/stimuli/{id}/audio                      audio bytes, Range supported

Configuration comes from one JSON file; EARSHOT_PORT, EARSHOT_DATA_DIR and
EARSHOT_MAC_KEY override the file.  The data directory holds one
subdirectory per study (manifest.json + schedule.json), the audio files the
manifests reference, and the append-only event log.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from starlette.applications import Starlette
from starlette.middleware import Middleware
from starlette.middleware.cors import CORSMiddleware
from starlette.requests import Request
from starlette.responses import JSONResponse, RedirectResponse, Response
from starlette.routing import Mount, Route
from starlette.staticfiles import StaticFiles

from .assignment import TrialSchedule
from .core import EarshotError, Stimulus, Study, load_manifest
from .eventlog import FileEventLog
from .session import ServiceError, SessionService, StudyBundle


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8350
    data_dir: Path = Path("./data")
    mac_key: str = "dev-key"
    operator_token: Optional[str] = None
    coverage_tolerance_ms: int = 250
    min_decision_ms: int = 500
    auto_bind: bool = True
    cors_origins: tuple[str, ...] = ()
    ui_dir: Optional[Path] = None


def load_config(path: Optional[Union[str, Path]] = None) -> ServiceConfig:
    """Read the config file (if any) and apply environment overrides."""
    doc = {}
    if path is not None:
        doc = json.loads(Path(path).read_text())
    cfg = ServiceConfig(
        host=doc.get("host", "127.0.0.1"),
        port=int(doc.get("port", 8350)),
        data_dir=Path(doc.get("data_dir", "./data")),
        mac_key=doc.get("mac_key", "dev-key"),
        operator_token=doc.get("operator_token"),
        coverage_tolerance_ms=int(doc.get("coverage_tolerance_ms", 250)),
        min_decision_ms=int(doc.get("min_decision_ms", 500)),
        auto_bind=bool(doc.get("auto_bind", True)),
        cors_origins=tuple(doc.get("cors_origins", ())),
        ui_dir=Path(doc["ui_dir"]) if doc.get("ui_dir") else None,
    )
    if os.environ.get("EARSHOT_PORT"):
        cfg.port = int(os.environ["EARSHOT_PORT"])
    if os.environ.get("EARSHOT_DATA_DIR"):
        cfg.data_dir = Path(os.environ["EARSHOT_DATA_DIR"])
    if os.environ.get("EARSHOT_MAC_KEY"):
        cfg.mac_key = os.environ["EARSHOT_MAC_KEY"]
    return cfg


def load_study_dir(study_dir: Union[str, Path]) -> StudyBundle:
    """Build a study bundle from ``<dir>/manifest.json`` + ``<dir>/schedule.json``."""
    study_dir = Path(study_dir)
    study, stimuli, report = load_manifest(study_dir / "manifest.json")
    if not report.ok:
        raise EarshotError(
            f"manifest {study_dir / 'manifest.json'} is invalid:\n{report.render()}"
        )
    schedule = TrialSchedule.from_json((study_dir / "schedule.json").read_text())
    return StudyBundle.build(study, stimuli, schedule)


def load_registry(data_dir: Union[str, Path]) -> dict[str, StudyBundle]:
    studies_dir = Path(data_dir) / "studies"
    registry: dict[str, StudyBundle] = {}
    if studies_dir.is_dir():
        for study_dir in sorted(studies_dir.iterdir()):
            if (study_dir / "manifest.json").is_file():
                bundle = load_study_dir(study_dir)
                registry[bundle.study.study_id] = bundle
    return registry


_RANGE_RE = re.compile(r"bytes=(\d*)-(\d*)$")

_AUDIO_TYPES = {
    ".wav": "audio/wav",
    ".flac": "audio/flac",
    ".mp3": "audio/mpeg",
    ".ogg": "audio/ogg",
    ".opus": "audio/opus",
    ".m4a": "audio/mp4",
}


def _serve_file_range(path: Path, range_header: Optional[str]) -> Response:
    data_len = path.stat().st_size
    media_type = _AUDIO_TYPES.get(path.suffix.lower(), "application/octet-stream")
    base_headers = {"Accept-Ranges": "bytes"}
    if not range_header:
        return Response(path.read_bytes(), media_type=media_type, headers=base_headers)
    m = _RANGE_RE.match(range_header.strip())
    start = end = None
    if m and (m.group(1) or m.group(2)):
        if m.group(1):
            start = int(m.group(1))
            end = int(m.group(2)) if m.group(2) else data_len - 1
        else:
            suffix = int(m.group(2))
            start, end = max(0, data_len - suffix), data_len - 1
    if start is None or start >= data_len or (end is not None and end < start):
        return Response(
            status_code=416,
            headers={**base_headers, "Content-Range": f"bytes */{data_len}"},
        )
    end = min(end, data_len - 1)
    with open(path, "rb") as fh:
        fh.seek(start)
        chunk = fh.read(end - start + 1)
    return Response(
        chunk,
        status_code=206,
        media_type=media_type,
        headers={**base_headers, "Content-Range": f"bytes {start}-{end}/{data_len}"},
    )


class BadRequestError(ServiceError):
    status, code = 400, "bad-request"


class AppState:
    def __init__(self, service: SessionService, audio_root: Optional[Path], operator_token: Optional[str]):
        self.service = service
        self.audio_root = audio_root
        self.operator_token = operator_token

    def find_stimulus(self, stimulus_id: str) -> Optional[Stimulus]:
        for bundle in self.service.studies.values():
            st = bundle.stimuli.get(stimulus_id)
            if st is not None:
                return st
        return None


def build_app(
    service: SessionService,
    *,
    audio_root: Optional[Union[str, Path]] = None,
    operator_token: Optional[str] = None,
    cors_origins: tuple[str, ...] = (),
    ui_dir: Optional[Union[str, Path]] = None,
) -> Starlette:
    """Wire a service instance into the HTTP API (tests inject in-memory ones)."""
    state = AppState(service, Path(audio_root) if audio_root else None, operator_token)

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise BadRequestError("request body must be JSON")
        if not isinstance(body, dict):
            raise BadRequestError("request body must be a JSON object")
        return body

    async def create_session(request: Request):
        body = await _json_body(request)
        view = state.service.create_session(
            study_id=str(body.get("study_id", "")),
            rater_token=str(body.get("rater_token", "")),
            participant_id=str(body.get("participant_id", "")),
        )
        return JSONResponse(view, status_code=201)

    async def acknowledge(request: Request):
        view = state.service.acknowledge_instructions(request.path_params["session_id"])
        return JSONResponse(view)

    async def current_trial(request: Request):
        return JSONResponse(state.service.current_trial(request.path_params["session_id"]))

    async def playback(request: Request):
        body = await _json_body(request)
        events = body.get("events", [])
        if not isinstance(events, list):
            raise BadRequestError("events must be a list")
        status = state.service.record_playback(
            request.path_params["session_id"], request.path_params["trial_id"], events
        )
        return JSONResponse(status)

    async def respond(request: Request):
        body = await _json_body(request)
        ack = state.service.submit_response(
            request.path_params["session_id"],
            request.path_params["trial_id"],
            body.get("response", body),
        )
        return JSONResponse(ack)

    async def complete(request: Request):
        return JSONResponse(state.service.complete_session(request.path_params["session_id"]))

    async def progress(request: Request):
        if state.operator_token:
            supplied = request.headers.get("x-operator-token") or request.query_params.get("token")
            if supplied != state.operator_token:
                return JSONResponse({"error": "forbidden", "detail": "operator token required"}, status_code=403)
        return JSONResponse(state.service.study_progress(request.path_params["study_id"]))

    async def audio(request: Request):
        stimulus = state.find_stimulus(request.path_params["stimulus_id"])
        if stimulus is None:
            return JSONResponse({"error": "not-found", "detail": "unknown stimulus"}, status_code=404)
        ref = stimulus.audio_ref
        if ref.startswith(("http://", "https://")):
            return RedirectResponse(ref, status_code=307)
        root = state.audio_root or Path(".")
        path = (root / ref).resolve()
        if root.resolve() not in path.parents and path != root.resolve():
            return JSONResponse({"error": "forbidden", "detail": "audio path escapes data dir"}, status_code=403)
        if not path.is_file():
            return JSONResponse({"error": "not-found", "detail": f"audio file missing: {ref}"}, status_code=404)
        return _serve_file_range(path, request.headers.get("range"))

    async def healthz(request: Request):
        return JSONResponse({"ok": True, "studies": sorted(state.service.studies)})

    routes = [
        Route("/v1/sessions", create_session, methods=["POST"]),
        Route("/v1/sessions/{session_id}/instructions", acknowledge, methods=["POST"]),
        Route("/v1/sessions/{session_id}/trial", current_trial, methods=["GET"]),
        Route("/v1/sessions/{session_id}/trials/{trial_id}/playback", playback, methods=["POST"]),
        Route("/v1/sessions/{session_id}/trials/{trial_id}/response", respond, methods=["POST"]),
        Route("/v1/sessions/{session_id}/complete", complete, methods=["POST"]),
        Route("/v1/studies/{study_id}/progress", progress, methods=["GET"]),
        Route("/v1/stimuli/{stimulus_id}/audio", audio, methods=["GET"]),
        Route("/healthz", healthz, methods=["GET"]),
    ]
    if ui_dir:
        routes.append(Mount("/", app=StaticFiles(directory=str(ui_dir), html=True), name="ui"))

    middleware = []
    if cors_origins:
        middleware.append(
            Middleware(
                CORSMiddleware,
                allow_origins=list(cors_origins),
                allow_methods=["*"],
                allow_headers=["*"],
            )
        )

    async def service_error(request: Request, exc: ServiceError):
        return JSONResponse(exc.payload(), status_code=exc.status)

    return Starlette(
        routes=routes,
        middleware=middleware,
        exception_handlers={ServiceError: service_error},
    )


def create_app(config: ServiceConfig) -> Starlette:
    """Build the production app: load studies, open the durable log, serve."""
    registry = load_registry(config.data_dir)
    log = FileEventLog(config.data_dir / "events.log")
    service = SessionService(
        registry,
        log,
        mac_key=config.mac_key,
        coverage_tolerance_ms=config.coverage_tolerance_ms,
        min_decision_ms=config.min_decision_ms,
        auto_bind=config.auto_bind,
    )
    return build_app(
        service,
        audio_root=config.data_dir,
        operator_token=config.operator_token,
        cors_origins=config.cors_origins,
        ui_dir=config.ui_dir,
    )
