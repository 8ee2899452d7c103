"""HTTP surface for the registry: a threaded server and a drop-in client.

Server endpoints (JSON bodies throughout):

    POST  /episodes                      register; 201 created, 200 idempotent
    GET   /episodes?<filter params>      query; add include_deleted=true to widen
    PATCH /episodes/{hash}/processing    processing outcome
    PATCH /episodes/{hash}/deleted       soft delete
    PATCH /episodes/{hash}/eval          evaluation outcome
    GET   /stats?group_by=lab            growth stats
    GET   /episodes/{hash}/preview       preview frame manifest
    GET   /episodes/{hash}/preview/{i}   one preview frame (PPM bytes)

Status codes: 200/201 success, 400 validation/argument, 401 bad token,
404 not found, 409 conflict. When the server is started with a bearer token
every request must carry "Authorization: Bearer <token>".

RegistryClient exposes the same method surface as Registry, so ingest,
pipeline, and syncset code can run against either transparently.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .datamodel import EpisodeRecord
from .errors import (
    ConflictError,
    EgodbError,
    InvalidArgumentError,
    NotFoundError,
    PreconditionError,
    TransportError,
    ValidationError,
)
from .registry import EpisodeAux, EpisodeFilter, GroupStats, Registry

_ERROR_KINDS = {
    "validation": ValidationError,
    "invalid_argument": InvalidArgumentError,
    "not_found": NotFoundError,
    "conflict": ConflictError,
    "precondition": PreconditionError,
}


def _error_payload(exc: Exception) -> tuple[int, dict]:
    if isinstance(exc, ValidationError):
        return 400, {"kind": "validation", "error": str(exc), "violations": exc.violations}
    if isinstance(exc, InvalidArgumentError):
        return 400, {"kind": "invalid_argument", "error": str(exc)}
    if isinstance(exc, PreconditionError):
        return 400, {"kind": "precondition", "error": str(exc)}
    if isinstance(exc, NotFoundError):
        return 404, {"kind": "not_found", "error": str(exc)}
    if isinstance(exc, ConflictError):
        return 409, {"kind": "conflict", "error": str(exc)}
    return 500, {"kind": "internal", "error": str(exc)}


def _record_json(registry: Registry, record: EpisodeRecord) -> dict:
    doc = record.to_dict()
    aux = registry.get_aux(record.episode_hash)
    doc["uploaded_at_ns"] = aux.uploaded_at_ns
    doc["raw_path"] = aux.raw_path
    doc["processing_attempts"] = aux.processing_attempts
    return doc


class _Handler(BaseHTTPRequestHandler):
    server_version = "egodb-registry/0.1"

    # set by RegistryServer
    registry: Registry = None
    store = None
    token: Optional[str] = None

    def log_message(self, fmt, *args):  # silence default stderr chatter
        pass

    # -- plumbing ----------------------------------------------------------

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"request body is not valid JSON: {exc}") from exc

    def _authorized(self) -> bool:
        if self.token is None:
            return True
        header = self.headers.get("Authorization", "")
        return header == f"Bearer {self.token}"

    def _dispatch(self, method: str) -> None:
        if not self._authorized():
            self._send_json(401, {"kind": "unauthorized", "error": "bad or missing bearer token"})
            return
        parsed = urllib.parse.urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        params = {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}
        try:
            handler = self._route(method, parts)
            if handler is None:
                self._send_json(404, {"kind": "not_found", "error": f"no route for {method} {parsed.path}"})
                return
            handler(parts, params)
        except EgodbError as exc:
            status, payload = _error_payload(exc)
            self._send_json(status, payload)
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"kind": "internal", "error": str(exc)})

    def _route(self, method: str, parts: list[str]):
        if method == "POST" and parts == ["episodes"]:
            return self._post_episode
        if method == "GET" and parts == ["episodes"]:
            return self._get_episodes
        if method == "GET" and parts == ["stats"]:
            return self._get_stats
        if method == "PATCH" and len(parts) == 3 and parts[0] == "episodes":
            if parts[2] in ("processing", "deleted", "eval"):
                return self._patch_episode
        if method == "GET" and len(parts) >= 3 and parts[0] == "episodes" and parts[2] == "preview":
            return self._get_preview
        return None

    # -- routes ------------------------------------------------------------

    def _post_episode(self, parts, params) -> None:
        body = self._read_body()
        raw_path = body.pop("raw_path", None)
        uploaded_at_ns = body.pop("uploaded_at_ns", None)
        body.pop("processing_attempts", None)
        try:
            record = EpisodeRecord.from_dict(body)
        except TypeError as exc:
            raise InvalidArgumentError(f"bad episode record: {exc}") from exc
        existed = self.registry.get(record.episode_hash) is not None
        self.registry.register(record, raw_path=raw_path, uploaded_at_ns=uploaded_at_ns)
        self._send_json(200 if existed else 201, {"episode_hash": record.episode_hash})

    def _get_episodes(self, parts, params) -> None:
        include_deleted = params.pop("include_deleted", "false").lower() == "true"
        flt = EpisodeFilter.from_params(params)
        records = self.registry.query(flt, include_deleted=include_deleted)
        self._send_json(200, {"episodes": [_record_json(self.registry, r) for r in records]})

    def _get_stats(self, parts, params) -> None:
        group_by = params.get("group_by", "lab")
        groups = self.registry.stats(group_by)
        self._send_json(200, {
            "group_by": group_by,
            "groups": [
                {"value": g.value, "episode_count": g.episode_count, "total_frames": g.total_frames}
                for g in groups
            ],
        })

    def _patch_episode(self, parts, params) -> None:
        episode_hash, action = parts[1], parts[2]
        body = self._read_body()
        if action == "processing":
            record = self.registry.update_processing(
                episode_hash,
                processed_path=body.get("processed_path"),
                num_frames=body.get("num_frames"),
                mp4_path=body.get("mp4_path"),
                processing_error=body.get("processing_error"),
            )
        elif action == "deleted":
            record = self.registry.mark_deleted(episode_hash)
        else:
            if "eval_score" not in body or "eval_success" not in body:
                raise InvalidArgumentError("eval update requires eval_score and eval_success")
            record = self.registry.record_eval(
                episode_hash, float(body["eval_score"]), bool(body["eval_success"])
            )
        self._send_json(200, _record_json(self.registry, record))

    def _get_preview(self, parts, params) -> None:
        episode_hash = parts[1]
        record = self.registry.get(episode_hash)
        if record is None:
            raise NotFoundError(f"episode {episode_hash} is not registered")
        if self.store is None or not record.mp4_path:
            raise NotFoundError(f"no preview available for {episode_hash}")
        prefix = record.mp4_path.rstrip("/") + "/"
        frames = sorted(
            k for k in self.store.list(prefix) if k.rsplit("/", 1)[-1].startswith("preview_")
        )
        if len(parts) == 3:
            self._send_json(200, {"episode_hash": episode_hash, "frames": len(frames)})
            return
        try:
            index = int(parts[3])
            key = frames[index]
        except (ValueError, IndexError):
            raise NotFoundError(f"preview frame {parts[3]} out of range") from None
        self._send_bytes(200, self.store.get(key), "image/x-portable-pixmap")

    # -- verbs ---------------------------------------------------------------

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_OPTIONS(self):
        self._send_bytes(204, b"", "text/plain")


class RegistryServer:
    """Serves a Registry over HTTP on a background thread."""

    def __init__(self, registry: Registry, host: str = "127.0.0.1", port: int = 0,
                 token: Optional[str] = None, store=None):
        handler = type("BoundHandler", (_Handler,), {
            "registry": registry,
            "store": store,
            "token": token,
        })
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "RegistryServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class RegistryClient:
    """Registry-compatible client for a remote registry server."""

    def __init__(self, base_url: str, token: Optional[str] = None, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, body: Optional[dict] = None,
                 params: Optional[dict] = None) -> dict:
        url = self.base_url + path
        if params:
            url += "?" + urllib.parse.urlencode(params)
        data = None if body is None else json.dumps(body).encode("utf-8")
        req = urllib.request.Request(url, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read().decode("utf-8"))
            except Exception:
                payload = {"kind": "internal", "error": f"HTTP {exc.code}"}
            kind = payload.get("kind", "internal")
            if kind == "validation":
                raise ValidationError(payload.get("violations", [payload.get("error", "")])) from None
            exc_cls = _ERROR_KINDS.get(kind)
            if exc_cls is not None:
                raise exc_cls(payload.get("error", "")) from None
            raise TransportError(
                f"registry returned HTTP {exc.code}: {payload.get('error', '')}",
                retryable=exc.code >= 500,
            ) from None
        except urllib.error.URLError as exc:
            raise TransportError(f"registry unreachable: {exc.reason}", retryable=True) from None

    # -- Registry surface ----------------------------------------------------

    def register(self, record: EpisodeRecord, *, raw_path: Optional[str] = None,
                 uploaded_at_ns: Optional[int] = None) -> str:
        body = record.to_dict()
        if raw_path is not None:
            body["raw_path"] = raw_path
        if uploaded_at_ns is not None:
            body["uploaded_at_ns"] = uploaded_at_ns
        return self._request("POST", "/episodes", body=body)["episode_hash"]

    def query(self, flt: EpisodeFilter = EpisodeFilter(),
              include_deleted: bool = False) -> list[EpisodeRecord]:
        params = flt.to_params()
        if include_deleted:
            params["include_deleted"] = "true"
        payload = self._request("GET", "/episodes", params=params)
        return [EpisodeRecord.from_dict(doc) for doc in payload["episodes"]]

    def _query_docs(self, include_deleted: bool = True) -> list[dict]:
        params = {"include_deleted": "true"} if include_deleted else {}
        return self._request("GET", "/episodes", params=params)["episodes"]

    def get(self, episode_hash: str) -> Optional[EpisodeRecord]:
        for doc in self._query_docs():
            if doc["episode_hash"] == episode_hash:
                return EpisodeRecord.from_dict(doc)
        return None

    def get_aux(self, episode_hash: str) -> EpisodeAux:
        for doc in self._query_docs():
            if doc["episode_hash"] == episode_hash:
                return EpisodeAux(
                    raw_path=doc.get("raw_path"),
                    processing_attempts=doc.get("processing_attempts", 0),
                    uploaded_at_ns=doc.get("uploaded_at_ns"),
                )
        raise NotFoundError(f"episode {episode_hash} is not registered")

    def update_processing(self, episode_hash: str, *, processed_path: Optional[str] = None,
                          num_frames: Optional[int] = None, mp4_path: Optional[str] = None,
                          processing_error: Optional[str] = None) -> EpisodeRecord:
        body = {}
        if processed_path is not None:
            body["processed_path"] = processed_path
        if num_frames is not None:
            body["num_frames"] = num_frames
        if mp4_path is not None:
            body["mp4_path"] = mp4_path
        if processing_error is not None:
            body["processing_error"] = processing_error
        doc = self._request("PATCH", f"/episodes/{episode_hash}/processing", body=body)
        return EpisodeRecord.from_dict(doc)

    def mark_deleted(self, episode_hash: str) -> EpisodeRecord:
        doc = self._request("PATCH", f"/episodes/{episode_hash}/deleted", body={})
        return EpisodeRecord.from_dict(doc)

    def record_eval(self, episode_hash: str, eval_score: float,
                    eval_success: bool) -> EpisodeRecord:
        doc = self._request(
            "PATCH", f"/episodes/{episode_hash}/eval",
            body={"eval_score": eval_score, "eval_success": eval_success},
        )
        return EpisodeRecord.from_dict(doc)

    def stats(self, group_by: str) -> list[GroupStats]:
        payload = self._request("GET", "/stats", params={"group_by": group_by})
        return [
            GroupStats(value=g["value"], episode_count=g["episode_count"],
                       total_frames=g["total_frames"])
            for g in payload["groups"]
        ]


def open_registry(uri: str, token: Optional[str] = None):
    """Open a registry from a URI: http(s):// for a server, anything else local.

    file:// paths and bare paths open the embedded store; ":memory:" gives a
    fresh in-process registry.
    """
    if uri.startswith("http://") or uri.startswith("https://"):
        return RegistryClient(uri, token=token)
    if uri.startswith("file://"):
        uri = uri[len("file://"):]
    return Registry(uri)
