"""Upload client and periodic scan daemon.

Raw episode blobs land in an object store next to a ".meta" JSON sidecar
carrying the collector's annotations; the sidecar is written last so a raw
blob without one is treated as an in-flight upload. A scan walks the store,
registers every complete pair not yet in the registry, and is idempotent
over an unchanged store. The daemon just reruns the scan on an interval.
"""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import secrets
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .datamodel import EpisodeRecord, make_episode_hash, validate_metadata
from .errors import (
    ConflictError,
    NotFoundError,
    ScanBusyError,
    TransportError,
    ValidationError,
)

logger = logging.getLogger(__name__)

# Bit-exact sidecar field set; scanners reject sidecars missing any of these.
SIDECAR_FIELDS = (
    "operator", "lab", "task", "embodiment", "robot_name", "scene", "objects",
    "is_eval", "task_description", "episode_hash", "uploaded_at_ns",
)

RAW_SUFFIX = ".raw"
SIDECAR_SUFFIX = ".raw.meta"


@dataclass(frozen=True)
class ObjectStat:
    """Size plus content digest of one stored object."""

    size: int
    sha256: str


class ObjectStore(abc.ABC):
    """Minimal object-storage surface: put/get/list/head over string keys."""

    @abc.abstractmethod
    def put(self, key: str, data: bytes) -> None: ...

    @abc.abstractmethod
    def get(self, key: str) -> bytes: ...

    @abc.abstractmethod
    def list(self, prefix: str = "") -> list[str]: ...

    @abc.abstractmethod
    def head(self, key: str) -> ObjectStat: ...

    def exists(self, key: str) -> bool:
        try:
            self.head(key)
            return True
        except NotFoundError:
            return False


class LocalFileSystemStore(ObjectStore):
    """Filesystem-backed store; the default desk-scale backend.

    Keys are '/'-separated relative paths under the root. Writes go to a
    temp file in the same directory and are renamed into place, so readers
    never observe partial objects.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        path = (self.root / key).resolve()
        if not str(path).startswith(str(self.root.resolve())):
            raise TransportError(f"key {key!r} escapes the store root")
        return path

    def put(self, key: str, data: bytes) -> None:
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.parent / f".{path.name}.tmp-{secrets.token_hex(4)}"
            tmp.write_bytes(data)
            tmp.replace(path)
        except OSError as exc:
            raise TransportError(f"put {key!r} failed: {exc}", retryable=True) from exc

    def get(self, key: str) -> bytes:
        path = self._path(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"no object at key {key!r}") from None
        except OSError as exc:
            raise TransportError(f"get {key!r} failed: {exc}", retryable=True) from exc

    def list(self, prefix: str = "") -> list[str]:
        out = []
        for path in self.root.rglob("*"):
            if not path.is_file() or path.name.startswith("."):
                continue
            key = path.relative_to(self.root).as_posix()
            if key.startswith(prefix):
                out.append(key)
        return sorted(out)

    def head(self, key: str) -> ObjectStat:
        data = self.get(key)
        return ObjectStat(size=len(data), sha256=hashlib.sha256(data).hexdigest())


class HttpObjectStore(ObjectStore):
    """Client for a remote object server speaking plain put/get/list/head HTTP.

    PUT /key stores bytes, GET /key fetches them, GET /?prefix= lists keys as
    JSON {"keys": [...]}, HEAD /key reports Content-Length and X-Content-Sha256.
    """

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _open(self, req: urllib.request.Request):
        try:
            return urllib.request.urlopen(req, timeout=self.timeout)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFoundError(f"no object at {req.full_url}") from None
            raise TransportError(
                f"object store returned HTTP {exc.code} for {req.full_url}",
                retryable=exc.code >= 500,
            ) from None
        except urllib.error.URLError as exc:
            raise TransportError(f"object store unreachable: {exc.reason}", retryable=True) from None

    def put(self, key: str, data: bytes) -> None:
        req = urllib.request.Request(f"{self.base_url}/{key}", data=data, method="PUT")
        with self._open(req):
            pass

    def get(self, key: str) -> bytes:
        req = urllib.request.Request(f"{self.base_url}/{key}", method="GET")
        with self._open(req) as resp:
            return resp.read()

    def list(self, prefix: str = "") -> list[str]:
        query = urllib.parse.urlencode({"prefix": prefix})
        req = urllib.request.Request(f"{self.base_url}/?{query}", method="GET")
        with self._open(req) as resp:
            return sorted(json.loads(resp.read().decode("utf-8"))["keys"])

    def head(self, key: str) -> ObjectStat:
        req = urllib.request.Request(f"{self.base_url}/{key}", method="HEAD")
        with self._open(req) as resp:
            size = int(resp.headers.get("Content-Length") or 0)
            digest = resp.headers.get("X-Content-Sha256")
        if digest is None:
            digest = hashlib.sha256(self.get(key)).hexdigest()
        return ObjectStat(size=size, sha256=digest)


def open_store(uri: str) -> ObjectStore:
    """file:// paths and bare paths open the filesystem backend; http(s) the remote one."""
    if uri.startswith("http://") or uri.startswith("https://"):
        return HttpObjectStore(uri)
    if uri.startswith("file://"):
        uri = uri[len("file://"):]
    return LocalFileSystemStore(uri)


@dataclass(frozen=True)
class UploadManifest:
    """What one upload produced: the blob pair plus identity and digest."""

    episode_hash: str
    raw_key: str
    sidecar_key: str
    raw_digest: str
    uploaded_at_ns: int


def upload_episode(
    store: ObjectStore,
    raw_bytes: bytes,
    meta: dict,
    *,
    nonce: Optional[str] = None,
    now_ns: Optional[int] = None,
) -> UploadManifest:
    """Write one raw episode blob plus its metadata sidecar.

    meta holds the user-settable record fields. The raw blob is written
    first and the sidecar last, which is the scanners' completeness signal.
    Keys are prefixed YYYY/MM/DD from the upload timestamp so incremental
    listings can scope by date.
    """
    uploaded_at_ns = int(now_ns if now_ns is not None else time.time_ns())
    nonce = nonce if nonce is not None else secrets.token_hex(8)
    episode_hash = make_episode_hash(uploaded_at_ns, nonce)

    record = EpisodeRecord(
        episode_hash=episode_hash,
        operator=meta.get("operator", ""),
        lab=meta.get("lab", ""),
        task=meta.get("task", ""),
        scene=meta.get("scene", ""),
        embodiment=meta.get("embodiment", ""),
        robot_name=meta.get("robot_name"),
        task_description=meta.get("task_description", ""),
        objects=tuple(meta.get("objects", ())),
        is_eval=bool(meta.get("is_eval", False)),
    )
    violations = validate_metadata(record)
    if violations:
        raise ValidationError(violations)

    day = datetime.fromtimestamp(uploaded_at_ns / 1e9, tz=timezone.utc)
    raw_key = f"{day:%Y/%m/%d}/{episode_hash}{RAW_SUFFIX}"
    sidecar_key = raw_key + ".meta"
    sidecar = {
        "operator": record.operator,
        "lab": record.lab,
        "task": record.task,
        "embodiment": record.embodiment,
        "robot_name": record.robot_name,
        "scene": record.scene,
        "objects": list(record.objects),
        "is_eval": record.is_eval,
        "task_description": record.task_description,
        "episode_hash": episode_hash,
        "uploaded_at_ns": uploaded_at_ns,
    }
    store.put(raw_key, raw_bytes)
    store.put(sidecar_key, json.dumps(sidecar, indent=2).encode("utf-8"))
    return UploadManifest(
        episode_hash=episode_hash,
        raw_key=raw_key,
        sidecar_key=sidecar_key,
        raw_digest=hashlib.sha256(raw_bytes).hexdigest(),
        uploaded_at_ns=uploaded_at_ns,
    )


def parse_sidecar(data: bytes) -> tuple[EpisodeRecord, int]:
    """Parse sidecar bytes into a validated record plus its upload timestamp."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError([f"sidecar is not valid JSON: {exc}"]) from exc
    missing = [name for name in SIDECAR_FIELDS if name not in doc]
    if missing:
        raise ValidationError([f"sidecar missing field {name}" for name in missing])
    record = EpisodeRecord(
        episode_hash=doc["episode_hash"],
        operator=doc["operator"],
        lab=doc["lab"],
        task=doc["task"],
        scene=doc["scene"],
        embodiment=doc["embodiment"],
        robot_name=doc["robot_name"],
        task_description=doc["task_description"],
        objects=tuple(doc["objects"] or ()),
        is_eval=bool(doc["is_eval"]),
    )
    violations = validate_metadata(record)
    if violations:
        raise ValidationError(violations)
    return record, int(doc["uploaded_at_ns"])


@dataclass
class ScanReport:
    """Outcome of one store scan."""

    discovered: int = 0
    registered: int = 0
    skipped_incomplete: int = 0
    conflicts: int = 0
    conflict_keys: list = field(default_factory=list)
    started_at_ns: int = 0

    def as_line(self) -> str:
        return (
            f"discovered={self.discovered} registered={self.registered} "
            f"skipped={self.skipped_incomplete} conflicts={self.conflicts}"
        )


_scan_lock = threading.Lock()


def scan_once(store: ObjectStore, registry) -> ScanReport:
    """Register every complete (raw + sidecar) pair the registry has not seen.

    Idempotent: a second scan over an unchanged store registers nothing.
    Incomplete pairs are counted and left alone; unreadable or conflicting
    sidecars are counted as conflicts with their key recorded, and the scan
    continues. Single-flight per process: a concurrent call raises
    ScanBusyError.
    """
    if not _scan_lock.acquire(blocking=False):
        raise ScanBusyError("a scan is already running in this process")
    try:
        report = ScanReport(started_at_ns=time.time_ns())
        keys = set(store.list())
        raw_keys = sorted(k for k in keys if k.endswith(RAW_SUFFIX))
        known = {r.episode_hash for r in registry.query(include_deleted=True)}
        report.discovered = len(raw_keys)
        for raw_key in raw_keys:
            sidecar_key = raw_key + ".meta"
            if sidecar_key not in keys:
                report.skipped_incomplete += 1
                continue
            try:
                record, uploaded_at_ns = parse_sidecar(store.get(sidecar_key))
            except (ValidationError, NotFoundError, TransportError) as exc:
                report.conflicts += 1
                report.conflict_keys.append((sidecar_key, str(exc)))
                continue
            already_known = record.episode_hash in known
            try:
                # idempotent for identical content; conflicting content raises
                registry.register(record, raw_path=raw_key, uploaded_at_ns=uploaded_at_ns)
            except (ConflictError, ValidationError) as exc:
                report.conflicts += 1
                report.conflict_keys.append((sidecar_key, str(exc)))
                continue
            if not already_known:
                known.add(record.episode_hash)
                report.registered += 1
        return report
    finally:
        _scan_lock.release()


def run_daemon(
    store: ObjectStore,
    registry,
    interval_seconds: float,
    stop: Optional[threading.Event] = None,
    on_report: Optional[Callable[[ScanReport], None]] = None,
) -> list[ScanReport]:
    """Scan on a fixed interval until the stop event fires.

    Scans never overlap (the loop is sequential) and a failing scan is
    logged and retried on the next tick rather than killing the daemon.
    Returns the reports gathered before shutdown.
    """
    if interval_seconds <= 0:
        raise ValueError(f"interval_seconds must be positive, got {interval_seconds}")
    stop = stop if stop is not None else threading.Event()
    reports: list[ScanReport] = []
    while not stop.is_set():
        try:
            report = scan_once(store, registry)
            reports.append(report)
            logger.info("scan: %s", report.as_line())
            if on_report is not None:
                on_report(report)
        except Exception as exc:
            logger.warning("scan failed, retrying next tick: %s", exc)
        if stop.wait(interval_seconds):
            break
    return reports
