"""Queryable episode-metadata store backed by embedded SQLite.

One row per episode, keyed by episode_hash. Writes are serialized behind a
process lock and each single-record update runs in its own transaction, so
readers always see a consistent snapshot of any record. Auxiliary columns
(raw_path, processing_attempts, uploaded_at_ns) support the processing
pipeline and growth tracking without widening the EpisodeRecord schema.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .datamodel import EpisodeRecord, validate_metadata
from .errors import (
    ConflictError,
    InvalidArgumentError,
    NotFoundError,
    PreconditionError,
    ValidationError,
)

STATS_GROUP_FIELDS = ("lab", "task", "embodiment", "scene", "operator")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS episodes (
    episode_hash        TEXT PRIMARY KEY,
    operator            TEXT NOT NULL,
    lab                 TEXT NOT NULL,
    task                TEXT NOT NULL,
    scene               TEXT NOT NULL,
    embodiment          TEXT NOT NULL,
    robot_name          TEXT,
    task_description    TEXT NOT NULL DEFAULT '',
    objects             TEXT NOT NULL DEFAULT '[]',
    num_frames          INTEGER,
    processed_path      TEXT,
    mp4_path            TEXT,
    processing_error    TEXT,
    is_deleted          INTEGER NOT NULL DEFAULT 0,
    is_eval             INTEGER NOT NULL DEFAULT 0,
    eval_score          REAL,
    eval_success        INTEGER,
    raw_path            TEXT,
    processing_attempts INTEGER NOT NULL DEFAULT 0,
    uploaded_at_ns      INTEGER
);
"""


@dataclass(frozen=True)
class EpisodeFilter:
    """Conjunctive constraints over registry rows; an empty filter matches all."""

    operator: Optional[str] = None
    lab: Optional[str] = None
    task: Optional[str] = None
    scene: Optional[str] = None
    embodiment: Optional[str] = None
    robot_name: Optional[str] = None
    is_deleted: Optional[bool] = None
    is_eval: Optional[bool] = None
    has_processed_path: Optional[bool] = None
    has_processing_error: Optional[bool] = None
    task_description_contains: Optional[str] = None

    def to_params(self) -> dict:
        """Flat string dict for HTTP query strings; omits unset constraints."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = str(value).lower() if isinstance(value, bool) else str(value)
        return out

    @classmethod
    def from_params(cls, params: dict) -> "EpisodeFilter":
        kwargs = {}
        bool_fields = {"is_deleted", "is_eval", "has_processed_path", "has_processing_error"}
        for f in fields(cls):
            if f.name not in params:
                continue
            raw = params[f.name]
            if f.name in bool_fields:
                if isinstance(raw, bool):
                    kwargs[f.name] = raw
                else:
                    lowered = str(raw).lower()
                    if lowered not in ("true", "false"):
                        raise InvalidArgumentError(f"{f.name} must be true or false, got {raw!r}")
                    kwargs[f.name] = lowered == "true"
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


@dataclass(frozen=True)
class GroupStats:
    """One stats row: a group value, its live episode count, and summed frames."""

    value: str
    episode_count: int
    total_frames: int


@dataclass(frozen=True)
class EpisodeAux:
    """Registry-side bookkeeping that is not part of the episode schema."""

    raw_path: Optional[str]
    processing_attempts: int
    uploaded_at_ns: Optional[int]


def _row_to_record(row: sqlite3.Row) -> EpisodeRecord:
    return EpisodeRecord(
        episode_hash=row["episode_hash"],
        operator=row["operator"],
        lab=row["lab"],
        task=row["task"],
        scene=row["scene"],
        embodiment=row["embodiment"],
        robot_name=row["robot_name"],
        task_description=row["task_description"],
        objects=tuple(json.loads(row["objects"])),
        num_frames=row["num_frames"],
        processed_path=row["processed_path"],
        mp4_path=row["mp4_path"],
        processing_error=row["processing_error"],
        is_deleted=bool(row["is_deleted"]),
        is_eval=bool(row["is_eval"]),
        eval_score=row["eval_score"],
        eval_success=None if row["eval_success"] is None else bool(row["eval_success"]),
    )


class Registry:
    """Episode metadata store over a single SQLite database (file or memory)."""

    def __init__(self, path: str = ":memory:"):
        if path not in (":memory:",):
            Path(path).parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock, self._conn:
            self._conn.execute(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- writes ------------------------------------------------------------

    def register(
        self,
        record: EpisodeRecord,
        *,
        raw_path: Optional[str] = None,
        uploaded_at_ns: Optional[int] = None,
    ) -> str:
        """Persist a new episode; idempotent for byte-identical re-registration.

        A hash collision with differing user-settable content raises
        ConflictError; an invalid record raises ValidationError.
        """
        violations = validate_metadata(record)
        if violations:
            raise ValidationError(violations)
        with self._lock, self._conn:
            existing = self._conn.execute(
                "SELECT * FROM episodes WHERE episode_hash = ?", (record.episode_hash,)
            ).fetchone()
            if existing is not None:
                if _row_to_record(existing).user_settable_view() != record.user_settable_view():
                    raise ConflictError(
                        f"episode {record.episode_hash} already registered with different content"
                    )
                return record.episode_hash
            self._conn.execute(
                """
                INSERT INTO episodes (
                    episode_hash, operator, lab, task, scene, embodiment, robot_name,
                    task_description, objects, num_frames, processed_path, mp4_path,
                    processing_error, is_deleted, is_eval, eval_score, eval_success,
                    raw_path, processing_attempts, uploaded_at_ns
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, 0, ?)
                """,
                (
                    record.episode_hash, record.operator, record.lab, record.task,
                    record.scene, record.embodiment, record.robot_name,
                    record.task_description, json.dumps(list(record.objects)),
                    record.num_frames, record.processed_path, record.mp4_path,
                    record.processing_error, int(record.is_deleted), int(record.is_eval),
                    record.eval_score,
                    None if record.eval_success is None else int(record.eval_success),
                    raw_path, uploaded_at_ns,
                ),
            )
        return record.episode_hash

    def update_processing(
        self,
        episode_hash: str,
        *,
        processed_path: Optional[str] = None,
        num_frames: Optional[int] = None,
        mp4_path: Optional[str] = None,
        processing_error: Optional[str] = None,
    ) -> EpisodeRecord:
        """Record one processing outcome: success fields or an error, never both.

        A success clears any prior error; an error clears any prior success
        fields. Each call bumps the processing attempt counter.
        """
        success = processed_path is not None
        failure = processing_error is not None
        if success == failure:
            raise InvalidArgumentError(
                "exactly one of processed_path or processing_error must be set"
            )
        if failure and (num_frames is not None or mp4_path is not None):
            raise InvalidArgumentError("success fields cannot accompany processing_error")
        with self._lock, self._conn:
            self._require(episode_hash)
            if success:
                self._conn.execute(
                    """
                    UPDATE episodes SET processed_path = ?, num_frames = ?, mp4_path = ?,
                        processing_error = NULL,
                        processing_attempts = processing_attempts + 1
                    WHERE episode_hash = ?
                    """,
                    (processed_path, num_frames, mp4_path, episode_hash),
                )
            else:
                self._conn.execute(
                    """
                    UPDATE episodes SET processing_error = ?, processed_path = NULL,
                        num_frames = NULL, mp4_path = NULL,
                        processing_attempts = processing_attempts + 1
                    WHERE episode_hash = ?
                    """,
                    (processing_error, episode_hash),
                )
        return self.get(episode_hash)

    def mark_deleted(self, episode_hash: str) -> EpisodeRecord:
        """Soft-delete: sets the flag, never removes blobs. Idempotent."""
        with self._lock, self._conn:
            self._require(episode_hash)
            self._conn.execute(
                "UPDATE episodes SET is_deleted = 1 WHERE episode_hash = ?", (episode_hash,)
            )
        return self.get(episode_hash)

    def record_eval(self, episode_hash: str, eval_score: float, eval_success: bool) -> EpisodeRecord:
        """Store an evaluation outcome on an is_eval episode."""
        with self._lock, self._conn:
            row = self._require(episode_hash)
            if not row["is_eval"]:
                raise PreconditionError(
                    f"episode {episode_hash} is not an evaluation episode"
                )
            self._conn.execute(
                "UPDATE episodes SET eval_score = ?, eval_success = ? WHERE episode_hash = ?",
                (float(eval_score), int(bool(eval_success)), episode_hash),
            )
        return self.get(episode_hash)

    # -- reads -------------------------------------------------------------

    def get(self, episode_hash: str) -> Optional[EpisodeRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM episodes WHERE episode_hash = ?", (episode_hash,)
            ).fetchone()
        return None if row is None else _row_to_record(row)

    def get_aux(self, episode_hash: str) -> EpisodeAux:
        with self._lock:
            row = self._require(episode_hash)
        return EpisodeAux(
            raw_path=row["raw_path"],
            processing_attempts=row["processing_attempts"],
            uploaded_at_ns=row["uploaded_at_ns"],
        )

    def query(
        self,
        flt: EpisodeFilter = EpisodeFilter(),
        include_deleted: bool = False,
    ) -> list[EpisodeRecord]:
        """All records matching every filter constraint, ordered by (lab, task, hash).

        Deleted rows are excluded unless include_deleted is set; the filter's
        own is_deleted flag is just another conjunct on top of that.
        """
        clauses = []
        params: list = []
        for name in ("operator", "lab", "task", "scene", "embodiment", "robot_name"):
            value = getattr(flt, name)
            if value is not None:
                clauses.append(f"{name} = ?")
                params.append(value)
        for name in ("is_deleted", "is_eval"):
            value = getattr(flt, name)
            if value is not None:
                clauses.append(f"{name} = ?")
                params.append(int(value))
        if flt.has_processed_path is not None:
            clauses.append(
                "processed_path IS NOT NULL" if flt.has_processed_path else "processed_path IS NULL"
            )
        if flt.has_processing_error is not None:
            clauses.append(
                "processing_error IS NOT NULL" if flt.has_processing_error
                else "processing_error IS NULL"
            )
        if flt.task_description_contains is not None:
            clauses.append("instr(task_description, ?) > 0")
            params.append(flt.task_description_contains)
        if not include_deleted:
            clauses.append("is_deleted = 0")
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        sql = f"SELECT * FROM episodes {where} ORDER BY lab, task, episode_hash"
        with self._lock:
            rows = self._conn.execute(sql, params).fetchall()
        return [_row_to_record(r) for r in rows]

    def stats(self, group_by: str) -> list[GroupStats]:
        """Episode counts and total frames per group value, non-deleted rows only."""
        if group_by not in STATS_GROUP_FIELDS:
            raise InvalidArgumentError(
                f"group_by must be one of {STATS_GROUP_FIELDS}, got {group_by!r}"
            )
        sql = (
            f"SELECT {group_by} AS grp, COUNT(*) AS n, "
            f"COALESCE(SUM(num_frames), 0) AS frames "
            f"FROM episodes WHERE is_deleted = 0 GROUP BY {group_by} ORDER BY {group_by}"
        )
        with self._lock:
            rows = self._conn.execute(sql).fetchall()
        return [
            GroupStats(value=str(r["grp"]), episode_count=r["n"], total_frames=r["frames"])
            for r in rows
        ]

    def _require(self, episode_hash: str) -> sqlite3.Row:
        row = self._conn.execute(
            "SELECT * FROM episodes WHERE episode_hash = ?", (episode_hash,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"episode {episode_hash} is not registered")
        return row
