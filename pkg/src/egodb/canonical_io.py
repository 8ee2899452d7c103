"""Canonical episode container: one seekable file per processed episode.

Layout: an 8-byte little-endian header length, a JSON header (format version,
episode fields, and a track index of name/dtype/shape/offset), then the raw
little-endian numeric track bytes. Media blobs are not embedded; the
container references them by digest only.
"""

from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from .datamodel import CanonicalEpisode
from .errors import (
    InvariantViolationError,
    MalformedHeaderError,
    TruncatedStreamError,
    UnknownVersionError,
)

CANONICAL_FORMAT_VERSION = "egoverse-canonical/1"

_LEN_PREFIX = struct.Struct("<Q")

# Track name -> (attribute, dtype). Order fixes the payload layout.
_TRACKS = (
    ("timestamps_ns", "<i8"),
    ("device_rotations", "<f8"),
    ("device_translations", "<f8"),
    ("hands", "<f8"),
    ("ee_rotations", "<f8"),
    ("ee_translations", "<f8"),
    ("gripper", "<f8"),
    ("action_chunks", "<f8"),
)


def encode_canonical(ep: CanonicalEpisode) -> bytes:
    """Serialize a validated CanonicalEpisode to its container bytes."""
    ep.validate()
    chunks: list[bytes] = []
    index = []
    offset = 0
    for name, dtype in _TRACKS:
        arr = getattr(ep, name)
        if arr is None:
            continue
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        index.append({
            "name": name,
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": CANONICAL_FORMAT_VERSION,
        "episode_hash": ep.episode_hash,
        "embodiment": ep.embodiment,
        "fps": ep.fps,
        "chunk_length": ep.chunk_length,
        "action_dim": ep.action_dim,
        "action_layout": list(ep.action_layout),
        "num_frames": ep.num_frames,
        "provenance": {
            "raw_digest": ep.raw_digest,
            "processing_version": ep.processing_version,
        },
        "tracks": index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LEN_PREFIX.pack(len(header_bytes)) + header_bytes + b"".join(chunks)


def decode_canonical(data: bytes) -> CanonicalEpisode:
    """Parse container bytes back into a CanonicalEpisode.

    Raises TruncatedStreamError / UnknownVersionError / MalformedHeaderError /
    InvariantViolationError so callers can tell the failure modes apart.
    """
    if len(data) < _LEN_PREFIX.size:
        raise TruncatedStreamError(
            f"stream holds {len(data)} bytes, shorter than the length prefix"
        )
    (header_len,) = _LEN_PREFIX.unpack_from(data, 0)
    body_start = _LEN_PREFIX.size + header_len
    if len(data) < body_start:
        raise TruncatedStreamError(
            f"declared header of {header_len} bytes exceeds stream length {len(data)}"
        )
    try:
        header = json.loads(data[_LEN_PREFIX.size:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError("header must be a JSON object")
    version = header.get("format")
    if version != CANONICAL_FORMAT_VERSION:
        raise UnknownVersionError(
            f"unsupported container version {version!r}; this build reads "
            f"{CANONICAL_FORMAT_VERSION!r}"
        )

    payload = data[body_start:]
    arrays: dict[str, Optional[np.ndarray]] = {name: None for name, _ in _TRACKS}
    try:
        track_index = header["tracks"]
        for entry in track_index:
            name = entry["name"]
            if name not in arrays:
                raise MalformedHeaderError(f"unknown track {name!r} in index")
            start, nbytes = int(entry["offset"]), int(entry["nbytes"])
            if start < 0 or start + nbytes > len(payload):
                raise TruncatedStreamError(
                    f"track {name!r} needs payload bytes [{start}, {start + nbytes}) "
                    f"but only {len(payload)} are present"
                )
            arr = np.frombuffer(payload, dtype=entry["dtype"], count=nbytes // np.dtype(entry["dtype"]).itemsize, offset=start)
            arrays[name] = arr.reshape(entry["shape"])
        episode = CanonicalEpisode(
            episode_hash=header["episode_hash"],
            embodiment=header["embodiment"],
            fps=float(header["fps"]),
            chunk_length=int(header["chunk_length"]),
            action_dim=int(header["action_dim"]),
            action_layout=tuple(header["action_layout"]),
            timestamps_ns=arrays["timestamps_ns"],
            device_rotations=arrays["device_rotations"],
            device_translations=arrays["device_translations"],
            action_chunks=arrays["action_chunks"],
            hands=arrays["hands"],
            ee_rotations=arrays["ee_rotations"],
            ee_translations=arrays["ee_translations"],
            gripper=arrays["gripper"],
            raw_digest=header.get("provenance", {}).get("raw_digest", ""),
            processing_version=header.get("provenance", {}).get("processing_version", ""),
        )
    except (TruncatedStreamError, MalformedHeaderError, InvariantViolationError):
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"header field missing or malformed: {exc}") from exc
    return episode
