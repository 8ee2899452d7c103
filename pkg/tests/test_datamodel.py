"""Domain types, metadata validation, episode hashing, canonical container."""

import json
import struct

import numpy as np
import pytest

from egodb.canonical_io import (
    CANONICAL_FORMAT_VERSION,
    decode_canonical,
    encode_canonical,
)
from egodb.datamodel import (
    ActionChunk,
    CanonicalEpisode,
    EpisodeRecord,
    HandTrack,
    Pose6D,
    make_episode_hash,
    validate_metadata,
)
from egodb.errors import (
    InvalidArgumentError,
    InvariantViolationError,
    MalformedHeaderError,
    TruncatedStreamError,
    UnknownVersionError,
)

from conftest import make_record


class TestPose6D:
    def test_construction_renormalizes(self):
        pose = Pose6D(np.array([2.0, 0.0, 0.0, 0.0]), np.zeros(3))
        assert abs(np.linalg.norm(pose.rotation) - 1.0) < 1e-9

    def test_zero_quaternion_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Pose6D(np.zeros(4), np.zeros(3))

    def test_wrong_shapes_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Pose6D(np.ones(3), np.zeros(3))
        with pytest.raises(InvalidArgumentError):
            Pose6D(np.array([1.0, 0, 0, 0]), np.zeros(2))

    def test_immutable_arrays(self):
        pose = Pose6D.identity()
        with pytest.raises(ValueError):
            pose.rotation[0] = 2.0


class TestHandTrack:
    def test_valid_track(self):
        track = HandTrack(np.arange(5) * 10**7, np.zeros((5, 2, 21, 3)))
        assert track.num_frames == 5
        assert track.num_hands == 2

    def test_exactly_21_keypoints(self):
        with pytest.raises(InvariantViolationError):
            HandTrack(np.arange(5) * 10**7, np.zeros((5, 2, 20, 3)))

    def test_strictly_increasing_timestamps(self):
        ts = np.array([0, 10, 10, 20], dtype=np.int64)
        with pytest.raises(InvariantViolationError):
            HandTrack(ts, np.zeros((4, 1, 21, 3)))


class TestActionChunk:
    def test_layout_dim_must_match(self):
        with pytest.raises(InvariantViolationError):
            ActionChunk(np.zeros((4, 5)), ("position",))

    def test_quaternion_columns_must_be_unit(self):
        values = np.zeros((3, 8))
        values[:, 6] = 1.0  # qw = 1 in (x,y,z,qx,qy,qz,qw,grip)
        ActionChunk(values, ("position", "rot_quat", "gripper"))
        values2 = values.copy()
        values2[1, 6] = 0.5
        with pytest.raises(InvariantViolationError):
            ActionChunk(values2, ("position", "rot_quat", "gripper"))

    def test_unknown_layout_kind(self):
        with pytest.raises(InvalidArgumentError):
            ActionChunk(np.zeros((1, 3)), ("velocity",))


class TestValidateMetadata:
    def test_minimal_valid_human_record(self):
        assert validate_metadata(make_record()) == []

    def test_eval_score_without_is_eval(self):
        violations = validate_metadata(make_record(is_eval=False, eval_score=0.5))
        assert any("eval_score without is_eval" in v for v in violations)

    def test_empty_hash(self):
        violations = validate_metadata(make_record(episode_hash=""))
        assert any("empty episode_hash" in v for v in violations)

    def test_robot_name_on_human(self):
        violations = validate_metadata(make_record(robot_name="arm-1"))
        assert any("robot_name" in v for v in violations)

    def test_robot_record_with_name_ok(self):
        record = make_record(embodiment="robot", robot_name="arm-1")
        assert validate_metadata(record) == []

    def test_processed_and_error_exclusive(self):
        record = make_record(processed_path="p/x", processing_error="boom")
        violations = validate_metadata(record)
        assert any("both set" in v for v in violations)

    def test_pure_and_total(self):
        record = make_record(num_frames=-3, embodiment="martian")
        first = validate_metadata(record)
        second = validate_metadata(record)
        assert first == second
        assert len(first) >= 2


class TestEpisodeHash:
    def test_deterministic(self):
        assert make_episode_hash(1234, "n") == make_episode_hash(1234, "n")

    def test_distinct_nonces(self):
        assert make_episode_hash(1234, "a") != make_episode_hash(1234, "b")

    def test_distinct_timestamps(self):
        assert make_episode_hash(1234, "a") != make_episode_hash(1235, "a")

    def test_golden_value(self):
        # frozen output of sha256("1700000000000000000|lab1")
        assert make_episode_hash(1700000000000000000, "lab1") == (
            "d7d9865fd852cb63b72d3eb51f1635bb86c2b39cbc9ec6c8a21e886884c36489"
        )

    def test_format(self):
        digest = make_episode_hash(1700000000000000000, "lab1")
        assert len(digest) == 64
        assert digest == digest.lower()
        int(digest, 16)

    def test_nonpositive_timestamp(self):
        with pytest.raises(InvalidArgumentError):
            make_episode_hash(0, "x")
        with pytest.raises(InvalidArgumentError):
            make_episode_hash(-5, "x")


def _human_episode(rng: np.random.Generator, frames: int = 6) -> CanonicalEpisode:
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (frames, 1))
    return CanonicalEpisode(
        episode_hash="e" * 64,
        embodiment="human",
        fps=30.0,
        chunk_length=4,
        action_dim=6,
        action_layout=("position", "position"),
        timestamps_ns=np.arange(frames) * 33_333_333,
        device_rotations=rot,
        device_translations=rng.standard_normal((frames, 3)),
        action_chunks=rng.standard_normal((frames, 4, 6)),
        hands=rng.standard_normal((frames, 2, 21, 3)),
        raw_digest="ff" * 32,
        processing_version="1",
    )


def _robot_episode(rng: np.random.Generator, frames: int = 5) -> CanonicalEpisode:
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (frames, 1))
    ee_rot = np.tile([0.0, 0.0, 1.0, 0.0], (frames, 2, 1))
    chunks = np.zeros((frames, 3, 16))
    chunks[..., 6] = 1.0   # arm-0 qw
    chunks[..., 14] = 1.0  # arm-1 qw
    return CanonicalEpisode(
        episode_hash="f" * 64,
        embodiment="robot",
        fps=20.0,
        chunk_length=3,
        action_dim=16,
        action_layout=("position", "rot_quat", "gripper") * 2,
        timestamps_ns=np.arange(frames) * 50_000_000 + 1,
        device_rotations=rot,
        device_translations=np.zeros((frames, 3)),
        action_chunks=chunks,
        ee_rotations=ee_rot,
        ee_translations=rng.standard_normal((frames, 2, 3)),
        gripper=rng.random((frames, 2)),
        raw_digest="aa" * 32,
        processing_version="1",
    )


class TestCanonicalContainer:
    def test_round_trip_human(self, rng):
        ep = _human_episode(rng)
        assert decode_canonical(encode_canonical(ep)) == ep

    def test_round_trip_robot(self, rng):
        ep = _robot_episode(rng)
        assert decode_canonical(encode_canonical(ep)) == ep

    def test_round_trip_many_random(self, rng):
        for _ in range(10):
            frames = int(rng.integers(2, 12))
            ep = _human_episode(rng, frames=frames)
            assert decode_canonical(encode_canonical(ep)) == ep
            ep = _robot_episode(rng, frames=frames)
            assert decode_canonical(encode_canonical(ep)) == ep

    def test_truncated_stream(self, rng):
        blob = encode_canonical(_human_episode(rng))
        with pytest.raises(TruncatedStreamError):
            decode_canonical(blob[: len(blob) // 2])
        with pytest.raises(TruncatedStreamError):
            decode_canonical(blob[:4])

    def test_unknown_version(self, rng):
        blob = encode_canonical(_human_episode(rng))
        header_len = struct.unpack_from("<Q", blob, 0)[0]
        header = json.loads(blob[8 : 8 + header_len])
        header["format"] = "egoverse-canonical/999"
        patched = json.dumps(header).encode()
        blob2 = struct.pack("<Q", len(patched)) + patched + blob[8 + header_len :]
        with pytest.raises(UnknownVersionError):
            decode_canonical(blob2)

    def test_malformed_header(self):
        junk = b"not json at all"
        with pytest.raises(MalformedHeaderError):
            decode_canonical(struct.pack("<Q", len(junk)) + junk)

    def test_invariant_violating_payload(self):
        # hand-assembled container per the documented layout, with 20 keypoints
        frames = 3
        tracks = {
            "timestamps_ns": np.arange(frames, dtype="<i8"),
            "device_rotations": np.tile(np.array([1.0, 0, 0, 0], dtype="<f8"), (frames, 1)),
            "device_translations": np.zeros((frames, 3), dtype="<f8"),
            "hands": np.zeros((frames, 1, 20, 3), dtype="<f8"),
            "action_chunks": np.zeros((frames, 2, 3), dtype="<f8"),
        }
        index, payload, offset = [], b"", 0
        for name, arr in tracks.items():
            raw = arr.tobytes()
            index.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                          "offset": offset, "nbytes": len(raw)})
            payload += raw
            offset += len(raw)
        header = {
            "format": CANONICAL_FORMAT_VERSION,
            "episode_hash": "h" * 64,
            "embodiment": "human",
            "fps": 30.0,
            "chunk_length": 2,
            "action_dim": 3,
            "action_layout": ["position"],
            "num_frames": frames,
            "provenance": {"raw_digest": "", "processing_version": "1"},
            "tracks": index,
        }
        head = json.dumps(header).encode()
        blob = struct.pack("<Q", len(head)) + head + payload
        with pytest.raises(InvariantViolationError):
            decode_canonical(blob)

    def test_record_dict_round_trip(self):
        record = make_record(objects=("cup", "saucer"), num_frames=12)
        assert EpisodeRecord.from_dict(record.to_dict()) == record
