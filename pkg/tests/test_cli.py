"""CLI surface: subcommands, exit codes, JSON round trips, daemon shutdown."""

import json
import signal
import subprocess
import sys
import time

import pytest

from egodb.cli import main
from egodb.datamodel import EpisodeRecord

from conftest import fixture_bytes, make_human_fixture_doc, make_robot_fixture_doc

META = {
    "operator": "op-1", "lab": "lab-a", "task": "fold-clothes", "scene": "kitchen",
    "embodiment": "human", "objects": ["shirt"], "is_eval": False,
    "task_description": "fold the shirt",
}


@pytest.fixture
def env(tmp_path, rng):
    """A store with two uploaded fixtures and an empty registry database."""
    store_dir = tmp_path / "store"
    registry_db = tmp_path / "registry.db"
    raw = tmp_path / "episode.raw"
    raw.write_bytes(fixture_bytes(make_human_fixture_doc(rng, frames=40)))
    meta = tmp_path / "episode.meta.json"
    meta.write_text(json.dumps(META))
    raw2 = tmp_path / "episode2.raw"
    raw2.write_bytes(fixture_bytes(make_robot_fixture_doc(rng, frames=40)))
    meta2 = tmp_path / "episode2.meta.json"
    meta2.write_text(json.dumps({**META, "embodiment": "robot", "robot_name": "arm-1",
                                 "task": "cup-on-saucer"}))
    return {
        "store": str(store_dir),
        "registry": str(registry_db),
        "raw": str(raw),
        "meta": str(meta),
        "raw2": str(raw2),
        "meta2": str(meta2),
        "tmp": tmp_path,
    }


def run_cli(*argv):
    return main(list(argv))


class TestUpload:
    def test_prints_hash(self, env, capsys):
        code = run_cli("upload", "--raw", env["raw"], "--meta", env["meta"],
                       "--store", env["store"], "--nonce", "t1")
        assert code == 0
        out = capsys.readouterr().out.strip()
        assert len(out) == 64
        int(out, 16)

    def test_malformed_meta_exits_2(self, env, capsys):
        bad = env["tmp"] / "bad.json"
        bad.write_text(json.dumps({**META, "lab": ""}))
        code = run_cli("upload", "--raw", env["raw"], "--meta", str(bad),
                       "--store", env["store"])
        assert code == 2
        assert "lab" in capsys.readouterr().err

    def test_unreachable_store_exits_3(self, env, capsys):
        code = run_cli("upload", "--raw", env["raw"], "--meta", env["meta"],
                       "--store", "http://127.0.0.1:1")
        assert code == 3


def seed_two_episodes(env):
    assert run_cli("upload", "--raw", env["raw"], "--meta", env["meta"],
                   "--store", env["store"], "--nonce", "n1") == 0
    assert run_cli("upload", "--raw", env["raw2"], "--meta", env["meta2"],
                   "--store", env["store"], "--nonce", "n2") == 0
    assert run_cli("scan", "--store", env["store"], "--registry", env["registry"]) == 0


class TestScanProcessQuery:
    def test_scan_reports_and_is_idempotent(self, env, capsys):
        seed_two_episodes(env)
        out = capsys.readouterr().out
        assert "registered=2" in out
        code = run_cli("scan", "--store", env["store"], "--registry", env["registry"])
        assert code == 0
        assert "registered=0" in capsys.readouterr().out

    def test_process_round(self, env, capsys):
        seed_two_episodes(env)
        code = run_cli("process", "--registry", env["registry"], "--store", env["store"],
                       "--parallel", "2")
        assert code == 0
        out = capsys.readouterr().out
        assert "planned=2 succeeded=2 failed=0" in out
        # second round plans nothing
        assert run_cli("process", "--registry", env["registry"], "--store", env["store"]) == 0
        assert "planned=0" in capsys.readouterr().out

    def test_poisoned_episode_exits_1(self, env, capsys):
        seed_two_episodes(env)
        # poison one raw blob in place
        from egodb.ingest import LocalFileSystemStore
        from egodb.registry import Registry

        store = LocalFileSystemStore(env["store"])
        registry = Registry(env["registry"])
        record = registry.query()[0]
        aux = registry.get_aux(record.episode_hash)
        store.put(aux.raw_path, b"not a fixture")
        registry.close()
        code = run_cli("process", "--registry", env["registry"], "--store", env["store"])
        assert code == 1
        assert "failed=1" in capsys.readouterr().out

    def test_query_table_and_json(self, env, capsys):
        seed_two_episodes(env)
        capsys.readouterr()
        assert run_cli("query", "--registry", env["registry"], "--task", "fold-clothes") == 0
        out = capsys.readouterr().out
        assert "fold-clothes" in out
        assert "cup-on-saucer" not in out

        assert run_cli("query", "--registry", env["registry"], "--json") == 0
        docs = json.loads(capsys.readouterr().out)
        assert len(docs) == 2
        parsed = [EpisodeRecord.from_dict(d) for d in docs]
        assert {r.task for r in parsed} == {"fold-clothes", "cup-on-saucer"}

    def test_query_no_matches_exits_0(self, env, capsys):
        seed_two_episodes(env)
        capsys.readouterr()
        assert run_cli("query", "--registry", env["registry"], "--task", "nope") == 0
        assert capsys.readouterr().out.strip() == ""


class TestSyncCommand:
    def _config(self, env, n_total, mode="train", val_ratio=0.2, percent=100.0):
        config = {
            "filter": {},
            "cache_dir": str(env["tmp"] / "cache"),
            "parallelism": 2,
            "mode": mode,
            "val_ratio": val_ratio,
            "percent": percent,
            "seed": 7,
        }
        path = env["tmp"] / "sync.json"
        path.write_text(json.dumps(config))
        return str(path)

    def test_sync_train_split_and_rerun(self, env, capsys, rng):
        # ten processed human episodes -> train split of 8
        for i in range(10):
            raw = env["tmp"] / f"e{i}.raw"
            raw.write_bytes(fixture_bytes(make_human_fixture_doc(rng, frames=34)))
            assert run_cli("upload", "--raw", str(raw), "--meta", env["meta"],
                           "--store", env["store"], "--nonce", f"s{i}") == 0
        assert run_cli("scan", "--store", env["store"], "--registry", env["registry"]) == 0
        assert run_cli("process", "--registry", env["registry"], "--store", env["store"],
                       "--parallel", "4") == 0
        capsys.readouterr()

        config = self._config(env, 10, mode="train", val_ratio=0.2)
        assert run_cli("sync", "--config", config, "--registry", env["registry"],
                       "--store", env["store"]) == 0
        out = capsys.readouterr().out
        assert "downloaded=8" in out
        assert "cached=8" in out
        cache = env["tmp"] / "cache"
        assert len(list(cache.iterdir())) == 8

        assert run_cli("sync", "--config", config, "--registry", env["registry"],
                       "--store", env["store"]) == 0
        out = capsys.readouterr().out
        assert "downloaded=0 skipped=8" in out

    def test_percent_mode_rounding(self, env, capsys, rng):
        for i in range(3):
            raw = env["tmp"] / f"p{i}.raw"
            raw.write_bytes(fixture_bytes(make_human_fixture_doc(rng, frames=34)))
            assert run_cli("upload", "--raw", str(raw), "--meta", env["meta"],
                           "--store", env["store"], "--nonce", f"p{i}") == 0
        assert run_cli("scan", "--store", env["store"], "--registry", env["registry"]) == 0
        assert run_cli("process", "--registry", env["registry"], "--store", env["store"]) == 0
        capsys.readouterr()
        config = self._config(env, 3, mode="percent", percent=50.0)
        assert run_cli("sync", "--config", config, "--registry", env["registry"],
                       "--store", env["store"]) == 0
        assert "cached=2" in capsys.readouterr().out  # ceil(1.5)


class TestStatsScoreSelftest:
    def test_stats_table(self, env, capsys):
        seed_two_episodes(env)
        capsys.readouterr()
        assert run_cli("stats", "--registry", env["registry"], "--group-by", "lab") == 0
        out = capsys.readouterr().out
        assert "lab-a" in out

    def test_stats_json_matches_query(self, env, capsys):
        seed_two_episodes(env)
        capsys.readouterr()
        assert run_cli("stats", "--registry", env["registry"], "--group-by", "embodiment",
                       "--json") == 0
        groups = json.loads(capsys.readouterr().out)
        assert {g["value"]: g["episode_count"] for g in groups} == {"human": 1, "robot": 1}

    def test_score(self, capsys):
        assert run_cli("score", "--points", "3", "--max", "4") == 0
        assert capsys.readouterr().out.strip() == "0.75"

    def test_score_bad_max(self, capsys):
        assert run_cli("score", "--points", "3", "--max", "0") == 2

    def test_selftest_align(self, capsys):
        assert run_cli("selftest", "align") == 0
        assert "ok" in capsys.readouterr().out

    def test_selftest_flowmatch(self, capsys):
        assert run_cli("selftest", "flowmatch") == 0
        assert "ok" in capsys.readouterr().out


class TestDaemonSubprocess:
    def test_sigint_clean_exit(self, env, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "egodb.cli", "scan",
             "--store", env["store"], "--registry", env["registry"],
             "--daemon", "--interval", "100ms"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        time.sleep(1.0)
        proc.send_signal(signal.SIGINT)
        out, err = proc.communicate(timeout=10)
        assert proc.returncode == 0
        assert out.count("discovered=") >= 2  # at least two ticks ran
