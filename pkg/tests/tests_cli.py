import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.geometry.core import Pose
from src.main import EXIT_IO, EXIT_OK, EXIT_REJECTED, EXIT_USAGE, collect_overrides, parse_args, run
from src.pipeline.convert import MANIFEST_FILE, RESOLVED_CONFIG_FILE
from src.pipeline.episode import Episode, EpisodeConvention
from src.pipeline.raw_format import read_episode, write_episode
from src.settings import load_settings


def with_jump(ep: Episode, k: int) -> Episode:
    frames = list(ep.frames)
    for i in range(k, len(frames)):
        left = frames[i].left
        frames[i] = replace(frames[i], left=Pose(left.rotation, left.translation + np.array([0.5, 0.0, 0.0])))
    return replace(ep, frames=tuple(frames))


@pytest.fixture
def raw_root(tmp_path: Path) -> Path:
    root = tmp_path / "raw"
    assert run(["--seed", "7", "gen", str(root), "--count", "3", "--frames", "60"]) == EXIT_OK
    return root


def test_gen_writes_episodes(raw_root: Path) -> None:
    names = sorted(path.name for path in raw_root.iterdir() if path.is_dir())
    assert names == ["random_walk_000", "random_walk_001", "random_walk_002"]
    assert len(read_episode(raw_root / "random_walk_001")) == 60


def test_gen_is_reproducible(raw_root: Path, tmp_path: Path) -> None:
    again = tmp_path / "again"
    assert run(["--seed", "7", "gen", str(again), "--count", "3", "--frames", "60"]) == EXIT_OK
    for name in ("random_walk_000", "random_walk_002"):
        assert (raw_root / name / "episode.json").read_bytes() == (again / name / "episode.json").read_bytes()


def test_validate_clean_fixtures(raw_root: Path, tmp_path: Path) -> None:
    assert run(["validate", str(raw_root), "--report", str(tmp_path / "report")]) == EXIT_OK
    report = json.loads((tmp_path / "report" / "validation.json").read_text(encoding="utf-8"))
    assert report["accepted"] == 3 and report["rejected"] == 0
    assert {record["verdict"] for record in report["episodes"]} == {"accepted"}


def test_convert_with_corrupted_episode(raw_root: Path, tmp_path: Path) -> None:
    corrupted = raw_root / "random_walk_001"
    write_episode(with_jump(read_episode(corrupted), 30), corrupted)

    output = tmp_path / "out"
    assert run(["convert", str(raw_root), str(output)]) == EXIT_REJECTED
    manifest = json.loads((output / MANIFEST_FILE).read_text(encoding="utf-8"))
    rejected = [record for record in manifest["episodes"] if record["verdict"] == "rejected"]
    assert [record["episode_id"] for record in rejected] == ["random_walk_001"]
    assert rejected[0]["violations"][0]["rule"] == "translation_step"


def test_convert_is_byte_identical(raw_root: Path, tmp_path: Path) -> None:
    for name in ("a", "b"):
        assert run(["--workers", "2", "convert", str(raw_root), str(tmp_path / name)]) == EXIT_OK
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file():
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()


def test_resolved_config_round_trips(raw_root: Path, tmp_path: Path) -> None:
    output = tmp_path / "out"
    argv = ["--lookback", "30", "--set", "VALIDATION__NONFATAL_RULES=[\"image_skew\"]", "convert", str(raw_root)]
    assert run([*argv, str(output)]) == EXIT_OK

    resolved = load_settings(output / RESOLVED_CONFIG_FILE)
    assert resolved.sparks.lookback == 30
    assert resolved.validation.nonfatal_rules == ["image_skew"]
    manifest = json.loads((output / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert resolved.model_dump(mode="json") == manifest["config"]


def test_config_file_and_flags(raw_root: Path, tmp_path: Path) -> None:
    config = tmp_path / "egokit.env"
    config.write_text("SPARKS__LOOKBACK=50\nSPARKS__CAPACITY=2\n", encoding="utf-8")
    output = tmp_path / "sparks"
    argv = ["--config", str(config), "--capacity", "3", "sparks", str(raw_root / "random_walk_000"), str(output)]
    assert run(argv) == EXIT_OK
    result = json.loads((output / "keyframes.json").read_text(encoding="utf-8"))
    assert result["config"]["sparks"]["lookback"] == 50
    assert result["config"]["sparks"]["capacity"] == 3
    assert len(result["keyframes"]) == 60
    assert all(len(indices) <= 3 for indices in result["keyframes"])


def test_sparks_emits_scores(raw_root: Path, tmp_path: Path) -> None:
    output = tmp_path / "sparks"
    assert run(["sparks", str(raw_root / "random_walk_002"), str(output), "--emit-scores"]) == EXIT_OK
    lines = (output / "scores.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "step\ttau\tJ\tnovelty\trecency\tsmoothness\tadmitted"
    assert len(lines) == 61
    assert lines[1].split("\t")[-1] == "1"


def test_align_command(raw_root: Path, tmp_path: Path) -> None:
    output = tmp_path / "aligned"
    assert run(["align", str(raw_root / "random_walk_000"), str(output)]) == EXIT_OK
    aligned = read_episode(output)
    assert aligned.convention == EpisodeConvention.BASE_FRAME
    assert abs(aligned.frames[0].head.translation[0]) <= 1e-9
    assert run(["align", str(output), str(tmp_path / "twice")]) == EXIT_REJECTED


def test_rollout_from_container(raw_root: Path, tmp_path: Path) -> None:
    converted = tmp_path / "out"
    assert run(["convert", str(raw_root), str(converted)]) == EXIT_OK
    argv = ["--max-steps", "8", "--horizon", "4", "rollout", str(converted / "random_walk_000")]
    for name in ("first", "second"):
        assert run([*argv, str(tmp_path / name), "--chain", "compact_dual_arm"]) == EXIT_OK
    for file in ("meta.json", "rollout.bin", RESOLVED_CONFIG_FILE):
        assert (tmp_path / "first" / file).read_bytes() == (tmp_path / "second" / file).read_bytes()
    meta = json.loads((tmp_path / "first" / "meta.json").read_text(encoding="utf-8"))
    assert meta["step_count"] == 8 and meta["dof"] == 14 and meta["policy"] == "ReplayPolicy"


def test_rollout_from_raw_episode(raw_root: Path, tmp_path: Path) -> None:
    argv = ["--max-steps", "5", "rollout", str(raw_root / "random_walk_001"), str(tmp_path / "log")]
    assert run([*argv, "--policy", "stationary", "--chain", "planar_arm"]) == EXIT_OK
    meta = json.loads((tmp_path / "log" / "meta.json").read_text(encoding="utf-8"))
    assert meta["policy"] == "StationaryPolicy"


def test_unknown_subcommand(capsys: pytest.CaptureFixture[str]) -> None:
    assert run(["juggle"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_help_exits_cleanly() -> None:
    assert run(["--help"]) == EXIT_OK


def test_bad_parameters(raw_root: Path, tmp_path: Path) -> None:
    assert run(["--alpha", "5", "validate", str(raw_root)]) == EXIT_USAGE
    assert run(["--set", "SPARKS__LOOKBACK", "validate", str(raw_root)]) == EXIT_USAGE
    assert run(["--workers", "0", "validate", str(raw_root)]) == EXIT_USAGE
    assert run(["gen", str(tmp_path / "g"), "--count", "0"]) == EXIT_USAGE


def test_io_errors(tmp_path: Path) -> None:
    assert run(["validate", str(tmp_path / "missing")]) == EXIT_IO
    assert run(["convert", str(tmp_path), str(tmp_path / "out")]) == EXIT_IO
    assert run(["--config", str(tmp_path / "none.env"), "validate", str(tmp_path)]) == EXIT_IO


def test_convert_refuses_converted_output(raw_root: Path, tmp_path: Path) -> None:
    output = tmp_path / "out"
    assert run(["convert", str(raw_root), str(output)]) == EXIT_OK
    assert run(["convert", str(output), str(tmp_path / "again")]) == EXIT_REJECTED


def test_collect_overrides() -> None:
    args = parse_args(["--seed", "3", "--delta", "0.2", "--set", "ik__w_posture=0", "rollout", "s", "o"])
    assert collect_overrides(args) == {"seed": 3, "sparks": {"delta": 0.2}, "ik": {"w_posture": 0}}


@pytest.mark.parametrize(("name", "value"), [("EGOKIT_LOG_LEVEL", "verbose"), ("EGOKIT_WORKERS", "many")])
def test_bad_environment_is_usage_error(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str], name: str, value: str
) -> None:
    monkeypatch.setenv(name, value)
    assert run(["gen", str(tmp_path / "g")]) == EXIT_USAGE
    assert "EGOKIT_" in capsys.readouterr().err
    assert not (tmp_path / "g").exists()


def test_workers_from_environment(raw_root: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("EGOKIT_WORKERS", "2")
    monkeypatch.setenv("EGOKIT_LOG_LEVEL", "DEBUG")
    assert run(["validate", str(raw_root)]) == EXIT_OK


if __name__ == "__main__":
    pytest.main()
