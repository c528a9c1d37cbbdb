import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import IndexOutOfWindow
from src.geometry.core import Pose
from src.pipeline.episode import Episode
from src.pipeline.synthetic import SyntheticSpec, facing, generate_synthetic
from src.settings import SparksConfig
from src.sparks.admission import SingleBestAdmission
from src.sparks.selector import (
    HeadWindow,
    Keyframe,
    KeyframeBuffer,
    SparksStream,
    evaluate_window,
    passes_diversity,
    precompute_head_poses,
    precompute_offline,
    score_frame,
    score_table,
    step_online,
)


def rot_x(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def direct_angle(a: np.ndarray, b: np.ndarray) -> float:
    return 2.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))


def direct_score(history: list[Pose], tau: int, t: int, cfg: SparksConfig) -> float:
    z = [pose.rotation[:, 2] for pose in history]
    novelty = direct_angle(z[tau], z[t]) / math.pi
    recency = math.exp(-(t - tau) / cfg.recency_timescale)
    smooth = math.exp(-(direct_angle(z[tau - 1], z[tau]) if tau > 0 else 0.0) / cfg.smooth_scale)
    return cfg.w_novelty * novelty + cfg.w_recency * recency + cfg.w_smooth * smooth


def episode(scenario: str, n_frames: int, seed: int = 0, **kwargs: float) -> Episode:
    spec = SyntheticSpec(scenario=scenario, n_frames=n_frames, randomize_vr_frame=False, **kwargs)
    return generate_synthetic(spec, seed)


def run_online(head_poses: list[Pose], cfg: SparksConfig) -> list[list[int]]:
    stream = SparksStream(cfg)
    return [stream.push(pose).indices for pose in head_poses]


@pytest.fixture
def walk() -> list[Pose]:
    return episode("random_walk", 50, seed=4).head_poses


def test_score_stationary_head() -> None:
    history = [Pose.identity()] * 5
    assert score_frame(history, 4, 4, SparksConfig()) == pytest.approx(2.0, abs=1e-15)


def test_score_quarter_turn() -> None:
    cfg = SparksConfig()
    history = [Pose.identity()] * 100 + [Pose(rot_x(math.pi / 2))]
    assert score_frame(history, 50, 100, cfg) == pytest.approx(0.5 + math.exp(-1.0) + 1.0, abs=1e-12)


def test_score_first_frame_is_smooth() -> None:
    cfg = SparksConfig(w_novelty=0.0, w_recency=0.0)
    history = [Pose(rot_x(0.3)), Pose.identity()]
    assert score_frame(history, 0, 1, cfg) == 1.0


def test_score_matches_direct_evaluation(walk: list[Pose]) -> None:
    cfg = SparksConfig(w_novelty=0.7, w_recency=1.3, w_smooth=0.4, recency_timescale=7.0, smooth_scale=0.05)
    for t in range(len(walk)):
        vectorized = evaluate_window(KeyframeBuffer(cfg.capacity), HeadWindow(0, walk[: t + 1]), t, cfg)
        for tau in range(t + 1):
            expected = direct_score(walk, tau, t, cfg)
            assert abs(score_frame(walk, tau, t, cfg) - expected) <= 1e-12
            assert abs(vectorized.scores[tau] - expected) <= 1e-12


def test_score_outside_window(walk: list[Pose]) -> None:
    cfg = SparksConfig(lookback=5)
    with pytest.raises(IndexOutOfWindow):
        score_frame(walk, 3, 10, cfg)
    with pytest.raises(IndexOutOfWindow):
        score_frame(walk, 11, 10, cfg)


def test_diversity_predicate() -> None:
    cfg = SparksConfig(alpha=0.5, fov=1.0, delta=0.15)
    entry = KeyframeBuffer(cfg.capacity).admit(Keyframe(0, Pose.identity(), 0.0))
    assert passes_diversity(Pose.identity(), KeyframeBuffer(cfg.capacity), cfg)
    assert not passes_diversity(Pose.identity(), entry, cfg)
    assert passes_diversity(Pose(rot_x(0.6)), entry, cfg)
    assert not passes_diversity(Pose(rot_x(0.4)), entry, cfg)
    assert passes_diversity(Pose(np.eye(3), [0.2, 0.0, 0.0]), entry, cfg)


def test_diversity_checks_every_entry() -> None:
    cfg = SparksConfig(alpha=0.5, fov=1.0, delta=0.15)
    buffer = KeyframeBuffer(cfg.capacity).admit(Keyframe(0, Pose.identity(), 0.0))
    buffer = buffer.admit(Keyframe(1, Pose(rot_x(1.0)), 0.0))
    assert not passes_diversity(Pose(rot_x(0.7)), buffer, cfg)
    assert passes_diversity(Pose(rot_x(-0.7)), buffer, cfg)


def test_buffer_evicts_oldest() -> None:
    buffer = KeyframeBuffer(2)
    for index in range(4):
        buffer = buffer.admit(Keyframe(index, Pose.identity(), 0.0))
    assert buffer.indices == [2, 3]


def test_step_online_admits_one_frame_of_sweep() -> None:
    cfg = SparksConfig(alpha=0.5, fov=1.0, lookback=20)
    poses = [Pose(facing(yaw)) for yaw in np.linspace(0.0, 2 * cfg.angle_threshold, cfg.lookback + 1)]
    buffer = step_online(KeyframeBuffer(cfg.capacity), HeadWindow(0, poses), cfg.lookback, cfg)
    assert len(buffer) == 1


def test_step_online_prefers_recent_on_tie() -> None:
    cfg = SparksConfig(w_novelty=0.0, w_recency=0.0, w_smooth=0.0, lookback=4)
    buffer = step_online(KeyframeBuffer(cfg.capacity), HeadWindow(0, [Pose.identity()] * 5), 4, cfg)
    assert buffer.indices == [4]


def test_stream_requires_covering_window(walk: list[Pose]) -> None:
    cfg = SparksConfig(lookback=5)
    with pytest.raises(IndexOutOfWindow):
        step_online(KeyframeBuffer(cfg.capacity), HeadWindow(16, walk[16:21]), 20, cfg)
    with pytest.raises(IndexOutOfWindow):
        step_online(KeyframeBuffer(cfg.capacity), HeadWindow(14, walk[14:20]), 20, cfg)


def test_stationary_episode_keeps_first_frame() -> None:
    lists = precompute_offline(episode("stationary", 100), SparksConfig())
    assert lists == [[0]] * 100


def test_single_frame_episode() -> None:
    assert precompute_offline(episode("stationary", 1), SparksConfig()) == [[0]]


def test_empty_trajectory() -> None:
    assert precompute_head_poses([], SparksConfig()) == []


def test_yaw_sweep_admits_per_threshold() -> None:
    cfg = SparksConfig(alpha=0.5, fov=1.0, capacity=8)
    sweep = episode("yaw_sweep", 250, sweep_span=3.5 * cfg.angle_threshold)
    lists = precompute_offline(sweep, cfg)
    assert len(lists[-1]) == 4
    assert lists[-1] == sorted(lists[-1])


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=0, max_value=10_000),
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=1, max_value=4),
    st.floats(min_value=0.01, max_value=0.3),
)
def test_online_offline_parity(seed: int, lookback: int, capacity: int, alpha: float) -> None:
    cfg = SparksConfig(lookback=lookback, capacity=capacity, alpha=alpha, delta=0.02)
    head_poses = episode("random_walk", 120, seed=seed).head_poses
    assert run_online(head_poses, cfg) == precompute_head_poses(head_poses, cfg)


def test_online_offline_parity_long_episode() -> None:
    head_poses = episode("random_walk", 1000, seed=21).head_poses
    cfg = SparksConfig()
    assert run_online(head_poses, cfg) == precompute_head_poses(head_poses, cfg)


def test_lists_are_causal_and_bounded() -> None:
    cfg = SparksConfig(lookback=10, capacity=3, alpha=0.05, delta=0.02)
    for t, indices in enumerate(precompute_offline(episode("random_walk", 300, seed=5), cfg)):
        assert len(indices) <= cfg.capacity
        assert all(index <= t for index in indices)
        assert indices == sorted(set(indices))


def test_fifo_evicts_only_front() -> None:
    cfg = SparksConfig(lookback=10, capacity=3, alpha=0.05, delta=0.02)
    lists = precompute_offline(episode("random_walk", 300, seed=6), cfg)
    for before, after in zip(lists, lists[1:]):
        if after != before:
            kept = after[:-1]
            assert before[len(before) - len(kept) :] == kept
            assert after[-1] > (before[-1] if before else -1)


@pytest.mark.parametrize("lookback", [1, 25, 100])
def test_candidate_count_is_linear_in_lookback(lookback: int) -> None:
    cfg = SparksConfig(lookback=lookback)
    poses = episode("random_walk", 150, seed=2).head_poses
    buffer = KeyframeBuffer(cfg.capacity)
    for t in range(len(poses)):
        start = max(0, t - lookback - 1)
        evaluation = evaluate_window(buffer, HeadWindow(start, poses[start : t + 1]), t, cfg)
        assert len(evaluation.taus) == min(t, lookback) + 1


def median_step_seconds(poses: list[Pose], cfg: SparksConfig, steps: int = 60) -> float:
    timings = []
    for t in range(cfg.lookback + 1, cfg.lookback + 1 + steps):
        start = t - cfg.lookback - 1
        window = HeadWindow(start, poses[start : t + 1])
        empty = KeyframeBuffer(cfg.capacity)
        begin = time.perf_counter()
        step_online(empty, window, t, cfg)
        timings.append(time.perf_counter() - begin)
    return float(np.median(timings))


def test_step_time_is_linear_in_lookback() -> None:
    lookbacks = np.array([25, 50, 100, 200])
    poses = episode("random_walk", 400, seed=3).head_poses
    median_step_seconds(poses, SparksConfig(lookback=25), steps=5)
    seconds = np.array([median_step_seconds(poses, SparksConfig(lookback=int(lookback))) for lookback in lookbacks])
    slope, intercept = np.polyfit(lookbacks, seconds, 1)
    fitted = slope * lookbacks + intercept
    assert np.all(np.abs(seconds - fitted) <= 0.2 * fitted)


def test_stream_window_is_bounded() -> None:
    cfg = SparksConfig(lookback=3)
    stream = SparksStream(cfg)
    for pose in episode("random_walk", 20, seed=8).head_poses:
        stream.push(pose)
    assert stream.step == 19
    assert len(stream._poses) == cfg.lookback + 2


def test_novelty_only_selects_farthest() -> None:
    cfg = SparksConfig(w_recency=0.0, w_smooth=0.0, lookback=30, alpha=0.05, delta=0.01)
    poses = episode("random_walk", 200, seed=9).head_poses
    buffer = KeyframeBuffer(cfg.capacity)
    for t in range(len(poses)):
        start = max(0, t - cfg.lookback - 1)
        evaluation = evaluate_window(buffer, HeadWindow(start, poses[start : t + 1]), t, cfg, SingleBestAdmission())
        if evaluation.chosen is None:
            continue
        assert evaluation.novelty[evaluation.chosen] == evaluation.novelty[evaluation.passes].max()
        tau = int(evaluation.taus[evaluation.chosen])
        buffer = buffer.admit(Keyframe(tau, poses[tau], float(evaluation.scores[evaluation.chosen])))


def test_score_table_follows_admissions() -> None:
    cfg = SparksConfig(lookback=10, capacity=3, alpha=0.05, delta=0.02)
    poses = episode("random_walk", 80, seed=10).head_poses
    rows = score_table(poses, cfg)
    lists = precompute_head_poses(poses, cfg)
    assert [row.step for row in rows] == list(range(len(poses)))
    for t, row in enumerate(rows):
        assert row.admitted == (lists[t] != (lists[t - 1] if t else []))
        assert row.score == pytest.approx(row.novelty + row.recency + row.smoothness, abs=1e-12)
        if row.admitted:
            assert lists[t][-1] == row.tau


def test_score_table_stationary() -> None:
    rows = score_table(episode("stationary", 10).head_poses, SparksConfig())
    assert [row.admitted for row in rows] == [True] + [False] * 9
    assert rows[0].tau == 0 and rows[0].score == pytest.approx(2.0)


if __name__ == "__main__":
    pytest.main()
