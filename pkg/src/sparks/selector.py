"""
Выбор ключевых кадров по траектории головы.

Оценка кадра τ на шаге t:
    J(τ) = w_n·∠(ẑ(τ), ẑ(t))/π + w_r·exp(−(t−τ)/T_r) + w_s·exp(−∠(ẑ(τ−1), ẑ(τ))/s)
где ẑ - ось z позы головы. В FIFO-память попадают только кадры, отличающиеся от
каждого сохраненного углом больше α·FOV или смещением больше δ.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from logging import getLogger
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from src.errors import IndexOutOfWindow
from src.geometry.core import Pose, angle_between, angles_between_rows
from src.pipeline.episode import Episode
from src.settings import SparksConfig
from src.sparks.admission import AdmissionRule, SingleBestAdmission

logger = getLogger(__name__)

DEFAULT_RULE = SingleBestAdmission()


class Keyframe(NamedTuple):
    """Кадр в памяти: индекс шага, поза головы этого кадра, его оценка"""

    step_index: int
    head_pose: Pose
    score: float


@dataclass(frozen=True)
class KeyframeBuffer:
    """Ограниченная FIFO-память ключевых кадров"""

    capacity: int
    entries: tuple[Keyframe, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def indices(self) -> list[int]:
        return [entry.step_index for entry in self.entries]

    def admit(self, keyframe: Keyframe) -> KeyframeBuffer:
        """Добавляет кадр в конец, вытесняя самый старый при переполнении"""
        entries = (*self.entries, keyframe)
        if len(entries) > self.capacity:
            entries = entries[len(entries) - self.capacity :]
        return KeyframeBuffer(self.capacity, entries)


class HeadWindow(NamedTuple):
    """Поза головы для шагов start, start+1, ..."""

    start: int
    poses: Sequence[Pose]


class WindowScores(NamedTuple):
    """Оценки всех кандидатов окна на одном шаге"""

    taus: NDArray[np.int64]
    novelty: NDArray[np.float64]
    recency: NDArray[np.float64]
    smoothness: NDArray[np.float64]
    passes: NDArray[np.bool_]
    chosen: int | None

    @property
    def scores(self) -> NDArray[np.float64]:
        return np.asarray(self.novelty + self.recency + self.smoothness)


def _forward(pose: Pose) -> NDArray[np.float64]:
    return np.asarray(pose.rotation[:, 2])


def score_frame(history: Sequence[Pose], tau: int, t: int, cfg: SparksConfig) -> float:
    """J(τ) для кадра tau на шаге t; history индексируется номером шага"""
    if not (max(0, t - cfg.lookback) <= tau <= t < len(history)):
        raise IndexOutOfWindow(f"Кадр {tau} вне окна [{max(0, t - cfg.lookback)}, {t}] (история {len(history)})")

    novelty = cfg.w_novelty * angle_between(_forward(history[tau]), _forward(history[t])) / math.pi
    recency = cfg.w_recency * math.exp(-(t - tau) / cfg.recency_timescale)
    smooth_angle = angle_between(_forward(history[tau - 1]), _forward(history[tau])) if tau > 0 else 0.0
    smoothness = cfg.w_smooth * math.exp(-smooth_angle / cfg.smooth_scale)
    return novelty + recency + smoothness


def passes_diversity(candidate: Pose, buffer: KeyframeBuffer, cfg: SparksConfig) -> bool:
    """Кадр отличается от каждого сохраненного по углу или по смещению"""
    for entry in buffer.entries:
        angle = angle_between(_forward(candidate), _forward(entry.head_pose))
        distance = float(np.linalg.norm(candidate.translation - entry.head_pose.translation))
        if not (angle > cfg.angle_threshold or distance > cfg.delta):
            return False
    return True


def _diversity_mask(
    forward: NDArray[np.float64], positions: NDArray[np.float64], buffer: KeyframeBuffer, cfg: SparksConfig
) -> NDArray[np.bool_]:
    mask = np.ones(len(forward), dtype=bool)
    for entry in buffer.entries:
        angles = angles_between_rows(forward, _forward(entry.head_pose)[None, :])
        distances = np.linalg.norm(positions - entry.head_pose.translation, axis=1)
        mask &= (angles > cfg.angle_threshold) | (distances > cfg.delta)
    return mask


def evaluate_window(
    buffer: KeyframeBuffer,
    window: HeadWindow,
    t: int,
    cfg: SparksConfig,
    rule: AdmissionRule = DEFAULT_RULE,
) -> WindowScores:
    """Оценивает кандидатов [max(0, t−L), t] и выбирает кадр для памяти"""
    lo = max(0, t - cfg.lookback)
    first = lo - 1 if lo > 0 else 0
    if window.start > first or window.start + len(window.poses) <= t:
        last = window.start + len(window.poses) - 1
        raise IndexOutOfWindow(f"Окно [{window.start}, {last}] не покрывает [{first}, {t}]")

    poses = window.poses[first - window.start : t - window.start + 1]
    forward = np.array([_forward(pose) for pose in poses])
    positions = np.array([pose.translation for pose in poses])
    offset = lo - first

    smooth_angles = np.zeros(t - lo + 1)
    if lo > 0:
        smooth_angles[:] = angles_between_rows(forward[:-1], forward[1:])
    elif t > 0:
        smooth_angles[1:] = angles_between_rows(forward[:-1], forward[1:])
    return _score_candidates(lo, t, forward[offset:], positions[offset:], smooth_angles, buffer, cfg, rule)


def _score_candidates(
    lo: int,
    t: int,
    forward: NDArray[np.float64],
    positions: NDArray[np.float64],
    smooth_angles: NDArray[np.float64],
    buffer: KeyframeBuffer,
    cfg: SparksConfig,
    rule: AdmissionRule,
) -> WindowScores:
    taus = np.arange(lo, t + 1, dtype=np.int64)
    novelty = cfg.w_novelty * angles_between_rows(forward, forward[-1][None, :]) / math.pi
    recency = cfg.w_recency * np.exp(-(t - taus) / cfg.recency_timescale)
    smoothness = cfg.w_smooth * np.exp(-smooth_angles / cfg.smooth_scale)

    passes = _diversity_mask(forward, positions, buffer, cfg)
    if buffer.entries:
        passes &= taus > buffer.entries[-1].step_index

    chosen = rule.select(taus, novelty + recency + smoothness, passes)
    return WindowScores(taus, novelty, recency, smoothness, passes, chosen)


def step_online(
    buffer: KeyframeBuffer,
    window: HeadWindow,
    t: int,
    cfg: SparksConfig,
    rule: AdmissionRule = DEFAULT_RULE,
) -> KeyframeBuffer:
    """Один шаг онлайн-выбора за O(L + K)"""
    evaluation = evaluate_window(buffer, window, t, cfg, rule)
    if evaluation.chosen is None:
        return buffer
    tau = int(evaluation.taus[evaluation.chosen])
    keyframe = Keyframe(tau, window.poses[tau - window.start], float(evaluation.scores[evaluation.chosen]))
    logger.debug("Шаг %d: ключевой кадр %d (J=%.4f)", t, tau, keyframe.score)
    return buffer.admit(keyframe)


class SparksStream:
    """Онлайн-селектор с одним писателем: хранит окно поз головы и память"""

    def __init__(self, cfg: SparksConfig, rule: AdmissionRule = DEFAULT_RULE) -> None:
        self._cfg = cfg
        self._rule = rule
        self._poses: deque[Pose] = deque(maxlen=cfg.lookback + 2)
        self._t = -1
        self.buffer = KeyframeBuffer(cfg.capacity)

    @property
    def step(self) -> int:
        return self._t

    def push(self, head: Pose) -> KeyframeBuffer:
        """Принимает позу головы следующего шага и обновляет память"""
        self._t += 1
        self._poses.append(head)
        window = HeadWindow(self._t - len(self._poses) + 1, tuple(self._poses))
        self.buffer = step_online(self.buffer, window, self._t, self._cfg, self._rule)
        return self.buffer


def precompute_head_poses(
    head_poses: Sequence[Pose], cfg: SparksConfig, rule: AdmissionRule = DEFAULT_RULE
) -> list[list[int]]:
    """Содержимое памяти (индексы кадров) на каждом шаге траектории головы"""
    if not head_poses:
        return []
    forward = np.array([_forward(pose) for pose in head_poses])
    positions = np.array([pose.translation for pose in head_poses])
    # угол между соседними кадрами считается один раз на весь эпизод
    smooth_angles = np.zeros(len(head_poses))
    smooth_angles[1:] = angles_between_rows(forward[:-1], forward[1:])

    buffer = KeyframeBuffer(cfg.capacity)
    result: list[list[int]] = []
    for t in range(len(head_poses)):
        lo = max(0, t - cfg.lookback)
        window = slice(lo, t + 1)
        evaluation = _score_candidates(
            lo, t, forward[window], positions[window], smooth_angles[window], buffer, cfg, rule
        )
        if evaluation.chosen is not None:
            tau = int(evaluation.taus[evaluation.chosen])
            buffer = buffer.admit(Keyframe(tau, head_poses[tau], float(evaluation.scores[evaluation.chosen])))
        result.append(buffer.indices)
    return result


class ScoreRow(NamedTuple):
    """Строка таблицы оценок для внешних графиков"""

    step: int
    tau: int
    score: float
    novelty: float
    recency: float
    smoothness: float
    admitted: bool


def score_table(head_poses: Sequence[Pose], cfg: SparksConfig, rule: AdmissionRule = DEFAULT_RULE) -> list[ScoreRow]:
    """Для каждого шага: принятый кадр или, если его нет, кадр с наибольшей J"""
    rows: list[ScoreRow] = []
    buffer = KeyframeBuffer(cfg.capacity)
    for t in range(len(head_poses)):
        start = max(0, t - cfg.lookback - 1)
        window = HeadWindow(start, head_poses[start : t + 1])
        evaluation = evaluate_window(buffer, window, t, cfg, rule)
        scores = evaluation.scores
        admitted = evaluation.chosen is not None
        pick = evaluation.chosen if evaluation.chosen is not None else int(np.argmax(scores))
        rows.append(
            ScoreRow(
                step=t,
                tau=int(evaluation.taus[pick]),
                score=float(scores[pick]),
                novelty=float(evaluation.novelty[pick]),
                recency=float(evaluation.recency[pick]),
                smoothness=float(evaluation.smoothness[pick]),
                admitted=admitted,
            )
        )
        if evaluation.chosen is not None:
            tau = int(evaluation.taus[pick])
            buffer = buffer.admit(Keyframe(tau, head_poses[tau], float(scores[pick])))
    return rows


def precompute_offline(ep: Episode, cfg: SparksConfig, rule: AdmissionRule = DEFAULT_RULE) -> list[list[int]]:
    """Индексы ключевых кадров для каждого шага эпизода, как их держал бы онлайн-селектор"""
    return precompute_head_poses(ep.head_poses, cfg, rule)
