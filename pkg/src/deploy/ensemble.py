from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from src.codec.action_codec import BODIES, ROT6_SLICES, ActionChunk, Convention, Vector29
from src.errors import NoCoverage, WrongConvention
from src.geometry.core import rot6_from_rotation, rot6_to_rotation


class IssuedChunk(NamedTuple):
    issue_step: int
    chunk: ActionChunk


class ChunkHistory:
    """Кольцо выданных чанков в world_absolute; шаг k чанка, выданного на шаге s, относится к шагу s + k"""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"Емкость истории должна быть положительной, получено {capacity}")
        self.capacity = capacity
        self._chunks: deque[IssuedChunk] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def issue_steps(self) -> list[int]:
        return [entry.issue_step for entry in self._chunks]

    def push(self, issue_step: int, chunk: ActionChunk) -> None:
        if chunk.convention != Convention.WORLD_ABSOLUTE:
            raise WrongConvention(f"В историю кладутся только world_absolute чанки, получено {chunk.convention.value}")
        if chunk.horizon > self.capacity:
            raise ValueError(f"Горизонт {chunk.horizon} больше емкости истории {self.capacity}")
        if self._chunks and issue_step <= self._chunks[-1].issue_step:
            raise ValueError(f"Шаг выдачи {issue_step} не больше предыдущего {self._chunks[-1].issue_step}")
        self._chunks.append(IssuedChunk(issue_step, chunk))

    def covering(self, t: int) -> list[tuple[int, NDArray[np.float64]]]:
        """Предсказания для шага t от старых чанков к новым вместе с их возрастом"""
        return [
            (t - entry.issue_step, entry.chunk.values[t - entry.issue_step])
            for entry in self._chunks
            if 0 <= t - entry.issue_step < entry.chunk.horizon
        ]


def ensemble_step(hist: ChunkHistory, t: int, m: float) -> Vector29:
    """Взвешенное среднее предсказаний для шага t с весами exp(−m·возраст)"""
    candidates = hist.covering(t)
    if not candidates:
        raise NoCoverage(f"Ни один чанк истории (выданы на шагах {hist.issue_steps}) не покрывает шаг {t}")

    ages = np.array([age for age, _ in candidates], dtype=np.float64)
    predictions = np.stack([values for _, values in candidates])
    weights = np.exp(-m * (ages - ages.min()))
    weights /= weights.sum()
    # совпадающие предсказания возвращаются как есть: повторный Грам-Шмидт меняет младшие биты
    if np.all(predictions == predictions[0]):
        return Vector29(predictions[0], Convention.WORLD_ABSOLUTE)

    mean = weights @ predictions
    for body in BODIES:
        block = ROT6_SLICES[body]
        mean[block] = rot6_from_rotation(rot6_to_rotation(mean[block]))
    return Vector29(mean, Convention.WORLD_ABSOLUTE)
