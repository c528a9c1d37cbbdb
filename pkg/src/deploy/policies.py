from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from src.codec.action_codec import ActionChunk, Convention, chunk_absolute_to_relative, encode_world
from src.errors import TooShort
from src.pipeline.container import action_labels
from src.pipeline.episode import Episode, Frame


class ScriptedPolicy(ABC):
    """Источник чанков действий для симуляции вместо обученной модели"""

    def __init__(self, horizon: int, relative: bool = False) -> None:
        if horizon < 1:
            raise ValueError(f"Горизонт должен быть положительным, получено {horizon}")
        self.horizon = horizon
        self.relative = relative

    @property
    def name(self) -> str:
        return type(self).__name__

    def plan(self, t: int, observation: Frame) -> ActionChunk:
        """Чанк на шаги t..t+H-1 в world_absolute или chunk_relative относительно наблюдения"""
        chunk = self._plan_absolute(t, observation)
        if self.relative:
            return chunk_absolute_to_relative(observation, chunk)
        return chunk

    @abstractmethod
    def _plan_absolute(self, t: int, observation: Frame) -> ActionChunk:
        pass


class ReplayPolicy(ScriptedPolicy):
    """Повторяет действия записанного эпизода: действие шага t - состояние шага t+1"""

    def __init__(self, episode: Episode, horizon: int, relative: bool = False) -> None:
        super().__init__(horizon, relative)
        if len(episode) == 0:
            raise TooShort(f"Эпизод {episode.episode_id} пуст")
        states = np.array([encode_world(frame).values for frame in episode.frames])
        self._actions = action_labels(states)

    def _plan_absolute(self, t: int, observation: Frame) -> ActionChunk:
        steps = np.minimum(np.arange(t, t + self.horizon), len(self._actions) - 1)
        return ActionChunk(self._actions[steps], Convention.WORLD_ABSOLUTE)


class StationaryPolicy(ScriptedPolicy):
    """Удерживает первое полученное наблюдение"""

    def __init__(self, horizon: int, relative: bool = False) -> None:
        super().__init__(horizon, relative)
        self._hold: ActionChunk | None = None

    def _plan_absolute(self, t: int, observation: Frame) -> ActionChunk:
        if self._hold is None:
            state = encode_world(observation).values
            self._hold = ActionChunk(np.tile(state, (self.horizon, 1)), Convention.WORLD_ABSOLUTE)
        return self._hold
