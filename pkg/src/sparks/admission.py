from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from numpy.typing import NDArray


class AdmissionRule(ABC):
    """Правило выбора кадра для добавления в память на текущем шаге"""

    @abstractmethod
    def select(self, taus: NDArray[np.int64], scores: NDArray[np.float64], passes: NDArray[np.bool_]) -> int | None:
        """Возвращает позицию выбранного кандидата или None"""
        pass


class SingleBestAdmission(AdmissionRule):
    """Не больше одного кадра за шаг: максимум J среди прошедших порог разнообразия"""

    def select(self, taus: NDArray[np.int64], scores: NDArray[np.float64], passes: NDArray[np.bool_]) -> int | None:
        if not np.any(passes):
            return None
        masked = np.where(passes, scores, -np.inf)
        best = masked.max()
        # при равенстве J берется более поздний кадр
        tied = np.flatnonzero(masked == best)
        return int(tied[np.argmax(taus[tied])])
