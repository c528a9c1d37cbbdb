"""
29D-представление действий и состояний.

Раскладка вектора: [r6 L, p L, g L, r6 R, p R, g R, r6 H, p H], где r6 - первые два
столбца матрицы поворота (по столбцам), p - позиция в метрах, g - сигнал захвата.
Одна и та же раскладка используется в трех конвенциях, поэтому конвенция всегда
хранится рядом со значениями.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import GripOutOfRange, WrongConvention
from src.geometry.core import Pose, rot6_from_rotation, rot6_to_rotation, se3_compose, se3_inverse
from src.pipeline.episode import Frame

VECTOR_SIZE = 29
ROT6_SIZE, POS_SIZE, GRIP_SIZE = 6, 3, 1

ROT6_SLICES = {"left": slice(0, 6), "right": slice(10, 16), "head": slice(20, 26)}
POS_SLICES = {"left": slice(6, 9), "right": slice(16, 19), "head": slice(26, 29)}
GRIP_INDEX = {"left": 9, "right": 19}
BODIES = ("left", "right", "head")

_covered = sorted(
    [i for block in (*ROT6_SLICES.values(), *POS_SLICES.values()) for i in range(block.start, block.stop)]
    + list(GRIP_INDEX.values())
)
if _covered != list(range(VECTOR_SIZE)) or 2 * (ROT6_SIZE + POS_SIZE + GRIP_SIZE) + ROT6_SIZE + POS_SIZE != VECTOR_SIZE:
    raise AssertionError("Раскладка 29D-вектора не покрывает индексы ровно один раз")


class Convention(str, Enum):
    WORLD_ABSOLUTE = "world_absolute"
    MODEL_RELATIVE = "model_relative"
    CHUNK_RELATIVE = "chunk_relative"


def _readonly(values: ArrayLike, shape: tuple[int, ...]) -> NDArray[np.float64]:
    array = np.array(values, dtype=np.float64).reshape(shape)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Vector29:
    """29D-вектор с тегом конвенции"""

    values: NDArray[np.float64]
    convention: Convention = Convention.WORLD_ABSOLUTE

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values, (VECTOR_SIZE,)))

    def pose(self, body: str) -> Pose:
        """Поза блока тела, r6 раскладывается Грамом-Шмидтом"""
        return _read_pose(self.values, body)

    def grip(self, body: str) -> float:
        return float(self.values[GRIP_INDEX[body]])


@dataclass(frozen=True, eq=False)
class ActionChunk:
    """Горизонт предсказанных шагов в одной конвенции"""

    values: NDArray[np.float64]
    convention: Convention = Convention.WORLD_ABSOLUTE

    def __post_init__(self) -> None:
        array = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", _readonly(array, (array.reshape(-1, VECTOR_SIZE).shape[0], VECTOR_SIZE)))

    @property
    def horizon(self) -> int:
        return int(self.values.shape[0])

    @property
    def steps(self) -> list[Vector29]:
        return [self.step(k) for k in range(self.horizon)]

    def step(self, k: int) -> Vector29:
        return Vector29(self.values[k], self.convention)

    @classmethod
    def from_steps(cls, steps: list[Vector29]) -> ActionChunk:
        conventions = {step.convention for step in steps}
        if len(conventions) != 1:
            raise WrongConvention(f"Шаги чанка в разных конвенциях: {sorted(c.value for c in conventions)}")
        return cls(np.stack([step.values for step in steps]), conventions.pop())


class DecodedFrame(NamedTuple):
    """Результат decode_world: кадр и признак насыщения захватов"""

    frame: Frame
    saturated: bool


def _require(actual: Convention, expected: Convention) -> None:
    if actual != expected:
        raise WrongConvention(f"Ожидалась конвенция {expected.value}, получена {actual.value}")


def _read_pose(values: NDArray[np.float64], body: str) -> Pose:
    return Pose(rot6_to_rotation(values[ROT6_SLICES[body]]), values[POS_SLICES[body]])


def _write_pose(values: NDArray[np.float64], body: str, pose: Pose) -> None:
    values[ROT6_SLICES[body]] = rot6_from_rotation(pose.rotation)
    values[POS_SLICES[body]] = pose.translation


def encode_world(frame: Frame) -> Vector29:
    """Абсолютный вектор датасета из кадра"""
    values = np.zeros(VECTOR_SIZE)
    for body in BODIES:
        _write_pose(values, body, frame.pose(body))
    for body, grip in (("left", frame.grip_left), ("right", frame.grip_right)):
        if not 0.0 <= grip <= 1.0:
            raise GripOutOfRange(f"Захват {body} = {grip} вне [0, 1]")
        values[GRIP_INDEX[body]] = grip
    return Vector29(values, Convention.WORLD_ABSOLUTE)


def saturate_grips(v: Vector29) -> tuple[Vector29, bool]:
    """Ограничивает захваты диапазоном [0, 1]"""
    values = np.array(v.values)
    saturated = False
    for index in GRIP_INDEX.values():
        clamped = min(max(values[index], 0.0), 1.0)
        saturated = saturated or clamped != values[index]
        values[index] = clamped
    return Vector29(values, v.convention), saturated


def decode_world(v: Vector29, timestamp: float = 0.0) -> DecodedFrame:
    """Абсолютный вектор обратно в кадр с насыщением захватов"""
    _require(v.convention, Convention.WORLD_ABSOLUTE)
    clamped, saturated = saturate_grips(v)
    frame = Frame(
        timestamp=timestamp,
        left=clamped.pose("left"),
        right=clamped.pose("right"),
        head=clamped.pose("head"),
        grip_left=clamped.grip("left"),
        grip_right=clamped.grip("right"),
    )
    return DecodedFrame(frame=frame, saturated=saturated)


def world_to_model(v: Vector29) -> Vector29:
    """Левая рука и голова относительно правой; правая остается в мировой системе"""
    _require(v.convention, Convention.WORLD_ABSOLUTE)
    values = np.array(v.values)
    right_inv = se3_inverse(v.pose("right"))
    for body in ("left", "head"):
        _write_pose(values, body, se3_compose(right_inv, v.pose(body)))
    return Vector29(values, Convention.MODEL_RELATIVE)


def model_to_world(v: Vector29) -> Vector29:
    """Обратное к world_to_model"""
    _require(v.convention, Convention.MODEL_RELATIVE)
    values = np.array(v.values)
    right = v.pose("right")
    for body in ("left", "head"):
        _write_pose(values, body, se3_compose(right, v.pose(body)))
    return Vector29(values, Convention.WORLD_ABSOLUTE)


def chunk_absolute_to_relative(current: Frame, chunk: ActionChunk) -> ActionChunk:
    """Каждая поза шага относительно текущей позы того же тела; захваты не трогаются"""
    _require(chunk.convention, Convention.WORLD_ABSOLUTE)
    inverses = {body: se3_inverse(current.pose(body)) for body in BODIES}
    values = np.array(chunk.values)
    for k in range(chunk.horizon):
        for body in BODIES:
            _write_pose(values[k], body, se3_compose(inverses[body], _read_pose(chunk.values[k], body)))
    return ActionChunk(values, Convention.CHUNK_RELATIVE)


def chunk_relative_to_absolute(current: Frame, chunk: ActionChunk) -> ActionChunk:
    """Обратное к chunk_absolute_to_relative: исполнимые команды в мировой системе"""
    _require(chunk.convention, Convention.CHUNK_RELATIVE)
    values = np.array(chunk.values)
    for k in range(chunk.horizon):
        for body in BODIES:
            _write_pose(values[k], body, se3_compose(current.pose(body), _read_pose(chunk.values[k], body)))
    return ActionChunk(values, Convention.WORLD_ABSOLUTE)
