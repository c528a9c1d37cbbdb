"""
Каноничный контейнер сконвертированного эпизода.

Каталог эпизода содержит:
    meta.json    - метаданные (ContainerMeta)
    frames.bin   - записи фиксированной длины, little-endian:
                   timestamp f64, state 29×f64, action 29×f64,
                   keyframe_count u32, keyframes K×u32 (свободные слоты = 0xFFFFFFFF)
    images.json  - ссылки на кадры видеопотоков по шагам
"""

from __future__ import annotations

import json
from logging import getLogger
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ValidationError

from src.codec.action_codec import VECTOR_SIZE
from src.errors import EpisodeFormatError
from src.pipeline.episode import EpisodeConvention, ImageRef

logger = getLogger(__name__)

META_FILE = "meta.json"
FRAMES_FILE = "frames.bin"
IMAGES_FILE = "images.json"
EMPTY_SLOT = 0xFFFFFFFF
FORMAT_VERSION = 1


def frame_dtype(capacity: int) -> np.dtype:
    """Тип записи frames.bin для памяти емкостью capacity"""
    return np.dtype(
        [
            ("timestamp", "<f8"),
            ("state", "<f8", (VECTOR_SIZE,)),
            ("action", "<f8", (VECTOR_SIZE,)),
            ("keyframe_count", "<u4"),
            ("keyframes", "<u4", (capacity,)),
        ]
    )


class ContainerMeta(BaseModel):
    """Содержимое meta.json"""

    format_version: int = FORMAT_VERSION
    episode_id: str
    rate_hz: float
    convention: EpisodeConvention = EpisodeConvention.BASE_FRAME
    vector_convention: str = "world_absolute"
    calibration_hash: str | None = None
    frame_count: int
    keyframe_capacity: int
    record_size: int
    action_offset: int = 1


class ContainerEpisode(NamedTuple):
    """Эпизод, прочитанный из контейнера"""

    meta: ContainerMeta
    timestamps: NDArray[np.float64]
    states: NDArray[np.float64]
    actions: NDArray[np.float64]
    keyframes: list[list[int]]
    image_refs: list[dict[str, ImageRef]]


def is_container_dir(path: Path) -> bool:
    return (path / META_FILE).is_file() and (path / FRAMES_FILE).is_file()


def action_labels(states: NDArray[np.float64]) -> NDArray[np.float64]:
    """Действие шага t - состояние шага t+1; последний шаг повторяет свое состояние"""
    if len(states) == 0:
        return np.array(states)
    return np.concatenate([states[1:], states[-1:]], axis=0)


def write_container(
    episode_dir: Path,
    meta: ContainerMeta,
    timestamps: Sequence[float],
    states: NDArray[np.float64],
    actions: NDArray[np.float64],
    keyframes: Sequence[Sequence[int]],
    image_refs: Sequence[dict[str, ImageRef]],
) -> Path:
    """Записывает эпизод в каталог контейнера"""
    capacity = meta.keyframe_capacity
    records = np.zeros(len(timestamps), dtype=frame_dtype(capacity))
    records["timestamp"] = timestamps
    records["state"] = states
    records["action"] = actions
    records["keyframes"] = EMPTY_SLOT
    for t, indices in enumerate(keyframes):
        if len(indices) > capacity:
            raise ValueError(f"Шаг {t}: {len(indices)} ключевых кадров при емкости {capacity}")
        records["keyframe_count"][t] = len(indices)
        records["keyframes"][t, : len(indices)] = indices

    episode_dir.mkdir(parents=True, exist_ok=True)
    (episode_dir / FRAMES_FILE).write_bytes(records.tobytes())
    (episode_dir / META_FILE).write_text(meta.model_dump_json(indent=2), encoding="utf-8")
    images = [{name: [ref.path, ref.timestamp] for name, ref in sorted(refs.items())} for refs in image_refs]
    (episode_dir / IMAGES_FILE).write_text(json.dumps(images), encoding="utf-8")
    logger.debug("Контейнер %s: %d записей по %d байт", episode_dir, len(records), records.dtype.itemsize)
    return episode_dir


def read_meta(episode_dir: Path) -> ContainerMeta:
    try:
        return ContainerMeta.model_validate_json((episode_dir / META_FILE).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise EpisodeFormatError(f"Некорректный {META_FILE} в {episode_dir}: {e}") from e


def read_container(episode_dir: Path) -> ContainerEpisode:
    """Читает каталог контейнера целиком"""
    meta = read_meta(episode_dir)
    dtype = frame_dtype(meta.keyframe_capacity)
    if dtype.itemsize != meta.record_size:
        raise EpisodeFormatError(f"Размер записи {dtype.itemsize} не совпадает с meta ({meta.record_size})")

    data = (episode_dir / FRAMES_FILE).read_bytes()
    if len(data) != meta.frame_count * dtype.itemsize:
        expected = meta.frame_count * dtype.itemsize
        raise EpisodeFormatError(f"{FRAMES_FILE} в {episode_dir}: {len(data)} байт, ожидалось {expected}")
    records = np.frombuffer(data, dtype=dtype)

    keyframes = [
        [int(index) for index in row["keyframes"][: int(row["keyframe_count"])]] for row in records
    ]
    images_path = episode_dir / IMAGES_FILE
    raw_images = json.loads(images_path.read_text(encoding="utf-8")) if images_path.is_file() else [{}] * len(records)
    image_refs = [{name: ImageRef(str(ref[0]), float(ref[1])) for name, ref in refs.items()} for refs in raw_images]

    return ContainerEpisode(
        meta=meta,
        timestamps=np.array(records["timestamp"]),
        states=np.array(records["state"]),
        actions=np.array(records["action"]),
        keyframes=keyframes,
        image_refs=image_refs,
    )
