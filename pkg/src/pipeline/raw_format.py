from __future__ import annotations

import json
from logging import getLogger
from pathlib import Path

from pydantic import BaseModel, ValidationError

from src.errors import EpisodeFormatError
from src.geometry.records import PoseRecord
from src.pipeline.episode import Episode, EpisodeConvention, Frame, ImageRef

logger = getLogger(__name__)

EPISODE_FILE = "episode.json"


class ImageRefRecord(BaseModel):
    path: str
    timestamp: float


class FrameRecord(BaseModel):
    """Кадр в файле эпизода"""

    timestamp: float
    left: PoseRecord
    right: PoseRecord
    head: PoseRecord
    grip_left: float = 0.0
    grip_right: float = 0.0
    image_refs: dict[str, ImageRefRecord] = {}

    def to_frame(self) -> Frame:
        return Frame(
            timestamp=self.timestamp,
            left=self.left.to_pose(),
            right=self.right.to_pose(),
            head=self.head.to_pose(),
            grip_left=self.grip_left,
            grip_right=self.grip_right,
            image_refs={name: ImageRef(ref.path, ref.timestamp) for name, ref in self.image_refs.items()},
        )

    @classmethod
    def from_frame(cls, frame: Frame) -> FrameRecord:
        return cls(
            timestamp=frame.timestamp,
            left=PoseRecord.from_pose(frame.left),
            right=PoseRecord.from_pose(frame.right),
            head=PoseRecord.from_pose(frame.head),
            grip_left=frame.grip_left,
            grip_right=frame.grip_right,
            image_refs={
                name: ImageRefRecord(path=ref.path, timestamp=ref.timestamp) for name, ref in frame.image_refs.items()
            },
        )


class EpisodeFile(BaseModel):
    """Содержимое episode.json"""

    episode_id: str
    rate_hz: float
    convention: EpisodeConvention = EpisodeConvention.VR_RAW
    calibration_hash: str | None = None
    frames: list[FrameRecord]


def is_raw_episode_dir(path: Path) -> bool:
    return (path / EPISODE_FILE).is_file()


def read_episode(episode_dir: Path) -> Episode:
    """Читает эпизод из каталога с episode.json"""
    episode_path = episode_dir / EPISODE_FILE
    try:
        model = EpisodeFile.model_validate(json.loads(episode_path.read_text(encoding="utf-8")))
    except (ValidationError, json.JSONDecodeError, ValueError) as e:
        raise EpisodeFormatError(f"Некорректный файл эпизода {episode_path}: {e}") from e

    return Episode(
        episode_id=model.episode_id,
        frames=tuple(record.to_frame() for record in model.frames),
        rate_hz=model.rate_hz,
        convention=model.convention,
        calibration_hash=model.calibration_hash,
    )


def write_episode(ep: Episode, episode_dir: Path) -> Path:
    """Записывает эпизод в каталог; возвращает путь к episode.json"""
    episode_dir.mkdir(parents=True, exist_ok=True)
    model = EpisodeFile(
        episode_id=ep.episode_id,
        rate_hz=ep.rate_hz,
        convention=ep.convention,
        calibration_hash=ep.calibration_hash,
        frames=[FrameRecord.from_frame(frame) for frame in ep.frames],
    )
    episode_path = episode_dir / EPISODE_FILE
    episode_path.write_text(model.model_dump_json(), encoding="utf-8")
    logger.debug("Эпизод %s записан в %s", ep.episode_id, episode_path)
    return episode_path
