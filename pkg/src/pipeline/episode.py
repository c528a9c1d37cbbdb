from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, NamedTuple

from src.geometry.core import Pose


class EpisodeConvention(str, Enum):
    """Система координат, в которой записаны позы эпизода"""

    VR_RAW = "vr_raw"
    BASE_FRAME = "base_frame"


class ImageRef(NamedTuple):
    """Непрозрачная ссылка на кадр видеопотока"""

    path: str
    timestamp: float


@dataclass(frozen=True, eq=False)
class Frame:
    """Один шаг эпизода"""

    timestamp: float
    left: Pose
    right: Pose
    head: Pose
    grip_left: float = 0.0
    grip_right: float = 0.0
    image_refs: Mapping[str, ImageRef] = field(default_factory=dict)

    def pose(self, body: str) -> Pose:
        """Поза тела по имени: left, right или head"""
        return {"left": self.left, "right": self.right, "head": self.head}[body]

    def with_poses(self, left: Pose, right: Pose, head: Pose) -> Frame:
        return replace(self, left=left, right=right, head=head)


@dataclass(frozen=True, eq=False)
class Episode:
    """Упорядоченная последовательность кадров и метаданные"""

    episode_id: str
    frames: tuple[Frame, ...]
    rate_hz: float
    convention: EpisodeConvention = EpisodeConvention.VR_RAW
    calibration_hash: str | None = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def head_poses(self) -> list[Pose]:
        return [frame.head for frame in self.frames]

    @property
    def timestamps(self) -> list[float]:
        return [frame.timestamp for frame in self.frames]
