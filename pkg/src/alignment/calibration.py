from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path

from pydantic import BaseModel, ValidationError

from src.errors import CalibrationError
from src.geometry.core import Pose
from src.geometry.records import PoseRecord

logger = getLogger(__name__)


class CalibrationFile(BaseModel):
    """Содержимое файла калибровки"""

    left_flange: PoseRecord = PoseRecord()
    right_flange: PoseRecord = PoseRecord()
    flange_to_tcp: PoseRecord = PoseRecord()
    head_to_cam: PoseRecord = PoseRecord()


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Фиксированные смещения: контроллер→фланец, фланец→TCP, шлем→камера"""

    left_flange: Pose = field(default_factory=Pose.identity)
    right_flange: Pose = field(default_factory=Pose.identity)
    flange_to_tcp: Pose = field(default_factory=Pose.identity)
    head_to_cam: Pose = field(default_factory=Pose.identity)
    content_hash: str = ""

    @classmethod
    def from_file_model(cls, model: CalibrationFile, content_hash: str) -> CalibrationSet:
        return cls(
            left_flange=model.left_flange.to_pose(),
            right_flange=model.right_flange.to_pose(),
            flange_to_tcp=model.flange_to_tcp.to_pose(),
            head_to_cam=model.head_to_cam.to_pose(),
            content_hash=content_hash,
        )


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def identity_calibration() -> CalibrationSet:
    """Тождественная калибровка; хэш считается от ее канонического JSON"""
    model = CalibrationFile()
    return CalibrationSet.from_file_model(model, content_hash(model.model_dump_json(indent=2).encode()))


def load_calibration(path: Path | None) -> CalibrationSet:
    """Читает файл калибровки; без файла возвращает тождественную"""
    if path is None:
        return identity_calibration()
    if not path.is_file():
        raise FileNotFoundError(f"Файл калибровки не найден: {path}")

    data = path.read_bytes()
    try:
        model = CalibrationFile.model_validate_json(data)
    except ValidationError as e:
        raise CalibrationError(f"Некорректный файл калибровки {path}: {e}") from e

    calibration = CalibrationSet.from_file_model(model, content_hash(data))
    logger.info("Калибровка %s загружена (hash %s)", path, calibration.content_hash[:12])
    return calibration
