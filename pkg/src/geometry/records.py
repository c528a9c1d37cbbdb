from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.spatial.transform import Rotation as ScipyRotation

from src.geometry.core import Pose

QUATERNION_NORM_TOL = 1e-6


class PoseRecord(BaseModel):
    """Поза в файлах: позиция (м) и единичный кватернион (w, x, y, z)"""

    model_config = ConfigDict(frozen=True)

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    quaternion: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    @field_validator("quaternion")
    @classmethod
    def _unit_quaternion(cls, value: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        norm = float(np.linalg.norm(value))
        if abs(norm - 1.0) > QUATERNION_NORM_TOL:
            raise ValueError(f"Кватернион не единичный: норма {norm:.9f}")
        return value

    def to_pose(self) -> Pose:
        w, x, y, z = self.quaternion
        rotation = ScipyRotation.from_quat([x, y, z, w]).as_matrix()
        return Pose(rotation, self.position)

    @classmethod
    def from_pose(cls, pose: Pose) -> PoseRecord:
        x, y, z, w = ScipyRotation.from_matrix(pose.rotation).as_quat()
        px, py, pz = (float(value) for value in pose.translation)
        return cls(position=(px, py, pz), quaternion=(float(w), float(x), float(y), float(z)))
