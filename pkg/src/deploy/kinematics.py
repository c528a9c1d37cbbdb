from __future__ import annotations

import math
from logging import getLogger
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ValidationError

from src.errors import DimensionMismatch, InvalidChain
from src.geometry.core import Pose
from src.geometry.records import PoseRecord

logger = getLogger(__name__)

CHAINS_DIR = Path(__file__).parent / "chains"
TARGET_FRAMES = ("left_tcp", "right_tcp", "head_cam")
AXIS_TOL = 1e-9


class JointSpec(BaseModel):
    """Сустав в файле цепи"""

    name: str
    type: Literal["revolute", "prismatic"] = "revolute"
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    parent: str | None = None
    origin: PoseRecord = PoseRecord()
    limits: tuple[float, float] = (-math.pi, math.pi)


class FrameSpec(BaseModel):
    """Именованная система, закрепленная после сустава"""

    parent: str | None = None
    offset: PoseRecord = PoseRecord()


class ChainFile(BaseModel):
    """Содержимое файла кинематической цепи"""

    name: str
    joints: list[JointSpec]
    frames: dict[str, FrameSpec]
    nominal_posture: list[float] | None = None


class ChainPoses(NamedTuple):
    """Позы целевых систем цепи"""

    left_tcp: Pose
    right_tcp: Pose
    head_cam: Pose
    within_limits: bool


def _rodrigues(axis: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.asarray(np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k))


class KinematicChain:
    """Древовидная цепь суставов с системами left_tcp, right_tcp, head_cam"""

    def __init__(self, spec: ChainFile) -> None:
        self.name = spec.name
        index: dict[str, int] = {}
        parents: list[int] = []
        for i, joint in enumerate(spec.joints):
            if joint.name in index:
                raise InvalidChain(f"Сустав '{joint.name}' объявлен дважды")
            if joint.parent is not None and joint.parent not in index:
                raise InvalidChain(f"Родитель '{joint.parent}' сустава '{joint.name}' должен быть объявлен раньше")
            lo, hi = joint.limits
            if not lo < hi:
                raise InvalidChain(f"Сустав '{joint.name}': пределы [{lo}, {hi}] некорректны")
            if abs(float(np.linalg.norm(joint.axis)) - 1.0) > AXIS_TOL:
                raise InvalidChain(f"Сустав '{joint.name}': ось {joint.axis} не единичная")
            index[joint.name] = i
            parents.append(-1 if joint.parent is None else index[joint.parent])

        missing = [name for name in TARGET_FRAMES if name not in spec.frames]
        if missing:
            raise InvalidChain(f"В цепи '{spec.name}' нет систем: {', '.join(missing)}")
        for name, frame in spec.frames.items():
            if frame.parent is not None and frame.parent not in index:
                raise InvalidChain(f"Система '{name}' закреплена за неизвестным суставом '{frame.parent}'")

        self.joint_names = [joint.name for joint in spec.joints]
        self._index = index
        self._parents = parents
        self._revolute = np.array([joint.type == "revolute" for joint in spec.joints], dtype=bool)
        self._axes = np.array([joint.axis for joint in spec.joints], dtype=np.float64).reshape(-1, 3)
        self._origins = [joint.origin.to_pose().as_matrix() for joint in spec.joints]
        self.lower = np.array([joint.limits[0] for joint in spec.joints], dtype=np.float64)
        self.upper = np.array([joint.limits[1] for joint in spec.joints], dtype=np.float64)

        nominal = np.zeros(self.dof) if spec.nominal_posture is None else np.array(spec.nominal_posture, dtype=float)
        if nominal.shape != (self.dof,):
            raise InvalidChain(f"nominal_posture: {nominal.shape[0]} значений при {self.dof} суставах")
        if np.any(nominal < self.lower) or np.any(nominal > self.upper):
            raise InvalidChain("nominal_posture выходит за пределы суставов")
        self.nominal = nominal

        self._frames = {
            name: (-1 if frame.parent is None else index[frame.parent], frame.offset.to_pose().as_matrix())
            for name, frame in spec.frames.items()
        }
        self._ancestors = {name: self._path_to_root(parent) for name, (parent, _) in self._frames.items()}

    def _path_to_root(self, joint: int) -> list[int]:
        path = []
        while joint >= 0:
            path.append(joint)
            joint = self._parents[joint]
        return path[::-1]

    @property
    def dof(self) -> int:
        return len(self.joint_names)

    def clip(self, q: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(np.clip(np.asarray(q, dtype=np.float64), self.lower, self.upper))

    def within_limits(self, q: ArrayLike) -> bool:
        values = np.asarray(q, dtype=np.float64)
        return bool(np.all(values >= self.lower) and np.all(values <= self.upper))

    def _check(self, q: ArrayLike) -> NDArray[np.float64]:
        values = np.asarray(q, dtype=np.float64).reshape(-1)
        if values.shape != (self.dof,):
            raise DimensionMismatch(f"Цепь '{self.name}': ожидалось {self.dof} суставов, получено {values.shape[0]}")
        return values

    def _joint_transforms(self, q: NDArray[np.float64]) -> tuple[list[NDArray[np.float64]], NDArray[np.float64]]:
        """Мировые преобразования суставов после движения и мировые оси суставов"""
        transforms: list[NDArray[np.float64]] = []
        axes = np.zeros((self.dof, 3))
        for i in range(self.dof):
            parent = self._parents[i]
            pre = self._origins[i] if parent < 0 else transforms[parent] @ self._origins[i]
            axes[i] = pre[:3, :3] @ self._axes[i]
            motion = np.eye(4)
            if self._revolute[i]:
                motion[:3, :3] = _rodrigues(self._axes[i], q[i])
            else:
                motion[:3, 3] = self._axes[i] * q[i]
            transforms.append(pre @ motion)
        return transforms, axes

    def frame_matrices(self, q: ArrayLike) -> dict[str, NDArray[np.float64]]:
        values = self._check(q)
        transforms, _ = self._joint_transforms(values)
        return {name: self._frame_matrix(transforms, name) for name in self._frames}

    def _frame_matrix(self, transforms: list[NDArray[np.float64]], name: str) -> NDArray[np.float64]:
        parent, offset = self._frames[name]
        return offset if parent < 0 else transforms[parent] @ offset

    def kinematics(self, q: ArrayLike) -> tuple[dict[str, Pose], dict[str, NDArray[np.float64]]]:
        """Позы целевых систем и их геометрические якобианы (6×n: линейная, угловая часть)"""
        values = self._check(q)
        transforms, axes = self._joint_transforms(values)
        poses: dict[str, Pose] = {}
        jacobians: dict[str, NDArray[np.float64]] = {}
        for name in TARGET_FRAMES:
            matrix = self._frame_matrix(transforms, name)
            point = matrix[:3, 3]
            jacobian = np.zeros((6, self.dof))
            for i in self._ancestors[name]:
                if self._revolute[i]:
                    jacobian[:3, i] = np.cross(axes[i], point - transforms[i][:3, 3])
                    jacobian[3:, i] = axes[i]
                else:
                    jacobian[:3, i] = axes[i]
            poses[name] = Pose.from_matrix(matrix)
            jacobians[name] = jacobian
        return poses, jacobians


def forward_kinematics(chain: KinematicChain, q: ArrayLike) -> ChainPoses:
    """Позы left_tcp, right_tcp, head_cam для вектора суставов q"""
    matrices = chain.frame_matrices(q)
    return ChainPoses(
        left_tcp=Pose.from_matrix(matrices["left_tcp"]),
        right_tcp=Pose.from_matrix(matrices["right_tcp"]),
        head_cam=Pose.from_matrix(matrices["head_cam"]),
        within_limits=chain.within_limits(q),
    )


def load_chain(path: Path | str) -> KinematicChain:
    """Загружает цепь из файла или по имени поставляемой цепи"""
    chain_path = Path(path)
    if not chain_path.suffix and not chain_path.exists():
        chain_path = CHAINS_DIR / f"{chain_path}.json"
    if not chain_path.is_file():
        raise FileNotFoundError(f"Файл цепи не найден: {chain_path}")
    try:
        spec = ChainFile.model_validate_json(chain_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InvalidChain(f"Некорректный файл цепи {chain_path}: {e}") from e
    chain = KinematicChain(spec)
    logger.info("Цепь %s: %d суставов", chain.name, chain.dof)
    return chain
