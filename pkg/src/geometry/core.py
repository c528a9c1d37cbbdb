from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import AntipodalYaw, DegenerateProjection, DegenerateRotation6D, ZeroVector

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

DEGENERACY_TOL = 1e-8
ORTHONORMAL_TOL = 1e-9

AXES = {"x": 0, "y": 1, "z": 2}


def _frozen(values: ArrayLike, shape: tuple[int, ...]) -> NDArray[np.float64]:
    array = np.array(values, dtype=np.float64).reshape(shape)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Pose:
    """Жесткое преобразование из SE(3): поворот R и перенос p (метры)"""

    rotation: Matrix = field(default_factory=lambda: np.eye(3))
    translation: Vector = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, matrix: ArrayLike) -> Pose:
        """Поза из однородной матрицы 4x4"""
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> Matrix:
        """Однородная форма [R p; 0 1]"""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def axis(self, name: str = "z") -> Vector:
        """Столбец поворота, соответствующий оси локальной системы"""
        return np.array(self.rotation[:, AXES[name]])

    def apply(self, point: ArrayLike) -> Vector:
        return np.asarray(self.rotation @ np.asarray(point, dtype=np.float64) + self.translation)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation)))

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def is_rotation(m: ArrayLike, tol: float = ORTHONORMAL_TOL) -> bool:
    """Проверяет mᵀm = I и det(m) = +1 с допуском tol"""
    matrix = np.asarray(m, dtype=np.float64)
    if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
        return False
    orthonormal = np.allclose(matrix.T @ matrix, np.eye(3), atol=tol, rtol=0.0)
    return bool(orthonormal and abs(np.linalg.det(matrix) - 1.0) <= tol)


def rot_z(theta: float) -> Matrix:
    """Поворот вокруг оси z на угол theta"""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(theta: float) -> float:
    """Приводит угол к интервалу (−π, π]"""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    return math.pi if wrapped <= -math.pi else wrapped


def rot6_from_rotation(r: ArrayLike) -> Vector:
    """Первые два столбца матрицы поворота, по столбцам"""
    m = np.asarray(r, dtype=np.float64)
    return np.concatenate([m[:, 0], m[:, 1]])


def rot6_to_rotation(v: ArrayLike) -> Matrix:
    """Ортонормализация Грама-Шмидта 6D-представления в матрицу поворота"""
    values = np.asarray(v, dtype=np.float64).reshape(6)
    c1, c2 = values[:3], values[3:]

    n1 = float(np.linalg.norm(c1))
    if not math.isfinite(n1) or n1 <= DEGENERACY_TOL:
        raise DegenerateRotation6D(f"Норма первого столбца {n1:.3e} не превышает {DEGENERACY_TOL:.0e}")
    b1 = c1 / n1

    u2 = c2 - float(b1 @ c2) * b1
    n2 = float(np.linalg.norm(u2))
    if not math.isfinite(n2) or n2 <= DEGENERACY_TOL:
        raise DegenerateRotation6D(f"Столбцы почти параллельны: остаток второго столбца {n2:.3e}")
    b2 = u2 / n2
    # второй проход убирает остаток вдоль b1 при почти параллельных столбцах
    b2 = b2 - float(b1 @ b2) * b1
    b2 = b2 / float(np.linalg.norm(b2))

    b3 = np.cross(b1, b2)
    return np.column_stack([b1, b2, b3])


def project_xy_normalize(v: ArrayLike) -> Vector:
    """Проецирует вектор на плоскость xy и нормирует"""
    vector = np.asarray(v, dtype=np.float64).reshape(3)
    planar = np.array([vector[0], vector[1], 0.0])
    norm = float(np.linalg.norm(planar))
    if not math.isfinite(norm) or norm <= DEGENERACY_TOL:
        raise DegenerateProjection(f"Проекция на xy имеет норму {norm:.3e}")
    return planar / norm


def circular_mean_yaw(theta_l: float, theta_r: float) -> float:
    """Круговое среднее двух углов рыскания"""
    s = math.sin(theta_l) + math.sin(theta_r)
    c = math.cos(theta_l) + math.cos(theta_r)
    if math.hypot(s, c) <= DEGENERACY_TOL:
        raise AntipodalYaw(f"Углы {theta_l:.6f} и {theta_r:.6f} рад противоположны")
    mean = math.atan2(s, c)
    return math.pi if mean <= -math.pi else mean


def se3_compose(a: Pose, b: Pose) -> Pose:
    """Произведение a·b однородных форм"""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def se3_inverse(a: Pose) -> Pose:
    """Обратное преобразование: (Rᵀ, −Rᵀp)"""
    rt = a.rotation.T
    return Pose(rt, -(rt @ a.translation))


def angle_between(u: ArrayLike, v: ArrayLike) -> float:
    """Угол между векторами в [0, π] через atan2(‖u×v‖, u·v)"""
    a = np.asarray(u, dtype=np.float64).reshape(3)
    b = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.any(a) or not np.any(b):
        raise ZeroVector("Угол с нулевым вектором не определен")
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(a @ b))


def angles_between_rows(u: ArrayLike, v: ArrayLike) -> Vector:
    """Построчный angle_between для массивов (N, 3); строки должны быть ненулевыми"""
    a = np.atleast_2d(np.asarray(u, dtype=np.float64))
    b = np.atleast_2d(np.asarray(v, dtype=np.float64))
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.einsum("ij,ij->i", *np.broadcast_arrays(a, b))
    return np.asarray(np.arctan2(cross, dot))


def yaw_of(v: ArrayLike) -> float:
    """Угол рыскания вектора после проекции на xy"""
    planar = project_xy_normalize(v)
    return math.atan2(planar[1], planar[0])
