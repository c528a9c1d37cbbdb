from __future__ import annotations

from logging import getLogger
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation as ScipyRotation

from src.codec.action_codec import Convention, Vector29
from src.deploy.kinematics import TARGET_FRAMES, KinematicChain
from src.errors import DimensionMismatch, WrongConvention
from src.geometry.core import Pose
from src.settings import IkWeights

logger = getLogger(__name__)

BODY_OF_FRAME = {"left_tcp": "left", "right_tcp": "right", "head_cam": "head"}
MAX_DAMPING_GROWTH = 1e8


class IkResult(NamedTuple):
    """Итог решения IK: всегда есть конфигурация и ее невязка"""

    q: NDArray[np.float64]
    residual: float
    body_residuals: tuple[float, float, float]
    limit_clamps: NDArray[np.bool_]
    iterations: int
    cost_trace: list[float]


def pose_error(target: Pose, current: Pose) -> NDArray[np.float64]:
    """Ошибка [p_t − p_c, ось-угол(R_t·R_cᵀ)] в мировой системе"""
    rotation = ScipyRotation.from_matrix(target.rotation @ current.rotation.T).as_rotvec()
    return np.concatenate([target.translation - current.translation, rotation])


def weight_vector(w: IkWeights) -> NDArray[np.float64]:
    """Диагональ W в порядке left, right, head: по три позиционных и три угловых веса"""
    blocks = [
        (w.w_pos_left, w.w_rot_left),
        (w.w_pos_right, w.w_rot_right),
        (w.w_pos_head, w.w_rot_head),
    ]
    return np.concatenate([np.r_[np.full(3, pos), np.full(3, rot)] for pos, rot in blocks])


class _Problem:
    def __init__(self, chain: KinematicChain, targets: Vector29, w: IkWeights) -> None:
        self.chain = chain
        self.targets = {frame: targets.pose(BODY_OF_FRAME[frame]) for frame in TARGET_FRAMES}
        self.weights = weight_vector(w)
        self.w_posture = w.w_posture

    def error(self, q: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        poses, jacobians = self.chain.kinematics(q)
        error = np.concatenate([pose_error(self.targets[frame], poses[frame]) for frame in TARGET_FRAMES])
        jacobian = np.vstack([jacobians[frame] for frame in TARGET_FRAMES])
        return error, jacobian

    def cost(self, q: NDArray[np.float64], error: NDArray[np.float64]) -> float:
        posture = q - self.chain.nominal
        return float(0.5 * error @ (self.weights * error) + 0.5 * self.w_posture * posture @ posture)


def solve_ik(chain: KinematicChain, targets: Vector29, q_init: ArrayLike, w: IkWeights) -> IkResult:
    """Демпфированные наименьшие квадраты с ограничением суставов; стоимость не растет"""
    if targets.convention != Convention.WORLD_ABSOLUTE:
        raise WrongConvention(f"IK принимает только world_absolute, получено {targets.convention.value}")
    q = np.asarray(q_init, dtype=np.float64).reshape(-1)
    if q.shape != (chain.dof,):
        raise DimensionMismatch(f"Цепь '{chain.name}': q_init из {q.shape[0]} значений при {chain.dof} суставах")

    problem = _Problem(chain, targets, w)
    q = chain.clip(q)
    error, jacobian = problem.error(q)
    cost = problem.cost(q, error)
    trace = [cost]
    clamps = np.zeros(chain.dof, dtype=bool)
    identity = np.eye(chain.dof)
    damping = w.damping
    iterations = 0

    while iterations < w.max_iters:
        iterations += 1
        weighted = jacobian.T * problem.weights
        lhs = weighted @ jacobian + (damping + w.w_posture) * identity
        rhs = weighted @ error + w.w_posture * (chain.nominal - q)
        step = np.linalg.solve(lhs, rhs)

        unclamped = q + step
        candidate = chain.clip(unclamped)
        candidate_error, candidate_jacobian = problem.error(candidate)
        candidate_cost = problem.cost(candidate, candidate_error)

        if candidate_cost > cost:
            # шаг отвергнут: сильнее демпфируем и повторяем
            damping *= 10.0
            if damping > w.damping * MAX_DAMPING_GROWTH:
                break
            continue

        applied = float(np.linalg.norm(candidate - q))
        clamps |= unclamped != candidate
        q, error, jacobian, cost = candidate, candidate_error, candidate_jacobian, candidate_cost
        trace.append(cost)
        damping = w.damping
        if applied < w.step_tol:
            break

    bodies = error.reshape(3, 6)
    body_residuals = tuple(float(np.linalg.norm(block)) for block in bodies)
    residual = float(np.linalg.norm(error))
    logger.debug("IK: %d итераций, стоимость %.3e, невязка %.3e", iterations, cost, residual)
    return IkResult(
        q=q,
        residual=residual,
        body_residuals=(body_residuals[0], body_residuals[1], body_residuals[2]),
        limit_clamps=clamps,
        iterations=iterations,
        cost_trace=trace,
    )
