"""
Замкнутый цикл симуляции развертывания.

На каждом шаге: наблюдение по прямой кинематике, перепланирование, перевод
относительных чанков в мировую систему, ансамблирование, насыщение захватов,
IK и шаг онлайн-памяти ключевых кадров по позе головной камеры.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from logging import getLogger
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ValidationError

from src.codec.action_codec import (
    VECTOR_SIZE,
    Convention,
    Vector29,
    chunk_relative_to_absolute,
    decode_world,
    saturate_grips,
)
from src.deploy.ensemble import ChunkHistory, ensemble_step
from src.deploy.ik import solve_ik
from src.deploy.kinematics import KinematicChain, forward_kinematics
from src.deploy.policies import ScriptedPolicy
from src.errors import EpisodeFormatError, TooShort
from src.geometry.core import Pose
from src.pipeline.container import EMPTY_SLOT, ContainerEpisode
from src.pipeline.episode import Episode, EpisodeConvention, Frame
from src.settings import IkWeights, RolloutConfig, SparksConfig
from src.sparks.selector import SparksStream

logger = getLogger(__name__)

ROLLOUT_META_FILE = "meta.json"
ROLLOUT_FILE = "rollout.bin"


class RolloutStep(NamedTuple):
    """Запись журнала одного шага"""

    step: int
    timestamp: float
    target: Vector29
    q: NDArray[np.float64]
    residual: float
    body_residuals: tuple[float, float, float]
    limit_clamps: NDArray[np.bool_]
    grips_saturated: bool
    head_pose: Pose
    keyframes: list[int]


@dataclass
class RolloutLog:
    chain_name: str
    policy_name: str
    rate_hz: float
    q_init: NDArray[np.float64]
    steps: list[RolloutStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def head_poses(self) -> list[Pose]:
        return [step.head_pose for step in self.steps]


class RolloutMeta(BaseModel):
    """Содержимое meta.json журнала симуляции"""

    format_version: int = 1
    chain: str
    dof: int
    policy: str
    rate_hz: float
    step_count: int
    keyframe_capacity: int
    record_size: int
    q_init: list[float]
    config: dict[str, Any] = {}


def episode_from_container(container: ContainerEpisode) -> Episode:
    """Сцена для симуляции из сконвертированного эпизода"""
    frames = []
    for timestamp, state, refs in zip(container.timestamps, container.states, container.image_refs):
        decoded = decode_world(Vector29(state, Convention.WORLD_ABSOLUTE), float(timestamp)).frame
        frames.append(replace(decoded, image_refs=refs))
    return Episode(
        episode_id=container.meta.episode_id,
        frames=tuple(frames),
        rate_hz=container.meta.rate_hz,
        convention=EpisodeConvention.BASE_FRAME,
        calibration_hash=container.meta.calibration_hash,
    )


def _observe(chain: KinematicChain, q: NDArray[np.float64], grips: tuple[float, float], timestamp: float) -> Frame:
    poses = forward_kinematics(chain, q)
    return Frame(timestamp, poses.left_tcp, poses.right_tcp, poses.head_cam, grips[0], grips[1])


def simulate_rollout(
    chain: KinematicChain,
    policy: ScriptedPolicy,
    scene_episode: Episode,
    cfg: RolloutConfig,
    ik: IkWeights,
    sparks: SparksConfig,
    q_init: NDArray[np.float64] | None = None,
) -> RolloutLog:
    """Прогоняет политику по сцене; результат детерминирован"""
    if len(scene_episode) == 0:
        raise TooShort(f"Сцена {scene_episode.episode_id} пуста")
    if cfg.replan_every > policy.horizon:
        raise ValueError(f"Чанки длиной {policy.horizon} не покрывают интервал перепланирования {cfg.replan_every}")

    n_steps = len(scene_episode) if cfg.max_steps is None else cfg.max_steps
    q = chain.clip(chain.nominal if q_init is None else q_init)
    first = scene_episode.frames[0]
    grips = (first.grip_left, first.grip_right)
    history = ChunkHistory(max(cfg.horizon, policy.horizon))
    stream = SparksStream(sparks)
    log = RolloutLog(chain_name=chain.name, policy_name=policy.name, rate_hz=cfg.rate_hz, q_init=q.copy())
    logger.info("Симуляция: цепь %s, политика %s, %d шагов", chain.name, policy.name, n_steps)

    for t in range(n_steps):
        timestamp = t / cfg.rate_hz
        if t % cfg.replan_every == 0:
            observation = _observe(chain, q, grips, timestamp)
            chunk = policy.plan(t, observation)
            if chunk.convention == Convention.CHUNK_RELATIVE:
                chunk = chunk_relative_to_absolute(observation, chunk)
            history.push(t, chunk)

        target, saturated = saturate_grips(ensemble_step(history, t, cfg.ensemble_decay))
        result = solve_ik(chain, target, q, ik)
        q = result.q
        grips = (target.grip("left"), target.grip("right"))

        head = forward_kinematics(chain, q).head_cam
        buffer = stream.push(head)
        log.steps.append(
            RolloutStep(
                step=t,
                timestamp=timestamp,
                target=target,
                q=q.copy(),
                residual=result.residual,
                body_residuals=result.body_residuals,
                limit_clamps=result.limit_clamps,
                grips_saturated=saturated,
                head_pose=head,
                keyframes=buffer.indices,
            )
        )
        if saturated:
            logger.debug("Шаг %d: захваты насыщены", t)

    return log


def rollout_dtype(dof: int, capacity: int) -> np.dtype:
    """Тип записи rollout.bin"""
    return np.dtype(
        [
            ("timestamp", "<f8"),
            ("target", "<f8", (VECTOR_SIZE,)),
            ("q", "<f8", (dof,)),
            ("residuals", "<f8", (3,)),
            ("limit_clamps", "u1", (dof,)),
            ("keyframe_count", "<u4"),
            ("keyframes", "<u4", (capacity,)),
        ]
    )


def write_rollout(output_dir: Path, log: RolloutLog, capacity: int, config: dict[str, Any] | None = None) -> Path:
    """Записывает журнал в стиле контейнера эпизодов: meta.json и записи фиксированной длины"""
    dof = len(log.q_init)
    records = np.zeros(len(log), dtype=rollout_dtype(dof, capacity))
    records["keyframes"] = EMPTY_SLOT
    for i, step in enumerate(log.steps):
        records["timestamp"][i] = step.timestamp
        records["target"][i] = step.target.values
        records["q"][i] = step.q
        records["residuals"][i] = step.body_residuals
        records["limit_clamps"][i] = step.limit_clamps
        records["keyframe_count"][i] = len(step.keyframes)
        records["keyframes"][i, : len(step.keyframes)] = step.keyframes

    meta = RolloutMeta(
        chain=log.chain_name,
        dof=dof,
        policy=log.policy_name,
        rate_hz=log.rate_hz,
        step_count=len(log),
        keyframe_capacity=capacity,
        record_size=records.dtype.itemsize,
        q_init=[float(value) for value in log.q_init],
        config=config or {},
    )
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / ROLLOUT_FILE).write_bytes(records.tobytes())
    (output_dir / ROLLOUT_META_FILE).write_text(meta.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Журнал симуляции записан в %s", output_dir)
    return output_dir


def read_rollout(output_dir: Path) -> tuple[RolloutMeta, NDArray[Any]]:
    try:
        meta = RolloutMeta.model_validate_json((output_dir / ROLLOUT_META_FILE).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise EpisodeFormatError(f"Некорректный {ROLLOUT_META_FILE} в {output_dir}: {e}") from e
    dtype = rollout_dtype(meta.dof, meta.keyframe_capacity)
    data = (output_dir / ROLLOUT_FILE).read_bytes()
    if dtype.itemsize != meta.record_size or len(data) != meta.step_count * dtype.itemsize:
        raise EpisodeFormatError(f"{ROLLOUT_FILE} в {output_dir} не соответствует meta.json")
    return meta, np.frombuffer(data, dtype=dtype)
