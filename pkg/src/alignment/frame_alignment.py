from __future__ import annotations

from dataclasses import replace
from logging import getLogger
from typing import NamedTuple

import numpy as np

from src.alignment.calibration import CalibrationSet
from src.errors import AlreadyAligned, TooShort
from src.geometry.core import Pose, Vector, circular_mean_yaw, rot_z, se3_compose, se3_inverse, yaw_of
from src.pipeline.episode import Episode, EpisodeConvention, Frame

logger = getLogger(__name__)


class AlignmentTransform(NamedTuple):
    """Преобразование VR→база, найденное по первому кадру эпизода"""

    vr_to_base: Pose
    forward_yaw: float
    base_origin: Vector


def estimate_forward_yaw(left0: Pose, right0: Pose, axis: str = "z") -> float:
    """Среднее (круговое) направление вперед по осям двух контроллеров"""
    theta_l = yaw_of(left0.axis(axis))
    theta_r = yaw_of(right0.axis(axis))
    return circular_mean_yaw(theta_l, theta_r)


def compute_vr_to_base(first: Frame, axis: str = "z") -> AlignmentTransform:
    """Начало базы под шлемом в плоскости xy, ось x базы вдоль среднего направления контроллеров"""
    theta = estimate_forward_yaw(first.left, first.right, axis)
    head = first.head.translation
    base_origin = np.array([head[0], head[1], 0.0])
    base_to_vr = Pose(rot_z(theta), base_origin)
    return AlignmentTransform(vr_to_base=se3_inverse(base_to_vr), forward_yaw=theta, base_origin=base_origin)


def _align_frame(frame: Frame, vr_to_base: Pose, calib: CalibrationSet) -> Frame:
    left = se3_compose(se3_compose(se3_compose(vr_to_base, frame.left), calib.left_flange), calib.flange_to_tcp)
    right = se3_compose(se3_compose(se3_compose(vr_to_base, frame.right), calib.right_flange), calib.flange_to_tcp)
    head = se3_compose(se3_compose(vr_to_base, frame.head), calib.head_to_cam)
    return frame.with_poses(left, right, head)


def align_episode(ep: Episode, calib: CalibrationSet, axis: str = "z") -> Episode:
    """Переводит все позы эпизода в систему робота с калибровкой и смещением TCP"""
    if ep.convention == EpisodeConvention.BASE_FRAME:
        raise AlreadyAligned(f"Эпизод {ep.episode_id} уже в базовой системе")
    if not ep.frames:
        raise TooShort(f"Эпизод {ep.episode_id} пуст")

    transform = compute_vr_to_base(ep.frames[0], axis)
    logger.debug(
        "Эпизод %s: yaw %.4f рад, начало базы %s", ep.episode_id, transform.forward_yaw, transform.base_origin.tolist()
    )
    frames = tuple(_align_frame(frame, transform.vr_to_base, calib) for frame in ep.frames)
    return replace(
        ep,
        frames=frames,
        convention=EpisodeConvention.BASE_FRAME,
        calibration_hash=calib.content_hash or ep.calibration_hash,
    )
