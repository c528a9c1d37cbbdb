from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation
from scipy.spatial.transform import Slerp

from src.errors import TooShort
from src.geometry.core import Pose
from src.pipeline.episode import Episode, Frame

KNOT_TOL = 1e-12
GRID_TOL = 1e-9
BODIES = ("left", "right", "head")


def resample_grid(start: float, end: float, target_hz: float) -> np.ndarray:
    """Равномерная сетка с шагом 1/target_hz от start; последняя точка всегда ровно end.

    Если длительность не кратна шагу, последний интервал короче остальных.
    """
    count = int(math.floor((end - start) * target_hz + GRID_TOL)) + 1
    grid = np.asarray(start + np.arange(count) / target_hz)
    if end - grid[-1] > GRID_TOL / target_hz:
        return np.append(grid, end)
    grid[-1] = end
    return grid


def resample_episode(ep: Episode, target_hz: float) -> Episode:
    """Пересэмплирует эпизод: позиции линейно, повороты с постоянной угловой скоростью"""
    if len(ep.frames) < 2:
        raise TooShort(f"Для пересэмплирования нужно минимум 2 кадра, в {ep.episode_id}: {len(ep.frames)}")
    if not target_hz > 0:
        raise ValueError(f"Частота должна быть положительной: {target_hz}")

    times = np.array(ep.timestamps)
    grid = resample_grid(float(times[0]), float(times[-1]), target_hz)
    # точки сетки, совпадающие с исходными кадрами, копируются без интерполяции
    nearest = np.clip(np.searchsorted(times, grid), 0, len(times) - 1)
    on_knot = np.abs(times[nearest] - grid) <= KNOT_TOL
    previous = np.clip(nearest - 1, 0, len(times) - 1)
    on_knot_prev = np.abs(times[previous] - grid) <= KNOT_TOL

    rotations: dict[str, np.ndarray] = {}
    positions: dict[str, np.ndarray] = {}
    for body in BODIES:
        stack = np.array([frame.pose(body).rotation for frame in ep.frames])
        rotations[body] = Slerp(times, ScipyRotation.from_matrix(stack))(grid).as_matrix()
        track = np.array([frame.pose(body).translation for frame in ep.frames])
        positions[body] = np.column_stack([np.interp(grid, times, track[:, axis]) for axis in range(3)])

    grips = {
        "left": np.clip(np.interp(grid, times, [f.grip_left for f in ep.frames]), 0.0, 1.0),
        "right": np.clip(np.interp(grid, times, [f.grip_right for f in ep.frames]), 0.0, 1.0),
    }

    frames: list[Frame] = []
    for k, t in enumerate(grid):
        if on_knot[k] or on_knot_prev[k]:
            source = ep.frames[int(nearest[k] if on_knot[k] else previous[k])]
            frames.append(source)
            continue
        closest = ep.frames[int(np.argmin(np.abs(times - t)))]
        poses = {body: Pose(rotations[body][k], positions[body][k]) for body in BODIES}
        frames.append(
            Frame(
                timestamp=float(t),
                left=poses["left"],
                right=poses["right"],
                head=poses["head"],
                grip_left=float(grips["left"][k]),
                grip_right=float(grips["right"][k]),
                image_refs=closest.image_refs,
            )
        )

    return replace(ep, frames=tuple(frames), rate_hz=float(target_hz))
