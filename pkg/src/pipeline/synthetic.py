from __future__ import annotations

import math
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import UnknownScenario
from src.geometry.core import Matrix, Pose, rot_z, se3_compose
from src.pipeline.episode import Episode, EpisodeConvention, Frame, ImageRef

SCENARIOS = ("stationary", "yaw_sweep", "random_walk", "pick_place_script")

LEFT_HOME = np.array([0.35, 0.2, 1.0])
RIGHT_HOME = np.array([0.35, -0.2, 1.0])
HEAD_HOME = np.array([0.0, 0.0, 1.6])


class SyntheticSpec(BaseModel):
    """Описание синтетического эпизода"""

    model_config = ConfigDict(frozen=True)

    scenario: str
    n_frames: int = Field(250, ge=1)
    rate_hz: float = Field(25.0, gt=0)
    sweep_span: float = Field(1.91, ge=0)
    randomize_vr_frame: bool = True
    episode_id: str = "synthetic"


def _rot_y(theta: float) -> Matrix:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def facing(yaw: float, pitch: float = 0.0) -> Matrix:
    """Поворот, ось z которого смотрит по направлению yaw с наклоном pitch"""
    return rot_z(yaw) @ _rot_y(math.pi / 2 + pitch)


def _smoothstep(s: np.ndarray) -> np.ndarray:
    return np.asarray(0.5 - 0.5 * np.cos(np.pi * np.clip(s, 0.0, 1.0)))


class _Track:
    """Траектории тел до перевода в кадры"""

    def __init__(self, n: int) -> None:
        self.positions = {
            "left": np.tile(LEFT_HOME, (n, 1)),
            "right": np.tile(RIGHT_HOME, (n, 1)),
            "head": np.tile(HEAD_HOME, (n, 1)),
        }
        self.yaw = {body: np.zeros(n) for body in self.positions}
        self.pitch = {body: np.zeros(n) for body in self.positions}
        self.grips = {"left": np.zeros(n), "right": np.zeros(n)}


def _stationary(track: _Track, spec: SyntheticSpec, rng: np.random.Generator) -> None:
    pass


def _yaw_sweep(track: _Track, spec: SyntheticSpec, rng: np.random.Generator) -> None:
    track.yaw["head"] = np.linspace(0.0, spec.sweep_span, spec.n_frames)


def _random_walk(track: _Track, spec: SyntheticSpec, rng: np.random.Generator) -> None:
    n = spec.n_frames
    for body in track.positions:
        track.positions[body] = track.positions[body] + np.cumsum(rng.normal(0.0, 0.004, (n, 3)), axis=0)
        track.yaw[body] = np.cumsum(rng.normal(0.0, 0.02, n))
        track.pitch[body] = np.clip(np.cumsum(rng.normal(0.0, 0.01, n)), -0.6, 0.6)
    for body in track.grips:
        track.grips[body] = np.clip(0.5 + np.cumsum(rng.normal(0.0, 0.02, n)), 0.0, 1.0)


def _pick_place(track: _Track, spec: SyntheticSpec, rng: np.random.Generator) -> None:
    n = spec.n_frames
    pick = RIGHT_HOME + np.array([0.15, rng.uniform(-0.1, 0.1), -0.2])
    place = RIGHT_HOME + np.array([0.1, rng.uniform(0.2, 0.35), -0.15])
    s = np.linspace(0.0, 1.0, n)
    # фазы: к объекту, перенос, возврат
    to_pick = _smoothstep(s / 0.3)[:, None]
    to_place = _smoothstep((s - 0.4) / 0.3)[:, None]
    back = _smoothstep((s - 0.8) / 0.2)[:, None]
    right = RIGHT_HOME + to_pick * (pick - RIGHT_HOME) + to_place * (place - pick) + back * (RIGHT_HOME - place)
    track.positions["right"] = right
    track.positions["left"] = LEFT_HOME + 0.02 * np.column_stack([np.sin(2 * np.pi * s), np.zeros(n), np.zeros(n)])
    track.grips["right"] = np.where((s >= 0.32) & (s < 0.72), 1.0, 0.0)
    track.yaw["head"] = math.atan2(pick[1], pick[0]) * to_pick[:, 0] + (
        math.atan2(place[1], place[0]) - math.atan2(pick[1], pick[0])
    ) * to_place[:, 0] * (1.0 - back[:, 0])
    track.pitch["head"] = -0.4 * to_pick[:, 0] * (1.0 - back[:, 0])


_BUILDERS: dict[str, Callable[[_Track, SyntheticSpec, np.random.Generator], None]] = {
    "stationary": _stationary,
    "yaw_sweep": _yaw_sweep,
    "random_walk": _random_walk,
    "pick_place_script": _pick_place,
}


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Episode:
    """Детерминированный синтетический эпизод в сырой системе VR"""
    builder = _BUILDERS.get(spec.scenario)
    if builder is None:
        raise UnknownScenario(f"Неизвестный сценарий '{spec.scenario}'. Доступно: {', '.join(SCENARIOS)}")

    rng = np.random.default_rng(seed)
    track = _Track(spec.n_frames)
    builder(track, spec, rng)

    vr_from_base = Pose.identity()
    if spec.randomize_vr_frame:
        offset = np.array([rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0])
        vr_from_base = Pose(rot_z(rng.uniform(-math.pi, math.pi)), offset)

    frames: list[Frame] = []
    for k in range(spec.n_frames):
        timestamp = k / spec.rate_hz
        poses = {
            body: se3_compose(vr_from_base, Pose(facing(track.yaw[body][k], track.pitch[body][k]), positions[k]))
            for body, positions in track.positions.items()
        }
        frames.append(
            Frame(
                timestamp=timestamp,
                left=poses["left"],
                right=poses["right"],
                head=poses["head"],
                grip_left=float(track.grips["left"][k]),
                grip_right=float(track.grips["right"][k]),
                image_refs={"head_cam": ImageRef(f"{spec.episode_id}/head_cam/{k:06d}.jpg", timestamp)},
            )
        )

    return Episode(
        episode_id=spec.episode_id,
        frames=tuple(frames),
        rate_hz=spec.rate_hz,
        convention=EpisodeConvention.VR_RAW,
    )
