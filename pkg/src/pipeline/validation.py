from __future__ import annotations

import math
from enum import Enum
from logging import getLogger
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation

from src.alignment.frame_alignment import estimate_forward_yaw
from src.errors import EgoKitError
from src.geometry.core import is_rotation
from src.pipeline.episode import Episode
from src.settings import ValidationRules

logger = getLogger(__name__)

BODIES = ("left", "right", "head")


class Rule(str, Enum):
    """Имена правил проверки, как они попадают в манифест"""

    EMPTY = "empty"
    NON_FINITE = "non_finite"
    INVALID_ROTATION = "invalid_rotation"
    GRIP_RANGE = "grip_range"
    TIMESTAMP_ORDER = "timestamp_order"
    RATE_GAP = "rate_gap"
    TRANSLATION_STEP = "translation_step"
    ROTATION_STEP = "rotation_step"
    IMAGE_SKEW = "image_skew"
    ALIGNMENT_VIABLE = "alignment_viable"
    FORMAT = "format"


class Verdict(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class Violation(NamedTuple):
    """Нарушение правила на кадре"""

    frame_index: int
    rule: Rule
    measured: float
    threshold: float
    fatal: bool = True
    detail: str = ""


class ValidationReport(NamedTuple):
    """Итог проверки эпизода"""

    episode_id: str
    verdict: Verdict
    violations: list[Violation]

    @property
    def accepted(self) -> bool:
        return self.verdict == Verdict.ACCEPTED

    @property
    def fatal_rules(self) -> list[str]:
        return sorted({violation.rule.value for violation in self.violations if violation.fatal})


class _Collector:
    def __init__(self, rules: ValidationRules) -> None:
        self._nonfatal = set(rules.nonfatal_rules)
        self.violations: list[Violation] = []

    def add(self, index: int, rule: Rule, measured: float, threshold: float, detail: str = "") -> None:
        fatal = rule.value not in self._nonfatal
        self.violations.append(Violation(index, rule, float(measured), float(threshold), fatal, detail))


def _check_values(ep: Episode, out: _Collector) -> bool:
    """Конечность, корректность поворотов и диапазон захватов; True если позы пригодны для шагов"""
    poses_ok = True
    for i, frame in enumerate(ep.frames):
        if not math.isfinite(frame.timestamp):
            out.add(i, Rule.NON_FINITE, frame.timestamp, 0.0, "timestamp")
        for body in BODIES:
            pose = frame.pose(body)
            if not pose.is_finite():
                out.add(i, Rule.NON_FINITE, math.nan, 0.0, body)
                poses_ok = False
            elif not is_rotation(pose.rotation, 1e-6):
                out.add(i, Rule.INVALID_ROTATION, float(np.linalg.det(pose.rotation)), 1.0, body)
                poses_ok = False
        for body, grip in (("left", frame.grip_left), ("right", frame.grip_right)):
            if not math.isfinite(grip):
                out.add(i, Rule.NON_FINITE, grip, 0.0, f"grip_{body}")
            elif not 0.0 <= grip <= 1.0:
                out.add(i, Rule.GRIP_RANGE, grip, 1.0 if grip > 1.0 else 0.0, f"grip_{body}")
    return poses_ok


def _check_timing(ep: Episode, rules: ValidationRules, out: _Collector, short_tail: bool) -> None:
    expected = 1.0 / ep.rate_hz
    tolerance = rules.rate_tolerance * expected
    last = len(ep.frames) - 1
    for i in range(1, len(ep.frames)):
        dt = ep.frames[i].timestamp - ep.frames[i - 1].timestamp
        if not math.isfinite(dt):
            continue
        if dt <= 0.0:
            out.add(i, Rule.TIMESTAMP_ORDER, dt, 0.0)
        elif short_tail and i == last and dt < expected:
            continue
        elif abs(dt - expected) > tolerance:
            out.add(i, Rule.RATE_GAP, dt, expected)

    for i, frame in enumerate(ep.frames):
        for stream, ref in sorted(frame.image_refs.items()):
            skew = abs(ref.timestamp - frame.timestamp)
            if not skew <= rules.max_image_skew:
                out.add(i, Rule.IMAGE_SKEW, skew, rules.max_image_skew, stream)


def _check_smoothness(ep: Episode, rules: ValidationRules, out: _Collector) -> None:
    for body in BODIES:
        positions = np.array([frame.pose(body).translation for frame in ep.frames])
        rotations = np.array([frame.pose(body).rotation for frame in ep.frames])
        steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        relative = np.einsum("nji,njk->nik", rotations[:-1], rotations[1:])
        angles = ScipyRotation.from_matrix(relative).magnitude()
        for k in np.flatnonzero(steps > rules.max_translation_step):
            out.add(int(k) + 1, Rule.TRANSLATION_STEP, steps[k], rules.max_translation_step, body)
        for k in np.flatnonzero(angles > rules.max_rotation_step):
            out.add(int(k) + 1, Rule.ROTATION_STEP, angles[k], rules.max_rotation_step, body)


def rules_for_rate(rules: ValidationRules, source_hz: float, target_hz: float) -> ValidationRules:
    """Пороги для пересэмплированного эпизода.

    Шаг новой сетки покрывает до source_hz/target_hz исходных шагов, а ссылка на видеокадр берется
    от ближайшего исходного кадра, то есть смещается еще не более чем на полпериода источника.
    """
    scale = max(1.0, source_hz / target_hz)
    return rules.model_copy(
        update={
            "max_translation_step": rules.max_translation_step * scale,
            "max_rotation_step": rules.max_rotation_step * scale,
            "max_image_skew": rules.max_image_skew + 0.5 / source_hz,
        }
    )


def validate_episode(
    ep: Episode, rules: ValidationRules, axis: str = "z", short_tail: bool = False
) -> ValidationReport:
    """Проверяет эпизод по всем правилам; никогда не бросает исключений на плохих данных.

    short_tail разрешает укороченный последний интервал (конец пересэмплированного эпизода).
    """
    out = _Collector(rules)
    if not ep.frames:
        out.add(0, Rule.EMPTY, 0, 1)
    elif not (math.isfinite(ep.rate_hz) and ep.rate_hz > 0):
        out.add(0, Rule.RATE_GAP, ep.rate_hz, 0.0, "rate_hz")
    else:
        poses_ok = _check_values(ep, out)
        _check_timing(ep, rules, out, short_tail)
        if poses_ok and len(ep.frames) > 1:
            _check_smoothness(ep, rules, out)
        if poses_ok:
            first = ep.frames[0]
            try:
                estimate_forward_yaw(first.left, first.right, axis)
            except EgoKitError as e:
                out.add(0, Rule.ALIGNMENT_VIABLE, 0.0, 0.0, type(e).__name__)

    fatal = any(violation.fatal for violation in out.violations)
    verdict = Verdict.REJECTED if fatal else Verdict.ACCEPTED
    if fatal:
        logger.warning("Эпизод %s отклонен: %s", ep.episode_id, sorted({v.rule.value for v in out.violations}))
    return ValidationReport(ep.episode_id, verdict, out.violations)


def format_rejection(episode_id: str, error: Exception) -> ValidationReport:
    """Отчет для эпизода, который не удалось прочитать"""
    violation = Violation(0, Rule.FORMAT, 0.0, 0.0, True, str(error))
    return ValidationReport(episode_id, Verdict.REJECTED, [violation])
