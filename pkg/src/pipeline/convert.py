from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from logging import getLogger
from pathlib import Path
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel

from src.alignment.calibration import CalibrationSet
from src.alignment.frame_alignment import align_episode
from src.codec.action_codec import encode_world
from src.errors import ConvertRefused, EgoKitError, EmptyDataset
from src.pipeline.container import ContainerMeta, action_labels, frame_dtype, is_container_dir, write_container
from src.pipeline.episode import Episode
from src.pipeline.raw_format import EPISODE_FILE, is_raw_episode_dir, read_episode
from src.pipeline.resample import resample_episode
from src.pipeline.validation import ValidationReport, Verdict, format_rejection, rules_for_rate, validate_episode
from src.settings import PipelineSettings, dump_settings_env
from src.sparks.selector import precompute_offline

logger = getLogger(__name__)

MANIFEST_FILE = "manifest.json"
RESOLVED_CONFIG_FILE = "resolved.env"
ACTION_LABEL_RULE = "action[t] = state[t+1]; last step repeats its state"


class ViolationRecord(BaseModel):
    frame_index: int
    rule: str
    measured: float | None
    threshold: float
    fatal: bool
    detail: str


class EpisodeRecord(BaseModel):
    """Запись манифеста об одном найденном эпизоде"""

    episode_id: str
    source: str
    verdict: Verdict
    violations: list[ViolationRecord]
    output: str | None = None
    frame_count: int = 0


class Manifest(BaseModel):
    """Итог конвертации: принятые и отклоненные эпизоды с причинами"""

    format_version: int = 1
    calibration_hash: str | None = None
    action_labels: str = ACTION_LABEL_RULE
    config: dict[str, Any]
    accepted: int
    rejected: int
    episodes: list[EpisodeRecord]


def discover_episodes(input_root: Path) -> list[Path]:
    """Ищет каталоги эпизодов; уже сконвертированные данные не принимаются"""
    if not input_root.is_dir():
        raise FileNotFoundError(f"Входной каталог не существует: {input_root}")

    converted = sorted(path for path in input_root.rglob("meta.json") if is_container_dir(path.parent))
    if converted or is_container_dir(input_root):
        raise ConvertRefused(f"В {input_root} найден сконвертированный эпизод (base_frame): {converted[:1]}")

    found = sorted({path.parent for path in input_root.rglob(EPISODE_FILE) if is_raw_episode_dir(path.parent)})
    if not found:
        raise EmptyDataset(f"В {input_root} нет ни одного {EPISODE_FILE}")
    return found


def container_name(episode_dir: Path, input_root: Path) -> str:
    """Относительный путь контейнера повторяет путь найденного каталога, а не episode_id из файла"""
    source = episode_dir.relative_to(input_root).as_posix()
    return episode_dir.name if source == "." else source


def _violations(report: ValidationReport) -> list[ViolationRecord]:
    return [
        ViolationRecord(
            frame_index=v.frame_index,
            rule=v.rule.value,
            measured=v.measured if np.isfinite(v.measured) else None,
            threshold=v.threshold,
            fatal=v.fatal,
            detail=v.detail,
        )
        for v in report.violations
    ]


def check_episode(
    episode_dir: Path, input_root: Path, settings: PipelineSettings
) -> tuple[Episode | None, EpisodeRecord]:
    """Читает и проверяет эпизод; эпизод возвращается только если он принят"""
    source = episode_dir.relative_to(input_root).as_posix()
    try:
        ep = read_episode(episode_dir)
    except EgoKitError as e:
        logger.warning("Эпизод %s не прочитан: %s", source, e)
        report = format_rejection(source, e)
        record = EpisodeRecord(episode_id=source, source=source, verdict=report.verdict, violations=_violations(report))
        return None, record

    report = validate_episode(ep, settings.validation, settings.forward_axis)
    record = EpisodeRecord(
        episode_id=ep.episode_id,
        source=source,
        verdict=report.verdict,
        violations=_violations(report),
        frame_count=len(ep),
    )
    return (ep if report.accepted else None), record


def convert_episode(
    episode_dir: Path, input_root: Path, output_root: Path, calib: CalibrationSet, settings: PipelineSettings
) -> EpisodeRecord:
    """Проверка, выравнивание, кодирование и выбор ключевых кадров для одного эпизода"""
    ep, record = check_episode(episode_dir, input_root, settings)
    if ep is None:
        return record

    try:
        if settings.convert.target_hz is not None:
            source_hz = ep.rate_hz
            ep = resample_episode(ep, settings.convert.target_hz)
            rules = rules_for_rate(settings.validation, source_hz, ep.rate_hz)
            report = validate_episode(ep, rules, settings.forward_axis, short_tail=True)
            if not report.accepted:
                return record.model_copy(update={"verdict": report.verdict, "violations": _violations(report)})
        aligned = align_episode(ep, calib, settings.forward_axis)
        states = np.array([encode_world(frame).values for frame in aligned.frames])
        keyframes = precompute_offline(aligned, settings.sparks)
    except EgoKitError as e:
        logger.warning("Эпизод %s отклонен при конвертации: %s", ep.episode_id, e)
        report = format_rejection(ep.episode_id, e)
        return record.model_copy(update={"verdict": Verdict.REJECTED, "violations": _violations(report)})

    capacity = settings.sparks.capacity
    meta = ContainerMeta(
        episode_id=aligned.episode_id,
        rate_hz=aligned.rate_hz,
        calibration_hash=aligned.calibration_hash,
        frame_count=len(aligned),
        keyframe_capacity=capacity,
        record_size=frame_dtype(capacity).itemsize,
    )
    output_dir = output_root / container_name(episode_dir, input_root)
    write_container(
        output_dir,
        meta,
        aligned.timestamps,
        states,
        action_labels(states),
        keyframes,
        [dict(frame.image_refs) for frame in aligned.frames],
    )
    logger.info("Эпизод %s сконвертирован: %d кадров", aligned.episode_id, len(aligned))
    output = output_dir.relative_to(output_root).as_posix()
    return record.model_copy(update={"output": output, "frame_count": len(aligned)})


def _run_jobs(job: Callable[[Path], EpisodeRecord], episode_dirs: list[Path], workers: int) -> list[EpisodeRecord]:
    """Порядок записей не зависит от числа процессов"""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(job, episode_dirs))
    else:
        records = [job(path) for path in episode_dirs]
    return sorted(records, key=lambda record: (record.episode_id, record.source))


def _manifest(records: list[EpisodeRecord], settings: PipelineSettings, calibration_hash: str | None) -> Manifest:
    accepted = sum(record.verdict == Verdict.ACCEPTED for record in records)
    return Manifest(
        calibration_hash=calibration_hash,
        config=settings.model_dump(mode="json"),
        accepted=accepted,
        rejected=len(records) - accepted,
        episodes=records,
    )


def _checked_record(episode_dir: Path, input_root: Path, settings: PipelineSettings) -> EpisodeRecord:
    return check_episode(episode_dir, input_root, settings)[1]


def validate_dataset(input_root: Path, settings: PipelineSettings, workers: int = 1) -> Manifest:
    """Только проверка: отчет в формате манифеста без записи эпизодов"""
    episode_dirs = discover_episodes(input_root)
    logger.info("Проверка эпизодов: %d, процессов: %d", len(episode_dirs), workers)
    job = partial(_checked_record, input_root=input_root, settings=settings)
    return _manifest(_run_jobs(job, episode_dirs, workers), settings, None)


def convert_dataset(
    input_root: Path,
    output_root: Path,
    calib: CalibrationSet,
    settings: PipelineSettings,
    workers: int = 1,
) -> Manifest:
    """Конвертирует все эпизоды входного каталога и пишет манифест"""
    episode_dirs = discover_episodes(input_root)
    output_root.mkdir(parents=True, exist_ok=True)
    logger.info("Найдено эпизодов: %d, процессов: %d", len(episode_dirs), workers)

    job = partial(convert_episode, input_root=input_root, output_root=output_root, calib=calib, settings=settings)
    manifest = _manifest(_run_jobs(job, episode_dirs, workers), settings, calib.content_hash)
    write_manifest(output_root, manifest, settings)
    return manifest


def write_manifest(
    output_root: Path, manifest: Manifest, settings: PipelineSettings, name: str = MANIFEST_FILE
) -> Path:
    """Манифест и разрешенная конфигурация рядом с результатами"""
    output_root.mkdir(parents=True, exist_ok=True)
    path = output_root / name
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    (output_root / RESOLVED_CONFIG_FILE).write_text(dump_settings_env(settings), encoding="utf-8")
    return path
