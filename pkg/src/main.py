import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from src.alignment.calibration import load_calibration
from src.alignment.frame_alignment import align_episode
from src.codec.action_codec import Convention, Vector29
from src.deploy.kinematics import load_chain
from src.deploy.policies import ReplayPolicy, ScriptedPolicy, StationaryPolicy
from src.deploy.rollout import episode_from_container, simulate_rollout, write_rollout
from src.errors import CalibrationError, EgoKitError, EmptyDataset, EpisodeFormatError, InvalidChain
from src.geometry.core import Pose
from src.pipeline.container import is_container_dir, read_container
from src.pipeline.convert import RESOLVED_CONFIG_FILE, convert_dataset, validate_dataset, write_manifest
from src.pipeline.episode import Episode, EpisodeConvention
from src.pipeline.raw_format import read_episode, write_episode
from src.pipeline.synthetic import SCENARIOS, SyntheticSpec, generate_synthetic
from src.pipeline.validation import Verdict
from src.settings import PipelineSettings, RuntimeSettings, dump_settings_env, load_settings
from src.sparks.selector import precompute_head_poses, score_table

logger = logging.getLogger("egokit")

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3

VALIDATION_REPORT_FILE = "validation.json"
KEYFRAMES_FILE = "keyframes.json"
SCORES_FILE = "scores.tsv"

# флаг командной строки -> путь в конфигурации
PARAMETER_FLAGS = {
    "max_translation_step": ("validation", "max_translation_step", float),
    "max_rotation_step": ("validation", "max_rotation_step", float),
    "max_image_skew": ("validation", "max_image_skew", float),
    "lookback": ("sparks", "lookback", int),
    "alpha": ("sparks", "alpha", float),
    "fov": ("sparks", "fov", float),
    "delta": ("sparks", "delta", float),
    "capacity": ("sparks", "capacity", int),
    "damping": ("ik", "damping", float),
    "max_iters": ("ik", "max_iters", int),
    "target_hz": ("convert", "target_hz", float),
    "horizon": ("rollout", "horizon", int),
    "max_steps": ("rollout", "max_steps", int),
}


class UsageError(Exception):
    """Некорректные аргументы, обнаруженные после разбора"""


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """Парсер аргументов: общие параметры конфигурации и подкоманды"""
    parser = argparse.ArgumentParser(prog="egokit", description="Обработка эгоцентричных демонстраций")
    parser.add_argument("--config", type=Path, help="Файл конфигурации (КЛЮЧ=значение, вложенные через __)")
    parser.add_argument("--workers", type=int, help="Число процессов (по умолчанию EGOKIT_WORKERS или 1)")
    parser.add_argument("--seed", type=int, help="Начальное значение генератора")
    parser.add_argument("--forward-axis", choices=["x", "y", "z"], help="Ось контроллера, смотрящая вперед")
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="GROUP__KEY=VALUE",
        help="Переопределить любой параметр, например SPARKS__LOOKBACK=50",
    )
    for flag, (group, key, kind) in PARAMETER_FLAGS.items():
        parser.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=kind, help=f"{group}.{key}")

    subparsers = parser.add_subparsers(dest="command", required=True)

    convert_parser = subparsers.add_parser("convert", help="Сконвертировать каталог сырых эпизодов")
    convert_parser.add_argument("input", type=Path, help="Каталог с сырыми эпизодами")
    convert_parser.add_argument("output", type=Path, help="Каталог для контейнеров и манифеста")
    convert_parser.add_argument("--calibration", type=Path, help="Файл калибровки (по умолчанию тождественная)")

    validate_parser = subparsers.add_parser("validate", help="Только проверить эпизоды")
    validate_parser.add_argument("input", type=Path, help="Каталог с сырыми эпизодами")
    validate_parser.add_argument(
        "--report", type=Path, help=f"Каталог для {VALIDATION_REPORT_FILE} (по умолчанию входной каталог)"
    )

    align_parser = subparsers.add_parser("align", help="Выровнять один эпизод")
    align_parser.add_argument("episode", type=Path, help="Каталог сырого эпизода")
    align_parser.add_argument("output", type=Path, help="Каталог для выровненного эпизода")
    align_parser.add_argument("--calibration", type=Path, help="Файл калибровки (по умолчанию тождественная)")

    sparks_parser = subparsers.add_parser("sparks", help="Предвычислить ключевые кадры эпизода")
    sparks_parser.add_argument("episode", type=Path, help="Каталог сырого эпизода или контейнера")
    sparks_parser.add_argument("output", type=Path, help="Каталог для результатов")
    sparks_parser.add_argument("--emit-scores", action="store_true", help=f"Записать таблицу оценок {SCORES_FILE}")

    rollout_parser = subparsers.add_parser("rollout", help="Симуляция развертывания со скриптовой политикой")
    rollout_parser.add_argument("scene", type=Path, help="Контейнер или выровненный эпизод")
    rollout_parser.add_argument("output", type=Path, help="Каталог журнала")
    rollout_parser.add_argument("--chain", default="dual_arm_neck", help="Имя поставляемой цепи или путь к файлу")
    rollout_parser.add_argument("--policy", choices=["replay", "stationary"], help="Скриптовая политика")
    rollout_parser.add_argument("--calibration", type=Path, help="Калибровка для невыровненной сцены")

    gen_parser = subparsers.add_parser("gen", help="Сгенерировать синтетические эпизоды")
    gen_parser.add_argument("output", type=Path, help="Каталог для эпизодов")
    gen_parser.add_argument("--scenario", choices=SCENARIOS, default="random_walk", help="Сценарий")
    gen_parser.add_argument("--count", type=int, default=1, help="Число эпизодов")
    gen_parser.add_argument("--frames", type=int, default=250, help="Число кадров в эпизоде")
    gen_parser.add_argument("--rate", type=float, default=25.0, help="Частота, Гц")

    return parser.parse_args(args)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Флаги командной строки в виде вложенного словаря для PipelineSettings"""
    overrides: Dict[str, Any] = {}
    for assignment in args.assignments:
        key, sep, raw = assignment.partition("=")
        if not sep or not key:
            raise UsageError(f"Ожидалось GROUP__KEY=VALUE, получено '{assignment}'")
        path = key.strip().lower().split("__")
        target = overrides
        for part in path[:-1]:
            target = target.setdefault(part, {})
        target[path[-1]] = _parse_value(raw.strip())

    for flag, (group, key, _) in PARAMETER_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides.setdefault(group, {})[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.forward_axis is not None:
        overrides["forward_axis"] = args.forward_axis
    if getattr(args, "policy", None) is not None:
        overrides.setdefault("rollout", {})["policy"] = args.policy
    return overrides


def _load_scene(path: Path, args: argparse.Namespace, settings: PipelineSettings) -> Episode:
    if is_container_dir(path):
        return episode_from_container(read_container(path))
    episode = read_episode(path)
    if episode.convention == EpisodeConvention.VR_RAW:
        episode = align_episode(episode, load_calibration(args.calibration), settings.forward_axis)
    return episode


def _head_poses(path: Path) -> tuple[str, List[Pose]]:
    if is_container_dir(path):
        container = read_container(path)
        heads = [Vector29(state, Convention.WORLD_ABSOLUTE).pose("head") for state in container.states]
        return container.meta.episode_id, heads
    episode = read_episode(path)
    return episode.episode_id, episode.head_poses


def _write_resolved(output: Path, settings: PipelineSettings) -> None:
    output.mkdir(parents=True, exist_ok=True)
    (output / RESOLVED_CONFIG_FILE).write_text(dump_settings_env(settings), encoding="utf-8")


def command_convert(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    manifest = convert_dataset(args.input, args.output, load_calibration(args.calibration), settings, workers)
    logger.info("Принято %d, отклонено %d", manifest.accepted, manifest.rejected)
    return EXIT_REJECTED if manifest.rejected else EXIT_OK


def command_validate(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    report = validate_dataset(args.input, settings, workers)
    report_dir = args.report if args.report is not None else args.input
    write_manifest(report_dir, report, settings, VALIDATION_REPORT_FILE)
    for record in report.episodes:
        if record.verdict != Verdict.ACCEPTED:
            rules = sorted({violation.rule for violation in record.violations if violation.fatal})
            logger.warning("%s: отклонен (%s)", record.source, ", ".join(rules))
    return EXIT_REJECTED if report.rejected else EXIT_OK


def command_align(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    aligned = align_episode(read_episode(args.episode), load_calibration(args.calibration), settings.forward_axis)
    write_episode(aligned, args.output)
    _write_resolved(args.output, settings)
    return EXIT_OK


def command_sparks(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    episode_id, heads = _head_poses(args.episode)
    keyframes = precompute_head_poses(heads, settings.sparks)
    args.output.mkdir(parents=True, exist_ok=True)
    result = {"episode_id": episode_id, "config": settings.model_dump(mode="json"), "keyframes": keyframes}
    (args.output / KEYFRAMES_FILE).write_text(json.dumps(result), encoding="utf-8")
    if args.emit_scores:
        lines = ["step\ttau\tJ\tnovelty\trecency\tsmoothness\tadmitted"]
        for row in score_table(heads, settings.sparks):
            values = (row.score, row.novelty, row.recency, row.smoothness)
            numbers = "\t".join(f"{value:.17g}" for value in values)
            lines.append(f"{row.step}\t{row.tau}\t{numbers}\t{int(row.admitted)}")
        (args.output / SCORES_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_resolved(args.output, settings)
    return EXIT_OK


def command_rollout(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    chain = load_chain(args.chain)
    scene = _load_scene(args.scene, args, settings)
    cfg = settings.rollout
    policy: ScriptedPolicy
    if cfg.policy == "replay":
        policy = ReplayPolicy(scene, cfg.horizon, cfg.relative_chunks)
    else:
        policy = StationaryPolicy(cfg.horizon, cfg.relative_chunks)
    log = simulate_rollout(chain, policy, scene, cfg, settings.ik, settings.sparks)
    write_rollout(args.output, log, settings.sparks.capacity, settings.model_dump(mode="json"))
    _write_resolved(args.output, settings)
    return EXIT_OK


def command_gen(args: argparse.Namespace, settings: PipelineSettings, workers: int) -> int:
    if args.count < 1 or args.frames < 1:
        raise UsageError("--count и --frames должны быть положительными")
    for i in range(args.count):
        episode_id = f"{args.scenario}_{i:03d}"
        spec = SyntheticSpec(scenario=args.scenario, n_frames=args.frames, rate_hz=args.rate, episode_id=episode_id)
        write_episode(generate_synthetic(spec, settings.seed + i), args.output / episode_id)
    _write_resolved(args.output, settings)
    logger.info("Сгенерировано эпизодов: %d в %s", args.count, args.output)
    return EXIT_OK


COMMANDS = {
    "convert": command_convert,
    "validate": command_validate,
    "align": command_align,
    "sparks": command_sparks,
    "rollout": command_rollout,
    "gen": command_gen,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Выполняет подкоманду и возвращает код выхода"""
    try:
        runtime = RuntimeSettings()
    except ValidationError as e:
        logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
        logger.error("Ошибка переменных окружения EGOKIT_*: %s", e)
        return EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=runtime.log_level,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        settings = load_settings(args.config, collect_overrides(args))
        workers = args.workers if args.workers is not None else runtime.workers
        if workers < 1:
            raise UsageError(f"--workers должно быть положительным, получено {workers}")
        return COMMANDS[args.command](args, settings, workers)
    except (UsageError, ValidationError) as e:
        logger.error("Ошибка параметров: %s", e)
        return EXIT_USAGE
    except (OSError, EpisodeFormatError, CalibrationError, InvalidChain, EmptyDataset) as e:
        logger.error("Ошибка ввода-вывода: %s", e)
        return EXIT_IO
    except EgoKitError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_REJECTED


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
