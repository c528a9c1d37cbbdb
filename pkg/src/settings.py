from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class ValidationRules(BaseModel):
    """Пороги проверки эпизодов (на шаг при 25 Гц)"""

    model_config = ConfigDict(frozen=True)

    max_translation_step: float = Field(0.05, gt=0)
    max_rotation_step: float = Field(0.35, gt=0)
    rate_tolerance: float = Field(0.2, ge=0, lt=1)
    max_image_skew: float = Field(0.02, ge=0)
    nonfatal_rules: list[str] = Field(default_factory=list)


class SparksConfig(BaseModel):
    """Параметры выбора ключевых кадров"""

    model_config = ConfigDict(frozen=True)

    lookback: int = Field(100, ge=1)
    alpha: float = Field(0.5, gt=0, le=1)
    fov: float = Field(1.91, gt=0, le=math.pi)
    delta: float = Field(0.15, gt=0)
    capacity: int = Field(4, ge=1)
    w_novelty: float = Field(1.0, ge=0)
    w_recency: float = Field(1.0, ge=0)
    w_smooth: float = Field(1.0, ge=0)
    recency_timescale: float = Field(50.0, gt=0)
    smooth_scale: float = Field(0.1, gt=0)

    @property
    def angle_threshold(self) -> float:
        """Порог углового смещения α·FOV"""
        return self.alpha * self.fov


class IkWeights(BaseModel):
    """Веса функции стоимости IK и параметры итераций"""

    model_config = ConfigDict(frozen=True)

    w_pos_left: float = Field(1.0, ge=0)
    w_pos_right: float = Field(1.0, ge=0)
    w_pos_head: float = Field(1.0, ge=0)
    w_rot_left: float = Field(0.1, ge=0)
    w_rot_right: float = Field(0.1, ge=0)
    w_rot_head: float = Field(0.1, ge=0)
    w_posture: float = Field(1e-4, ge=0)
    damping: float = Field(1e-3, gt=0)
    max_iters: int = Field(50, ge=1)
    step_tol: float = Field(1e-8, gt=0)


class RolloutConfig(BaseModel):
    """Параметры замкнутого цикла симуляции"""

    model_config = ConfigDict(frozen=True)

    rate_hz: float = Field(25.0, gt=0)
    horizon: int = Field(40, ge=1)
    replan_every: int = Field(1, ge=1)
    ensemble_decay: float = Field(0.1, ge=0)
    relative_chunks: bool = True
    policy: Literal["replay", "stationary"] = "replay"
    max_steps: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _replan_within_horizon(self) -> RolloutConfig:
        if self.replan_every > self.horizon:
            raise ValueError(f"replan_every ({self.replan_every}) больше горизонта ({self.horizon}): шаги без чанка")
        return self


class ConvertConfig(BaseModel):
    """Параметры конвертации датасета"""

    model_config = ConfigDict(frozen=True)

    target_hz: float | None = Field(None, gt=0)


class PipelineSettings(BaseSettings):
    """Полная конфигурация: значения по умолчанию < файл конфигурации < флаги"""

    validation: ValidationRules = Field(default_factory=ValidationRules)
    sparks: SparksConfig = Field(default_factory=SparksConfig)
    ik: IkWeights = Field(default_factory=IkWeights)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    convert: ConvertConfig = Field(default_factory=ConvertConfig)
    seed: int = 0
    forward_axis: Literal["x", "y", "z"] = "z"

    model_config = SettingsConfigDict(env_nested_delimiter="__", extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Переменные окружения не участвуют: только флаги и файл"""
        return init_settings, dotenv_settings


class RuntimeSettings(BaseSettings):
    """Настройки процесса, читаются из окружения EGOKIT_*"""

    workers: int = Field(1, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "WARNING"
    model_config = SettingsConfigDict(env_file="egokit.env", env_prefix='EGOKIT_', extra="ignore")

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value: Any) -> Any:
        return value.upper() if isinstance(value, str) else value


def load_settings(config_file: Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineSettings:
    """Собирает конфигурацию из файла и переопределений командной строки"""
    if config_file is not None and not config_file.is_file():
        raise FileNotFoundError(f"Файл конфигурации не найден: {config_file}")
    return PipelineSettings(_env_file=config_file, **(overrides or {}))  # type: ignore[call-arg]


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value) if isinstance(value, str) else json.dumps(value)


def dump_settings_env(settings: PipelineSettings) -> str:
    """Записывает разрешенную конфигурацию в формате файла конфигурации"""
    lines: list[str] = []
    for key, value in settings.model_dump(mode="json").items():
        if isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_value is not None:
                    lines.append(f"{key.upper()}__{sub_key.upper()}={_render(sub_value)}")
        elif value is not None:
            lines.append(f"{key.upper()}={_render(value)}")
    return "\n".join(lines) + "\n"
