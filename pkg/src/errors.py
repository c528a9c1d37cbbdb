from __future__ import annotations


class EgoKitError(Exception):
    """Базовая ошибка пакета"""


class DegenerateRotation6D(EgoKitError):
    """6D-представление не раскладывается в поворот (испорченный выход модели)"""


class DegenerateProjection(EgoKitError):
    """Ось почти вертикальна, проекция на плоскость xy пуста"""


class AntipodalYaw(EgoKitError):
    """Контроллеры смотрят в противоположные стороны, среднее направление не определено"""


class ZeroVector(EgoKitError):
    """Угол с нулевым вектором не определен"""


class AlreadyAligned(EgoKitError):
    """Эпизод уже переведен в базовую систему координат"""


class ConvertRefused(AlreadyAligned):
    """Во входном каталоге найден уже сконвертированный датасет"""


class GripOutOfRange(EgoKitError):
    """Сигнал захвата вне диапазона [0, 1]"""


class WrongConvention(EgoKitError):
    """Вектор или чанк записан в другой конвенции"""


class IndexOutOfWindow(EgoKitError):
    """Индекс кадра вне окна просмотра"""


class EmptyDataset(EgoKitError):
    """Во входном каталоге нет ни одного эпизода"""


class TooShort(EgoKitError):
    """Слишком мало кадров для операции"""


class UnknownScenario(EgoKitError):
    """Неизвестный сценарий синтетического эпизода"""


class NoCoverage(EgoKitError):
    """Ни один чанк в истории не покрывает запрошенный шаг"""


class DimensionMismatch(EgoKitError):
    """Размерность вектора суставов не совпадает с цепью"""


class InvalidChain(EgoKitError):
    """Описание кинематической цепи некорректно"""


class CalibrationError(EgoKitError):
    """Файл калибровки некорректен"""


class EpisodeFormatError(EgoKitError):
    """Файл эпизода или контейнера поврежден"""
