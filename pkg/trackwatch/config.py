import sys
from dataclasses import MISSING, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Union

import toml
from loguru import logger

from .domain.common import GridConfig, Roi, TrackwatchError
from .normalcy.common import NormalcySettings
from .preprocess.common import PreprocessConfig
from .stream.common import StreamSettings

__all__ = ("ConfigError", "PathsConfig", "LoggingConfig", "TrackwatchConfig", "describe_defaults")


class ConfigError(TrackwatchError, ValueError):
    """The configuration file or a command-line override is invalid."""


@dataclass(frozen=True)
class PathsConfig:
    model: str = "model.gtnm"
    zones: str = ""
    alerts: str = "alerts.jsonl"
    output_dir: str = "out"


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    directory: str = ""

    def apply(self, verbose: bool = False):
        logger.remove()
        level = "DEBUG" if verbose else self.level.upper()
        logger.add(sys.stderr, level=level)
        if self.directory:
            Path(self.directory).mkdir(parents=True, exist_ok=True)
            logger.add(str(Path(self.directory) / "trackwatch_{time}.log"), level=level, rotation="10 MB")


SECTIONS = {
    "roi": Roi,
    "grid": GridConfig,
    "preprocess": PreprocessConfig,
    "normalcy": NormalcySettings,
    "stream": StreamSettings,
    "paths": PathsConfig,
    "logging": LoggingConfig,
}


def _keys(section: str) -> Dict[str, object]:
    """Field name -> default for a section; `<required>` when there is none."""
    keys = {}
    for f in fields(SECTIONS[section]):
        if section == "preprocess" and f.name == "roi":
            continue
        if f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            default = "<required>"
        keys[f.name] = getattr(default, "value", default)
    return keys


def describe_defaults() -> str:
    lines = ["configuration keys (TOML sections, defaults):"]
    for section in SECTIONS:
        lines.append(f"  [{section}]")
        for key, default in _keys(section).items():
            lines.append(f"    {key} = {default!r}")
    return "\n".join(lines)


def _build(section: str, values: dict):
    try:
        return SECTIONS[section](**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}]: {e}")


@dataclass(frozen=True)
class TrackwatchConfig:
    roi: Optional[Roi] = None
    grid: GridConfig = GridConfig()
    preprocess: dict = field(default_factory=dict)
    normalcy: NormalcySettings = NormalcySettings()
    stream: StreamSettings = StreamSettings()
    paths: PathsConfig = PathsConfig()
    logging: LoggingConfig = LoggingConfig()

    @classmethod
    def from_dict(cls, raw: dict) -> "TrackwatchConfig":
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")

        built = {}
        for section, values in raw.items():
            if not isinstance(values, dict):
                raise ConfigError(f"[{section}] must be a table")
            unknown = set(values) - set(_keys(section))
            if unknown:
                raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")
            built[section] = dict(values) if section == "preprocess" else _build(section, values)

        config = cls(**built)
        if config.roi is not None:
            config.preprocess_config()
        return config

    @classmethod
    def from_config(cls, path: Union[str, Path, None]) -> "TrackwatchConfig":
        if path is None:
            return cls()
        try:
            with open(str(path)) as f:
                raw = toml.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e}")
        except toml.TomlDecodeError as e:
            raise ConfigError(f"{path}: {e}")
        return cls.from_dict(raw)

    def with_overrides(
        self,
        roi: Optional[str] = None,
        replicas: Optional[int] = None,
        partitions: Optional[int] = None,
        model: Optional[str] = None,
        alerts: Optional[str] = None,
    ) -> "TrackwatchConfig":
        """Command-line flags win over file values."""
        config = self
        if roi is not None:
            try:
                config = replace(config, roi=Roi.parse(roi))
            except ValueError as e:
                raise ConfigError(f"--roi: {e}")
        if replicas is not None or partitions is not None:
            values = {
                "n_partitions": partitions if partitions is not None else config.stream.n_partitions,
                "replicas": replicas if replicas is not None else config.stream.replicas,
            }
            config = replace(config, stream=_build("stream", {**_asdict(config.stream), **values}))
        if model is not None:
            config = replace(config, paths=replace(config.paths, model=model))
        if alerts is not None:
            config = replace(config, paths=replace(config.paths, alerts=alerts))
        return config

    def preprocess_config(self) -> PreprocessConfig:
        if self.roi is None:
            raise ConfigError("no region of interest: set [roi] or pass --roi")
        try:
            return PreprocessConfig(roi=self.roi, **self.preprocess)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[preprocess]: {e}")


def _asdict(settings) -> dict:
    return {f.name: getattr(settings, f.name) for f in fields(settings)}
