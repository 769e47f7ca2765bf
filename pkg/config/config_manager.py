import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml
from jsonschema import Draft7Validator
from loguru import logger

from potentials.base_potential import ChannelSpec
from solvers.radial_grid import RadialGrid
from utils.exceptions import ConfigError

MODEL_TYPES = ("free", "example_nf", "uncoupled_bargmann", "table")
LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR")

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_INDEX = {"type": "integer", "minimum": 0}

SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["l1", "l2"],
            "properties": {"l1": _INDEX, "l2": _INDEX, "nu1": _INDEX, "nu2": _INDEX},
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": list(MODEL_TYPES)},
                "kappa1": _POSITIVE,
                "kappa2": _POSITIVE,
                "path": {"type": "string", "minLength": 1},
            },
        },
        "transform": {
            "type": "object",
            "additionalProperties": False,
            "required": ["chi"],
            "properties": {
                "chi": {"oneOf": [_POSITIVE, {"type": "array", "minItems": 1, "items": _POSITIVE}]},
                "sign": {"enum": [1, -1, "+", "-"]},
                "allow_unphysical": {"type": "boolean"},
            },
        },
        "radial_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r_min": _POSITIVE,
                "r_max": _POSITIVE,
                "knee": _POSITIVE,
                "n": {"type": "integer", "minimum": 16},
            },
        },
        "k_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k_min": _POSITIVE, "k_max": _POSITIVE, "n": {"type": "integer", "minimum": 16}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: {"type": "string", "minLength": 1}
                for name in ("dir", "phases", "transformed_phases", "table", "report", "metadata")
            },
        },
        "runtime": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threads": {"type": "integer", "minimum": 1},
                "log_level": {"enum": list(LOG_LEVELS)},
            },
        },
    },
}


@dataclass(frozen=True)
class ChannelConfig:
    l1: int
    l2: int
    nu1: Optional[int] = None
    nu2: Optional[int] = None

    def spec(self) -> ChannelSpec:
        nu1 = self.l1 if self.nu1 is None else self.nu1
        nu2 = self.l2 if self.nu2 is None else self.nu2
        return ChannelSpec(self.l1, self.l2, nu1, nu2)


@dataclass(frozen=True)
class ModelConfig:
    type: str
    kappa1: Optional[float] = None
    kappa2: Optional[float] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class TransformConfig:
    chi: Tuple[float, ...]
    sign: int = 1
    allow_unphysical: bool = False


@dataclass(frozen=True)
class GridConfig:
    r_min: float = 1e-4
    r_max: float = 60.0
    n: int = 6000
    knee: float = 1.0

    def build(self) -> RadialGrid:
        return RadialGrid.build(r_min=self.r_min, r_max=self.r_max, n=self.n, knee=self.knee)


@dataclass(frozen=True)
class KGridConfig:
    k_min: float = 0.01
    k_max: float = 5.0
    n: int = 200

    def values(self) -> np.ndarray:
        return np.linspace(self.k_min, self.k_max, self.n)


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "output"
    phases: str = "phases.csv"
    transformed_phases: str = "phases_v2.csv"
    table: str = "v2_table.dat"
    report: str = "verification_report.txt"
    metadata: str = "transform_metadata.yaml"

    def path(self, name: str) -> Path:
        return Path(self.dir) / getattr(self, name)


@dataclass(frozen=True)
class RuntimeConfig:
    threads: int = 1
    log_level: str = "INFO"


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; to_dict/from_dict round-trip to an equal instance"""

    model: ModelConfig
    channel: Optional[ChannelConfig] = None
    transform: Optional[TransformConfig] = None
    radial_grid: GridConfig = field(default_factory=GridConfig)
    k_grid: KGridConfig = field(default_factory=KGridConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"model": {k: v for k, v in asdict(self.model).items() if v is not None}}
        if self.channel is not None:
            data["channel"] = {k: v for k, v in asdict(self.channel).items() if v is not None}
        if self.transform is not None:
            data["transform"] = {"chi": list(self.transform.chi), "sign": self.transform.sign,
                                 "allow_unphysical": self.transform.allow_unphysical}
        data["radial_grid"] = asdict(self.radial_grid)
        data["k_grid"] = asdict(self.k_grid)
        data["output"] = asdict(self.output)
        data["runtime"] = asdict(self.runtime)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        transform = data.get("transform")
        if transform is not None:
            chi = transform["chi"]
            sign = transform.get("sign", 1)
            transform = TransformConfig(
                chi=tuple(float(c) for c in (chi if isinstance(chi, (list, tuple)) else [chi])),
                sign={"+": 1, "-": -1}.get(sign, sign),
                allow_unphysical=bool(transform.get("allow_unphysical", False)),
            )
        model = data["model"]
        return cls(
            model=ModelConfig(
                type=model["type"],
                kappa1=None if model.get("kappa1") is None else float(model["kappa1"]),
                kappa2=None if model.get("kappa2") is None else float(model["kappa2"]),
                path=model.get("path"),
            ),
            channel=ChannelConfig(**data["channel"]) if data.get("channel") else None,
            transform=transform,
            radial_grid=GridConfig(**{k: (int(v) if k == "n" else float(v))
                                      for k, v in data.get("radial_grid", {}).items()}),
            k_grid=KGridConfig(**{k: (int(v) if k == "n" else float(v)) for k, v in data.get("k_grid", {}).items()}),
            output=OutputConfig(**data.get("output", {})),
            runtime=RuntimeConfig(**data.get("runtime", {})),
        )

    def with_overrides(self, output_dir: Optional[str] = None, threads: Optional[int] = None) -> "RunConfig":
        """Copy with the command-line --out and --threads applied"""
        config = self
        if output_dir is not None:
            config = replace(config, output=replace(config.output, dir=str(output_dir)))
        if threads is not None:
            if threads < 1:
                raise ConfigError(f"runtime.threads must be >= 1, got {threads}")
            config = replace(config, runtime=replace(config.runtime, threads=int(threads)))
        return config


class ConfigManager:
    """Configuration manager for run configurations stored as YAML"""

    def __init__(self, env: Optional[str] = None, config_file: Optional[Union[str, Path]] = None,
                 data: Optional[Dict[str, Any]] = None):
        self.env = env or os.getenv('SUSY_ENV', 'default')
        self.config_dir = Path(__file__).parent
        self.config_file = Path(config_file) if config_file else self.config_dir / f"{self.env}.yaml"
        self.config = data if data is not None else self._load_config()
        self._validate()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ConfigManager":
        return cls(config_file=path)

    @classmethod
    def from_text(cls, text: str) -> "ConfigManager":
        return cls(config_file="<text>", data=cls._parse(text, "<text>"))

    @staticmethod
    def _parse(text: str, source: str) -> Dict[str, Any]:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            logger.error(f"Invalid YAML in {source}: {e}")
            raise ConfigError(f"Invalid YAML in {source}: {e}")
        if data is None:
            return {}
        if not isinstance(data, dict):
            logger.error(f"Configuration {source} is not a mapping")
            raise ConfigError(f"Configuration {source} must be a mapping of sections")
        return data

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file"""
        if not self.config_file.exists():
            logger.error(f"Configuration file not found: {self.config_file}")
            raise ConfigError(f"Configuration file not found: {self.config_file}")
        logger.info(f"Loading configuration: {self.config_file}")
        return self._parse(self.config_file.read_text(encoding='utf-8'), str(self.config_file))

    def _validate(self) -> None:
        errors = sorted(Draft7Validator(SCHEMA).iter_errors(self.config), key=lambda e: list(e.absolute_path))
        if errors:
            error = errors[0]
            path = [str(part) for part in error.absolute_path]
            if error.validator == "required":
                missing = [name for name in error.validator_value if name not in error.instance]
                where = ".".join(path + missing[:1])
                message = (f"missing required section '{where}'" if not path
                           else f"section '{path[0]}': missing required key '{where}'")
            elif error.validator == "additionalProperties" and not path:
                message = f"unknown section: {error.message}"
            else:
                message = f"section '{path[0] if path else '<root>'}': {'.'.join(path)}: {error.message}"
            logger.error(f"Invalid configuration {self.config_file}: {message}")
            raise ConfigError(f"{self.config_file}: {message}")

        grid = self.get('radial_grid', {}) or {}
        r_min, knee, r_max = grid.get('r_min', 1e-4), grid.get('knee', 1.0), grid.get('r_max', 60.0)
        if not r_min < knee < r_max:
            raise ConfigError(f"section 'radial_grid': need r_min < knee < r_max, got {r_min}, {knee}, {r_max}")
        k_grid = self.get('k_grid', {}) or {}
        if not k_grid.get('k_min', 0.01) < k_grid.get('k_max', 5.0):
            raise ConfigError("section 'k_grid': need k_min < k_max")

        model = self.model
        if model['type'] in ('example_nf', 'uncoupled_bargmann') and not {'kappa1', 'kappa2'} <= set(model):
            raise ConfigError(f"section 'model': type {model['type']} needs kappa1 and kappa2")
        if model['type'] == 'table' and 'path' not in model:
            raise ConfigError("section 'model': type table needs path")
        if model['type'] == 'free' and self.get('channel') is None:
            raise ConfigError("section 'channel': required for model type free")
        logger.debug(f"Configuration {self.config_file} validated")

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dotted key"""
        value = self.config
        for k in key.split('.'):
            if isinstance(value, dict):
                value = value.get(k, default)
            else:
                return default
        return value

    @property
    def model(self) -> Dict[str, Any]:
        return self.get('model', {})

    @property
    def channel(self) -> Optional[Dict[str, Any]]:
        return self.get('channel')

    @property
    def transform(self) -> Optional[Dict[str, Any]]:
        return self.get('transform')

    @property
    def threads(self) -> int:
        return self.get('runtime.threads', 1)

    @property
    def log_level(self) -> str:
        return self.get('runtime.log_level', 'INFO')

    def run_config(self) -> RunConfig:
        try:
            return RunConfig.from_dict(self.config)
        except (TypeError, ValueError) as e:
            logger.error(f"Cannot build run configuration from {self.config_file}: {e}")
            raise ConfigError(f"{self.config_file}: {e}")
