import hashlib
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import orjson

from src.analysis.errors import ConfigError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
THREADS_ENV_VAR = "PLEADER_THREADS"


@dataclass
class ProcessConfig:
    """Pulse-process parameters for simulate and the pulse analysis path."""

    alpha: float = 0.5
    eta: float = 0.9
    pulse: str = "odd_bump"
    j_max: int = 16
    seed: int = 0
    num_points: int = 10001  # samples of the written path


@dataclass
class WaveletConfig:
    vanishing_moments: int = 2
    smoothness: int = 3


@dataclass
class GridConfig:
    """Scale grid; a_max/a_min default per input (signals: 2^-2..2^-8, pulses: the truncation-safe range)."""

    a_max: float | None = None
    a_min: float | None = None
    scales_per_octave: int = 8
    oversample: int = 16


@dataclass
class AnalysisConfig:
    input: str | None = None  # signal CSV or pulse-set JSON
    signal: str | None = None  # built-in test signal name
    signal_domain: tuple[float, float] = (-1.0, 1.0)
    signal_step: float = 2.0**-12
    signal_params: dict = field(default_factory=dict)
    p: float = 2.0
    J: int = 12  # pulse inputs are analyzed on 2^J points of [0, 1]
    scale_range: tuple[float, float] | None = None
    exponent_stride: int = 1

    def __post_init__(self):
        self.signal_domain = tuple(float(v) for v in self.signal_domain)
        if self.scale_range is not None:
            self.scale_range = tuple(float(v) for v in self.scale_range)
        self.p = float(self.p)


@dataclass
class SpectrumConfig:
    input: str | None = None  # exponent-field CSV; simulate and analyze are chained when absent
    bin_width: float = 0.05
    theory: bool = True


@dataclass
class VerifyConfig:
    criteria: list[str] | None = None
    seed_sweep: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)


@dataclass
class OutputConfig:
    directory: str = "out"
    threads: int | None = None
    plane_csv: bool = True
    plane_binary: bool = False


SECTION_TYPES = {
    "process": ProcessConfig,
    "wavelet": WaveletConfig,
    "grid": GridConfig,
    "analysis": AnalysisConfig,
    "spectrum": SpectrumConfig,
    "verify": VerifyConfig,
    "output": OutputConfig,
}

# Mapping from command-line flags to config fields
FLAG_MAPPING = {
    "seed": "process.seed",
    "out": "output.directory",
    "threads": "output.threads",
}

# Per-command target of the --input flag
INPUT_MAPPING = {
    "analyze": "analysis.input",
    "spectrum": "spectrum.input",
}


@dataclass
class RunConfig:
    process: ProcessConfig = field(default_factory=ProcessConfig)
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        data = asdict(self)
        data["analysis"]["signal_domain"] = list(self.analysis.signal_domain)
        if self.analysis.scale_range is not None:
            data["analysis"]["scale_range"] = list(self.analysis.scale_range)
        if math.isinf(self.analysis.p):
            data["analysis"]["p"] = "inf"
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """
        Build a config from its JSON form.

        Missing sections and fields take their defaults; unknown ones raise ConfigError.
        """
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - set(SECTION_TYPES) - {"format_version"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        version = data.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ConfigError(f"config format_version {version} is not supported, expected {FORMAT_VERSION}")

        sections = {}
        for name, section_type in SECTION_TYPES.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"config section '{name}' must be an object")
            allowed = {f.name for f in fields(section_type)}
            unknown_fields = set(values) - allowed
            if unknown_fields:
                raise ConfigError(f"unknown fields in '{name}': {sorted(unknown_fields)}")
            try:
                sections[name] = section_type(**values)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid '{name}' section: {e}") from e
        return cls(**sections, format_version=version)

    def to_json(self) -> bytes:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2)

    def config_hash(self) -> str:
        """SHA-256 of the canonical sorted-key JSON form, output section excluded."""
        data = self.to_dict()
        data.pop("output")
        return hashlib.sha256(orjson.dumps(data, option=orjson.OPT_SORT_KEYS)).hexdigest()

    def set_field(self, dotted: str, value) -> "RunConfig":
        """Copy of the config with section.field replaced, re-validated."""
        section, _, name = dotted.partition(".")
        if not name:
            raise ConfigError(f"override '{dotted}' must have the form section.field")
        data = self.to_dict()
        if section not in SECTION_TYPES:
            raise ConfigError(f"unknown config section '{section}'")
        if name not in data[section]:
            raise ConfigError(f"unknown field '{name}' in section '{section}'")
        data[section][name] = value
        return RunConfig.from_dict(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as f:
            data = orjson.loads(f.read())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    logger.debug(f"loaded config from {path}")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.write_bytes(config.to_json())
    return path


def parse_override(text: str) -> tuple[str, object]:
    """Split 'section.field=value'; the value is JSON, or a bare string when it does not parse."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override '{text}' must have the form section.field=value")
    try:
        value = orjson.loads(raw)
    except orjson.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(config: RunConfig, flags: dict, overrides=()) -> RunConfig:
    """
    Apply flag values through FLAG_MAPPING, then --set overrides.

    Args:
        config: Base config
        flags: Flag name to value; None values are skipped
        overrides: 'section.field=value' strings

    Returns:
        New RunConfig
    """
    for flag, value in flags.items():
        if value is None:
            continue
        config = config.set_field(FLAG_MAPPING[flag], value)
    for text in overrides:
        key, value = parse_override(text)
        config = config.set_field(key, value)
    return config


def resolve_threads(config: RunConfig) -> int:
    """Thread count from the config, then PLEADER_THREADS, then 1."""
    if config.output.threads is not None:
        threads = config.output.threads
    else:
        raw = os.environ.get(THREADS_ENV_VAR)
        if raw is None:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got '{raw}'") from None
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads
