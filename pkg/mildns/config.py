"""Experiment configuration: a flat ``key=value`` text format.

Keys are exactly the :class:`ExperimentConfig` field names. ``#`` starts a
comment, blank lines are ignored, list-valued keys take comma separated
values and ``inf`` is accepted wherever a float is.
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, fields
from typing import Tuple, get_type_hints

from .errors import ConfigError

logger = logging.getLogger(__name__)

EXPERIMENTS = ("corpus", "norms", "embedding", "product", "bilinear", "solve")
CONFIG_ENV = "MILDNS_CONFIG"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run.

    ``delta_gate <= 0`` calibrates the gate threshold from the corpus;
    ``sigma_gate`` is the threshold of the critical-index Besov gate;
    ``exponent <= 0`` uses d/q for the power-law families.
    """

    experiment: str = "norms"
    # grid
    dim: int = 2
    n: int = 64
    box_length: float = 2 * math.pi
    refinements: int = 1
    # exponents
    q: Tuple[float, ...] = (2.0,)
    r: Tuple[float, ...] = (math.inf,)
    s: Tuple[float, ...] = (0.0,)
    q_tilde: Tuple[float, ...] = (3.0,)
    p: Tuple[float, ...] = (2.0,)
    # time
    T: Tuple[float, ...] = (0.25,)
    M: int = 64
    gamma: float = 2.0
    # corpus
    family: str = "random_band_limited"
    count: int = 4
    seed: int = 0
    band_low: int = 1
    band_high: int = 4
    mode: Tuple[int, ...] = (0, 1)
    width: float = 0.5
    exponent: float = 0.0
    amplitude: float = 1.0
    amplitudes: Tuple[float, ...] = (1.0,)
    dilations: Tuple[int, ...] = (1,)
    # solver
    tol: float = 1e-10
    max_iter: int = 50
    delta_gate: float = 0.0
    sigma_gate: float = 1.0
    oracle_steps: int = 256
    # output
    workers: int = 1
    output: str = "results.csv"
    dump_dir: str = ""
    report_dir: str = ""
    timestamp: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{self.experiment}' (expected one of {', '.join(EXPERIMENTS)})")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.n <= 0 or self.n % 2:
            raise ConfigError(f"n must be a positive even integer, got {self.n}")
        for name in ("refinements", "M", "count", "max_iter", "oracle_steps", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("q", "r", "s", "q_tilde", "p", "T", "amplitudes", "dilations"):
            if not getattr(self, name):
                raise ConfigError(f"{name} needs at least one value")
        if not self.sigma_gate > 0:
            raise ConfigError(f"sigma_gate must be positive, got {self.sigma_gate}")
        if len(self.mode) != self.dim:
            raise ConfigError(f"mode needs {self.dim} components, got {len(self.mode)}")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _parse_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not a valid value")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got '{text}'")


def _split(text: str):
    return [item.strip() for item in text.split(",") if item.strip()]


_PARSERS = {
    int: int,
    float: _parse_float,
    str: str,
    bool: _parse_bool,
    Tuple[float, ...]: lambda text: tuple(_parse_float(v) for v in _split(text)),
    Tuple[int, ...]: lambda text: tuple(int(v) for v in _split(text)),
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def parse_config(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    """Apply the ``key=value`` lines of ``text`` on top of ``base`` (defaults)."""
    hints = get_type_hints(ExperimentConfig)
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got '{raw.strip()}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in hints:
            raise ConfigError(f"unknown key '{key}'", number)
        if key in values:
            raise ConfigError(f"duplicate key '{key}'", number)
        try:
            values[key] = _PARSERS[hints[key]](value)
        except ValueError as e:
            raise ConfigError(f"bad value for '{key}': {e}", number) from e
    base = base or ExperimentConfig()
    return dataclasses.replace(base, **values)


def load_config(path: str) -> ExperimentConfig:
    """Read a config file (UTF-8)."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    cfg = parse_config(text)
    logger.info("Loaded config from %s (experiment %s)", path, cfg.experiment)
    return cfg


def dump_config(cfg: ExperimentConfig, path: str = None) -> str:
    """Every field as ``key=value``; written to ``path`` when given."""
    text = "".join(f"{f.name}={_format(getattr(cfg, f.name))}\n" for f in fields(cfg))
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text


def config_path_from_env() -> str:
    """Config path from the environment, or None."""
    return os.getenv(CONFIG_ENV) or None
