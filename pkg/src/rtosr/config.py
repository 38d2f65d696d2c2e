"""Experiment configuration and the plain-text config file format.

Config files are ``key = value`` lines; ``#`` starts a comment. Values are
coerced per field (ints, floats, strings, comma-separated integer tuples).
CLI flags override config-file keys, which override the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .rt_data import DEFAULT_MAX_RT_SECONDS

# Five fixed seeds for the multi-seed evaluation protocol.
DEFAULT_SEEDS = (11, 19, 29, 41, 53)

CE_MODES = ("mean", "final")
EXIT_LOSS_MODES = ("hard", "soft")
COUPLING_MODES = ("additive", "multiplicative")
LR_SCHEDULES = ("constant", "step")


@dataclass(frozen=True)
class ExperimentConfig:
    # architecture
    block_widths: tuple[int, ...] = (32, 32, 32, 32, 32)
    n_exits: int = 5
    activation: str = "relu"
    # optimization
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_schedule: str = "constant"
    lr_step_every: int = 50
    lr_gamma: float = 0.1
    # loss
    w_ce: float = 1.0
    w_performance: float = 1.0
    w_exit: float = 1.0
    ce_mode: str = "mean"
    exit_loss_mode: str = "hard"
    coupling: str = "additive"
    soft_temperature: float = 1.0
    # calibration
    threshold_period: int = 5
    max_rt_seconds: float = DEFAULT_MAX_RT_SECONDS
    # reproducibility
    seed: int = DEFAULT_SEEDS[0]

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_widths", tuple(int(w) for w in self.block_widths))
        if len(self.block_widths) != self.n_exits:
            raise ConfigError(
                f"block_widths has {len(self.block_widths)} entries for {self.n_exits} exits"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.threshold_period < 1:
            raise ConfigError("threshold_period must be >= 1")
        if self.ce_mode not in CE_MODES:
            raise ConfigError(f"ce_mode must be one of {CE_MODES}")
        if self.exit_loss_mode not in EXIT_LOSS_MODES:
            raise ConfigError(f"exit_loss_mode must be one of {EXIT_LOSS_MODES}")
        if self.coupling not in COUPLING_MODES:
            raise ConfigError(f"coupling must be one of {COUPLING_MODES}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.soft_temperature <= 0:
            raise ConfigError("soft_temperature must be positive")
        if self.max_rt_seconds <= 0:
            raise ConfigError("max_rt_seconds must be positive")

    def learning_rate_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch under the configured schedule."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        steps = (epoch - 1) // self.lr_step_every
        return self.learning_rate * self.lr_gamma**steps


def _coerce(name: str, kind: type, text: str):
    text = text.strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "1"):
                return True
            if text.lower() in ("false", "0"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        # tuple of ints (block_widths)
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {text!r}") from exc


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Raw key -> value mapping from a ``key = value`` file."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def build_config(
    file_path: str | Path | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """Defaults, then config-file keys, then non-None overrides."""
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    kind_of = {
        name: tuple if "tuple" in str(t) else (int if "int" in str(t) else (float if "float" in str(t) else str))
        for name, t in field_types.items()
    }
    cfg = ExperimentConfig()
    if file_path is not None:
        raw = parse_config_file(file_path)
        unknown = set(raw) - set(field_types)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **{k: _coerce(k, kind_of[k], v) for k, v in raw.items()})
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(clean) - set(field_types)
        if unknown:
            raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
        if clean:
            cfg = replace(cfg, **clean)
    return cfg
