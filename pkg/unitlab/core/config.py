"""Experiment configuration: a flat TOML file of ``key = value`` lines.

Every key is declared once in ``CONFIG_SCHEMA``; the schema drives parsing,
type checking, serialization and the defaults listed in ``--help``.

Search order for the configuration file:
1. Explicit ``--config`` path
2. ``./unitlab_config.toml``
3. Built-in defaults
"""

import hashlib
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import toml

from .constants import CriticOptimizer, Defaults, FileNames, NormKind, RunMode
from .error_handling import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """All knobs of one experiment run."""

    mode: str = RunMode.TRAIN.value
    seed: int = 0
    epochs: int = 10
    batch_size: int = 128
    hidden_widths: list[int] = field(default_factory=lambda: [64, 64, 64, 64, 8])
    norms: str | list[str] = NormKind.UNITIZATION.value
    num_classes: int = 10
    conv_channels: list[int] = field(default_factory=list)
    conv_norm: str = NormKind.UNITIZATION.value

    # Optimizer
    lr: float = 0.05
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0005
    milestones: list[int] = field(default_factory=lambda: [61, 121, 161])
    decay_factor: float = 0.2

    # Normalization
    bn_eps: float = Defaults.BN_EPS
    bn_momentum: float = Defaults.BN_MOMENTUM
    unit_eps: float = Defaults.UNIT_EPS

    # Data
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    max_train_samples: int = 0
    max_test_samples: int = 0

    # Output and probes
    out_dir: str = "runs"
    moment_layer: int = -1
    probe_p: int = 2
    probe_c: float = 0.0

    # Bound battery
    bound_trials: int = 100
    bound_samples: int = 64
    bound_dims: list[int] = field(default_factory=lambda: [1, 2, 8])

    # Critic
    critic_iterations: int = Defaults.CRITIC_ITERATIONS
    critic_batch_size: int = Defaults.CRITIC_BATCH_SIZE
    critic_clip: float = Defaults.CRITIC_CLIP
    critic_lr: float = Defaults.CRITIC_LR
    critic_hidden: list[int] = field(default_factory=lambda: list(Defaults.CRITIC_HIDDEN))
    critic_sigmoid: bool = False
    critic_optimizer: str = CriticOptimizer.SGD.value

    # EM distance tracking
    emdist_layers: list[int] = field(default_factory=lambda: [-1])
    emdist_train_samples: int = 2048
    emdist_test_samples: int = 1024
    emdist_workers: int = 1

    # Logging
    log_level: str = "INFO"
    log_file: str = ""

    def norm_kinds(self) -> list[NormKind]:
        """Normalization of every hidden layer, expanding a single shared kind."""
        if isinstance(self.norms, str):
            return [NormKind(self.norms)] * len(self.hidden_widths)
        return [NormKind(norm) for norm in self.norms]

    def digest(self) -> str:
        """SHA-256 of the serialized configuration."""
        return hashlib.sha256(serialize_config(self).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ConfigKey:
    """Schema entry for one configuration key."""

    kind: str
    help: str
    choices: tuple[str, ...] = ()


_NORM_CHOICES = tuple(kind.value for kind in NormKind)

CONFIG_SCHEMA: dict[str, ConfigKey] = {
    "mode": ConfigKey("str", "experiment to run", tuple(m.value for m in RunMode)),
    "seed": ConfigKey("int", "master seed for weights, batches and critics"),
    "epochs": ConfigKey("int", "training epochs (0 writes only the init checkpoint)"),
    "batch_size": ConfigKey("int", "mini-batch size"),
    "hidden_widths": ConfigKey("int_list", "widths of the hidden dense layers"),
    "norms": ConfigKey("norms", "none|bn|unitization, shared or one per hidden layer"),
    "num_classes": ConfigKey("int", "classifier outputs"),
    "conv_channels": ConfigKey(
        "int_list", "channels of the 3x3 conv blocks ahead of the dense layers (empty = MLP)"
    ),
    "conv_norm": ConfigKey("str", "normalization of every conv block", _NORM_CHOICES),
    "lr": ConfigKey("float", "base learning rate"),
    "momentum": ConfigKey("float", "SGD momentum coefficient in [0, 1)"),
    "nesterov": ConfigKey("bool", "use Nesterov momentum"),
    "weight_decay": ConfigKey("float", "L2 weight decay"),
    "milestones": ConfigKey("int_list", "epochs at which the learning rate decays"),
    "decay_factor": ConfigKey("float", "learning-rate multiplier at each milestone"),
    "bn_eps": ConfigKey("float", "batch-norm epsilon"),
    "bn_momentum": ConfigKey("float", "running-statistics momentum"),
    "unit_eps": ConfigKey("float", "unitization epsilon"),
    "train_images": ConfigKey("str", "IDX training images (may be .gz)"),
    "train_labels": ConfigKey("str", "IDX training labels"),
    "test_images": ConfigKey("str", "IDX test images"),
    "test_labels": ConfigKey("str", "IDX test labels"),
    "max_train_samples": ConfigKey("int", "use only the first N training samples (0 = all)"),
    "max_test_samples": ConfigKey("int", "use only the first N test samples (0 = all)"),
    "out_dir": ConfigKey("str", "run directory for CSVs, checkpoints and manifest"),
    "moment_layer": ConfigKey("int", "hidden layer whose outputs are tracked (-1 = last)"),
    "probe_p": ConfigKey("int", "power p of the clipped-power probe (>= 2)"),
    "probe_c": ConfigKey("float", "clip C of the probe (0 = max absolute coordinate)"),
    "bound_trials": ConfigKey("int", "random instances per bound check"),
    "bound_samples": ConfigKey("int", "samples per set in the bound checks"),
    "bound_dims": ConfigKey("int_list", "dimensions exercised by the bound checks"),
    "critic_iterations": ConfigKey("int", "critic training steps T"),
    "critic_batch_size": ConfigKey("int", "critic mini-batch size n"),
    "critic_clip": ConfigKey("float", "critic weight clip bound c"),
    "critic_lr": ConfigKey("float", "critic learning rate"),
    "critic_hidden": ConfigKey("int_list", "critic hidden widths"),
    "critic_sigmoid": ConfigKey("bool", "sigmoid on the critic head"),
    "critic_optimizer": ConfigKey("str", "critic update rule", tuple(o.value for o in CriticOptimizer)),
    "emdist_layers": ConfigKey("int_list", "hidden layers whose EM distance is tracked"),
    "emdist_train_samples": ConfigKey("int", "training inputs fed to each critic"),
    "emdist_test_samples": ConfigKey("int", "held-out inputs for each estimate"),
    "emdist_workers": ConfigKey("int", "threads evaluating layer critics"),
    "log_level": ConfigKey(
        "str", "logging level", ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
    ),
    "log_file": ConfigKey("str", "optional rotating log file"),
}

# Keys that must be set (non-empty) for each mode.
MODE_REQUIRED: dict[RunMode, tuple[str, ...]] = {
    RunMode.TRAIN: ("train_images", "train_labels", "test_images", "test_labels"),
    RunMode.MOMENTS: ("train_images", "train_labels"),
    RunMode.EMDIST: ("train_images", "train_labels", "test_images", "test_labels"),
    RunMode.BOUNDS: (),
    RunMode.ORACLE_CHECK: (),
}

_POSITIVE_INTS = (
    "batch_size",
    "num_classes",
    "bound_trials",
    "bound_samples",
    "critic_iterations",
    "critic_batch_size",
    "emdist_train_samples",
    "emdist_test_samples",
    "emdist_workers",
)
_NON_NEGATIVE_INTS = ("epochs", "max_train_samples", "max_test_samples")
_POSITIVE_FLOATS = ("lr", "bn_eps", "unit_eps", "critic_clip", "critic_lr")


def _key_line(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


def _check_type(key: str, value: Any, entry: ConfigKey) -> Any:
    """Return ``value`` coerced to the key's type, or raise ValueError."""
    kind = entry.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"'{key}' must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ValueError(f"'{key}' must be a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"'{key}' must be true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError(f"'{key}' must be a quoted string, got {value!r}")
        if entry.choices and value not in entry.choices:
            raise ValueError(f"'{key}' must be one of {list(entry.choices)}, got {value!r}")
        return value
    if kind == "int_list":
        if not isinstance(value, list) or any(
            isinstance(item, bool) or not isinstance(item, int) for item in value
        ):
            raise ValueError(f"'{key}' must be a list of integers, got {value!r}")
        return list(value)
    if kind == "norms":
        items = [value] if isinstance(value, str) else value
        if not isinstance(items, list) or not all(isinstance(item, str) for item in items):
            raise ValueError(f"'{key}' must be a string or list of strings, got {value!r}")
        bad = [item for item in items if item not in _NORM_CHOICES]
        if bad:
            raise ValueError(f"'{key}' entries must be in {list(_NORM_CHOICES)}, got {bad}")
        return value if isinstance(value, str) else list(value)
    raise ValueError(f"unknown schema kind '{kind}' for '{key}'")


def _range_problems(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    """(key, message) pairs for values of the right type but out of range."""
    problems: list[tuple[str, str]] = []
    for key in _POSITIVE_INTS:
        if getattr(cfg, key) < 1:
            problems.append((key, f"'{key}' must be positive"))
    for key in _NON_NEGATIVE_INTS:
        if getattr(cfg, key) < 0:
            problems.append((key, f"'{key}' must be non-negative"))
    for key in _POSITIVE_FLOATS:
        if getattr(cfg, key) <= 0:
            problems.append((key, f"'{key}' must be positive"))

    if not 0.0 <= cfg.momentum < 1.0:
        problems.append(("momentum", "'momentum' must lie in [0, 1)"))
    if cfg.weight_decay < 0:
        problems.append(("weight_decay", "'weight_decay' must be non-negative"))
    if not 0.0 < cfg.decay_factor < 1.0:
        problems.append(("decay_factor", "'decay_factor' must lie in (0, 1)"))
    if not 0.0 < cfg.bn_momentum < 1.0:
        problems.append(("bn_momentum", "'bn_momentum' must lie in (0, 1)"))
    if any(b <= a for a, b in zip(cfg.milestones, cfg.milestones[1:])):
        problems.append(("milestones", "'milestones' must be strictly increasing"))
    if not cfg.hidden_widths or any(width < 1 for width in cfg.hidden_widths):
        problems.append(("hidden_widths", "'hidden_widths' must be non-empty and positive"))
    if any(channels < 1 for channels in cfg.conv_channels):
        problems.append(("conv_channels", "'conv_channels' must be positive"))
    if any(width < 1 for width in cfg.critic_hidden):
        problems.append(("critic_hidden", "'critic_hidden' widths must be positive"))
    if not cfg.bound_dims or any(dim < 1 for dim in cfg.bound_dims):
        problems.append(("bound_dims", "'bound_dims' must be non-empty and positive"))
    if not isinstance(cfg.norms, str) and len(cfg.norms) != len(cfg.hidden_widths):
        problems.append(("norms", "'norms' list must have one entry per hidden layer"))
    if cfg.probe_p < 2:
        problems.append(("probe_p", "'probe_p' must be at least 2"))
    if cfg.probe_c < 0:
        problems.append(("probe_c", "'probe_c' must be non-negative"))

    depth = len(cfg.hidden_widths)
    for key in ("moment_layer",):
        if not -depth <= getattr(cfg, key) < depth:
            problems.append((key, f"'{key}' must index one of {depth} hidden layers"))
    if not cfg.emdist_layers or any(not -depth <= l < depth for l in cfg.emdist_layers):
        problems.append(
            ("emdist_layers", f"'emdist_layers' must index one of {depth} hidden layers")
        )
    return problems


def config_from_dict(data: dict[str, Any], text: str = "") -> ExperimentConfig:
    """Build a config from parsed TOML, reporting problems with line numbers."""
    values: dict[str, Any] = {}
    for key, value in data.items():
        line = _key_line(text, key)
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(
                f"Unknown configuration key '{key}'" + (f" at line {line}" if line else ""),
                {"key": key, "line": line},
            )
        try:
            values[key] = _check_type(key, value, CONFIG_SCHEMA[key])
        except ValueError as e:
            raise ConfigurationError(
                f"{e}" + (f" at line {line}" if line else ""),
                {"key": key, "line": line},
            ) from e

    cfg = ExperimentConfig(**values)
    problems = _range_problems(cfg)
    if problems:
        key, message = problems[0]
        line = _key_line(text, key)
        raise ConfigurationError(
            message + (f" at line {line}" if line else ""), {"key": key, "line": line}
        )
    return cfg


def parse_config_text(text: str, mode: RunMode | None = None) -> ExperimentConfig:
    """Parse configuration text; when ``mode`` is given its required keys are checked."""
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise ConfigurationError(
            f"Invalid configuration at line {e.lineno}: {e.msg}", {"line": e.lineno}
        ) from e

    nested = [key for key, value in data.items() if isinstance(value, dict)]
    if nested:
        line = _key_line(text, nested[0]) or _key_line(text, f"[{nested[0]}]")
        raise ConfigurationError(
            f"Unknown configuration key '{nested[0]}' (tables are not supported)",
            {"key": nested[0], "line": line},
        )

    cfg = config_from_dict(data, text)
    if mode is not None:
        end_line = text.count("\n") + 1
        for key in MODE_REQUIRED[mode]:
            if not getattr(cfg, key):
                raise ConfigurationError(
                    f"Missing required key '{key}' for mode '{mode.value}' "
                    f"(end of file, line {end_line})",
                    {"key": key, "line": _key_line(text, key) or end_line},
                )
    return cfg


def parse_config(path: str | Path, mode: RunMode | None = None) -> ExperimentConfig:
    """Read and validate the configuration file at ``path``."""
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read configuration {config_path}: {e}") from e

    try:
        cfg = parse_config_text(text, mode)
    except ConfigurationError as e:
        e.details["path"] = str(config_path)
        raise
    logger.info(f"Configuration loaded from {config_path}")
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    """TOML text that parses back to an equal configuration."""
    return toml.dumps(asdict(cfg))


def find_config(explicit: str | Path | None = None) -> Path | None:
    """Locate the configuration file following the documented search order."""
    if explicit is not None:
        path = Path(explicit)
        if not path.is_file():
            raise ConfigurationError(f"Configuration file not found: {path}")
        return path
    local = Path.cwd() / FileNames.CONFIG
    if local.is_file():
        return local
    return None


def load_config(
    explicit: str | Path | None = None, mode: RunMode | None = None
) -> ExperimentConfig:
    """Load the configuration from the search path, falling back to defaults."""
    path = find_config(explicit)
    if path is None:
        logger.info(f"Using default configuration (no {FileNames.CONFIG} found)")
        cfg = ExperimentConfig()
        if mode is not None:
            validate_for_mode(cfg, mode)
        return cfg
    return parse_config(path, mode)


def validate_for_mode(cfg: ExperimentConfig, mode: RunMode) -> None:
    """Startup check: mode-required keys present and referenced files resolvable."""
    for key in MODE_REQUIRED[mode]:
        value = getattr(cfg, key)
        if not value:
            raise ConfigurationError(
                f"Missing required key '{key}' for mode '{mode.value}'", {"key": key}
            )
        if not Path(value).is_file():
            raise ConfigurationError(
                f"'{key}' refers to a missing file: {value}", {"key": key, "path": value}
            )


def config_help() -> str:
    """Help epilog listing every configuration key with its default."""
    defaults = asdict(ExperimentConfig())
    lines = [f"configuration keys ({FileNames.CONFIG}, TOML):"]
    for name in (f.name for f in fields(ExperimentConfig)):
        entry = CONFIG_SCHEMA[name]
        default = toml.dumps({name: defaults[name]}).strip().split("=", 1)[1].strip()
        lines.append(f"  {name} = {default}  # {entry.help}")
    return "\n".join(lines)
