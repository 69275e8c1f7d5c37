"""Training configuration, plain-text config files, and the LR schedule.

Config files are flat ``section.key = value`` lines (comments with #),
diff-friendly and language-agnostic. Training fields live under the
``train.`` prefix; command-line overrides use the same dotted keys.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

# paper-scale defaults; desk-scale runs override epochs/batch/size in config
DEFAULTS = dict(
    epochs=50,
    batch_size=64,
    lr0=4e-3,
    poly_power=0.9,
    seed=0,
    k=2,
    alpha=0.1,
    eps=1e-5,
    image_size=256,
    num_classes=2,
    depth=4,
    base_channels=16,
    lut_resolution=4096,
    include_background=True,
    style_augment=True,
    geometric_augment=True,
)


@dataclass
class TrainConfig:
    epochs: int = DEFAULTS["epochs"]
    batch_size: int = DEFAULTS["batch_size"]
    lr0: float = DEFAULTS["lr0"]
    poly_power: float = DEFAULTS["poly_power"]
    seed: int = DEFAULTS["seed"]
    k: int = DEFAULTS["k"]
    alpha: float = DEFAULTS["alpha"]
    eps: float = DEFAULTS["eps"]
    image_size: int = DEFAULTS["image_size"]
    num_classes: int = DEFAULTS["num_classes"]
    depth: int = DEFAULTS["depth"]
    base_channels: int = DEFAULTS["base_channels"]
    lut_resolution: int = DEFAULTS["lut_resolution"]
    include_background: bool = DEFAULTS["include_background"]
    # style_augment=False trains a single-branch baseline on raw source images
    style_augment: bool = DEFAULTS["style_augment"]
    geometric_augment: bool = DEFAULTS["geometric_augment"]

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch statistics)")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.poly_power < 0:
            raise ValueError("poly_power must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1 (k=0 leaves only the linear curves)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.image_size < 2**self.depth or self.image_size % 2**self.depth != 0:
            raise ValueError(f"image_size must be a positive multiple of {2 ** self.depth}")
        if self.lut_resolution < 256:
            raise ValueError("lut_resolution must be >= 256")
        return self


def poly_lr(lr0: float, iteration: int, max_iter: int, power: float) -> float:
    """lr(iter) = lr0 * (1 - iter/max_iter)^power; non-increasing, >= 0."""
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return lr0 * (1.0 - iteration / max_iter) ** power


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    raise ValueError(f"unhandled config field type for {key}")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``section.key = value`` lines into a flat dict."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key or not value:
            raise ValueError(f"line {lineno}: empty key or value")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_from_mapping(mapping: dict[str, str]) -> TrainConfig:
    """Build a validated TrainConfig from dotted 'train.*' keys.

    Keys under other sections are ignored, so any run snapshot replays
    directly as a config file; unknown fields under 'train.' are errors.
    """
    values = {}
    for key, raw in mapping.items():
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise ValueError(f"config key {key!r} is not dotted (expected section.key)")
        if section != "train":
            continue
        if name not in _TYPES:
            raise ValueError(f"unknown config field {name!r}")
        values[name] = _coerce(name, raw)
    return TrainConfig(**values).validate()


def load_config(path, overrides: dict[str, str] | None = None) -> TrainConfig:
    """Read a config file, apply dotted-key overrides, validate."""
    mapping = parse_config_text(Path(path).read_text(encoding="utf-8"))
    for key, value in (overrides or {}).items():
        mapping[key] = value
    return config_from_mapping(mapping)


def config_to_text(config: TrainConfig) -> str:
    """Render the resolved configuration in the same dotted format."""
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"train.{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(config: TrainConfig, path) -> None:
    Path(path).write_text(config_to_text(config), encoding="utf-8")
