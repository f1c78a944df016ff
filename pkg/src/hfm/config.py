"""Experiment configuration and its flat ``key = value`` text format.

One setting per line; ``#`` starts a comment; blank lines are ignored. Keys
are the field names of :class:`ExperimentConfig`. Booleans accept
true/false/yes/no/on/off/1/0, and ``none`` clears an optional value::

    # data
    source = synthetic
    n_classes = 8
    overlap = 1.0
    k_shot = 4

    flow_steps = 2000
    baseline = true
"""
import dataclasses
import math
from dataclasses import dataclass, fields

from .alignment import AlignmentConfig
from .data import SyntheticConfig
from .errors import HFMError, InvalidArgumentError
from .training import FlowTrainConfig


class ConfigError(HFMError, ValueError):
    """Malformed or inconsistent configuration."""


SOURCES = ("synthetic", "hfmf", "csv")


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/default"

    # data
    source: str = "synthetic"
    data_path: str = None
    prototypes_path: str = None
    n_classes: int = 8
    dim: int = 16
    samples_per_class: int = 20
    sigma: float = 0.5
    center_distance: float = 3.0
    overlap: float = 1.0
    prototype_offset: float = 0.1
    k_shot: int = 4

    # alignment
    align_H: float = 0.1
    align_tau: float = 0.1
    align_beta: float = 0.2
    align_epochs: int = 50
    align_lr: float = 3e-3
    align_batch_size: int = 16
    alpha_img: float = None
    alpha_ratio: float = 0.5
    kappa: float = 1.0
    learn_kappa: bool = True

    # flow training
    delta: float = 0.1
    lam: float = 0.1
    flow_tau: float = 0.1
    flow_steps: int = 2000
    flow_batch_size: int = 64
    flow_lr: float = 5e-4
    weight_decay: float = 1e-4
    width: int = 256
    n_layers: int = 3

    # inference and reporting
    infer_delta: float = None
    baseline: bool = True
    hyperbolic: bool = True
    plots: bool = True

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.source != "synthetic" and not self.data_path:
            raise ConfigError(f"source {self.source!r} needs data_path")
        if self.source == "csv" and not self.prototypes_path:
            raise ConfigError("source 'csv' needs prototypes_path")
        if self.k_shot < 1:
            raise ConfigError("k_shot must be at least 1")
        if not (self.baseline or self.hyperbolic):
            raise ConfigError("nothing to run: both baseline and hyperbolic are off")
        try:
            self.synthetic_config() if self.source == "synthetic" else None
            self.alignment_config()
            self.flow_config()
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        if self.infer_delta is not None and not 0 < self.infer_delta <= 1:
            raise ConfigError("infer_delta must lie in (0, 1]")

    # ------------------------------------------------------------ sub-configs

    def synthetic_config(self):
        return SyntheticConfig(
            n_classes=self.n_classes,
            dim=self.dim,
            samples_per_class=self.samples_per_class,
            sigma=self.sigma,
            center_distance=self.center_distance,
            overlap=self.overlap,
            prototype_offset=self.prototype_offset,
            seed=self.seed,
        )

    def alignment_config(self):
        return AlignmentConfig(
            H=self.align_H,
            tau=self.align_tau,
            beta=self.align_beta,
            epochs=self.align_epochs,
            lr=self.align_lr,
            batch_size=self.align_batch_size,
            alpha_img=self.alpha_img,
            alpha_ratio=self.alpha_ratio,
            kappa=self.kappa,
            learn_kappa=self.learn_kappa,
            seed=self.seed,
        )

    def flow_config(self):
        return FlowTrainConfig(
            delta=self.delta,
            lam=self.lam,
            tau=self.flow_tau,
            steps=self.flow_steps,
            batch_size=self.flow_batch_size,
            lr=self.flow_lr,
            weight_decay=self.weight_decay,
            width=self.width,
            n_layers=self.n_layers,
            seed=self.seed,
        )

    @property
    def inference_delta(self):
        return self.delta if self.infer_delta is None else self.infer_delta

    # ------------------------------------------------------------ text form

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _format(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key, raw):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    if text.lower() == "none":
        return None
    if kind in (bool, "bool"):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind in (int, "int"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if kind in (float, "float"):
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise ConfigError(f"{key}: value must be finite")
        return value
    return text


def parse_config_text(text, base=None, source="<config>"):
    """Parse the flat format; unknown keys and repeated keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    base = base or ExperimentConfig()
    return dataclasses.replace(base, **values)


def load_config(path, **overrides):
    with open(path) as fh:
        cfg = parse_config_text(fh.read(), source=str(path))
    return cfg.replace(**overrides) if overrides else cfg
