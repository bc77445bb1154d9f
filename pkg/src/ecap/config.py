"""Run configuration: one flat set of validated ``key = value`` settings."""
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .compositor import TransformConfig
from .pseudo_label import EmaConfig
from .sampler import SamplerConfig
from .synthetic import DEFAULT_SHIFT_BIAS, DEFAULT_SHIFT_LINEAR, SyntheticSceneConfig

VARIANTS = ("baseline", "ecap", "denoise", "oracle")
OUTPUT_ROOT_ENV = "ECAP_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def _default_output_dir():
    return os.path.join(os.environ.get(OUTPUT_ROOT_ENV, "runs"), "run")


def _opt(default, help, check=None, rng=None):
    return field(default=default, metadata={"help": help, "check": check, "range": rng})


def _unit_open(v):
    return 0.0 < v < 1.0


def _unit(v):
    return 0.0 <= v <= 1.0


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


@dataclass(frozen=True)
class RunConfig:
    # experiment
    variant: str = _opt("ecap", "one of baseline, ecap, denoise, oracle",
                        lambda v: v in VARIANTS, "{baseline, ecap, denoise, oracle}")
    seed: int = _opt(0, "seed for data, initialisation and sampling", _nonneg, ">= 0")
    iterations: int = _opt(3000, "training iterations", _pos, ">= 1")
    final_k: int = _opt(50, "iterations averaged for target accuracy and noise ratio",
                        _pos, ">= 1")
    split_window: int = _opt(500, "final iterations pooled for the bank/image accuracy split",
                             _pos, ">= 1")
    output_dir: str = _opt(None, f"artifact directory (default ${OUTPUT_ROOT_ENV}/run)")
    num_png: int = _opt(4, "mixed samples exported as PNG triplets", _nonneg, ">= 0")
    # optimisation
    lr: float = _opt(0.1, "SGD learning rate (per-pixel mean loss)", _nonneg, ">= 0")
    momentum: float = _opt(0.9, "SGD momentum", lambda v: 0.0 <= v < 1.0, "[0, 1)")
    hidden: int = _opt(32, "hidden units of the pixel classifier", _pos, ">= 1")
    window: int = _opt(5, "local mean window of the pixel features",
                       lambda v: v >= 1 and v % 2 == 1, "odd >= 1")
    init_scale: float = _opt(0.5, "initial weight scale", _nonneg, ">= 0")
    # self-training
    tau: float = _opt(0.968, "confidence threshold of the target pixel weight",
                      _unit_open, "(0, 1)")
    ema_decay: float = _opt(0.999, "EMA decay of the teacher",
                            lambda v: 0.0 <= v < 1.0, "[0, 1)")
    # ECAP sampler
    n0: float = _opt(1.0, "maximum gate probability", _unit, "[0, 1]")
    beta: float = _opt(0.8, "MEC at which sampling comes online", _unit_open, "(0, 1)")
    gamma: float = _opt(0.005, "width of the sampling onset", _pos, "> 0")
    n_top: int = _opt(30, "entries per bank eligible for sampling", _pos, ">= 1")
    mec_excludes_disabled: bool = _opt(True, "drop disabled classes from the MEC average")
    disabled_classes: tuple = _opt((), "comma separated classes never sampled")
    # augmentation
    transforms: bool = _opt(True, "random scale/translate/flip (off gives ECAP-minus)")
    scale_min: float = _opt(0.1, "lower bound of the random scale", _pos, "> 0")
    scale_max: float = _opt(1.0, "upper bound of the random scale", _pos, "> 0")
    # synthetic data
    height: int = _opt(32, "scene height", _pos, ">= 1")
    width: int = _opt(32, "scene width", _pos, ">= 1")
    num_classes: int = _opt(5, "number of classes", lambda v: v >= 2, ">= 2")
    shapes_min: int = _opt(2, "fewest objects per scene", _pos, ">= 1")
    shapes_max: int = _opt(5, "most objects per scene", _pos, ">= 1")
    n_source: int = _opt(200, "source scenes", _pos, ">= 1")
    n_target: int = _opt(250, "target scenes (train + held-out)", lambda v: v >= 2, ">= 2")
    eval_fraction: float = _opt(0.2, "held-out share of the target scenes",
                                lambda v: 0.0 < v < 1.0, "(0, 1)")
    shift_strength: float = _opt(1.0, "multiplier of the target colour shift", _nonneg, ">= 0")
    shift_noise: float = _opt(0.04, "extra target pixel noise", _nonneg, ">= 0")
    severity_min: float = _opt(0.5, "lowest per-image target shift severity", _unit, "[0, 1]")

    def __post_init__(self):
        if self.output_dir is None:
            object.__setattr__(self, "output_dir", _default_output_dir())
        for f in fields(self):
            check = f.metadata.get("check")
            v = getattr(self, f.name)
            if check is not None and not check(v):
                raise ConfigError(f"{f.name}={v!r} out of range, expected {f.metadata['range']}")
        if self.scale_min > self.scale_max:
            raise ConfigError("scale_min must not exceed scale_max")
        if self.shapes_min > self.shapes_max:
            raise ConfigError("shapes_min must not exceed shapes_max")
        for c in self.disabled_classes:
            if not 0 <= c < self.num_classes:
                raise ConfigError(f"disabled_classes: class {c} outside [0, {self.num_classes})")
        if self.num_classes != 5:
            raise ConfigError("num_classes: the built-in palette has 5 classes")

    # -- module configs --

    def sampler(self):
        return SamplerConfig(n0=self.n0, beta=self.beta, gamma=self.gamma, n_top=self.n_top,
                             mec_excludes_disabled=self.mec_excludes_disabled)

    def transform(self):
        return TransformConfig(self.scale_min, self.scale_max, self.transforms)

    def ema(self):
        return EmaConfig(self.ema_decay)

    def scene(self):
        s = self.shift_strength
        return SyntheticSceneConfig(
            height=self.height, width=self.width, num_classes=self.num_classes,
            shapes_min=self.shapes_min, shapes_max=self.shapes_max,
            shift_linear=tuple(tuple(s * v for v in row) for row in DEFAULT_SHIFT_LINEAR),
            shift_bias=tuple(s * v for v in DEFAULT_SHIFT_BIAS),
            shift_noise=self.shift_noise, severity_min=self.severity_min,
            n_source=self.n_source, n_target=self.n_target, eval_fraction=self.eval_fraction,
        )

    def enabled_flags(self):
        return [c not in self.disabled_classes for c in range(self.num_classes)]

    def update(self, **kw):
        return parse_values({**to_dict(self), **kw})

    def to_text(self):
        return "".join(f"{k} = {_format(v)}\n" for k, v in to_dict(self).items())


FIELD_NAMES = tuple(f.name for f in fields(RunConfig))
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def to_dict(cfg):
    return {name: getattr(cfg, name) for name in FIELD_NAMES}


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, raw):
    typ = _TYPES[key]
    if not isinstance(raw, str):
        if typ is float and isinstance(raw, (int, np.integer)) and not isinstance(raw, bool):
            return float(raw)
        if typ is tuple and isinstance(raw, (list, tuple)):
            return tuple(int(x) for x in raw)
        return raw
    s = raw.strip()
    try:
        if typ is bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if typ is int:
            return int(s)
        if typ is float:
            return float(s)
        if typ is tuple:
            return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    return s


def parse_values(values):
    unknown = sorted(set(values) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kw = {k: _coerce(k, v) for k, v in values.items()}
    if kw.get("output_dir") in ("", "None"):
        kw["output_dir"] = None
    return RunConfig(**kw)


def read_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    return values


def parse_config(path=None, overrides=None):
    """Load ``path`` (if given) and apply ``overrides`` on top."""
    values = {}
    if path is not None:
        with open(path) as f:
            values.update(read_config_text(f.read()))
    values.update(overrides or {})
    return parse_values(values)
