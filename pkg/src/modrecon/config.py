"""Experiment specification and its key-value text format.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment. Lists are comma separated and integer ranges may be written
``lo..hi`` (inclusive), e.g.::

    edges = data/karate/edges.txt
    labels = data/karate/labels.txt
    model = twostage
    seeds = 0..9
    k = 2
    layer_dims = 32, 16
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .nn import TrainingConfig

MODEL_KINDS = ("onestage", "twostage", "gae")
METRICS = ("q", "nmi", "ac")


class ConfigError(ValueError):
    def __init__(self, message, path=None, lineno=None):
        where = f"{path}:{lineno}: " if path and lineno else (f"{path}: " if path else "")
        super().__init__(where + message)


def parse_int_list(text):
    """``"0..3"`` -> ``[0, 1, 2, 3]``; ``"1, 4, 5"`` -> ``[1, 4, 5]``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _opt_float(v):
    return None if str(v).lower() in ("", "none") else float(v)


def _opt_str(v):
    return None if str(v).lower() in ("", "none") else str(v)


def _opt_int(v):
    return None if str(v).lower() in ("", "none") else int(v)


def _range(v):
    if str(v).strip().lower() in ("", "none"):
        return None
    vals = parse_int_list(v)
    if not vals:
        return None
    return (min(vals), max(vals))


_CONVERTERS = {
    "edges": _opt_str,
    "features": _opt_str,
    "labels": _opt_str,
    "model": str,
    "k": _opt_int,
    "k_range": _range,
    "seeds": parse_int_list,
    "split_fraction": float,
    "restarts": int,
    "metrics": lambda v: tuple(s.strip().lower() for s in str(v).split(",") if s.strip()),
    "layer_dims": lambda v: tuple(parse_int_list(v)),
    "learning_rate": float,
    "epochs": int,
    "minibatch_size": int,
    "neighbor_samples": int,
    "decoder_nonlinearity": str,
    "input_learning_rate": _opt_float,
    "batch_mode": str,
}

TRAINING_KEYS = tuple(f.name for f in fields(TrainingConfig) if f.name != "seed")


@dataclass
class ExperimentSpec:
    edges: str | None = None
    features: str | None = None
    labels: str | None = None
    model: str = "twostage"
    k: int | None = None
    k_range: tuple | None = None
    seeds: list = field(default_factory=lambda: [0])
    split_fraction: float = 0.2
    restarts: int = 10
    metrics: tuple = ("q", "nmi", "ac")
    layer_dims: tuple = (32, 16)
    learning_rate: float = 0.01
    epochs: int = 200
    minibatch_size: int = 16
    neighbor_samples: int = 5
    decoder_nonlinearity: str = "identity"
    input_learning_rate: float | None = None
    batch_mode: str = "paired"

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not 0.0 <= self.split_fraction <= 0.5:
            raise ConfigError("split_fraction must lie in [0, 0.5]")
        if self.k is not None and self.k < 2:
            raise ConfigError("k must be >= 2 (a single community has Q = 0)")
        if self.k_range is not None:
            self.k_range = tuple(int(v) for v in self.k_range)
            if len(self.k_range) != 2 or self.k_range[0] < 2 or self.k_range[0] > self.k_range[1]:
                raise ConfigError("k_range must be lo..hi with 2 <= lo <= hi")
        self.metrics = tuple(self.metrics)
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.training_config(0)  # validates the training fields

    def training_config(self, seed):
        return TrainingConfig(seed=seed, **{k: getattr(self, k) for k in TRAINING_KEYS})

    def to_dict(self):
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        d["metrics"] = list(self.metrics)
        d["k_range"] = None if self.k_range is None else list(self.k_range)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in _CONVERTERS})


def parse_config_text(text, path=None):
    """Key-value pairs as converted values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        try:
            out[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", path, lineno) from None
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), path)


def build_spec(file_values=None, overrides=None):
    """Merge file values with command-line overrides (``None`` overrides are ignored)."""
    values = dict(file_values or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = _CONVERTERS[key](value) if isinstance(value, str) else value
    return ExperimentSpec(**values)


def format_config(spec):
    """Inverse of :func:`parse_config_text` for a full spec."""
    lines = []
    for key, value in spec.to_dict().items():
        if value is None:
            value = "none"
        elif isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
