"""Experiment configuration.

The on-disk format is a flat ``section.key = value`` text file (``#`` starts
a comment).  Precedence, lowest first: dataclass defaults, config file,
``LSMSIM_SECTION_KEY`` environment variables, CLI ``--section.key`` flags.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

ENV_PREFIX = "LSMSIM_"


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value, violated constraint."""


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | native | nmnist
    path: str = ""
    kind: str = "rate"  # synthetic task family: rate | order
    num_classes: int = 4
    channels: int = 32
    T: int = 24
    samples_per_class: int = 40
    rate_on: float = 0.3
    rate_off: float = 0.1
    groups: int = 4
    # N-MNIST import
    crop: int = 16
    merge_polarity: bool = True
    max_per_class: int = 0  # 0 = all


@dataclass
class LsmSection:
    h: int = 100
    u_th: float = 1.0
    decay: float = 0.9
    scale: float = 0.05
    width: int = 1
    depth: int = 1
    g_mean: float = 33.0
    g_std: float = 3.0
    forming: str = "dense"
    sparsity: float = 0.0
    quant_bits: int = 0  # 0 = off


@dataclass
class TrainSection:
    lr: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    momentum: float = 0.9


@dataclass
class NoiseSection:
    input_p: float = 0.0
    read: float = 0.0
    write: float = 0.0
    mode: str = "fraction"  # fraction of conductance std | absolute microsiemens


@dataclass
class ContrastiveSection:
    dim: int = 16
    temperature: float = 0.2
    lr: float = 0.5
    epochs: int = 150
    batch_size: int = 32
    heldout: str = "5,6"
    prototypes: str = "support"  # support | query
    num_classes: int = 7
    channels_v: int = 32
    channels_a: int = 24
    latent_dim: int = 3
    samples_per_class: int = 30


@dataclass
class EarlyExitSection:
    thresholds: str = "0.5,0.7,0.9,never"


@dataclass
class SweepSection:
    grid: str = ""  # e.g. "noise.input_p=0,0.1,0.2|lsm.h=50,100"
    repeats: int = 10
    workers: int = 1
    task: str = "supervised"  # supervised | zeroshot


@dataclass
class SeedSection:
    weights: int = 0
    data: int = 0
    training: int = 0


@dataclass
class OutputSection:
    dir: str = "out"


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    lsm: LsmSection = field(default_factory=LsmSection)
    train: TrainSection = field(default_factory=TrainSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    contrastive: ContrastiveSection = field(default_factory=ContrastiveSection)
    early_exit: EarlyExitSection = field(default_factory=EarlyExitSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    seeds: SeedSection = field(default_factory=SeedSection)
    output: OutputSection = field(default_factory=OutputSection)

    def keys(self) -> list[str]:
        return [f"{s.name}.{f.name}" for s in fields(self) for f in fields(getattr(self, s.name))]

    def get(self, key: str):
        section, name = _split(key)
        return getattr(getattr(self, section), name)

    def set(self, key: str, raw) -> None:
        section, name = _split(key)
        sec = getattr(self, section, None)
        kinds = {f.name: f.type for f in fields(sec)} if sec is not None else {}
        if name not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(sec, name, _coerce(kinds[name], raw, key))

    def replace(self, **overrides) -> "ExperimentConfig":
        """Deep copy with ``{"section.key": value}`` overrides (pass via ``**{...}``)."""
        new = copy_config(self)
        for k, v in overrides.items():
            new.set(k, v)
        return new

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(self.get(k))}\n" for k in self.keys())

    def validate(self) -> "ExperimentConfig":
        d, l, t, n = self.data, self.lsm, self.train, self.noise
        checks = [
            (d.source in ("synthetic", "native", "nmnist"), "data.source must be synthetic, native or nmnist"),
            (d.kind in ("rate", "order"), "data.kind must be rate or order"),
            (d.num_classes >= 2, "data.num_classes must be >= 2"),
            (0 <= d.rate_off <= 1 and 0 <= d.rate_on <= 1, "data rates must lie in [0, 1]"),
            (l.h >= 1 and l.width >= 1 and l.depth >= 1, "lsm.h, lsm.width, lsm.depth must be >= 1"),
            (l.u_th > 0, "lsm.u_th must be positive"),
            (0 <= l.decay <= 1, "lsm.decay must lie in [0, 1]"),
            (l.forming in ("dense", "sparse"), "lsm.forming must be dense or sparse"),
            (0 <= l.sparsity <= 1, "lsm.sparsity must lie in [0, 1]"),
            (t.lr >= 0 and t.epochs >= 0 and t.batch_size >= 1, "invalid train section"),
            (0 <= n.input_p <= 1, "noise.input_p must lie in [0, 1]"),
            (n.read >= 0 and n.write >= 0, "noise levels must be >= 0"),
            (n.mode in ("fraction", "absolute"), "noise.mode must be fraction or absolute"),
            (self.contrastive.prototypes in ("support", "query"), "contrastive.prototypes must be support or query"),
            (self.sweep.repeats >= 1 and self.sweep.workers >= 1, "sweep.repeats and sweep.workers must be >= 1"),
            (self.sweep.task in ("supervised", "zeroshot"), "sweep.task must be supervised or zeroshot"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        # a missing N-MNIST tree is a skip, not a config error; the loader reports it
        if d.source == "native" and not os.path.exists(d.path):
            raise ConfigError(f"data.path {d.path!r} does not exist")
        return self


def copy_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return ExperimentConfig(**{s.name: dataclasses.replace(getattr(cfg, s.name)) for s in fields(cfg)})


def _split(key: str) -> tuple[str, str]:
    if key.count(".") != 1:
        raise ConfigError(f"config keys look like section.name, got {key!r}")
    section, name = key.split(".")
    return section, name


def _coerce(kind, raw, key: str):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} for {key}") from None
    return raw.strip("\"'")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def env_overrides(cfg: ExperimentConfig, environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    by_env = {ENV_PREFIX + k.replace(".", "_").upper(): k for k in cfg.keys()}
    return {by_env[name]: value for name, value in environ.items() if name in by_env}


def load_config(path=None, cli: dict | None = None, environ=None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    layers = []
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                layers.append(parse_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    layers.append(env_overrides(cfg, environ))
    layers.append(cli or {})
    for layer in layers:
        for k, v in layer.items():
            cfg.set(k, v)
    return cfg.validate()


def parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def parse_grid(text: str) -> list[tuple[str, list[str]]]:
    """``"a.b=1,2|c.d=x,y"`` -> ``[("a.b", ["1", "2"]), ("c.d", ["x", "y"])]``."""
    grid = []
    for part in text.split("|"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} lacks '='")
        key, values = part.split("=", 1)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"grid entry {key!r} has no values")
        grid.append((key.strip(), vals))
    return grid
