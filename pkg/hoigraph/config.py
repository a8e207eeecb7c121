"""Run configuration: one attrs class per section, strict keys.

Precedence is defaults < config file < `--set section.key=value` < dedicated
CLI flags. The resolved configuration is serialized next to every output.
"""

import json
import pathlib
import tomllib
from typing import Any, Dict, Iterable, Mapping, Optional

import attr

from hoigraph.errors import ConfigError

CELLS = ("gru", "lstm", "rnn")
DTYPES = ("float64", "float32")
SETTINGS = ("default", "known")


def _check(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


@attr.s
class DataConfig:
    """[data] section."""

    relation_threshold: float = attr.ib(default=0.2, converter=float)
    human_threshold: float = attr.ib(default=0.6, converter=float)
    object_threshold: float = attr.ib(default=0.3, converter=float)
    test_scenes: int = attr.ib(default=100, converter=int)
    embeddings_path: Optional[str] = attr.ib(default=None)

    def validate(self):
        """Check ranges."""
        for name in ("relation_threshold", "human_threshold", "object_threshold"):
            _check(0.0 <= getattr(self, name) <= 1.0, f"data.{name} must lie in [0, 1]")
        _check(self.test_scenes >= 0, "data.test_scenes must be >= 0")


@attr.s
class ModelConfig:
    """[model] section."""

    d_s: int = attr.ib(default=128, converter=int)
    d_h: int = attr.ib(default=256, converter=int)
    d_g: int = attr.ib(default=256, converter=int)
    d_f: int = attr.ib(default=256, converter=int)
    cell: str = attr.ib(default="gru")
    dtype: str = attr.ib(default="float64")

    def validate(self):
        """Check ranges."""
        for name in ("d_s", "d_h", "d_g", "d_f"):
            _check(getattr(self, name) >= 1, f"model.{name} must be >= 1")
        _check(self.d_h % 2 == 0, "model.d_h must be even (bidirectional encoder)")
        _check(self.cell in CELLS, f"model.cell must be one of {CELLS}")
        _check(self.dtype in DTYPES, f"model.dtype must be one of {DTYPES}")


@attr.s
class MaskConfig:
    """[mask] section."""

    size: int = attr.ib(default=64, converter=int)

    def validate(self):
        """Check ranges."""
        _check(self.size >= 1, "mask.size must be >= 1")


@attr.s
class LambdaConfig:
    """[lambda] section: pair prior exponent."""

    gamma: float = attr.ib(default=1.0, converter=float)

    def validate(self):
        """Check ranges."""
        _check(self.gamma > 0, "lambda.gamma must be > 0")


@attr.s
class TrainConfig:
    """[train] section."""

    lr: float = attr.ib(default=0.01, converter=float)
    decay: float = attr.ib(default=0.9, converter=float)
    decay_every: int = attr.ib(default=10, converter=int)
    epochs: int = attr.ib(default=50, converter=int)
    batch_size: int = attr.ib(default=1, converter=int)

    def validate(self):
        """Check ranges."""
        _check(self.lr >= 0, "train.lr must be >= 0")
        _check(0 < self.decay <= 1, "train.decay must lie in (0, 1]")
        _check(self.decay_every >= 1, "train.decay_every must be >= 1")
        _check(self.epochs >= 0, "train.epochs must be >= 0")
        _check(self.batch_size >= 1, "train.batch_size must be >= 1")


@attr.s
class PassingConfig:
    """[passing] section."""

    rounds: int = attr.ib(default=2, converter=int)
    enabled: bool = attr.ib(default=True, converter=bool)
    relation_aware: bool = attr.ib(default=True, converter=bool)

    def validate(self):
        """Check ranges."""
        _check(self.rounds >= 1, "passing.rounds must be >= 1")


@attr.s
class AblationConfig:
    """[ablation] section."""

    sge: bool = attr.ib(default=True, converter=bool)
    cov: bool = attr.ib(default=False, converter=bool)

    def validate(self):
        """Check conflicts."""
        _check(not (self.sge and self.cov), "ablation.sge and ablation.cov are exclusive")


@attr.s
class EvalConfig:
    """[eval] section."""

    setting: str = attr.ib(default="default")
    iou_threshold: float = attr.ib(default=0.5, converter=float)
    min_score: float = attr.ib(default=0.0, converter=float)

    def validate(self):
        """Check ranges."""
        _check(self.setting in SETTINGS, f"eval.setting must be one of {SETTINGS}")
        _check(0 < self.iou_threshold < 1, "eval.iou_threshold must lie in (0, 1)")


SECTIONS = {
    "data": ("data", DataConfig),
    "model": ("model", ModelConfig),
    "mask": ("mask", MaskConfig),
    "lambda": ("pair_prior", LambdaConfig),
    "train": ("train", TrainConfig),
    "passing": ("passing", PassingConfig),
    "ablation": ("ablation", AblationConfig),
    "eval": ("eval", EvalConfig),
}

PRESETS = {
    "baseline": frozenset(),
    "sge": frozenset({"sge"}),
    "rel": frozenset({"rel"}),
    "no-rel": frozenset({"no-rel"}),
    "cov": frozenset({"cov"}),
    "full": frozenset({"sge", "rel"}),
}


@attr.s
class RunConfig:
    """Resolved run configuration."""

    seed: Optional[int] = attr.ib(default=None)
    data: DataConfig = attr.ib(factory=DataConfig)
    model: ModelConfig = attr.ib(factory=ModelConfig)
    mask: MaskConfig = attr.ib(factory=MaskConfig)
    pair_prior: LambdaConfig = attr.ib(factory=LambdaConfig)
    train: TrainConfig = attr.ib(factory=TrainConfig)
    passing: PassingConfig = attr.ib(factory=PassingConfig)
    ablation: AblationConfig = attr.ib(factory=AblationConfig)
    eval: EvalConfig = attr.ib(factory=EvalConfig)

    @property
    def rel(self) -> bool:
        """Relation-aware message passing is on."""
        return self.passing.enabled and self.passing.relation_aware

    @property
    def no_rel(self) -> bool:
        """Relation-agnostic message passing is on."""
        return self.passing.enabled and not self.passing.relation_aware

    @property
    def variant(self) -> str:
        """Short name of the ablation variant."""
        parts = [
            name
            for name, on in (
                ("sge", self.ablation.sge),
                ("cov", self.ablation.cov),
                ("rel", self.rel),
                ("no-rel", self.no_rel),
            )
            if on
        ]
        return "+".join(parts) or "baseline"

    def validate(self, require_seed: bool = True) -> "RunConfig":
        """Check every section; the seed is mandatory."""
        if require_seed:
            _check(self.seed is not None, "seed is mandatory (config `seed` or --seed)")
        for _, (attribute, _) in SECTIONS.items():
            getattr(self, attribute).validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Serializable form, keyed by file section names."""
        doc: Dict[str, Any] = {"seed": self.seed}
        for name, (attribute, _) in SECTIONS.items():
            doc[name] = attr.asdict(getattr(self, attribute))
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RunConfig":
        """Build from a nested document, rejecting unknown sections and keys."""
        unknown = sorted(set(doc) - set(SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")

        kwargs: Dict[str, Any] = {"seed": doc.get("seed")}
        for name, (attribute, section_cls) in SECTIONS.items():
            values = doc.get(name, {}) or {}
            if not isinstance(values, Mapping):
                raise ConfigError(f"[{name}] must be a table")
            known = {a.name for a in attr.fields(section_cls)}
            bad = sorted(set(values) - known)
            if bad:
                raise ConfigError(
                    f"unknown config keys: {', '.join(f'{name}.{k}' for k in bad)}"
                )
            try:
                kwargs[attribute] = section_cls(**values)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"[{name}]: {err}") from err

        seed = kwargs["seed"]
        if seed is not None:
            try:
                kwargs["seed"] = int(seed)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"seed must be an integer, got {seed!r}") from err
        return cls(**kwargs)


def read_config_file(path) -> Dict[str, Any]:
    """Read a TOML or JSON config file."""
    path = pathlib.Path(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err


def parse_value(raw: str) -> Any:
    """JSON value when `raw` parses as one, else the raw string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(doc: Dict[str, Any], overrides: Mapping[str, str]) -> Dict[str, Any]:
    """Apply `section.key=value` overrides to a config document."""
    doc = {k: dict(v) if isinstance(v, Mapping) else v for k, v in doc.items()}
    for dotted, raw in overrides.items():
        if dotted == "seed":
            doc["seed"] = parse_value(raw)
            continue
        if "." not in dotted:
            raise ConfigError(f"override '{dotted}' must be `section.key=value`")
        section, key = dotted.split(".", 1)
        doc.setdefault(section, {})[key] = parse_value(raw)
    return doc


def apply_ablation(config: RunConfig, names: Iterable[str]) -> RunConfig:
    """Switch modules on/off from preset names (`baseline`, `sge`, `rel`, ...)."""
    names = list(names)
    if not names:
        return config

    switches = set()
    for name in names:
        if name not in PRESETS:
            raise ConfigError(
                f"unknown ablation '{name}', expected one of {sorted(PRESETS)}"
            )
        switches |= PRESETS[name]

    if {"rel", "no-rel"} <= switches:
        raise ConfigError("ablation switches `rel` and `no-rel` are exclusive")
    if {"sge", "cov"} <= switches:
        raise ConfigError("ablation switches `sge` and `cov` are exclusive")

    return attr.evolve(
        config,
        ablation=AblationConfig(sge="sge" in switches, cov="cov" in switches),
        passing=attr.evolve(
            config.passing,
            enabled=bool(switches & {"rel", "no-rel"}),
            relation_aware="no-rel" not in switches,
        ),
    )


def resolve_config(
    path=None,
    overrides: Optional[Mapping[str, str]] = None,
    seed: Optional[int] = None,
    ablation: Iterable[str] = (),
    require_seed: bool = True,
    **train_flags,
) -> RunConfig:
    """Merge defaults, file, overrides and flags into a validated RunConfig."""
    doc = read_config_file(path) if path else {}
    doc = apply_overrides(doc, overrides or {})
    if seed is not None:
        doc["seed"] = seed
    for key, value in train_flags.items():
        if value is not None:
            doc.setdefault("train", {})[key] = value

    config = apply_ablation(RunConfig.from_dict(doc), ablation)
    return config.validate(require_seed=require_seed)
