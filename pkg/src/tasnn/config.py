"""Run configuration: one structured file describing a whole experiment.

A run is reproducible from its ``RunConfig`` and the code version. Every
stage artifact records the digest of the config sections it depends on.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, fields

import yaml

from tasnn.corpus import CorpusConfig
from tasnn.dataset import ExtractConfig
from tasnn.model import ModelConfig
from tasnn.training import TrainConfig

CACHE_ENV = "TASNN_CACHE_DIR"
QUERY_TASK_MODES = ("own", "candidate")
SUPPORT_TASK_MODES = ("own", "mean")


class ConfigError(ValueError):
    pass


def cache_dir():
    """Root for default artifact locations; ``$TASNN_CACHE_DIR`` wins."""
    return os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "tasnn")


@dataclass
class Seeds:
    corpus: int = 0
    train: int = 0
    eval: int = 0


@dataclass
class SplitConfig:
    eval_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError("split.eval_fraction must lie in (0, 1)")


@dataclass
class EvalConfig:
    ways: tuple = (5, 10)
    shots: tuple = (1, 5)
    episodes: int = 200
    query_task: str = "own"
    support_task: str = "own"

    def __post_init__(self):
        self.ways = tuple(int(w) for w in self.ways)
        self.shots = tuple(int(s) for s in self.shots)
        if not self.ways or not self.shots or min(self.ways) < 2 or min(self.shots) < 1:
            raise ValueError("eval grid needs ways >= 2 and shots >= 1")
        if self.episodes < 1:
            raise ValueError("eval.episodes must be >= 1")
        if self.query_task not in QUERY_TASK_MODES:
            raise ValueError(f"eval.query_task must be one of {QUERY_TASK_MODES}")
        if self.support_task not in SUPPORT_TASK_MODES:
            raise ValueError(f"eval.support_task must be one of {SUPPORT_TASK_MODES}")

    def cells(self):
        return [(w, s) for w in self.ways for s in self.shots]


# model fields derived from the data rather than configured
_DERIVED_MODEL_FIELDS = ("n_classes", "task_input_dim", "seed")

SECTIONS = ("seeds", "corpus", "extract", "split", "model", "train", "eval")


def _section_defaults():
    corpus = {f.name: getattr(CorpusConfig(), f.name) for f in fields(CorpusConfig)
              if f.name != "seed"}
    model = {k: v for k, v in ModelConfig().to_dict().items() if k not in _DERIVED_MODEL_FIELDS}
    train = TrainConfig().to_dict()
    train.pop("seed")
    return {
        "seeds": vars(Seeds()),
        "corpus": {k: list(v) if isinstance(v, tuple) else v for k, v in corpus.items()},
        "extract": ExtractConfig().to_dict(),
        "split": vars(SplitConfig()),
        "model": model,
        "train": train,
        "eval": {"ways": [5, 10], "shots": [1, 5], "episodes": 200, "query_task": "own",
                 "support_task": "own"},
    }


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunConfig:
    data: dict = field(default_factory=_section_defaults)

    def __post_init__(self):
        self.validate()

    # -- construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config root must be a mapping")
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data = _section_defaults()
        for sec, values in d.items():
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"section {sec!r} must be a mapping")
            bad = set(values) - set(data[sec])
            if bad:
                raise ConfigError(f"unknown keys in {sec!r}: {sorted(bad)}")
            data[sec].update(copy.deepcopy(values))
        return cls(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_dict(doc or {})

    def with_overrides(self, assignments):
        """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
        d = copy.deepcopy(self.data)
        for item in assignments or ():
            key, sep, raw = item.partition("=")
            sec, dot, name = key.strip().partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            if sec not in d or name not in d[sec]:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                d[sec][name] = yaml.safe_load(raw)
            except yaml.YAMLError as exc:
                raise ConfigError(f"bad value in override {item!r}") from exc
        return RunConfig.from_dict(d)

    def updated(self, section, **values):
        """Copy with ``values`` set in ``section``; ``None`` values are skipped."""
        d = copy.deepcopy(self.data)
        d[section].update({k: v for k, v in values.items() if v is not None})
        return RunConfig.from_dict(d)

    # -- typed views --------------------------------------------------------
    def validate(self):
        try:
            Seeds(**self.data["seeds"])
            self.corpus_config()
            self.extract_config()
            self.split_config()
            self.model_config(n_classes=2)
            self.train_config()
            self.eval_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def seeds(self):
        return Seeds(**self.data["seeds"])

    def corpus_config(self):
        return CorpusConfig(seed=self.data["seeds"]["corpus"], **self.data["corpus"])

    def extract_config(self):
        return ExtractConfig(**self.data["extract"])

    def split_config(self):
        return SplitConfig(**self.data["split"])

    def model_config(self, n_classes):
        return ModelConfig(n_classes=n_classes, task_input_dim=self.data["extract"]["encoder_dim"],
                           seed=self.data["seeds"]["train"], **self.data["model"])

    def train_config(self):
        return TrainConfig(seed=self.data["seeds"]["train"], **self.data["train"])

    def eval_config(self):
        return EvalConfig(**self.data["eval"])

    # -- serialisation ------------------------------------------------------
    def to_dict(self):
        return copy.deepcopy(self.data)

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self, *keys):
        """Short digest of the named sections or ``section.key`` entries (default: all)."""
        picked = {}
        for k in keys or SECTIONS:
            sec, _, name = k.partition(".")
            picked[k] = self.data[sec][name] if name else self.data[sec]
        return hashlib.sha256(_canonical(picked).encode()).hexdigest()[:16]

    def stage_digest(self, stage):
        """Digest of exactly the settings a stage's output depends on."""
        deps = {
            "corpus": ("seeds.corpus", "corpus"),
            "features": ("seeds.corpus", "corpus", "extract"),
            "train": ("seeds.corpus", "seeds.train", "corpus", "extract", "split", "model",
                      "train"),
        }
        deps["eval"] = deps["train"] + ("seeds.eval", "eval")
        if stage not in deps:
            raise ConfigError(f"unknown stage {stage!r}")
        return self.digest(*deps[stage])
