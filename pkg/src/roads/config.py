"""Run configuration: declarative YAML with env-var and flag overrides.

Environment overrides use ROADS_<SECTION>_<FIELD>, e.g. ROADS_GRAPH_NV=40
or ROADS_MGDA_ETA=0.01.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .errors import ConfigurationError
from .losses import AlmState, LossWeights
from .mgda import MgdaConfig
from .priors import SurrogateConfig
from .sem import SemSpec


@dataclass(frozen=True)
class GraphConfig:
    kind: str = "er"  # er | sf
    n_v: int = 20
    k: float = 2.0

    def __post_init__(self):
        if self.kind not in ("er", "sf"):
            raise ConfigurationError(f"unknown graph kind {self.kind!r}")


@dataclass(frozen=True)
class PriorConfig:
    p_a: float = 0.3
    p_b: float = 0.3
    p_c: float = 1.0
    surrogate: str = "auto"  # auto picks ols (linear) / random_forest
    tau: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    sem: SemSpec = field(default_factory=SemSpec)
    priors: PriorConfig = field(default_factory=PriorConfig)
    surrogate_config: SurrogateConfig = field(default_factory=SurrogateConfig)
    weights: LossWeights | None = None  # None: defaults per SEM kind
    alm: AlmState = field(default_factory=AlmState)
    mgda: MgdaConfig = field(default_factory=MgdaConfig)
    method: str = "roads"  # roads | no_prior | ntsb | eca
    seeds: tuple = (0,)
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")
        if self.method not in ("roads", "no_prior", "ntsb", "eca"):
            raise ConfigurationError(f"unknown method {self.method!r}")

    def cell_key(self) -> str:
        """Content hash of everything except the seed list."""
        d = asdict(self)
        d.pop("seeds")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def instance_key(self) -> str:
        """Hash of only the fields that determine the sampled instance.

        Estimator settings (method, surrogate, optimizer knobs) are left
        out so every method sees identical graphs, data and constraints.
        """
        d = {
            "graph": asdict(self.graph),
            "sem": asdict(self.sem),
            "p_a": self.priors.p_a,
            "p_b": self.priors.p_b,
            "p_c": self.priors.p_c,
        }
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "graph": GraphConfig,
    "sem": SemSpec,
    "priors": PriorConfig,
    "surrogate_config": SurrogateConfig,
    "weights": LossWeights,
    "alm": AlmState,
    "mgda": MgdaConfig,
}


def _build_section(cls, data: dict):
    valid = {f.name for f in fields(cls)}
    unknown = set(data) - valid
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"section {key!r} must be a mapping")
            kwargs[key] = _build_section(_SECTIONS[key], value)
        elif key in ("method", "output_dir"):
            kwargs[key] = value
        elif key == "seeds":
            kwargs[key] = tuple(int(s) for s in value)
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a mapping")
    return apply_env_overrides(config_from_dict(data))


def apply_env_overrides(config: RunConfig, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    updates: dict = {}
    for section, cls in _SECTIONS.items():
        current = getattr(config, section)
        if current is None:
            continue
        sec_updates = {}
        for f in fields(cls):
            key = f"ROADS_{section.upper()}_{f.name.upper()}"
            if key in environ:
                sec_updates[f.name] = _coerce(environ[key], getattr(current, f.name))
        if sec_updates:
            updates[section] = replace(current, **sec_updates)
    if "ROADS_METHOD" in environ:
        updates["method"] = environ["ROADS_METHOD"]
    if "ROADS_OUTPUT_DIR" in environ:
        updates["output_dir"] = environ["ROADS_OUTPUT_DIR"]
    if "ROADS_SEEDS" in environ:
        updates["seeds"] = tuple(int(s) for s in environ["ROADS_SEEDS"].split(","))
    return replace(config, **updates) if updates else config


def _coerce(text: str, current):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


_PURPOSES = ("graph", "sem", "constraints", "align", "fit")


def derive_rng(master_seed: int, cell_key: str, seed_index: int, purpose: str):
    """Counter-based seed derivation, order-independent across workers."""
    if purpose not in _PURPOSES:
        raise ConfigurationError(f"unknown rng purpose {purpose!r}")
    digest = hashlib.sha256(cell_key.encode()).digest()
    cell_int = int.from_bytes(digest[:8], "big")
    seq = np.random.SeedSequence(
        [master_seed, cell_int, seed_index, _PURPOSES.index(purpose)]
    )
    return np.random.default_rng(seq)
