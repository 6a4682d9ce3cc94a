import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from ccqm.constants import MODEL_KINDS
from ccqm.errors import ConfigurationError
from ccqm.moebius import GroupWord
from ccqm.parser import (
    parse_family,
    parse_fractions,
    parse_schedule,
    parse_word,
    parse_words,
)

logger = logging.getLogger(__name__)


def _model(text: str) -> Optional[str]:
    if not text:
        return None
    if text not in MODEL_KINDS:
        raise ConfigurationError(f"Unknown model {text!r}, use one of {MODEL_KINDS}")
    return text


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigurationError(f"Expected an integer, got {text!r}")
    if value < 0:
        raise ConfigurationError(f"Expected a nonnegative integer, got {text!r}")
    return value


def _vertex_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


@dataclass
class RunConfig:
    model: Optional[str] = None
    schedule: Optional[tuple[int, ...]] = None
    gens_path: Optional[str] = None
    seed: int = 0
    cache_path: Optional[str] = None
    jobs: int = 1
    out_path: Optional[str] = None
    enable_log: bool = False

    def update(self, options: dict):
        self.model = _model(options.get("model") or "") or self.model
        if schedule := options.get("n_schedule"):
            self.schedule = parse_schedule(schedule)
        self.gens_path = options.get("gens", self.gens_path)
        self.seed = options.get("seed", self.seed)
        self.cache_path = options.get("cache", self.cache_path)
        self.jobs = max(1, options.get("jobs", self.jobs))
        self.out_path = options.get("out", self.out_path)
        self.enable_log = options.get("enable_log", self.enable_log)


@dataclass
class ExperimentConfig:
    model: Optional[str] = None
    schedule: Optional[tuple[int, ...]] = None
    phi: GroupWord = field(default_factory=GroupWord.identity)
    psi: GroupWord = field(default_factory=GroupWord.identity)
    max_power: int = 64
    family: tuple[tuple[int, int, int, int], ...] = ()
    basepoint: str = ""
    omega: tuple[str, ...] = ()
    omega_words: list[GroupWord] = field(default_factory=list)
    weight: int = 1
    halfwidth: int = 1
    word: GroupWord = field(default_factory=GroupWord.identity)
    disk_generators: list[GroupWord] = field(default_factory=list)
    disk_basepoint: str = ""
    disk_cap: int = 0
    stabilizer: list[GroupWord] = field(default_factory=list)
    boundary: int = 0
    samples: int = 0
    sample_length: int = 0
    growth_max_power: int = 64
    cyclic_max: int = 20
    coset_samples: int = 0
    coset_length: int = 0
    subgroup_length: int = 0
    cyclic_subgroups: list[GroupWord] = field(default_factory=list)
    coefficients: list[Fraction] = field(default_factory=list)
    composite_power: int = 2

    PARSERS = {
        "model": _model,
        "schedule": parse_schedule,
        "phi": parse_word,
        "psi": parse_word,
        "max_power": _positive,
        "family": parse_family,
        "basepoint": str.strip,
        "omega": _vertex_list,
        "omega_words": parse_words,
        "weight": _positive,
        "halfwidth": _positive,
        "word": parse_word,
        "disk_generators": parse_words,
        "disk_basepoint": str.strip,
        "disk_cap": _positive,
        "stabilizer": parse_words,
        "boundary": _positive,
        "samples": _positive,
        "sample_length": _positive,
        "growth_max_power": _positive,
        "cyclic_max": _positive,
        "coset_samples": _positive,
        "coset_length": _positive,
        "subgroup_length": _positive,
        "cyclic_subgroups": parse_words,
        "coefficients": parse_fractions,
        "composite_power": _positive,
    }

    def update(self, data: dict[str, str]):
        for key, value in data.items():
            parser: Callable | None = self.PARSERS.get(key)
            if parser is None:
                logger.debug(f"Ignoring unknown setting {key}")
                continue
            setattr(self, key, parser(value))
