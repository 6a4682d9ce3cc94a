import logging
import re
from fractions import Fraction
from functools import cached_property

from ccqm.errors import ConfigurationError
from ccqm.graphs import ModelSpec, Slope, word_to_tree
from ccqm.moebius import GeneratorSet, GroupWord, IntMatrix2, reduce

logger = logging.getLogger(__name__)

RE_COMMENT = re.compile(r"\s*#.*$")
RE_BLANK = re.compile(r"^\s*$")
RE_ASSIGNMENT = re.compile(r"^\s*([A-Za-z_][\w\-]*)\s*=\s*(.*?)\s*$")
RE_GENERATOR = re.compile(
    r"^\s*([A-Za-z_]\w*)\s*=\s*(-?\d+)\s+(-?\d+)\s+(-?\d+)\s+(-?\d+)\s*$"
)
RE_LETTER = re.compile(r"^([A-Za-z_]\w*)(?:\^\(?(-?\d+)\)?)?$")
RE_SLOPE = re.compile(r"^\s*(-?\d+)\s*(?:/\s*(-?\d+))?\s*$")
RE_SEPARATOR = re.compile(r"[\s*]+")


class ConfigParser:
    """Line based parser for "key = value" experiment and generator files."""

    def __init__(self, text: str, source: str = "<config>"):
        self.text = text
        self.source = source

    @cached_property
    def lines(self) -> list[tuple[int, str]]:
        lines = []
        for number, line in enumerate(self.text.splitlines(), start=1):
            stripped = RE_COMMENT.sub("", line)
            if not RE_BLANK.match(stripped):
                lines.append((number, stripped))
        return lines

    def _error(self, number: int, message: str) -> ConfigurationError:
        return ConfigurationError(f"{self.source}:{number}: {message}")

    def assignments(self) -> dict[str, str]:
        data = {}
        for number, line in self.lines:
            if match := RE_ASSIGNMENT.match(line):
                data[match.group(1).replace("-", "_")] = match.group(2)
            else:
                raise self._error(number, f"expected 'key = value', got {line!r}")
        logger.debug(f"Parsed {len(data)} settings from {self.source}")
        return data

    def generators(self) -> GeneratorSet:
        matrices = {}
        for number, line in self.lines:
            match = RE_GENERATOR.match(line)
            if not match:
                raise self._error(number, f"expected 'name = a b c d', got {line!r}")
            name, *entries = match.groups()
            try:
                matrices[name] = IntMatrix2(*map(int, entries))
            except ValueError as e:
                raise self._error(number, str(e))
        if not matrices:
            raise ConfigurationError(f"{self.source}: no generators defined")
        return GeneratorSet.from_dict(matrices)


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    return ConfigParser(text, source).assignments()


def parse_generators(text: str, source: str = "<generators>") -> GeneratorSet:
    return ConfigParser(text, source).generators()


def parse_word(text: str) -> GroupWord:
    """Parse words like "R^3 L^-2 R"; "1" or "" is the identity."""
    text = text.strip()
    if text in ("", "1"):
        return GroupWord.identity()
    letters = []
    for token in RE_SEPARATOR.split(text):
        if not token:
            continue
        match = RE_LETTER.match(token)
        if not match:
            raise ConfigurationError(f"Malformed word letter {token!r} in {text!r}")
        letters.append((match.group(1), int(match.group(2) or 1)))
    return reduce(GroupWord(tuple(letters)))


def parse_words(text: str) -> list[GroupWord]:
    return [parse_word(part) for part in text.split(",") if part.strip()]


def parse_slope(text: str) -> Slope:
    match = RE_SLOPE.match(text)
    if not match:
        raise ConfigurationError(f"Malformed slope {text!r}, expected p/q")
    p, q = int(match.group(1)), int(match.group(2) or 1)
    if p == 0 and q == 0:
        raise ConfigurationError("0/0 is not a slope")
    return Slope.of(p, q)


def parse_vertex(text: str, model: ModelSpec):
    if model.kind == "farey":
        return parse_slope(text)
    word = parse_word(text)
    for gid in word.generator_ids:
        if gid not in model.gens.ids:
            raise ConfigurationError(f"Unknown generator {gid} in vertex {text!r}")
    return word_to_tree(word, model.gens.ids)


def parse_schedule(text: str) -> tuple[int, ...]:
    try:
        schedule = tuple(int(part) for part in re.split(r"[\s,]+", text.strip()))
    except ValueError:
        raise ConfigurationError(f"Malformed schedule {text!r}")
    if not schedule or schedule[0] < 1:
        raise ConfigurationError(f"Schedule {text!r} must hold positive sizes")
    if any(a >= b for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError(f"Schedule {text!r} is not strictly increasing")
    return schedule


def parse_family(text: str) -> tuple[tuple[int, int, int, int], ...]:
    """Semicolon separated exponent quadruples: "2 3 4 5; 6 7 8 9"."""
    quadruples = []
    for part in text.split(";"):
        if not part.strip():
            continue
        try:
            exponents = tuple(int(e) for e in re.split(r"[\s,]+", part.strip()))
        except ValueError:
            raise ConfigurationError(f"Malformed family exponents {part!r}")
        if len(exponents) != 4:
            raise ConfigurationError(f"Expected four exponents, got {part!r}")
        quadruples.append(exponents)
    return tuple(quadruples)


def parse_fractions(text: str) -> list[Fraction]:
    try:
        return [Fraction(part) for part in re.split(r"[\s,]+", text.strip()) if part]
    except ValueError:
        raise ConfigurationError(f"Malformed coefficients {text!r}")
