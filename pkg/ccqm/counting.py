import logging
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache, partial
from typing import Callable, Iterable, Optional, Sequence

import networkx as nx

from ccqm.errors import ConfigurationError, OutsideTruncationError, UnreachableError
from ccqm.graphs import (
    GraphPath,
    ModelSpec,
    Region,
    TruncatedGraph,
    apply,
    edge_matrix,
    tree_inverse,
    tree_multiply,
)
from ccqm.moebius import GroupWord, random_word

logger = logging.getLogger(__name__)


#####################################################################################
# Segments and penalties
#####################################################################################
def _tree_labels(vertices: Sequence[tuple]) -> tuple[int, ...]:
    labels = []
    for u, v in zip(vertices, vertices[1:]):
        labels.append(v[-1] if len(v) > len(u) else -u[-1])
    return tuple(labels)


@dataclass(frozen=True)
class OmegaSegment:
    path: GraphPath
    labels: Optional[tuple[int, ...]] = None
    reach: Optional[int] = None

    @classmethod
    def from_path(
        cls, path: GraphPath, model: ModelSpec, reach=None
    ) -> "OmegaSegment":
        labels = _tree_labels(path.vertices) if model.kind == "tree" else None
        return cls(path, labels, reach)

    @property
    def length(self) -> int:
        return self.path.length

    def inverse(self) -> "OmegaSegment":
        labels = None
        if self.labels is not None:
            labels = tuple(-label for label in reversed(self.labels))
        return OmegaSegment(self.path.reversed(), labels, self.reach)


@dataclass(frozen=True)
class PenaltySpec:
    model: ModelSpec
    omega: OmegaSegment
    weight: int
    basepoint: object
    schedule: tuple[int, ...]

    def __post_init__(self):
        if not 0 < self.weight < self.omega.length:
            raise ConfigurationError(
                f"Weight {self.weight} must lie strictly between 0 and"
                f" the segment length {self.omega.length}"
            )
        if any(a >= b for a, b in zip(self.schedule, self.schedule[1:])):
            raise ConfigurationError(f"Schedule {self.schedule} is not increasing")

    def inverse(self) -> "PenaltySpec":
        return replace(self, omega=self.omega.inverse())


#####################################################################################
# Translates
#####################################################################################
@dataclass(frozen=True)
class Translate:
    vertices: tuple
    transform: object = field(compare=False)


def _farey_translates(omega: OmegaSegment, graph, region: Optional[Region]):
    vertices = omega.path.vertices
    base = edge_matrix(vertices[0], vertices[1]).inverse()
    starts = region.vertices if region is not None else graph.vertices()
    inside = region if region is not None else graph
    for u in starts:
        for v in graph.neighbors(u):
            if v not in inside:
                continue
            g = edge_matrix(u, v) @ base
            image = tuple(apply(g, w) for w in vertices)
            if all(w in inside for w in image):
                yield Translate(image, g)


def _tree_translates(omega: OmegaSegment, graph, region: Optional[Region]):
    if region is None:
        raise ConfigurationError("Tree translates are enumerated inside a region")
    for start in region.vertices:
        image = [start]
        for label in omega.labels:
            image.append(tree_multiply(image[-1], (label,)))
            if image[-1] not in region:
                break
        else:
            yield Translate(tuple(image), tree_multiply(start, _inverse_of(omega)))


def _inverse_of(omega: OmegaSegment) -> tuple:
    return tuple(-letter for letter in reversed(omega.path.start))


TRANSLATE_ENUMERATORS = {
    "farey": _farey_translates,
    "tree": _tree_translates,
}


def enumerate_translates(
    omega: OmegaSegment, graph: TruncatedGraph, region: Optional[Region] = None
) -> list[Translate]:
    """Every translate of omega lying in the region (or the whole truncation)."""
    translates = list(TRANSLATE_ENUMERATORS[graph.kind](omega, graph, region))
    logger.debug(f"Collected {len(translates)} translates of omega in {graph}")
    return translates


def anchored_translates(
    omega: OmegaSegment, graph: TruncatedGraph, anchors: Iterable
) -> list[Translate]:
    """Every translate inside the truncation passing through one of the anchors."""
    vertices, found = omega.path.vertices, {}
    for v in anchors:
        for position in range(len(vertices)):
            for image, transform in _images_through(omega, graph, v, position):
                if all(w in graph for w in image):
                    found.setdefault(image, Translate(image, transform))
    logger.debug(f"Collected {len(found)} anchored translates in {graph}")
    return [found[image] for image in sorted(found, key=lambda key: str(key))]


def _images_through(omega: OmegaSegment, graph, v, position: int):
    vertices = omega.path.vertices
    if graph.kind == "tree":
        start = tree_multiply(v, tree_inverse(_reduced(omega.labels[:position])))
        image = [start]
        for label in omega.labels:
            image.append(tree_multiply(image[-1], (label,)))
        yield tuple(image), tree_multiply(start, _inverse_of(omega))
        return
    if position + 1 < len(vertices):
        reference = edge_matrix(vertices[position], vertices[position + 1]).inverse()
        edges = [(v, w) for w in graph.neighbors(v)]
    else:
        reference = edge_matrix(vertices[position - 1], vertices[position]).inverse()
        edges = [(w, v) for w in graph.neighbors(v)]
    for first, second in edges:
        g = edge_matrix(first, second) @ reference
        yield tuple(apply(g, vertex) for vertex in vertices), g


def _reduced(labels: Sequence[int]) -> tuple:
    result: tuple = ()
    for label in labels:
        result = tree_multiply(result, (label,))
    return result


def _is_translate(omega: OmegaSegment, segment: Sequence, model: ModelSpec) -> bool:
    if model.kind == "tree":
        return _tree_labels(segment) == omega.labels
    vertices = omega.path.vertices
    g = edge_matrix(segment[0], segment[1]) @ edge_matrix(*vertices[:2]).inverse()
    return all(apply(g, w) == s for w, s in zip(vertices, segment))


def max_nonoverlapping_copies(
    alpha: GraphPath, omega: OmegaSegment, model: ModelSpec
) -> int:
    """Largest edge-disjoint set of translates of omega that are subpaths of alpha."""
    size, count, free_from = omega.length, 0, 0
    # Intervals all have the same length, so start order is end order.
    for start in range(alpha.length - size + 1):
        segment = alpha.vertices[start : start + size + 1]
        if start >= free_from and _is_translate(omega, segment, model):
            count += 1
            free_from = start + size
    return count


#####################################################################################
# Counting functions
#####################################################################################
@dataclass(frozen=True)
class PenalizedInfimum:
    value: int
    distance: int
    translates: int
    region_size: int
    exact: bool


def penalized_infimum(
    x, y, spec: PenaltySpec, graph: TruncatedGraph
) -> PenalizedInfimum:
    """inf over paths alpha from x to y of |alpha| - W * |alpha|_omega.

    Shortest path on the digraph of graph edges (cost 1) plus one shortcut per
    translate from its start to its end (cost |omega| - W). Any path worth
    considering has |alpha| <= d * |omega| / (|omega| - W), so every vertex of
    it lies in the region d(x, v) + d(v, y) <= that bound.
    """
    d = graph.distance(x, y)
    size, weight = spec.omega.length, spec.weight
    exact = graph.kind == "tree"
    if weight * d < size:
        # C is an integer below W * d / |omega| < 1.
        return PenalizedInfimum(d, d, 0, 0, exact)

    length_bound = d * size // (size - weight)
    side_depth = weight * size // (size - weight)
    region = graph.region(x, y, length_bound, side_depth=side_depth)
    copies = enumerate_translates(spec.omega, graph, region)

    digraph = nx.DiGraph()
    digraph.add_nodes_from(range(len(region)))
    for source, targets in enumerate(region.adjacency):
        digraph.add_edges_from((source, target, {"weight": 1}) for target in targets)
    shortcut = size - weight
    for copy in copies:
        start, end = region.index[copy.vertices[0]], region.index[copy.vertices[-1]]
        if start == end:
            continue
        current = digraph.get_edge_data(start, end, default={"weight": shortcut})
        digraph.add_edge(start, end, weight=min(current["weight"], shortcut))

    value = nx.shortest_path_length(
        digraph, region.index[x], region.index[y], weight="weight"
    )
    logger.debug(
        f"Penalized infimum {value} (d={d}) over {len(region)} vertices"
        f" and {len(copies)} translates in {graph}"
    )
    return PenalizedInfimum(value, d, len(copies), len(region), not region.clipped)


@dataclass(frozen=True)
class CountingResult:
    value: int
    exact: bool
    translates: int


def counting_value_at(x, y, spec: PenaltySpec, graph: TruncatedGraph) -> CountingResult:
    infimum = penalized_infimum(x, y, spec, graph)
    return CountingResult(
        infimum.distance - infimum.value, infimum.exact, infimum.translates
    )


@dataclass(frozen=True)
class QMValue:
    value: int
    n_star: Optional[int]
    stabilized: bool
    translates: int


def _stabilize(evaluate: Callable[[TruncatedGraph], CountingResult], points, model):
    previous, translates = None, 0
    for bound in points:
        graph = model.graph(bound)
        try:
            result = evaluate(graph)
        except UnreachableError:
            continue
        translates += result.translates
        if result.exact:
            return QMValue(result.value, bound, True, translates)
        if previous is not None and previous[1] == result.value:
            return QMValue(result.value, previous[0], True, translates)
        previous = (bound, result.value)
    if previous is None:
        raise OutsideTruncationError(f"No truncation in {list(points)} fits, raise N")
    return QMValue(previous[1], previous[0], False, translates)


def counting_value(
    x, y, spec: PenaltySpec, graph: Optional[TruncatedGraph] = None
) -> QMValue:
    """C(x, y) = d(x, y) - penalized infimum, run across the schedule."""
    points = spec.schedule if graph is None else (graph.bound,)
    return _stabilize(
        lambda truncation: counting_value_at(x, y, spec, truncation),
        points,
        spec.model,
    )


def _require(graph: TruncatedGraph, *vertices):
    for v in vertices:
        if v not in graph:
            raise OutsideTruncationError(f"{v} is outside {graph}")


@lru_cache(maxsize=4096)
def qm_evaluate(
    g: GroupWord, spec: PenaltySpec, graph: Optional[TruncatedGraph] = None
) -> QMValue:
    """h(g) = C_omega(d0, g d0) - C_omega_inverse(d0, g d0) at one common N."""
    x, y = spec.basepoint, spec.model.act(g, spec.basepoint)
    inverse = spec.inverse()

    def evaluate(truncation: TruncatedGraph) -> CountingResult:
        _require(truncation, x, y)
        forward = counting_value_at(x, y, spec, truncation)
        backward = counting_value_at(x, y, inverse, truncation)
        return CountingResult(
            forward.value - backward.value,
            forward.exact and backward.exact,
            forward.translates + backward.translates,
        )

    points = spec.schedule if graph is None else (graph.bound,)
    return _stabilize(evaluate, points, spec.model)


#####################################################################################
# Defect and homogenization
#####################################################################################
@dataclass(frozen=True)
class SampleSpec:
    max_length: int
    count: int
    seed: int
    forced: tuple[tuple[GroupWord, GroupWord], ...] = ()

    def __str__(self):
        return (
            f"{len(self.forced)} forced + {self.count} random pairs,"
            f" length <= {self.max_length}, seed {self.seed}"
        )


def doubling_pairs(words: Sequence[GroupWord], max_power: int):
    """The pairs (g^m, g^m) used by homogenization up to max_power."""
    pairs, power = [], 1
    while 2 * power <= max_power:
        pairs.extend((g.power(power), g.power(power)) for g in words)
        power *= 2
    return tuple(pairs)


def sample_pairs(sampler: SampleSpec, generator_ids: Sequence[str]):
    rng = random.Random(sampler.seed)
    pairs = list(sampler.forced)
    for _ in range(sampler.count):
        pairs.append(
            (
                random_word(rng, generator_ids, sampler.max_length),
                random_word(rng, generator_ids, sampler.max_length),
            )
        )
    return pairs


@dataclass(frozen=True)
class DefectReport:
    sample: str
    value: int
    argmax: Optional[tuple[GroupWord, GroupWord]]
    evaluated: int
    excluded: int
    history: tuple[int, ...]
    n_star: Optional[int] = None

    @property
    def stabilized(self) -> bool:
        """No new maximum in the final half of the sample."""
        return not self.history or 2 * self.history[-1] < self.evaluated


def _evaluate_or_none(g: GroupWord, spec: PenaltySpec) -> Optional[QMValue]:
    try:
        return qm_evaluate(g, spec)
    except UnreachableError:
        return None


def defect_estimate(
    spec: PenaltySpec, sampler: SampleSpec, mapper: Callable = map
) -> DefectReport:
    pairs = sample_pairs(sampler, spec.model.gens.ids)
    words = list(dict.fromkeys(w for a, b in pairs for w in (a, b, a * b)))
    values = dict(zip(words, mapper(partial(_evaluate_or_none, spec=spec), words)))

    best, argmax, history, evaluated, excluded = 0, None, [], 0, 0
    n_star = None
    for a, b in pairs:
        results = (values[a * b], values[a], values[b])
        if not all(result and result.stabilized for result in results):
            excluded += 1
            continue
        n_star = max([n_star or 0] + [result.n_star for result in results])
        deviation = abs(results[0].value - results[1].value - results[2].value)
        if argmax is None or deviation > best:
            if argmax is not None or deviation > 0:
                history.append(evaluated)
            best, argmax = deviation, (a, b)
        evaluated += 1
    logger.info(
        f"Defect {best} over {evaluated} pairs ({excluded} unstabilized excluded)"
    )
    return DefectReport(
        str(sampler), best, argmax, evaluated, excluded, tuple(history), n_star
    )


@dataclass(frozen=True)
class Homogenization:
    value: Fraction
    error: Fraction
    power: int
    partial: bool
    n_star: Optional[int] = None


def homogenize(
    g: GroupWord, spec: PenaltySpec, max_power: int, defect
) -> Homogenization:
    """h(g^M) / M with error bar D / M, halving M on escape.

    M runs down the powers of two up to max_power, the powers whose doubling
    pairs the defect sample covers.
    """
    if max_power < 1:
        raise ConfigurationError(f"Homogenization power must be positive: {max_power}")
    top = 1 << (max_power.bit_length() - 1)
    power = top
    while power >= 1:
        try:
            result = qm_evaluate(g.power(power), spec)
        except UnreachableError:
            result = None
        if result is not None and result.stabilized:
            return Homogenization(
                Fraction(result.value, power),
                Fraction(defect, power),
                power,
                power < top,
                result.n_star,
            )
        power //= 2
    raise OutsideTruncationError(f"No power of {g} fits the schedule, raise N")


@dataclass(frozen=True)
class SlopeFit:
    slope: Fraction
    error: Fraction


def slope_statistic(points: Sequence[tuple[int, int]], defect) -> SlopeFit:
    """Least-squares slope of h(g^n) against n.

    Its distance to the homogenization is at most D * sum|n - m| / sum (n - m)^2
    where m is the mean power, because each residual is bounded by D.
    """
    if len(points) < 2:
        return SlopeFit(Fraction(0), Fraction(defect))
    mean_n = Fraction(sum(n for n, _ in points), len(points))
    mean_h = Fraction(sum(h for _, h in points), len(points))
    spread = sum((n - mean_n) ** 2 for n, _ in points)
    slope = sum((n - mean_n) * (h - mean_h) for n, h in points) / spread
    error = defect * sum(abs(n - mean_n) for n, _ in points) / spread
    return SlopeFit(slope, error)
