import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Hashable, Iterable, Iterator, Optional, Sequence

import networkx as nx

from ccqm.errors import (
    ConfigurationError,
    DomainError,
    OutsideTruncationError,
    UnreachableError,
)
from ccqm.moebius import (
    GeneratorSet,
    GroupWord,
    IntMatrix2,
    all_words_over,
    evaluate_word,
)

logger = logging.getLogger(__name__)

Vertex = Hashable


#####################################################################################
# Slopes
#####################################################################################
@dataclass(frozen=True)
class Slope:
    p: int
    q: int

    def __post_init__(self):
        invalid_infinity = self.q == 0 and self.p != 1
        if self.q < 0 or math.gcd(self.p, self.q) != 1 or invalid_infinity:
            raise DomainError(f"{self.p}/{self.q} is not a normalized slope")

    @classmethod
    def of(cls, p: int, q: int) -> "Slope":
        if p == 0 and q == 0:
            raise DomainError("0/0 is not a slope")
        if q < 0 or (q == 0 and p < 0):
            p, q = -p, -q
        divisor = math.gcd(p, q)
        return cls(p // divisor, q // divisor)

    @property
    def height(self) -> int:
        return max(abs(self.p), self.q)

    @property
    def key(self) -> tuple[int, int]:
        return (self.q, self.p)

    def __str__(self):
        return f"{self.p}/{self.q}"


INFINITY = Slope(1, 0)


def farey_adjacent(s1: Slope, s2: Slope) -> bool:
    return abs(s1.p * s2.q - s1.q * s2.p) == 1


def apply(m: IntMatrix2, s: Slope) -> Slope:
    return Slope.of(m.a * s.p + m.b * s.q, m.c * s.p + m.d * s.q)


def edge_matrix(u: Slope, v: Slope) -> IntMatrix2:
    """The matrix sending the ordered edge (1/0, 0/1) to (u, v)."""
    if not farey_adjacent(u, v):
        raise DomainError(f"{u} and {v} are not adjacent")
    sign = u.p * v.q - v.p * u.q
    return IntMatrix2(u.p, sign * v.p, u.q, sign * v.q)


def _bezout(a: int, b: int) -> tuple[int, int]:
    old_r, r, old_x, x, old_y, y = a, b, 1, 0, 0, 1
    while r:
        quotient = old_r // r
        old_r, r = r, old_r - quotient * r
        old_x, x = x, old_x - quotient * x
        old_y, y = y, old_y - quotient * y
    if old_r < 0:
        return -old_x, -old_y
    return old_x, old_y


#####################################################################################
# Free group words as tree vertices
#####################################################################################
TreeVertex = tuple[int, ...]


def tree_multiply(u: TreeVertex, v: TreeVertex) -> TreeVertex:
    prefix, suffix = list(u), list(v)
    while prefix and suffix and prefix[-1] == -suffix[0]:
        prefix.pop()
        suffix.pop(0)
    return tuple(prefix + suffix)


def tree_inverse(v: TreeVertex) -> TreeVertex:
    return tuple(-letter for letter in reversed(v))


def word_to_tree(word: GroupWord, ids: Sequence[str]) -> TreeVertex:
    result: TreeVertex = ()
    for gid, exponent in word.letters:
        if gid not in ids:
            raise ConfigurationError(f"Unknown generator: {gid}")
        letter = (ids.index(gid) + 1) * (1 if exponent > 0 else -1)
        result = tree_multiply(result, (letter,) * abs(exponent))
    return result


def tree_to_word(v: TreeVertex, ids: Sequence[str]) -> GroupWord:
    return GroupWord.of(
        *((ids[abs(letter) - 1], 1 if letter > 0 else -1) for letter in v)
    )


def _common_prefix(u: TreeVertex, v: TreeVertex) -> int:
    size = 0
    for a, b in zip(u, v):
        if a != b:
            break
        size += 1
    return size


#####################################################################################
# Paths and search
#####################################################################################
@dataclass(frozen=True)
class GraphPath:
    vertices: tuple

    @property
    def length(self) -> int:
        return max(len(self.vertices) - 1, 0)

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]

    def reversed(self) -> "GraphPath":
        return GraphPath(tuple(reversed(self.vertices)))

    def concatenate(self, other: "GraphPath") -> "GraphPath":
        if self.vertices and other.vertices and self.end != other.start:
            raise DomainError(f"Paths do not join: {self.end} != {other.start}")
        return GraphPath(self.vertices + other.vertices[1:])

    def is_valid(self, graph: "TruncatedGraph") -> bool:
        return all(v in graph for v in self.vertices) and all(
            v in graph.neighbors(u) for u, v in zip(self.vertices, self.vertices[1:])
        )


@dataclass(frozen=True)
class SearchTree:
    source: Vertex
    distances: dict = field(hash=False, compare=False)
    parents: dict = field(hash=False, compare=False)

    def distance(self, target: Vertex) -> int:
        if target not in self.distances:
            raise UnreachableError(f"{target} is unreachable from {self.source}")
        return self.distances[target]

    def path_to(self, target: Vertex) -> GraphPath:
        self.distance(target)
        vertices = [target]
        while vertices[-1] != self.source:
            vertices.append(self.parents[vertices[-1]])
        return GraphPath(tuple(reversed(vertices)))


def _search(graph: "TruncatedGraph", source: Vertex, target=None) -> SearchTree:
    """Breadth-first search over lazily generated neighbours, stopping at target."""
    if source not in graph:
        raise OutsideTruncationError(f"{source} is outside {graph}")
    distances, parents = {source: 0}, {}
    queue = deque([source])
    while queue and target not in distances:
        vertex = queue.popleft()
        for neighbor in graph.neighbors(vertex):
            if neighbor not in distances:
                distances[neighbor] = distances[vertex] + 1
                parents[neighbor] = vertex
                queue.append(neighbor)
    return SearchTree(source, distances, parents)


@lru_cache(maxsize=16)
def materialize(graph: "TruncatedGraph") -> nx.Graph:
    """The whole truncation as a networkx graph.

    Nodes are added in vertex_key order, so traversals of it are deterministic.
    """
    view = nx.Graph()
    for vertex in sorted(graph.vertices(), key=graph.vertex_key):
        view.add_node(vertex)
        view.add_edges_from((vertex, neighbor) for neighbor in graph.neighbors(vertex))
    logger.debug(f"Materialized {graph}: {view.number_of_nodes()} vertices")
    return view


@lru_cache(maxsize=512)
def bfs(graph: "TruncatedGraph", source: Vertex) -> SearchTree:
    if not graph.finite:
        return _search(graph, source)
    if source not in graph:
        raise OutsideTruncationError(f"{source} is outside {graph}")
    view = materialize(graph)
    distances = nx.single_source_shortest_path_length(view, source)
    parents = dict(nx.bfs_predecessors(view, source))
    logger.debug(f"BFS from {source} in {graph}: {len(distances)} vertices")
    return SearchTree(source, distances, parents)


@lru_cache(maxsize=128)
def nearest(graph: "TruncatedGraph", targets: frozenset) -> dict:
    """Distance from every vertex of the truncation to the nearest target."""
    sources = sorted((t for t in targets if t in graph), key=graph.vertex_key)
    if not sources:
        return {}
    return nx.multi_source_dijkstra_path_length(materialize(graph), sources)


@dataclass
class Region:
    """Vertices v with d(x, v) + d(v, y) <= length_bound, indexed for search."""

    vertices: list
    index: dict
    adjacency: list[list[int]]
    clipped: bool

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, v) -> bool:
        return v in self.index


def _region_from(graph: "TruncatedGraph", members: list, clipped: bool) -> Region:
    members = sorted(members, key=graph.vertex_key)
    index = {vertex: position for position, vertex in enumerate(members)}
    adjacency = [
        [index[neighbor] for neighbor in graph.neighbors(vertex) if neighbor in index]
        for vertex in members
    ]
    return Region(members, index, adjacency, clipped)


#####################################################################################
# Truncated graphs
#####################################################################################
class TruncatedGraph:
    kind = ""
    # Finite truncations can be materialized whole.
    finite = False

    def neighbors(self, v) -> list:
        raise NotImplementedError

    def vertex_key(self, v) -> tuple:
        raise NotImplementedError

    def distance(self, x, y) -> int:
        return bfs(self, x).distance(y)

    def geodesic(self, x, y) -> GraphPath:
        return bfs(self, x).path_to(y)

    def distance_to_set(self, v, targets: Iterable) -> int:
        if v not in self:
            raise OutsideTruncationError(f"{v} is outside {self}")
        distances = nearest(self, frozenset(targets))
        if v not in distances:
            raise UnreachableError(f"No target reachable from {v} in {self}")
        return distances[v]

    def region(self, x, y, length_bound: int, side_depth: Optional[int] = None):
        raise DomainError(f"Penalized search is not available on {self.kind} graphs")


@dataclass(frozen=True)
class FareyGraph(TruncatedGraph):
    bound: int
    kind = "farey"
    finite = True

    def __contains__(self, v) -> bool:
        return isinstance(v, Slope) and v.height <= self.bound

    def __str__(self):
        return f"farey({self.bound})"

    def vertex_key(self, v: Slope) -> tuple:
        return v.key

    def vertices(self) -> Iterator[Slope]:
        yield INFINITY
        for q in range(1, self.bound + 1):
            for p in range(-self.bound, self.bound + 1):
                if math.gcd(p, q) == 1:
                    yield Slope(p, q)

    def neighbors(self, v: Slope) -> list[Slope]:
        if v.q == 0:
            return [Slope(n, 1) for n in range(-self.bound, self.bound + 1)]
        s0, r0 = _bezout(v.p, v.q)
        r0 = -r0
        first = -((self.bound + s0) // v.q)
        last = (self.bound - s0) // v.q
        found = {
            Slope.of(r0 + k * v.p, s0 + k * v.q) for k in range(first, last + 1)
        }
        return sorted((s for s in found if s in self), key=lambda s: s.key)

    def region(self, x, y, length_bound: int, side_depth: Optional[int] = None):
        from_x, from_y = bfs(self, x).distances, bfs(self, y).distances
        members = [
            v
            for v, dx in from_x.items()
            if v in from_y and dx + from_y[v] <= length_bound
        ]
        return _region_from(self, members, clipped=True)


@dataclass(frozen=True)
class FreeTree(TruncatedGraph):
    """Ball of radius bound in the Cayley tree of the free group on ids."""

    ids: tuple[str, ...]
    bound: int
    kind = "tree"

    @property
    def letters(self) -> list[int]:
        rank = len(self.ids)
        return [letter for index in range(1, rank + 1) for letter in (index, -index)]

    def __contains__(self, v) -> bool:
        return (
            isinstance(v, tuple)
            and len(v) <= self.bound
            and all(0 < abs(letter) <= len(self.ids) for letter in v)
            and all(a != -b for a, b in zip(v, v[1:]))
        )

    def __str__(self):
        return f"tree({len(self.ids)}, {self.bound})"

    def vertex_key(self, v: TreeVertex) -> tuple:
        return (len(v), v)

    def children(self, v: TreeVertex) -> list[TreeVertex]:
        return [v + (letter,) for letter in self.letters if not v or letter != -v[-1]]

    def neighbors(self, v: TreeVertex) -> list[TreeVertex]:
        result = [v[:-1]] if v else []
        if len(v) < self.bound:
            result.extend(self.children(v))
        return sorted(result, key=self.vertex_key)

    def distance(self, x, y) -> int:
        for v in (x, y):
            if v not in self:
                raise OutsideTruncationError(f"{v} is outside {self}")
        return len(x) + len(y) - 2 * _common_prefix(x, y)

    def geodesic(self, x, y) -> GraphPath:
        self.distance(x, y)
        shared = _common_prefix(x, y)
        up = [x[:size] for size in range(len(x), shared - 1, -1)]
        down = [y[:size] for size in range(shared + 1, len(y) + 1)]
        return GraphPath(tuple(up + down))

    def distance_to_set(self, v, targets: Iterable) -> int:
        targets = [t for t in targets if t in self]
        if not targets:
            raise UnreachableError(f"No target reachable from {v} in {self}")
        return min(self.distance(v, t) for t in targets)

    def region(self, x, y, length_bound: int, side_depth: Optional[int] = None):
        """Tree region grown from the geodesic.

        A vertex at distance h from the x-y geodesic satisfies
        d(x, v) + d(v, y) = d(x, y) + 2h.
        """
        spine = self.geodesic(x, y).vertices
        depth = (length_bound - len(spine) + 1) // 2
        if side_depth is not None:
            depth = min(depth, side_depth)
        members, clipped = set(spine), False
        frontier = list(spine)
        for _ in range(max(depth, 0)):
            layer = []
            for vertex in frontier:
                parent = [vertex[:-1]] if vertex else []
                for neighbor in parent + self.children(vertex):
                    if neighbor in members:
                        continue
                    if len(neighbor) > self.bound:
                        clipped = True
                        continue
                    members.add(neighbor)
                    layer.append(neighbor)
            frontier = layer
        return _region_from(self, list(members), clipped)


@dataclass(frozen=True)
class Apex:
    index: int

    def __str__(self):
        return f"apex:{self.index}"


@dataclass(frozen=True)
class ConedGraph(TruncatedGraph):
    base: TruncatedGraph
    subsets: tuple[frozenset, ...]
    kind = "cone"

    @property
    def bound(self):
        return self.base.bound

    def __contains__(self, v) -> bool:
        if isinstance(v, Apex):
            return 0 <= v.index < len(self.subsets)
        return v in self.base

    def __str__(self):
        return f"cone({self.base}, {len(self.subsets)} subsets)"

    def vertex_key(self, v) -> tuple:
        if isinstance(v, Apex):
            return (1, v.index)
        return (0,) + self.base.vertex_key(v)

    def neighbors(self, v) -> list:
        if isinstance(v, Apex):
            return sorted(self.subsets[v.index], key=self.base.vertex_key)
        return self.base.neighbors(v) + [
            Apex(index) for index, subset in enumerate(self.subsets) if v in subset
        ]

    def distance(self, x, y) -> int:
        return _search(self, x, target=y).distance(y)

    def geodesic(self, x, y) -> GraphPath:
        return _search(self, x, target=y).path_to(y)

    def distance_to_set(self, v, targets: Iterable) -> int:
        values = []
        for target in targets:
            try:
                values.append(self.distance(v, target))
            except UnreachableError:
                continue
        if not values:
            raise UnreachableError(f"No target reachable from {v} in {self}")
        return min(values)


def cone_off(graph: TruncatedGraph, subsets: Sequence[Iterable]) -> ConedGraph:
    frozen = tuple(frozenset(subset) for subset in subsets)
    for index, subset in enumerate(frozen):
        if not subset:
            raise DomainError(f"Subset {index} is empty")
        if outside := [v for v in subset if v not in graph]:
            raise OutsideTruncationError(f"Subset {index} leaves {graph}: {outside}")
    return ConedGraph(graph, frozen)


def project(v, coned: ConedGraph) -> Apex:
    """Apex of the first subset containing v, else the nearest apex."""
    for index, subset in enumerate(coned.subsets):
        if v in subset:
            return Apex(index)
    if v not in coned:
        raise OutsideTruncationError(f"{v} is outside {coned}")
    seen, layer = {v}, [v]
    while layer:
        apexes = [w for u in layer for w in coned.neighbors(u) if isinstance(w, Apex)]
        if apexes:
            return min(apexes, key=lambda apex: apex.index)
        next_layer = []
        for u in layer:
            for w in coned.neighbors(u):
                if w not in seen:
                    seen.add(w)
                    next_layer.append(w)
        layer = next_layer
    raise UnreachableError(f"No subset reachable from {v}")


#####################################################################################
# Measurements
#####################################################################################
def distance(x, y, graph: TruncatedGraph) -> int:
    return graph.distance(x, y)


def geodesic(x, y, graph: TruncatedGraph) -> GraphPath:
    return graph.geodesic(x, y)


def coarse_projection(
    a_set: Iterable, b_set: Iterable, graph: TruncatedGraph
) -> frozenset:
    """Every point of b_set at minimal distance from a_set."""
    a_set, best, found = list(a_set), None, set()
    for b in b_set:
        try:
            value = graph.distance_to_set(b, a_set)
        except UnreachableError:
            continue
        if best is None or value < best:
            best, found = value, {b}
        elif value == best:
            found.add(b)
    if best is None:
        raise UnreachableError(f"The sets are not connected inside {graph}")
    return frozenset(found)


@dataclass(frozen=True)
class QuasiGeodesicConstants:
    lam: int
    c: int
    lam_at_zero: Optional[Fraction]


def quasi_geodesic_constants(
    path: GraphPath, graph: TruncatedGraph
) -> QuasiGeodesicConstants:
    """Smallest (lambda, c) in lexicographic order for the path.

    Consecutive vertices are adjacent, so the upper inequality always holds with
    lambda = 1 and the lower one then fixes c.
    """
    vertices, c, lam_at_zero = path.vertices, 0, Fraction(1)
    for i in range(len(vertices)):
        for j in range(i + 1, len(vertices)):
            d = graph.distance(vertices[i], vertices[j])
            c = max(c, j - i - d)
            if lam_at_zero is not None:
                lam_at_zero = None if d == 0 else max(lam_at_zero, Fraction(j - i, d))
    return QuasiGeodesicConstants(1, c, lam_at_zero)


@dataclass(frozen=True)
class StableDistance:
    value: Optional[int]
    n_star: Optional[int]
    stabilized: bool
    evaluated: tuple[tuple[int, Optional[int]], ...]


#####################################################################################
# Models
#####################################################################################
@dataclass(frozen=True)
class ModelSpec:
    kind: str
    gens: GeneratorSet

    def __post_init__(self):
        if self.kind not in ("farey", "tree"):
            raise ConfigurationError(f"Unknown model: {self.kind}")

    def graph(self, bound: int) -> TruncatedGraph:
        if self.kind == "farey":
            return FareyGraph(bound)
        return FreeTree(self.gens.ids, bound)

    @property
    def origin(self):
        return Slope(0, 1) if self.kind == "farey" else ()

    def act(self, word: GroupWord, v):
        if self.kind == "farey":
            return apply(evaluate_word(word, self.gens), v)
        return tree_multiply(word_to_tree(word, self.gens.ids), v)

    def height(self, v) -> int:
        return v.height if self.kind == "farey" else len(v)

    def format_vertex(self, v) -> str:
        if isinstance(v, (Slope, Apex)):
            return str(v)
        return str(tree_to_word(v, self.gens.ids))


def distance_stable(
    x,
    y,
    model: ModelSpec,
    schedule: Sequence[int],
    distance_lookup: Optional[Callable[[TruncatedGraph, object, object], int]] = None,
) -> StableDistance:
    """Run BFS over the schedule until two consecutive evaluations agree.

    Schedule points whose truncation misses x or y are skipped.
    """
    evaluated, previous = [], None
    for bound in schedule:
        graph = model.graph(bound)
        try:
            if distance_lookup is not None:
                value = distance_lookup(graph, x, y)
            else:
                value = graph.distance(x, y)
        except UnreachableError:
            evaluated.append((bound, None))
            previous = None
            continue
        evaluated.append((bound, value))
        if previous is not None and previous[1] == value:
            return StableDistance(value, previous[0], True, tuple(evaluated))
        previous = (bound, value)
    value = previous[1] if previous else None
    n_star = previous[0] if previous else None
    logger.info(f"Distance {x} -> {y} did not stabilize over {list(schedule)}")
    return StableDistance(value, n_star, False, tuple(evaluated))


#####################################################################################
# Disk sets
#####################################################################################
@dataclass(frozen=True)
class DiskSetSpec:
    generators: tuple[GroupWord, ...]
    basepoint: Vertex
    cap: int


@dataclass(frozen=True)
class DiskSet:
    spec: DiskSetSpec
    vertices: frozenset
    dropped: int


def orbit_subset(
    spec: DiskSetSpec, model: ModelSpec, graph: TruncatedGraph
) -> DiskSet:
    orbit = {
        model.act(word, spec.basepoint)
        for word in all_words_over(spec.generators, spec.cap)
    }
    orbit.add(spec.basepoint)
    inside = frozenset(v for v in orbit if v in graph)
    logger.info(
        f"Collected {len(inside)} disk vertices in {graph},"
        f" dropped {len(orbit) - len(inside)}"
    )
    return DiskSet(spec, inside, len(orbit) - len(inside))


def quasiconvexity_audit(vertices: Iterable, graph: TruncatedGraph) -> int:
    members = sorted(set(vertices), key=graph.vertex_key)
    if len(members) < 2:
        raise DomainError("Quasi-convexity needs at least two vertices")
    measured = 0
    for i, a in enumerate(members):
        for b in members[i + 1 :]:
            for v in graph.geodesic(a, b).vertices:
                measured = max(measured, graph.distance_to_set(v, members))
    return measured


def neighbourhood(graph: TruncatedGraph, sources: Iterable, radius: int) -> frozenset:
    """Vertices of the truncation within the given distance of the sources."""
    seen = {v for v in sources if v in graph}
    if graph.finite and seen:
        lengths = nx.multi_source_dijkstra_path_length(
            materialize(graph), seen, cutoff=radius
        )
        return frozenset(lengths)
    layer = list(seen)
    for _ in range(radius):
        next_layer = []
        for vertex in layer:
            for neighbor in graph.neighbors(vertex):
                if neighbor not in seen:
                    seen.add(neighbor)
                    next_layer.append(neighbor)
        layer = next_layer
    return frozenset(seen)
