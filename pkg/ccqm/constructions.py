import itertools
import logging
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

from ccqm.counting import (
    DefectReport,
    Homogenization,
    OmegaSegment,
    PenaltySpec,
    SampleSpec,
    anchored_translates,
    defect_estimate,
    doubling_pairs,
    homogenize,
    qm_evaluate,
    slope_statistic,
)
from ccqm.errors import (
    CertificationError,
    ConfigurationError,
    ConstructionError,
    UnreachableError,
)
from ccqm.graphs import (
    DiskSet,
    GraphPath,
    ModelSpec,
    QuasiGeodesicConstants,
    TruncatedGraph,
    coarse_projection,
    neighbourhood,
    quasi_geodesic_constants,
)
from ccqm.moebius import (
    ElementType,
    GroupWord,
    PingPongCertificate,
    RationalInterval,
    all_words_over,
    classify,
    evaluate_word,
    ping_pong_certify,
    words_over,
)

logger = logging.getLogger(__name__)


#####################################################################################
# Schottky pairs and families
#####################################################################################
@dataclass(frozen=True)
class SchottkyPair:
    phi: GroupWord
    psi: GroupWord
    power: int
    certificate: PingPongCertificate


def certify_schottky_pair(
    phi: GroupWord, psi: GroupWord, gens, max_power: int = 64, max_depth: int = 16
) -> SchottkyPair:
    """Double the power from 2 until the ping-pong certificate is valid."""
    power = 2
    while power <= max_power:
        certificate = ping_pong_certify(phi, psi, power, gens, max_depth=max_depth)
        if certificate.valid:
            logger.info(f"Certified Schottky pair {phi}, {psi} at power {power}")
            return SchottkyPair(phi, psi, power, certificate)
        power *= 2
    raise CertificationError(
        f"No ping-pong certificate for {phi}, {psi} up to {max_power}"
    )


@dataclass(frozen=True)
class FamilySchedule:
    quadruples: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        exponents = [e for quadruple in self.quadruples for e in quadruple]
        if any(len(quadruple) != 4 for quadruple in self.quadruples):
            raise ConfigurationError("Family exponents come in groups of four")
        if exponents and exponents[0] < 1:
            raise ConfigurationError("Family exponents must be positive")
        if any(a >= b for a, b in zip(exponents, exponents[1:])):
            raise ConfigurationError(f"Family exponents {exponents} must increase")


def build_family(
    pair: SchottkyPair, schedule: FamilySchedule, gens
) -> list[GroupWord]:
    family = []
    for n, m, k, last in schedule.quadruples:
        if n < pair.power:
            raise ConfigurationError(
                f"Exponent {n} is below the certified power {pair.power}"
            )
        word = (
            pair.phi.power(n)
            * pair.psi.power(m)
            * pair.phi.power(k)
            * pair.psi.power(-last)
        )
        kind = classify(evaluate_word(word, gens))
        if kind != ElementType.HYPERBOLIC:
            raise ConstructionError(f"{word} is {kind.value}, schedule too small")
        family.append(word)
    logger.info(f"Built family of {len(family)} words")
    return family


def axis_segment(
    g: GroupWord,
    halfwidth: int,
    basepoint,
    model: ModelSpec,
    graph: TruncatedGraph,
) -> OmegaSegment:
    """Geodesics g^j v0 -> g^(j+1) v0 for j = -k ... k - 1, joined up."""
    if halfwidth < 1:
        raise ConstructionError("An axis segment needs a positive halfwidth")
    if model.kind == "tree":
        if g.is_identity():
            raise ConstructionError("The identity has no axis")
    elif (kind := classify(evaluate_word(g, model.gens))) != ElementType.HYPERBOLIC:
        raise ConstructionError(f"{g} is {kind.value}, it has no axis")
    reach = 0
    while reach < halfwidth and all(
        model.act(g.power(j), basepoint) in graph for j in (reach + 1, -reach - 1)
    ):
        reach += 1
    if reach == 0 or basepoint not in graph:
        raise ConstructionError(f"The orbit of {basepoint} under {g} escapes {graph}")
    if reach < halfwidth:
        logger.info(f"Axis segment of {g} reaches {reach} of {halfwidth}")
    points = [model.act(g.power(j), basepoint) for j in range(-reach, reach + 1)]
    path = GraphPath((points[0],))
    for u, v in zip(points, points[1:]):
        path = path.concatenate(graph.geodesic(u, v))
    return OmegaSegment.from_path(path, model, reach=reach)


#####################################################################################
# Growth matrix and independence
#####################################################################################
@dataclass(frozen=True)
class GrowthMatrix:
    entries: tuple[tuple[Homogenization, ...], ...]
    power: int

    @property
    def size(self) -> int:
        return len(self.entries)


def _homogenize_job(job) -> Homogenization:
    word, spec, power, defect = job
    return homogenize(word, spec, power, defect)


def growth_matrix(
    specs: Sequence[PenaltySpec],
    family: Sequence[GroupWord],
    max_power: int,
    defects: Sequence[int],
    mapper: Callable = map,
) -> GrowthMatrix:
    if specs:
        weights = {spec.weight for spec in specs}
        shortest = min(spec.omega.length for spec in specs)
        if len(weights) != 1 or max(weights) >= shortest:
            raise ConfigurationError(
                f"Weights {sorted(weights)} must agree and stay below {shortest}"
            )
    jobs = [
        (word, spec, max_power, defect)
        for spec, defect in zip(specs, defects)
        for word in family
    ]
    values = list(mapper(_homogenize_job, jobs))
    width = len(family)
    entries = tuple(
        tuple(values[row * width : (row + 1) * width]) for row in range(len(specs))
    )
    return GrowthMatrix(entries, max_power)


@dataclass(frozen=True)
class IndependenceCertificate:
    certified: bool
    margin: Fraction
    method: str


def _entry_interval(entry: Homogenization) -> RationalInterval:
    return RationalInterval(entry.value - entry.error, entry.value + entry.error)


def independence_certificate(matrix: GrowthMatrix) -> IndependenceCertificate:
    """Diagonal dominance first, then the interval determinant."""
    rows = matrix.entries
    size = len(rows)
    if size == 0 or any(len(row) != size for row in rows):
        return IndependenceCertificate(False, Fraction(0), "inconclusive")

    slacks = [
        abs(row[i].value)
        - row[i].error
        - sum(abs(entry.value) + entry.error for j, entry in enumerate(row) if j != i)
        for i, row in enumerate(rows)
    ]
    if min(slacks) > 0:
        return IndependenceCertificate(True, min(slacks), "diagonal-dominance")

    determinant = RationalInterval.point(0)
    for permutation in itertools.permutations(range(size)):
        inversions = sum(
            1
            for i in range(size)
            for j in range(i + 1, size)
            if permutation[i] > permutation[j]
        )
        term = RationalInterval.point(-1 if inversions % 2 else 1)
        for i, j in enumerate(permutation):
            term = term * _entry_interval(rows[i][j])
        determinant = determinant + term
    margin = determinant.distance_from_zero()
    if margin > 0:
        return IndependenceCertificate(True, margin, "interval-determinant")
    return IndependenceCertificate(False, Fraction(0), "inconclusive")


#####################################################################################
# Audits
#####################################################################################
@dataclass
class AuditReport:
    kind: str
    parameters: dict
    statistic: int | Fraction
    witness: Optional[str]
    passed: Optional[bool] = None
    partial: bool = False
    details: dict = field(default_factory=dict)


def cyclic_bound_audit(
    spec: PenaltySpec, g: GroupWord, n_max: int, defect: Optional[int] = None
) -> AuditReport:
    points, partial = [], False
    for n in range(1, n_max + 1):
        try:
            result = qm_evaluate(g.power(n), spec)
        except UnreachableError:
            partial = True
            break
        if not result.stabilized:
            partial = True
            continue
        points.append((n, result.value))

    statistic, witness = 0, str(GroupWord.identity())
    for n, value in points:
        if abs(value) > statistic:
            statistic, witness = abs(value), str(g.power(n))
    report = AuditReport(
        "cyclic",
        {"word": str(g), "n_max": n_max},
        statistic,
        witness,
        partial=partial,
        details={"reach": points[-1][0] if points else 0, "values": points},
    )
    if defect is not None:
        fit = slope_statistic(points, defect)
        report.details.update(slope=fit.slope, slope_error=fit.error)
        report.passed = abs(fit.slope) <= fit.error
    return report


def subgroup_bound_audit(
    spec: PenaltySpec,
    subgroup: Sequence[GroupWord],
    max_length: int,
    sampler: Optional[SampleSpec] = None,
    expected: int = 0,
    kind: str = "stabilizer",
) -> AuditReport:
    """sup |h| over every (or a sample of) subgroup word up to max_length.

    A stabilizer audit requires every generator to fix the basepoint.
    """
    if kind == "stabilizer":
        origin = spec.basepoint
        moved = [str(h) for h in subgroup if spec.model.act(h, origin) != origin]
        if moved:
            raise ConfigurationError(
                f"Stabilizer generators {moved} move the basepoint"
                f" {spec.model.format_vertex(spec.basepoint)}"
            )
    if sampler is None:
        words = list(all_words_over(subgroup, max_length))
    else:
        rng = random.Random(sampler.seed)
        words = [GroupWord.identity()] + [
            words_over(rng, subgroup, max_length) for _ in range(sampler.count)
        ]
    statistic, witness, excluded = 0, str(GroupWord.identity()), 0
    for word in words:
        try:
            result = qm_evaluate(word, spec)
        except UnreachableError:
            excluded += 1
            continue
        if not result.stabilized:
            excluded += 1
            continue
        if abs(result.value) > statistic:
            statistic, witness = abs(result.value), str(word)
    logger.info(f"Subgroup audit over {len(words)} words: sup {statistic}")
    return AuditReport(
        kind,
        {
            "subgroup": [str(word) for word in subgroup],
            "max_length": max_length,
            "expected": expected,
        },
        statistic,
        witness,
        passed=statistic <= expected,
        partial=excluded > 0,
        details={"words": len(words), "excluded": excluded},
    )


def _longest_run(vertices: Sequence, members: frozenset) -> int:
    best = current = 0
    for vertex in vertices:
        current = current + 1 if vertex in members else 0
        best = max(best, current)
    return best


def avoidance_audit(
    omega: OmegaSegment,
    disk: DiskSet,
    boundary: int,
    model: ModelSpec,
    graph: TruncatedGraph,
) -> AuditReport:
    """Longest run of translate vertices inside the boundary of the disk set.

    Translates missing the neighbourhood have statistic zero, so only those
    passing through it are enumerated.
    """
    trapped = neighbourhood(graph, disk.vertices, boundary)
    statistic, witness = 0, None
    copies = anchored_translates(omega, graph, sorted(trapped, key=graph.vertex_key))
    for copy in copies:
        run = _longest_run(copy.vertices, trapped)
        if run > statistic:
            statistic = run
            witness = " ".join(model.format_vertex(v) for v in copy.vertices)
    return AuditReport(
        "avoidance",
        {"boundary": boundary, "omega_length": omega.length},
        statistic,
        witness,
        passed=statistic < omega.length,
        details={
            "translates": len(copies),
            "neighbourhood": len(trapped),
            "disk": len(disk.vertices),
            "dropped": disk.dropped,
        },
    )


def double_coset_audit(
    spec: PenaltySpec,
    f: GroupWord,
    subgroup: Sequence[GroupWord],
    sampler: SampleSpec,
    defect: int,
    subgroup_bound: int,
) -> AuditReport:
    """sup |h(a f b) - h(f)| for a, b sampled in the subgroup."""
    rng = random.Random(sampler.seed)
    pairs = [(GroupWord.identity(), GroupWord.identity())] + [
        (
            words_over(rng, subgroup, sampler.max_length),
            words_over(rng, subgroup, sampler.max_length),
        )
        for _ in range(sampler.count)
    ]
    bound = 2 * defect + 2 * subgroup_bound
    parameters = {"word": str(f), "subgroup": [str(word) for word in subgroup]}
    try:
        base = qm_evaluate(f, spec)
    except UnreachableError as e:
        logger.warning(f"Coset audit skipped: {e}")
        details = {"bound": bound, "samples": len(pairs), "excluded": len(pairs)}
        return AuditReport("coset", parameters, 0, None, partial=True, details=details)
    statistic, witness, excluded = 0, f"1 * {f} * 1", 0
    for a, b in pairs:
        try:
            result = qm_evaluate(a * f * b, spec)
        except UnreachableError:
            excluded += 1
            continue
        if not (result.stabilized and base.stabilized):
            excluded += 1
            continue
        deviation = abs(result.value - base.value)
        if deviation > statistic:
            statistic, witness = deviation, f"{a} * {f} * {b}"
    return AuditReport(
        "coset",
        parameters,
        statistic,
        witness,
        passed=statistic <= bound,
        partial=excluded > 0,
        details={"bound": bound, "samples": len(pairs), "excluded": excluded},
    )


def linear_dependence_audit(
    specs: Sequence[PenaltySpec],
    coefficients: Sequence[int | Fraction],
    words: Sequence[GroupWord],
) -> AuditReport:
    """sup |sum a_i h_i(w)| over the words; growth refutes the dependence."""
    if len(specs) != len(coefficients):
        raise ConfigurationError("One coefficient per counting function is needed")
    statistic, witness, excluded = Fraction(0), None, 0
    for word in words:
        try:
            results = [qm_evaluate(word, spec) for spec in specs]
        except UnreachableError:
            excluded += 1
            continue
        if not all(result.stabilized for result in results):
            excluded += 1
            continue
        total = abs(sum(Fraction(a) * r.value for a, r in zip(coefficients, results)))
        if witness is None or total > statistic:
            statistic, witness = total, str(word)
    return AuditReport(
        "dependence",
        {"coefficients": [Fraction(a) for a in coefficients]},
        statistic,
        witness,
        partial=excluded > 0,
        details={"words": len(words), "excluded": excluded},
    )


#####################################################################################
# Composite of two handlebody-like elements
#####################################################################################
@dataclass(frozen=True)
class CompositeReport:
    phi: GroupWord
    kind: ElementType
    projection_w: frozenset
    projection_v: frozenset
    disk_distance: int
    path: GraphPath
    constants: QuasiGeodesicConstants
    middle_length: int
    return_length: int


def composite_axis_audit(
    v_disk: DiskSet,
    w_disk: DiskSet,
    f: GroupWord,
    g: GroupWord,
    model: ModelSpec,
    graph: TruncatedGraph,
) -> CompositeReport:
    """Measure the path A' + C' + B' built for phi = g f.

    A' joins P_V(W) to P_W(V), C' joins P_W(V) to g P_W(V) and B' is g(A')
    reversed. f should preserve the V disk set and g the W disk set.
    """
    projection_w = coarse_projection(v_disk.vertices, w_disk.vertices, graph)
    projection_v = coarse_projection(w_disk.vertices, v_disk.vertices, graph)
    a = min(projection_v, key=graph.vertex_key)
    b = min(projection_w, key=graph.vertex_key)
    first = graph.geodesic(a, b)
    middle = graph.geodesic(b, model.act(g, b))
    last = GraphPath(tuple(model.act(g, v) for v in first.vertices)).reversed()
    path = first.concatenate(middle).concatenate(last)
    phi = g * f
    return CompositeReport(
        phi=phi,
        kind=classify(evaluate_word(phi, model.gens)),
        projection_w=projection_w,
        projection_v=projection_v,
        disk_distance=graph.distance_to_set(b, v_disk.vertices),
        path=path,
        constants=quasi_geodesic_constants(path, graph),
        middle_length=middle.length,
        return_length=graph.distance(a, model.act(f, a)),
    )


#####################################################################################
# Pipeline
#####################################################################################
@dataclass(frozen=True)
class FamilyReport:
    pair: SchottkyPair
    family: tuple[GroupWord, ...]
    specs: tuple[PenaltySpec, ...]
    defects: tuple
    matrix: GrowthMatrix
    certificate: IndependenceCertificate
    dropped: tuple[GroupWord, ...] = ()


def family_specs(
    family: Sequence[GroupWord],
    model: ModelSpec,
    schedule: tuple[int, ...],
    halfwidth: int,
    weight: int,
    basepoint,
) -> list[PenaltySpec]:
    graph = model.graph(schedule[-1])
    return [
        PenaltySpec(
            model,
            axis_segment(word, halfwidth, basepoint, model, graph),
            weight,
            basepoint,
            schedule,
        )
        for word in family
    ]


def prune_family(
    family: Sequence[GroupWord],
    specs: Sequence[PenaltySpec],
    cyclic_subgroups: Sequence[GroupWord],
    n_max: int,
    defects: Sequence[DefectReport],
):
    """Drop members whose counting function grows linearly on some C_i."""
    kept, dropped = [], []
    for word, spec, defect in zip(family, specs, defects):
        growing = [
            generator
            for generator in cyclic_subgroups
            if cyclic_bound_audit(spec, generator, n_max, defect.value).passed is False
        ]
        if growing:
            logger.info(f"Dropping {word}: grows on {[str(c) for c in growing]}")
            dropped.append(word)
        else:
            kept.append((word, spec, defect))
    return kept, dropped


def run_family_pipeline(
    pair: SchottkyPair,
    schedule: FamilySchedule,
    model: ModelSpec,
    specs_schedule: tuple[int, ...],
    *,
    halfwidth: int,
    weight: int,
    basepoint,
    sampler: SampleSpec,
    max_power: int,
    cyclic_subgroups: Sequence[GroupWord] = (),
    cyclic_max: int = 20,
    mapper: Callable = map,
) -> FamilyReport:
    """Build the family, estimate defects and double M until certified."""
    family = build_family(pair, schedule, model.gens)
    specs = family_specs(family, model, specs_schedule, halfwidth, weight, basepoint)
    sampler = replace(sampler, forced=doubling_pairs(family, max_power))
    defects = [defect_estimate(spec, sampler, mapper) for spec in specs]

    dropped = []
    if cyclic_subgroups:
        kept, dropped = prune_family(
            family, specs, cyclic_subgroups, cyclic_max, defects
        )
        family = [word for word, _, _ in kept]
        specs = [spec for _, spec, _ in kept]
        defects = [defect for _, _, defect in kept]

    power, matrix = 2, GrowthMatrix((), 0)
    certificate = IndependenceCertificate(False, Fraction(0), "inconclusive")
    while family and power <= max_power:
        matrix = growth_matrix(
            specs, family, power, [d.value for d in defects], mapper
        )
        certificate = independence_certificate(matrix)
        logger.info(f"Growth matrix at M={power}: {certificate.method}")
        if certificate.certified:
            break
        power *= 2
    return FamilyReport(
        pair,
        tuple(family),
        tuple(specs),
        tuple(defects),
        matrix,
        certificate,
        tuple(dropped),
    )
