import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import cached_property
from typing import IO, Optional

from ccqm import __version__
from ccqm.cache import DistanceCache
from ccqm.config import ExperimentConfig, RunConfig
from ccqm.constants import (
    DEFAULT_GENERATORS,
    DEFAULT_SCHEDULES,
    EXIT_INCONCLUSIVE,
    EXIT_OK,
    FALLBACK_EXPERIMENT,
)
from ccqm.constructions import (
    FamilySchedule,
    avoidance_audit,
    build_family,
    certify_schottky_pair,
    composite_axis_audit,
    cyclic_bound_audit,
    double_coset_audit,
    family_specs,
    linear_dependence_audit,
    run_family_pipeline,
    subgroup_bound_audit,
)
from ccqm.counting import (
    OmegaSegment,
    PenaltySpec,
    SampleSpec,
    defect_estimate,
    doubling_pairs,
    homogenize,
    qm_evaluate,
)
from ccqm.errors import ConfigurationError
from ccqm.graphs import (
    DiskSet,
    DiskSetSpec,
    GraphPath,
    ModelSpec,
    cone_off,
    distance_stable,
    orbit_subset,
    project,
)
from ccqm.parser import parse_config, parse_generators, parse_vertex, parse_word
from ccqm.records import RecordWriter, summary_table

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Owns the run configuration, generators, cache and worker pool."""

    def __init__(self, config: RunConfig, stream: Optional[IO[str]] = None):
        self.config = config
        self.experiment = ExperimentConfig()
        self.experiment.update(FALLBACK_EXPERIMENT)
        self.gens = DEFAULT_GENERATORS
        if config.gens_path:
            with open(config.gens_path) as f:
                self.gens = parse_generators(f.read(), config.gens_path)
        self.cache = DistanceCache(config.cache_path) if config.cache_path else None
        self.executor = None
        if config.jobs > 1:
            self.executor = ProcessPoolExecutor(max_workers=config.jobs)
        self.out = None
        self.stream = stream
        if self.stream is None:
            if config.out_path:
                self.out = self.stream = open(config.out_path, "w")
            else:
                self.stream = sys.stdout

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        if self.cache:
            self.cache.save()
        if self.executor:
            self.executor.shutdown()
        if self.out:
            self.out.close()

    def load_experiment(self, path: str):
        with open(path) as f:
            self.experiment.update(parse_config(f.read(), path))

    @property
    def mapper(self):
        return self.executor.map if self.executor else map

    @cached_property
    def model(self) -> ModelSpec:
        return ModelSpec(
            self.config.model or self.experiment.model or "farey", self.gens
        )

    @cached_property
    def schedule(self) -> tuple[int, ...]:
        return (
            self.config.schedule
            or self.experiment.schedule
            or DEFAULT_SCHEDULES[self.model.kind]
        )

    @cached_property
    def writer(self) -> RecordWriter:
        return RecordWriter(
            self.stream, self.model.kind, self.config.seed, __version__
        )

    def fmt(self, v) -> str:
        return self.model.format_vertex(v)

    def summary(self, headers, rows):
        print(summary_table(headers, rows), file=sys.stderr)

    #################################################################################
    # Experiment pieces
    #################################################################################
    def vertex(self, text: str):
        return parse_vertex(text, self.model) if text else self.model.origin

    @cached_property
    def graph(self):
        return self.model.graph(self.schedule[-1])

    @cached_property
    def basepoint(self):
        return self.vertex(self.experiment.basepoint)

    def sampler(self, forced=()) -> SampleSpec:
        return SampleSpec(
            self.experiment.sample_length,
            self.experiment.samples,
            self.config.seed,
            tuple(forced),
        )

    def explicit_spec(self) -> PenaltySpec:
        vertices = tuple(self.vertex(text) for text in self.experiment.omega)
        path = GraphPath(vertices)
        if len(vertices) < 2 or not path.is_valid(self.graph):
            raise ConfigurationError(
                f"omega {', '.join(self.experiment.omega)}"
                f" is not a path in {self.graph}"
            )
        return PenaltySpec(
            self.model,
            OmegaSegment.from_path(path, self.model),
            self.experiment.weight,
            self.basepoint,
            self.schedule,
        )

    @cached_property
    def pair(self):
        return certify_schottky_pair(
            self.experiment.phi,
            self.experiment.psi,
            self.gens,
            max_power=self.experiment.max_power,
        )

    @cached_property
    def targets(self) -> list:
        """Words whose axes carry the counting functions."""
        if self.experiment.omega_words:
            return list(self.experiment.omega_words)
        if self.experiment.omega:
            return [self.experiment.word]
        schedule = FamilySchedule(self.experiment.family)
        return build_family(self.pair, schedule, self.gens)

    @cached_property
    def specs(self) -> list[PenaltySpec]:
        if self.experiment.omega:
            return [self.explicit_spec()]
        return family_specs(
            self.targets,
            self.model,
            self.schedule,
            self.experiment.halfwidth,
            self.experiment.weight,
            self.basepoint,
        )

    @cached_property
    def defects(self):
        forced = doubling_pairs(self.targets, self.experiment.growth_max_power)
        return [
            defect_estimate(spec, self.sampler(forced), self.mapper)
            for spec in self.specs
        ]

    def disk_set(self) -> DiskSet:
        if not self.experiment.disk_generators:
            raise ConfigurationError("disk_generators is empty")
        spec = DiskSetSpec(
            tuple(self.experiment.disk_generators),
            self.vertex(self.experiment.disk_basepoint),
            self.experiment.disk_cap,
        )
        return orbit_subset(spec, self.model, self.graph)

    def spec_record(self, spec: PenaltySpec) -> dict:
        return {
            "omega": [self.fmt(v) for v in spec.omega.path.vertices],
            "weight": spec.weight,
            "basepoint": self.fmt(spec.basepoint),
            "schedule": list(spec.schedule),
        }

    def audit_record(self, report, **extra):
        self.writer.write(
            "audit",
            audit=report.kind,
            statistic=report.statistic,
            witness=report.witness,
            passed=report.passed,
            partial=report.partial,
            parameters=report.parameters,
            details=report.details,
            **extra,
        )

    #################################################################################
    # Commands
    #################################################################################
    def dist(self, x_text: str, y_text: str) -> int:
        logger.info("COMMAND: dist")
        logger.debug(f"PARAMS: {x_text} {y_text} {self.schedule}")
        x, y = self.vertex(x_text), self.vertex(y_text)
        lookup = self.cache.lookup(self.model) if self.cache else None
        result = distance_stable(x, y, self.model, self.schedule, lookup)
        self.writer.write(
            "dist",
            n_star=result.n_star,
            x=self.fmt(x),
            y=self.fmt(y),
            value=result.value,
            stabilized=result.stabilized,
            evaluated=[list(point) for point in result.evaluated],
        )
        row = [self.fmt(x), self.fmt(y), result.value, result.n_star, result.stabilized]
        self.summary(["x", "y", "d", "N*", "stable"], [row])
        return EXIT_OK if result.stabilized else EXIT_INCONCLUSIVE

    def qm(self, word_text: str) -> int:
        logger.info("COMMAND: qm")
        logger.debug(f"PARAMS: {word_text}")
        g = parse_word(word_text)
        rows, status = [], EXIT_OK
        for spec in self.specs:
            value = qm_evaluate(g, spec)
            self.writer.write(
                "qm",
                n_star=value.n_star,
                word=str(g),
                value=value.value,
                stabilized=value.stabilized,
                translates=value.translates,
                **self.spec_record(spec),
            )
            rows.append([str(g), spec.omega.length, value.value, value.n_star])
            if not value.stabilized:
                status = EXIT_INCONCLUSIVE
        self.summary(["word", "|omega|", "h", "N*"], rows)
        return status

    def defect(self) -> int:
        logger.info("COMMAND: defect")
        rows, status = [], EXIT_OK
        for spec, report in zip(self.specs, self.defects):
            self.writer.write(
                "defect",
                n_star=report.n_star,
                value=report.value,
                argmax=[str(w) for w in report.argmax] if report.argmax else None,
                sample=report.sample,
                evaluated=report.evaluated,
                excluded=report.excluded,
                history=list(report.history),
                stabilized=report.stabilized,
                **self.spec_record(spec),
            )
            rows.append(
                [spec.omega.length, report.value, report.evaluated, report.stabilized]
            )
            if not report.stabilized:
                status = EXIT_INCONCLUSIVE
        self.summary(["|omega|", "D", "pairs", "stable"], rows)
        return status

    def homogenize(self, word_text: str) -> int:
        logger.info("COMMAND: homogenize")
        g = parse_word(word_text)
        forced = doubling_pairs([g], self.experiment.growth_max_power)
        rows, status = [], EXIT_OK
        for spec in self.specs:
            report = defect_estimate(spec, self.sampler(forced), self.mapper)
            result = homogenize(g, spec, self.experiment.growth_max_power, report.value)
            self.writer.write(
                "homogenize",
                n_star=result.n_star,
                word=str(g),
                value=result.value,
                error=result.error,
                power=result.power,
                partial=result.partial,
                defect=report.value,
                **self.spec_record(spec),
            )
            rows.append([str(g), result.value, result.error, result.power])
            if result.partial:
                status = EXIT_INCONCLUSIVE
        self.summary(["word", "value", "error", "M"], rows)
        return status

    def family(self) -> int:
        logger.info("COMMAND: family")
        experiment = self.experiment
        report = run_family_pipeline(
            self.pair,
            FamilySchedule(experiment.family),
            self.model,
            self.schedule,
            halfwidth=experiment.halfwidth,
            weight=experiment.weight,
            basepoint=self.basepoint,
            sampler=self.sampler(),
            max_power=experiment.growth_max_power,
            cyclic_subgroups=experiment.cyclic_subgroups,
            cyclic_max=experiment.cyclic_max,
            mapper=self.mapper,
        )
        self.writer.write(
            "pair",
            phi=str(report.pair.phi),
            psi=str(report.pair.psi),
            power=report.pair.power,
            arcs=[str(arc) for arc in report.pair.certificate.arcs],
        )
        for word, spec, defect in zip(report.family, report.specs, report.defects):
            self.writer.write(
                "defect",
                n_star=defect.n_star,
                word=str(word),
                value=defect.value,
                evaluated=defect.evaluated,
                stabilized=defect.stabilized,
                omega_length=spec.omega.length,
            )
        rows = []
        for i, row in enumerate(report.matrix.entries):
            for j, entry in enumerate(row):
                self.writer.write(
                    "growth",
                    n_star=entry.n_star,
                    row=i,
                    column=j,
                    value=entry.value,
                    error=entry.error,
                    power=entry.power,
                    partial=entry.partial,
                )
            rows.append([f"omega_{i}"] + [f"{e.value} +- {e.error}" for e in row])
        self.writer.write(
            "certificate",
            certified=report.certificate.certified,
            margin=report.certificate.margin,
            method=report.certificate.method,
            power=report.matrix.power,
            dropped=[str(word) for word in report.dropped],
        )
        headers = [""] + [f"f_{j}" for j in range(len(report.family))]
        self.summary(headers, rows)
        return EXIT_OK if report.certificate.certified else EXIT_INCONCLUSIVE

    def audit(self, kind: str) -> int:
        logger.info(f"COMMAND: audit {kind}")
        handler = {
            "cyclic": self.audit_cyclic,
            "stabilizer": self.audit_stabilizer,
            "handlebody": self.audit_handlebody,
            "coset": self.audit_coset,
            "avoidance": self.audit_avoidance,
            "dependence": self.audit_dependence,
        }.get(kind)
        if handler is None:
            raise ConfigurationError(f"Unknown audit {kind!r}")
        reports = handler()
        self.summary(
            ["audit", "statistic", "witness", "passed"],
            [[r.kind, r.statistic, r.witness, r.passed] for r, _ in reports],
        )
        return EXIT_OK if all(ok for _, ok in reports) else EXIT_INCONCLUSIVE

    def audit_cyclic(self):
        reports = []
        for i, (spec, defect) in enumerate(zip(self.specs, self.defects)):
            for j, word in enumerate(self.targets):
                report = cyclic_bound_audit(
                    spec, word, self.experiment.cyclic_max, defect.value
                )
                # Off the diagonal the slope should vanish, on it the slope grows.
                ok = report.passed if i != j else not report.passed
                self.audit_record(report, row=i, column=j, diagonal=i == j)
                reports.append((report, ok))
        return reports

    def _subgroup_audits(self, subgroup, kind):
        reports = []
        for spec in self.specs:
            report = subgroup_bound_audit(
                spec, subgroup, self.experiment.subgroup_length, kind=kind
            )
            self.audit_record(report, **self.spec_record(spec))
            reports.append((report, report.passed))
        return reports

    def audit_stabilizer(self):
        return self._subgroup_audits(self.experiment.stabilizer, "stabilizer")

    def audit_handlebody(self):
        return self._subgroup_audits(self.experiment.disk_generators, "handlebody")

    def audit_coset(self):
        reports = []
        coset_sampler = SampleSpec(
            self.experiment.coset_length,
            self.experiment.coset_samples,
            self.config.seed,
        )
        for spec, defect in zip(self.specs, self.defects):
            bound = subgroup_bound_audit(
                spec, self.experiment.stabilizer, self.experiment.coset_length
            ).statistic
            for word in self.targets:
                report = double_coset_audit(
                    spec,
                    word,
                    self.experiment.stabilizer,
                    coset_sampler,
                    defect.value,
                    bound,
                )
                self.audit_record(report, defect=defect.value, subgroup_bound=bound)
                reports.append((report, report.passed))
        return reports

    def audit_avoidance(self):
        reports, disk = [], self.disk_set()
        for spec in self.specs:
            for boundary in range(self.experiment.boundary + 1):
                report = avoidance_audit(
                    spec.omega, disk, boundary, self.model, self.graph
                )
                self.audit_record(
                    report, n_star=self.graph.bound, **self.spec_record(spec)
                )
                reports.append((report, report.passed))
        return reports

    def audit_dependence(self):
        words = [
            word.power(n)
            for word in self.targets
            for n in range(1, self.experiment.cyclic_max + 1)
        ]
        report = linear_dependence_audit(
            self.specs, self.experiment.coefficients, words
        )
        self.audit_record(report)
        return [(report, True)]

    def conecheck(self) -> int:
        """Cone off the disk set and its translates by the target words."""
        logger.info("COMMAND: conecheck")
        disk = self.disk_set()
        graph, model = self.graph, self.model
        subsets = [disk.vertices]
        for word in self.targets:
            image = frozenset(
                v for v in (model.act(word, u) for u in disk.vertices) if v in graph
            )
            if image:
                subsets.append(image)
        coned = cone_off(graph, subsets)

        misprojected = [
            model.format_vertex(v)
            for subset in coned.subsets
            for v in sorted(subset, key=graph.vertex_key)
            if v not in coned.subsets[project(v, coned).index]
        ]
        rows, contracted = [], True
        base = disk.spec.basepoint
        for word in self.targets:
            image = model.act(word, base)
            if image not in graph:
                continue
            base_distance = graph.distance(base, image)
            coned_distance = coned.distance(base, image)
            contracted = contracted and coned_distance <= base_distance
            rows.append([str(word), base_distance, coned_distance])
            self.writer.write(
                "cone",
                n_star=graph.bound,
                word=str(word),
                base_distance=base_distance,
                coned_distance=coned_distance,
            )

        power = self.experiment.composite_power
        for word in self.targets:
            generator = disk.spec.generators[0]
            translated = [word * g * word.inverse() for g in disk.spec.generators]
            w_disk = orbit_subset(
                DiskSetSpec(tuple(translated), model.act(word, base), disk.spec.cap),
                model,
                graph,
            )
            if not w_disk.vertices:
                continue
            composite = composite_axis_audit(
                disk,
                w_disk,
                generator.power(power),
                translated[0].power(power),
                model,
                graph,
            )
            self.writer.write(
                "composite",
                n_star=graph.bound,
                phi=str(composite.phi),
                element=composite.kind,
                disk_distance=composite.disk_distance,
                path=[model.format_vertex(v) for v in composite.path.vertices],
                lam=composite.constants.lam,
                c=composite.constants.c,
                lam_at_zero=composite.constants.lam_at_zero,
                middle_length=composite.middle_length,
                return_length=composite.return_length,
            )

        self.writer.write(
            "conecheck",
            n_star=graph.bound,
            subsets=len(coned.subsets),
            misprojected=misprojected,
            contracted=contracted,
        )
        self.summary(["word", "d", "coned d"], rows)
        return EXIT_OK if contracted and not misprojected else EXIT_INCONCLUSIVE
