"""
Concurrent audit runner.

Audits are declared as specs and run on worker threads from a trio nursery.
A single collector task receives the results through a memory channel, so
the report does not depend on completion order.

.. code-block:: python
   :caption: Example

   from qcfold import orchestrator
   import trio

   async def main(pipeline):
       specs = orchestrator.audit_specs(pipeline)
       results = await orchestrator.run_audits(specs, jobs=4)
       return orchestrator.report(pipeline.scenario, results)

   trio.run(main, pipeline)
"""

from qcfold import logging
from qcfold.blaschke import boundary_arg_derivative, harmonic_sums, tail_bound, verify_partition_property
from qcfold.dynamics import ConjugacyPair, run_conjugacy, semiconjugacy_residual
from qcfold.hyperbolic_disk import (
    TWO_PI,
    ArcOnCircle,
    closest_point_to_arc,
    decay_exponent,
    geodesic_top_point,
    harmonic_measure_arc,
    hyperbolic_distance,
)
from qcfold.interpolation import AlignmentError, align_partitions
from qcfold.pipeline import Pipeline
from qcfold.quasiregular import (
    beltrami_of,
    continuity_audit,
    dilatation_report,
    rho_scaling_audit,
    singular_value_audit,
)
from qcfold.riemann_map import DiscreteRiemannMap, build_riemann_map
from qcfold.scenario import SCHEMA_VERSION, Scenario, build_model

from dataclasses import dataclass, field
from functools import partial
import numpy as np

import trio

from collections.abc import Callable
from typing import Any


logger = logging.getLogger(__name__)

#: Boundary samplings compared by the convergence audit
ORACLE_RESOLUTIONS = (256, 512, 1024)


@dataclass(frozen=True)
class AuditResult:
    """
    Outcome of one audit.
    """

    id: str  #: Audit identifier
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)  #: Measured quantities
    offending: tuple[str, ...] = ()  #: Failing items

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "passed": self.passed,
            "measured": {key: _round(value) for key, value in self.measured.items()},
            "offending": list(self.offending),
        }


@dataclass
class audit_spec:
    """
    Describe an audit to run.
    """

    id: str  #: Audit identifier
    task: Callable[..., AuditResult]  #: Synchronous audit function
    args: list[Any]  #: Arguments to pass to the audit


def _round(value: Any) -> Any:
    match value:
        case bool() | str() | None:
            return value

        case float() | np.floating():
            return float(f"{float(value):.12g}")

        case int() | np.integer():
            return int(value)

        case list() | tuple():
            return [_round(item) for item in value]

        case _:
            return value


async def _run_one(
    spec: audit_spec,
    limiter: trio.CapacityLimiter,
    send_channel: trio.MemorySendChannel,
) -> None:
    async with send_channel:
        logger.info(f"audit {spec.id} started")

        try:
            result = await trio.to_thread.run_sync(partial(spec.task, *spec.args), limiter=limiter)

        except Exception as err:
            exc_info = (err.__class__, err, err.__traceback__)
            logger.error(f"audit {spec.id} crashed", exc_info=exc_info)
            result = AuditResult(spec.id, False, offending=(f"{err.__class__.__name__}: {err}",))

        if result.passed:
            logger.info(f"audit {spec.id} passed")

        else:
            logger.error(f"audit {spec.id} failed: {list(result.offending)[:3]}")

        await send_channel.send(result)


async def run_audits(specs: list[audit_spec], jobs: int = 1) -> list[AuditResult]:
    """
    Run every audit with at most `jobs` worker threads.

    :returns: Results sorted by audit id
    """

    limiter = trio.CapacityLimiter(max(1, jobs))
    send_channel, receive_channel = trio.open_memory_channel(len(specs))
    results: list[AuditResult] = []

    async def collector():
        async with receive_channel:
            async for result in receive_channel:
                results.append(result)

    async with trio.open_nursery() as nursery:
        nursery.start_soon(collector)

        async with send_channel:
            for spec in specs:
                nursery.start_soon(_run_one, spec, limiter, send_channel.clone())

    return sorted(results, key=lambda result: result.id)


def report(config: Scenario, results: list[AuditResult]) -> dict[str, Any]:
    return {
        "scenario": config.name,
        "config_hash": config.config_hash,
        "schema_version": SCHEMA_VERSION,
        "passed": all(result.passed for result in results),
        "audits": [result.to_json() for result in sorted(results, key=lambda result: result.id)],
    }


def random_arcs(rng: np.random.Generator, count: int) -> list[ArcOnCircle]:
    start = rng.uniform(0.0, TWO_PI, size=count)
    length = rng.uniform(0.01, TWO_PI - 0.01, size=count)
    return [ArcOnCircle.between(lo, lo + span) for lo, span in zip(start, length)]


def random_disjoint_pairs(rng: np.random.Generator, count: int) -> list[tuple[ArcOnCircle, ArcOnCircle]]:
    pairs = []

    for _ in range(count):
        first, gap, second, rest = rng.dirichlet(np.ones(4)) * (TWO_PI - 0.04) + 0.01
        lo = rng.uniform(0.0, TWO_PI)
        pairs.append(
            (
                ArcOnCircle.between(lo, lo + first),
                ArcOnCircle.between(lo + first + gap, lo + first + gap + second),
            )
        )

    return pairs


def audit_top_point_measure(seed: int, count: int = 1000, tolerance: float = 1e-10) -> AuditResult:
    arcs = random_arcs(np.random.default_rng(seed), count)
    errors = np.array([abs(harmonic_measure_arc(arc, geodesic_top_point(arc).a) - 0.5) for arc in arcs])
    worst = float(errors.max())
    offending = tuple(f"arc {arcs[i]}: error {errors[i]:.3g}" for i in np.flatnonzero(errors >= tolerance)[:10])
    return AuditResult("hyperbolic.top_point_measure", not offending, {"max_error": worst}, offending)


def audit_symmetry(seed: int, count: int = 1000, tolerance: float = 1e-8) -> AuditResult:
    pairs = random_disjoint_pairs(np.random.default_rng(seed), count)
    errors = np.array(
        [
            abs(
                harmonic_measure_arc(first, closest_point_to_arc(second, first))
                - harmonic_measure_arc(second, closest_point_to_arc(first, second))
            )
            for first, second in pairs
        ]
    )
    offending = tuple(f"pair {i}: error {errors[i]:.3g}" for i in np.flatnonzero(errors >= tolerance)[:10])
    return AuditResult("hyperbolic.symmetry", not offending, {"max_error": float(errors.max())}, offending)


def audit_decay(tolerance: float = 0.1) -> AuditResult:
    """
    `-log ω(J, a_I)` against `ρ(a_I, a_J)` for shrinking arcs `J` opposite a
    fixed arc `I`; the slope is 2 in the distance used here.
    """

    first = ArcOnCircle.between(-0.5, 0.5)
    top = geodesic_top_point(first).a
    distances, measures = [], []

    for length in np.geomspace(0.5, 1e-5, 24):
        second = ArcOnCircle.between(np.pi - 0.5 * length, np.pi + 0.5 * length)
        distance = hyperbolic_distance(top, geodesic_top_point(second).a)

        if 2.0 <= distance <= 8.0:
            distances.append(distance)
            measures.append(harmonic_measure_arc(second, top))

    exponent = 0.5 * decay_exponent(distances, measures)
    passed = abs(exponent - 1.0) < tolerance
    offending = () if passed else (f"decay exponent {exponent:.4g} is not within {tolerance:g} of 1",)
    return AuditResult("hyperbolic.decay", passed, {"exponent": exponent, "pairs": len(distances)}, offending)


def audit_derivative_identity(pipeline: Pipeline, seed: int, count: int = 1000, tolerance: float = 1e-6) -> AuditResult:
    B = pipeline.blaschke
    theta = np.random.default_rng(seed).uniform(0.0, TWO_PI, size=count)
    exact = np.asarray(boundary_arg_derivative(B, theta))
    h = 1e-4 / np.maximum(1.0, exact)
    values = B(np.exp(1j * (theta + h))) / B(np.exp(1j * (theta - h)))
    finite = np.angle(values) / (2.0 * h)
    error = np.abs(finite - exact) / np.maximum(1.0, exact)
    offending = tuple(f"theta = {theta[i]:.6f}: error {error[i]:.3g}" for i in np.flatnonzero(error >= tolerance)[:10])
    return AuditResult("blaschke.derivative_identity", not offending, {"max_error": float(error.max())}, offending)


def audit_partition_property(pipeline: Pipeline, tolerance: float = 1e-8) -> AuditResult:
    measured: dict[str, Any] = {}
    offending: list[str] = []
    pinned = pipeline.scenario.audit.max_hits

    for partition in pipeline.partitions:
        report = verify_partition_property(partition, pipeline.scenario.window)
        increments = np.diff(np.asarray(partition.phase(partition.endpoints)))
        winding_error = float(np.max(np.abs(increments - TWO_PI))) if increments.size else 0.0
        j = partition.tract
        measured |= {
            f"tract{j}.min_hits": report.min_hits,
            f"tract{j}.max_hits": report.max_hits,
            f"tract{j}.interval_min_hits": report.interval_min_hits,
            f"tract{j}.interval_max_hits": report.interval_max_hits,
            f"tract{j}.winding_error": winding_error,
        }

        if not report.passed:
            offending.append(f"tract {j}: min_hits {report.min_hits}")
            offending.extend(report.offending[:10])

        if pinned is not None and report.max_hits > pinned:
            offending.append(f"tract {j}: M = {report.max_hits} exceeds the pinned {pinned}")

        if winding_error >= tolerance:
            offending.append(f"tract {j}: argument increment off 2π by {winding_error:.3g}")

    return AuditResult("blaschke.partition_property", not offending, measured, tuple(offending))


def audit_harmonic_sums(pipeline: Pipeline) -> AuditResult:
    """
    `ε ≤ Σ_J ω(K, a_J) ≤ μ < 1 - margin` on every windowed arc, with the
    extreme mean boundary derivatives recorded.
    """

    B = pipeline.blaschke
    sums = harmonic_sums(B, pipeline.arcs)
    margin = pipeline.scenario.audit.margin
    flat = [arc for chain in pipeline.arcs for arc in chain]

    kept = {(ref.chain, ref.step) for ref in B.selected}
    dropped = [
        arc for c, chain in enumerate(pipeline.arcs) for k, arc in enumerate(chain) if (c, k) not in kept
    ]
    ends = np.array([arc.theta_lo for arc in flat] + [flat[-1].theta_hi]) if flat else np.zeros(1)
    tail = (
        tail_bound(B, geodesic_top_point(max(dropped, key=lambda arc: arc.length)).a, ends) if dropped else 0.0
    )

    offending = []

    if not np.all(np.isfinite(sums.mean_derivative)) or sums.epsilon <= 0:
        offending.append(f"harmonic sums degenerate, epsilon = {sums.epsilon:.3g}")

    if sums.mu >= 1.0 - margin:
        worst = int(np.argmax(sums.sums))
        offending.append(f"arc {worst}: sum {sums.mu:.6g} not below 1 - {margin:g}")

    measured = {
        "epsilon": sums.epsilon,
        "mu": sums.mu,
        "derivative_min": float(np.min(sums.mean_derivative)),
        "derivative_max": float(np.max(sums.mean_derivative)),
        "arcs": len(flat),
        "zeros": int(B.zeros.size),
        "tail_bound": float(tail),
    }
    return AuditResult("blaschke.harmonic_sums", not offending, measured, tuple(offending))


def audit_alignment(pipeline: Pipeline) -> AuditResult:
    measured: dict[str, Any] = {}
    offending: list[str] = []

    for partition in pipeline.partitions:
        j = partition.tract

        try:
            plan = align_partitions(partition, pipeline.scenario.window)

        except AlignmentError as err:
            offending.append(f"tract {j}: {err}")
            continue

        odd = np.flatnonzero(plan.gaps % 2)
        far = np.flatnonzero(np.abs(plan.displacement) > 1)
        offending.extend(f"tract {j}: odd gap after interval {i}" for i in odd)
        offending.extend(f"tract {j}: endpoint {i} moved by more than one interval" for i in far)
        measured |= {
            f"tract{j}.folded": int(plan.folded.size),
            f"tract{j}.max_block": int(plan.gaps.max()) if plan.gaps.size else 0,
        }

    return AuditResult("interpolation.alignment", not offending, measured, tuple(offending))


def audit_folding(pipeline: Pipeline, per_block: int = 100, tolerance: float = 1e-12) -> AuditResult:
    if pipeline.assemblies is None:
        return AuditResult("interpolation.folding", False, offending=(pipeline.failure or "no assembly",))

    pairing, sides = 0.0, 0.0
    by_size: dict[int, np.ndarray] = {}
    mismatch = 0.0

    for assembly in pipeline.assemblies:
        for fold in assembly.psi3.folds:
            if not fold.n_block:
                continue

            top = fold.base + fold.height
            upper = np.linspace(fold.center, top, per_block + 2)[1:-1]
            lower = 2.0 * fold.center - upper
            pairing = max(pairing, float(np.max(np.abs(fold.inverse(1 + 1j * upper) - fold.inverse(1 + 1j * lower)))))

            s = (np.arange(per_block) + 0.5) / per_block
            edges = np.concatenate(
                [1 + s + 1j * fold.base, 1 + s + 1j * top, 2 + 1j * (fold.base + s * fold.height)]
            )
            sides = max(sides, float(np.max(np.abs(fold(edges) - edges))))

            dilatation = np.array([cell.dilatation for cell in fold.cells])

            if fold.n_block in by_size:
                mismatch = max(mismatch, float(np.max(np.abs(by_size[fold.n_block] - dilatation))))

            else:
                by_size[fold.n_block] = dilatation

    offending = tuple(
        f"{name} error {value:.3g}"
        for name, value in (("pairing", pairing), ("three-side identity", sides), ("dilatation mismatch", mismatch))
        if value > tolerance
    )
    measured = {
        "pairing_error": pairing,
        "side_error": sides,
        "dilatation_mismatch": mismatch,
        "max_dilatation": {str(n): float(k.max()) for n, k in sorted(by_size.items())},
    }
    return AuditResult("interpolation.folding", not offending, measured, offending)


def _global(pipeline: Pipeline, audit_id: str, run: Callable) -> AuditResult:
    G = pipeline.global_map

    if G is None:
        return AuditResult(audit_id, False, offending=(pipeline.failure or "no glued map",))

    outcome = run(G)
    return AuditResult(audit_id, outcome.passed, outcome.measured(), outcome.offending)


def audit_continuity(pipeline: Pipeline) -> AuditResult:
    tolerance = pipeline.scenario.audit.continuity_tolerance
    return _global(pipeline, "quasiregular.continuity", lambda G: continuity_audit(G, tolerance=tolerance))


def audit_dilatation(pipeline: Pipeline) -> AuditResult:
    config = pipeline.scenario.audit
    return _global(
        pipeline,
        "quasiregular.dilatation",
        lambda G: dilatation_report(
            G,
            grid=config.grid,
            step=config.finite_difference,
            margin=config.margin,
            holomorphic_tolerance=config.holomorphic_tolerance,
            seed=pipeline.scenario.seed,
            max_quasiconstant=config.max_quasiconstant,
        ),
    )


def audit_singular_values(pipeline: Pipeline) -> AuditResult:
    return _global(
        pipeline,
        "quasiregular.singular_values",
        lambda G: singular_value_audit(G, grid=pipeline.scenario.audit.grid, seed=pipeline.scenario.seed),
    )


def audit_rho_scaling(pipeline: Pipeline) -> AuditResult:
    config = pipeline.scenario.audit
    return _global(
        pipeline,
        "quasiregular.rho_scaling",
        lambda G: rho_scaling_audit(G, config.rho_values, grid=max(2, config.grid // 2), step=config.finite_difference),
    )


def half_plane_oracle(pipeline: Pipeline) -> Callable[[np.ndarray], np.ndarray]:
    """
    Closed-form `Ψ*(z) = z / (2x₀ - z)` for a single half-plane tract whose
    level-1 line is `Re z = x₀`.
    """

    params = pipeline.model.tracts[0].params
    x0 = params["c"] + 1.0 / params["scale"]
    return lambda z: z / (2.0 * x0 - z)


def _oracle_error(pipeline: Pipeline, rm: DiscreteRiemannMap) -> float:
    x0 = pipeline.model.tracts[0].params["c"] + 1.0 / pipeline.model.tracts[0].params["scale"]
    y = np.linspace(-10.0, 10.0, 81)
    z = np.concatenate([x0 - d + 1j * y for d in (0.05, 0.25, 1.0, 2.0, 4.0)])
    error = np.abs(np.asarray(rm.interior_evaluator(z)) - half_plane_oracle(pipeline)(z))
    return float(error.max())


def audit_riemann_oracle(pipeline: Pipeline) -> AuditResult:
    tolerance = pipeline.scenario.audit.oracle_tolerance
    worst = _oracle_error(pipeline, pipeline.riemann)
    passed = worst <= tolerance
    offending = () if passed else (f"sup error {worst:.3g} exceeds {tolerance:g}",)
    return AuditResult("riemann.oracle", passed, {"sup_error": worst}, offending)


def audit_riemann_convergence(pipeline: Pipeline, resolutions: tuple[int, ...] = ORACLE_RESOLUTIONS) -> AuditResult:
    """
    The oracle error must decrease as the boundary sampling is refined.
    """

    config = pipeline.scenario.riemann
    errors = []

    for resolution in resolutions:
        if resolution == pipeline.riemann.resolution:
            rm = pipeline.riemann

        else:
            rm = build_riemann_map(pipeline.model, resolution, config.newton_max_iter, config.inverse_tolerance)

        errors.append(_oracle_error(pipeline, rm))

    offending = tuple(
        f"error {errors[i + 1]:.3g} at {resolutions[i + 1]} does not improve on {errors[i]:.3g} at {resolutions[i]}"
        for i in range(len(errors) - 1)
        if not errors[i + 1] < errors[i]
    )
    measured = {"resolution": list(resolutions), "sup_error": errors}
    return AuditResult("riemann.convergence", not offending, measured, offending)


def audit_conformality(pipeline: Pipeline, radii: int = 6, angles: int = 24) -> AuditResult:
    """
    Discrete Cauchy-Riemann residual `|∂̄Ψ| / |∂Ψ|` on preimages of a polar grid
    inside the disk.
    """

    tolerance = pipeline.scenario.audit.conformality_tolerance
    rm = pipeline.riemann
    w = np.outer(np.linspace(0.1, 0.85, radii), np.exp(1j * np.linspace(0.0, TWO_PI, angles, endpoint=False)))
    z = np.array([rm.inverse_evaluator(complex(point)) for point in np.concatenate([[0j], w.ravel()])])

    step = pipeline.scenario.audit.finite_difference
    sample = beltrami_of(lambda points: np.asarray(rm.interior_evaluator(points)), z, step)
    finite = sample.modulus[np.isfinite(sample.modulus)]
    worst = float(finite.max()) if finite.size else float("inf")

    offending = () if worst < tolerance else (f"Cauchy-Riemann residual {worst:.3g} exceeds {tolerance:g}",)
    measured = {"sup_residual": worst, "samples": int(z.size), "flagged": int(sample.flagged.sum())}
    return AuditResult("riemann.conformality", not offending, measured, offending)


def audit_conjugacy(pipeline: Pipeline, tolerance: float = 1e-6) -> AuditResult:
    config = pipeline.scenario.dynamics
    conjugacy = config.conjugacy
    pair = ConjugacyPair(
        source=pipeline.model,
        target=build_model(conjugacy.target, True),
        correspondence=pipeline.scenario.correspondence(),
        guard=conjugacy.guard,
    )
    rng = np.random.default_rng(pipeline.scenario.seed)
    samples = pipeline.model.tracts[0].inverse(
        rng.uniform(0.0, 2.0, config.samples) + 1j * rng.uniform(-np.pi, np.pi, config.samples)
    )
    state = run_conjugacy(pair, samples, conjugacy.iterations)
    residual = semiconjugacy_residual(state, pair)
    drift = max(state.increments, default=0.0)
    offending = tuple(
        message
        for message, bad in (
            (f"semiconjugacy residual {residual:.3g}", residual >= tolerance),
            (f"converged values moved by {drift:.3g}", drift >= 1e-8),
        )
        if bad
    )
    measured = {
        "residual": residual,
        "converged": int(state.converged.sum()),
        "flagged": int(state.flagged.sum()),
        "iterations": state.n,
    }
    return AuditResult("dynamics.conjugacy", not offending, measured, offending)


def audit_specs(pipeline: Pipeline) -> list[audit_spec]:
    """
    Every audit that applies to the pipeline's scenario.
    """

    seed = pipeline.scenario.seed
    specs = [
        audit_spec("hyperbolic.top_point_measure", audit_top_point_measure, [seed]),
        audit_spec("hyperbolic.symmetry", audit_symmetry, [seed + 1]),
        audit_spec("hyperbolic.decay", audit_decay, []),
        audit_spec("blaschke.derivative_identity", audit_derivative_identity, [pipeline, seed + 2]),
        audit_spec("blaschke.harmonic_sums", audit_harmonic_sums, [pipeline]),
        audit_spec("blaschke.partition_property", audit_partition_property, [pipeline]),
        audit_spec("interpolation.alignment", audit_alignment, [pipeline]),
        audit_spec("interpolation.folding", audit_folding, [pipeline]),
        audit_spec("quasiregular.continuity", audit_continuity, [pipeline]),
        audit_spec("quasiregular.dilatation", audit_dilatation, [pipeline]),
        audit_spec("quasiregular.singular_values", audit_singular_values, [pipeline]),
        audit_spec("quasiregular.rho_scaling", audit_rho_scaling, [pipeline]),
        audit_spec("riemann.conformality", audit_conformality, [pipeline]),
    ]

    tracts = pipeline.model.tracts

    if len(tracts) == 1 and tracts[0].params.get("kind") == "half_plane":
        specs.append(audit_spec("riemann.oracle", audit_riemann_oracle, [pipeline]))
        specs.append(audit_spec("riemann.convergence", audit_riemann_convergence, [pipeline]))

    if pipeline.scenario.dynamics.conjugacy is not None:
        specs.append(audit_spec("dynamics.conjugacy", audit_conjugacy, [pipeline]))

    return specs
