"""
Build every stage of the construction for a scenario: Riemann map, zero set,
level partitions, strip assemblies and the glued map.

A failure to align a level partition does not abort the build: the
partition stays available to the audits, which then report the failure.
"""

from qcfold import logging
from qcfold.blaschke import BlaschkeProduct, LevelPartition, level_partition, select_zero_set
from qcfold.cache import ArtifactCache, dump_json
from qcfold.hyperbolic_disk import ArcOnCircle
from qcfold.interpolation import StripAssembly, build_strip_assembly
from qcfold.model_domain import Model
from qcfold.quasiregular import GlobalMap
from qcfold.riemann_map import BuildError, DiscreteRiemannMap, build_riemann_map, pushforward_partition
from qcfold.scenario import Scenario

from dataclasses import dataclass, replace
from pathlib import Path

from typing import Optional


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pipeline:
    """
    Built stages of one scenario.
    """

    scenario: Scenario
    model: Model
    riemann: DiscreteRiemannMap
    arcs: tuple[tuple[ArcOnCircle, ...], ...]  #: `Ψ(𝒥_j)` per tract
    blaschke: BlaschkeProduct
    partitions: tuple[LevelPartition, ...]  #: `ℒ_j` per tract
    assemblies: Optional[tuple[StripAssembly, ...]]  #: `None` if alignment failed
    failure: Optional[str] = None  #: Why the assemblies are missing
    cached: bool = False  #: Whether the Riemann map came from the cache

    @property
    def global_map(self) -> Optional[GlobalMap]:
        if self.assemblies is None:
            return None

        return GlobalMap(self.model, self.riemann, self.blaschke, self.assemblies)


def riemann_map_for(config: Scenario, model: Model, cache: Optional[ArtifactCache]) -> tuple[DiscreteRiemannMap, bool]:
    """
    Load the Riemann map from the cache or build and store it.
    """

    resolution = config.riemann.resolution

    if cache is not None:
        rm = cache.load_riemann(config.model_hash, resolution, model)

        if rm is not None:
            return rm, True

    rm = build_riemann_map(
        model,
        resolution,
        newton_max_iter=config.riemann.newton_max_iter,
        inverse_tolerance=config.riemann.inverse_tolerance,
    )

    if cache is not None:
        cache.store_riemann(config.model_hash, rm)

    return rm, False


def build_pipeline(
    config: Scenario,
    cache: Optional[ArtifactCache] = None,
    strict: bool = False,
    resolution: Optional[int] = None,
) -> Pipeline:
    """
    Run every build stage.

    :param strict: Raise the alignment failure instead of recording it
    :param resolution: Override of the Riemann map resolution
    :raises BuildError: On any numerical build failure (alignment too in strict mode)
    """

    if resolution is not None:
        config = replace(config, riemann=replace(config.riemann, resolution=resolution))

    logger.info(f"building scenario {config.name}")
    model = config.build_model()
    rm, cached = riemann_map_for(config, model, cache)

    arcs = tuple(tuple(pushforward_partition(rm, model, j, config.window)) for j in range(len(model.tracts)))
    B = select_zero_set(
        arcs,
        R=config.net.R,
        S=config.net.S,
        enforce_separation_hypothesis=config.net.enforce_separation_hypothesis,
    )
    partitions = tuple(level_partition(B, rm, model, j, config.window) for j in range(len(model.tracts)))

    try:
        assemblies = tuple(
            build_strip_assembly(partition, config.window, config.fold_profile, config.modulus_matching)
            for partition in partitions
        )
        failure = None

    except BuildError as err:
        if strict:
            raise

        logger.error(f"strip assembly failed: {err}")
        assemblies, failure = None, str(err)

    return Pipeline(
        scenario=config,
        model=model,
        riemann=rm,
        arcs=arcs,
        blaschke=B,
        partitions=partitions,
        assemblies=assemblies,
        failure=failure,
        cached=cached,
    )


def write_artifacts(pipeline: Pipeline, out: Path) -> list[Path]:
    """
    JSON exports of the zero set, the level partitions and the strip cells.
    """

    written = [
        dump_json(out / "scenario.json", pipeline.scenario.to_json()),
        dump_json(out / "blaschke.json", pipeline.blaschke.to_json()),
        dump_json(out / "partitions.json", [partition.to_json() for partition in pipeline.partitions]),
    ]

    if pipeline.assemblies is not None:
        written.append(dump_json(out / "assemblies.json", [assembly.to_json() for assembly in pipeline.assemblies]))

    return written
