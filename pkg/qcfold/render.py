"""
Figures of a built pipeline.

Every target writes a PNG and, for vector overlays, an SVG. Both carry the
scenario hash in their metadata. Timestamps are left out and SVG ids are
salted with a constant, so the same scenario gives the same bytes.
"""

from qcfold import logging
from qcfold.cache import dump_json
from qcfold.dynamics import RETAINED, julia_grid
from qcfold.hyperbolic_disk import TWO_PI
from qcfold.pipeline import Pipeline
from qcfold.quasiregular import beltrami_estimate
from qcfold.riemann_map import BuildError

from enum import Enum
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure
import matplotlib.pyplot as plt
import numpy as np

from typing import Any


logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "qcfold"

#: Samples per unit of `Im τ` along the drawn curves
CURVE_DENSITY = 8

DILATATION_RESOLUTION = 160


class RenderTarget(str, Enum):
    TRACTS = "tracts"
    PARTITIONS = "partitions"
    ZEROS = "zeros"
    DILATATION = "dilatation"
    JULIA = "julia"


def _metadata(pipeline: Pipeline, kind: str) -> dict[str, Any]:
    description = f"qcfold scenario {pipeline.scenario.name}, config_hash={pipeline.scenario.config_hash}"

    match kind:
        case "png":
            return {"Software": "qcfold", "Description": description}

        case "svg":
            return {"Creator": "qcfold", "Date": None, "Description": description}

    raise ValueError(kind)


def _save(fig: Figure, pipeline: Pipeline, stem: Path, vector: bool = True) -> list[Path]:
    stem.parent.mkdir(parents=True, exist_ok=True)
    png = stem.with_suffix(".png")
    fig.savefig(png, dpi=150, metadata=_metadata(pipeline, "png"))
    written = [png]

    if vector:
        svg = stem.with_suffix(".svg")
        fig.savefig(svg, metadata=_metadata(pipeline, "svg"))
        written.append(svg)

    return written


def _region_axes(pipeline: Pipeline) -> tuple[Figure, Any]:
    xmin, xmax, ymin, ymax = pipeline.scenario.dynamics.julia_region
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    return fig, ax


def _pixel_centers(region: tuple[float, float, float, float], resolution: int) -> np.ndarray:
    xmin, xmax, ymin, ymax = region
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    return xs[None, :] + 1j * ys[:, None]


def _level_curve(pipeline: Pipeline, j: int, level: float) -> np.ndarray:
    bound = TWO_PI * pipeline.scenario.window
    ys = np.linspace(-bound, bound, int(2 * bound * CURVE_DENSITY) + 1)
    return pipeline.model.tracts[j].inverse(level + 1j * ys)


def render_tracts(pipeline: Pipeline, out: Path) -> list[Path]:
    """
    Tract membership over the scenario region with the level curves
    `Re τ = 0, 1, 2` of every tract.
    """

    region = pipeline.scenario.dynamics.julia_region
    fig, ax = _region_axes(pipeline)
    owner = pipeline.model.locate(_pixel_centers(region, 400))
    ax.imshow(
        np.ma.masked_less(owner, 0),
        origin="lower",
        extent=region,
        cmap="Pastel1",
        vmin=0,
        vmax=max(1, len(pipeline.model.tracts) - 1),
        interpolation="nearest",
    )

    for j, tract in enumerate(pipeline.model.tracts):
        for level, style in ((0.0, "-"), (1.0, "--"), (2.0, ":")):
            curve = _level_curve(pipeline, j, level)
            ax.plot(
                curve.real, curve.imag, style, color="black", linewidth=0.8, label=f"{tract.label} Re τ = {level:g}"
            )

    ax.set_title(f"tracts of {pipeline.scenario.name}")
    return _save(fig, pipeline, out / "tracts")


def render_partitions(pipeline: Pipeline, out: Path) -> list[Path]:
    """
    One polyline per boundary curve `γ_j` with ticks at the points of `𝒥_j`,
    the level points of `ℒ_j` on `L₁` and, when the assembly exists, the
    slits.
    """

    fig, ax = _region_axes(pipeline)
    window = pipeline.scenario.window

    for j, tract in enumerate(pipeline.model.tracts):
        boundary = _level_curve(pipeline, j, 0.0)
        ax.plot(boundary.real, boundary.imag, color="black", linewidth=1.0, gid=f"gamma-{j}")

        ticks = tract.inverse(1j * TWO_PI * np.arange(-window, window + 1))
        ax.plot(ticks.real, ticks.imag, linestyle="none", marker="|", markersize=8, color="tab:blue", gid=f"ticks-{j}")

        level = tract.inverse(1.0 + 1j * pipeline.partitions[j].endpoints)
        ax.plot(
            level.real, level.imag, linestyle="none", marker=".", markersize=3, color="tab:orange", gid=f"level-{j}"
        )

        if pipeline.assemblies is not None:
            slits, _ = pipeline.assemblies[j].slit_points()
            image = tract.inverse(slits)
            ax.plot(image.real, image.imag, linestyle="none", marker=",", color="tab:red", gid=f"slits-{j}")

    ax.set_title(f"boundary partitions of {pipeline.scenario.name}")
    return _save(fig, pipeline, out / "partitions")


def render_zeros(pipeline: Pipeline, out: Path) -> list[Path]:
    """
    Zeros of `B` in the unit disk over the arcs `Ψ(𝒥_j)`.
    """

    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    ax.set_aspect("equal")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    theta = np.linspace(0.0, TWO_PI, 721)
    ax.plot(np.cos(theta), np.sin(theta), color="grey", linewidth=0.6)

    for j, arcs in enumerate(pipeline.arcs):
        ends = np.array([np.exp(1j * arc.theta_lo) for arc in arcs])
        ax.plot(ends.real, ends.imag, linestyle="none", marker="|", color="tab:blue", gid=f"arcs-{j}")

    zeros = np.asarray(pipeline.blaschke.zeros)
    ax.plot(zeros.real, zeros.imag, linestyle="none", marker="x", markersize=4, color="tab:red", gid="zeros")
    ax.set_title(f"{zeros.size} zeros of B")
    return _save(fig, pipeline, out / "zeros")


def render_dilatation(pipeline: Pipeline, out: Path, resolution: int = DILATATION_RESOLUTION) -> list[Path]:
    """
    Heatmap of `|μ_g|` with its colorbar described in a sidecar JSON.

    :raises BuildError: If the glued map could not be assembled
    """

    G = pipeline.global_map

    if G is None:
        raise BuildError(pipeline.failure or "no glued map to render")

    region = pipeline.scenario.dynamics.julia_region
    step = pipeline.scenario.audit.finite_difference
    sample = beltrami_estimate(G, _pixel_centers(region, resolution).ravel(), step=step)
    modulus = np.where(sample.flagged, np.nan, sample.modulus).reshape(resolution, resolution)

    fig, ax = _region_axes(pipeline)
    image = ax.imshow(
        np.ma.masked_invalid(modulus),
        origin="lower",
        extent=region,
        cmap="viridis",
        vmin=0.0,
        vmax=1.0,
        interpolation="nearest",
    )
    fig.colorbar(image, ax=ax, label="|μ|")
    ax.set_title(f"dilatation of g for {pipeline.scenario.name}")
    written = _save(fig, pipeline, out / "dilatation", vector=False)

    finite = modulus[np.isfinite(modulus)]
    legend = {
        "config_hash": pipeline.scenario.config_hash,
        "quantity": "|mu|",
        "colormap": "viridis",
        "vmin": 0.0,
        "vmax": 1.0,
        "region": list(region),
        "resolution": resolution,
        "sup": float(f"{float(finite.max()):.12g}") if finite.size else None,
        "masked": int(np.sum(~np.isfinite(modulus))),
    }
    written.append(dump_json(out / "dilatation.json", legend))
    return written


def render_julia(pipeline: Pipeline, out: Path) -> list[Path]:
    """
    Exit-step raster; retained pixels are black. The raw steps are saved
    next to the image.
    """

    config = pipeline.scenario.dynamics
    raster = julia_grid(pipeline.model, config.julia_region, config.julia_resolution, config.max_iter)
    out.mkdir(parents=True, exist_ok=True)

    np.save(out / "julia.npy", raster.steps, allow_pickle=False)

    shaded = np.where(raster.steps == RETAINED, -1, raster.steps).astype(float)
    colormap = plt.get_cmap("magma_r").with_extremes(under="black")
    png = out / "julia.png"
    plt.imsave(
        png,
        shaded,
        cmap=colormap,
        vmin=0,
        vmax=config.max_iter,
        origin="lower",
        metadata=_metadata(pipeline, "png"),
    )
    legend = {
        "config_hash": pipeline.scenario.config_hash,
        "quantity": "exit step",
        "colormap": "magma_r",
        "retained_color": "black",
        "vmin": 0,
        "vmax": config.max_iter,
        "region": list(config.julia_region),
        "resolution": config.julia_resolution,
        "retained": int(raster.retained.sum()),
    }
    return [png, out / "julia.npy", dump_json(out / "julia.json", legend)]


def render(pipeline: Pipeline, target: RenderTarget, out: Path) -> list[Path]:
    logger.info(f"rendering {target.value} of {pipeline.scenario.name}")

    match target:
        case RenderTarget.TRACTS:
            return render_tracts(pipeline, out)

        case RenderTarget.PARTITIONS:
            return render_partitions(pipeline, out)

        case RenderTarget.ZEROS:
            return render_zeros(pipeline, out)

        case RenderTarget.DILATATION:
            return render_dilatation(pipeline, out)

        case RenderTarget.JULIA:
            return render_julia(pipeline, out)
