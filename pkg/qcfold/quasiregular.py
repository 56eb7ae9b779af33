"""
The glued map `g` on the whole plane and its numerical audits.

`g` is `F` on `Ω(2)`, `g_j ∘ τ_j` on the band `Ω_j(1, 2)` and `B ∘ Ψ` on `W`
(scaled by `e` in scale matching mode). It is holomorphic off the band, so
every audit compares the band against the rest of the plane.

.. code-block:: python
   :caption: Example

   from qcfold import quasiregular as qr

   G = qr.GlobalMap(model, psi, blaschke, assemblies)

   qr.g_eval(G, 5.0)  # e³ for the half-plane tract {Re z > 2}
   report = qr.dilatation_report(G, grid=16)
   report.quasiconstant
"""

from qcfold import logging
from qcfold.blaschke import BlaschkeProduct
from qcfold.interpolation import E, ModulusMatching, Side, StripAssembly, compose_gj
from qcfold.model_domain import (
    Model,
    extrapolate_gap,
    rescale_phi_inverse,
    rescale_psi,
    straddle_pairs,
)
from qcfold.riemann_map import LAYER_WIDTH, DiscreteRiemannMap

from dataclasses import dataclass
from enum import IntEnum
import numpy as np

from collections.abc import Callable
from numpy.typing import ArrayLike, NDArray
from typing import Any, Optional, Union


logger = logging.getLogger(__name__)

#: Gap to the boundary layer kept by holomorphic-region samples, in `τ`
HOLOMORPHIC_CLEARANCE = 0.01
#: Gaps of the straddling pairs used by continuity audits
STRADDLE_GAPS = (1e-4, 1e-5)


class Region(IntEnum):
    """
    Piece of the plane a point belongs to.
    """

    UNRESOLVED = -1  #: Band point outside the constructed window
    W = 0  #: Complement of `Ω(1)`
    BAND = 1  #: `Ω(1, 2)`
    OUTER = 2  #: `Ω(2)`


@dataclass(frozen=True)
class GlobalMap:
    """
    Everything `g` is glued from.
    """

    model: Model
    riemann: DiscreteRiemannMap
    blaschke: BlaschkeProduct
    assemblies: tuple[StripAssembly, ...]  #: One per tract, in tract order

    @property
    def matching(self) -> ModulusMatching:
        return self.assemblies[0].matching

    @property
    def w_bound(self) -> float:
        return self.matching.w_bound

    def classify(self, z: ArrayLike) -> tuple[NDArray[np.int_], NDArray[np.int_], NDArray[np.complex128]]:
        """
        Region, tract index and `τ` value of every point.
        """

        arr = np.atleast_1d(np.asarray(z, dtype=complex))
        index, tau = self.model.tau(arr)
        region = np.full(arr.shape, int(Region.W))
        real = np.where(index >= 0, tau.real, -np.inf)
        region[real >= 2.0] = Region.OUTER

        band = (real > 1.0) & (real < 2.0)

        for j, assembly in enumerate(self.assemblies):
            lo, hi = assembly.window
            mask = band & (index == j)
            inside = (tau.imag >= lo) & (tau.imag <= hi)
            region[mask & inside] = Region.BAND
            region[mask & ~inside] = Region.UNRESOLVED

        return region, index, tau

    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> Union[complex, NDArray]:
        return g_eval(self, z, side=side)


def g_eval(G: GlobalMap, z: ArrayLike, side: Optional[Side] = None) -> Union[complex, NDArray]:
    """
    Evaluate `g`, `nan` on unresolved points.

    :param side: Side of a folding slit for points lying on one
    """

    arr = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(arr).ravel()
    region, index, tau = G.classify(flat)
    out = np.full(flat.shape, np.nan + 0j, dtype=complex)

    outer = region == Region.OUTER

    if np.any(outer):
        with np.errstate(over="ignore"):
            out[outer] = np.exp(tau[outer])

    for j, assembly in enumerate(G.assemblies):
        mask = (region == Region.BAND) & (index == j)

        if np.any(mask):
            out[mask] = compose_gj(tau[mask], assembly, side=side)

    inner = region == Region.W

    if np.any(inner):
        scale = 1.0 if G.matching is ModulusMatching.STRETCH else E
        out[inner] = scale * np.asarray(G.blaschke(G.riemann.interior_evaluator(flat[inner])))

    out = out.reshape(arr.shape)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BeltramiSample:
    """
    Finite-difference complex dilatation at a batch of points.
    """

    points: NDArray[np.complex128]
    mu: NDArray[np.complex128]
    flagged: NDArray[np.bool_]  #: Degenerate or unstable under step halving

    @property
    def modulus(self) -> NDArray[np.float64]:
        return np.abs(self.mu)


def _central_mu(f: Callable[[NDArray], NDArray], z: NDArray, h: NDArray) -> NDArray:
    fx = (f(z + h) - f(z - h)) / (2.0 * h)
    fy = (f(z + 1j * h) - f(z - 1j * h)) / (2.0 * h)
    denominator = fx - 1j * fy

    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(denominator) > 0, (fx + 1j * fy) / denominator, np.nan)


def beltrami_of(f: Callable[[NDArray], NDArray], z: ArrayLike, step: float = 1e-5) -> BeltramiSample:
    """
    `μ = f_z̄ / f_z` by central differences of step `h = step (1 + |z|)`,
    checked against the estimate at `h / 2`.
    """

    points = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    h = step * (1.0 + np.abs(points))
    coarse = _central_mu(f, points, h)
    fine = _central_mu(f, points, 0.5 * h)
    unstable = np.abs(coarse - fine) > 0.1 * np.abs(fine) + 1e-9
    flagged = ~np.isfinite(fine) | unstable

    if np.any(flagged):
        logger.debug(f"{int(flagged.sum())} of {points.size} dilatation samples flagged")

    return BeltramiSample(points=points, mu=fine, flagged=flagged)


def beltrami_estimate(
    G: GlobalMap,
    z: ArrayLike,
    step: float = 1e-5,
    side: Optional[Side] = None,
) -> BeltramiSample:
    """
    Complex dilatation of `g`.
    """

    return beltrami_of(lambda points: np.asarray(g_eval(G, points, side=side)), z, step)


def band_samples(G: GlobalMap, grid: int) -> tuple[NDArray[np.complex128], NDArray[np.int_]]:
    """
    Cell centers of a `grid × (grid · blocks)` lattice over every band
    window, in the plane, with their tract index.
    """

    points, owner = [], []
    xs = 1.0 + (np.arange(grid) + 0.5) / grid

    for j, assembly in enumerate(G.assemblies):
        lo, hi = assembly.window
        rows = grid * max(1, int(np.ceil((hi - lo) / (2.0 * np.pi))))
        ys = lo + (np.arange(rows) + 0.5) * (hi - lo) / rows
        tau = (xs[:, None] + 1j * ys[None, :]).ravel()
        points.append(G.model.tracts[j].inverse(tau))
        owner.append(np.full(tau.size, j))

    return np.concatenate(points), np.concatenate(owner)


def holomorphic_samples(G: GlobalMap, grid: int, seed: int = 0) -> NDArray[np.complex128]:
    """
    Points of `W` and `Ω(2)` clear of the band and of the boundary layer.
    """

    rng = np.random.default_rng(seed)
    points = [0.5 * np.exp(2j * np.pi * (np.arange(grid) + 0.5) / grid)]

    for j, assembly in enumerate(G.assemblies):
        lo, hi = assembly.window
        y = rng.uniform(lo, hi, size=grid * grid)
        inner = rng.uniform(HOLOMORPHIC_CLEARANCE, 1.0 - HOLOMORPHIC_CLEARANCE - 2 * LAYER_WIDTH, size=y.size)
        outer = rng.uniform(2.0 + HOLOMORPHIC_CLEARANCE, 4.0, size=y.size)
        points.append(G.model.tracts[j].inverse(inner + 1j * y))
        points.append(G.model.tracts[j].inverse(outer + 1j * y))

    candidates = np.concatenate(points)
    region, _, _ = G.classify(candidates)
    return candidates[(region == Region.W) | (region == Region.OUTER)]


def _rounded(value: float) -> float:
    return float(f"{value:.12g}")


@dataclass(frozen=True)
class DilatationReport:
    """
    Suprema of `|μ|` on the band and elsewhere.
    """

    band_sup: float  #: `sup |μ|` over band samples
    elsewhere_sup: float  #: `sup |μ|` over `W` and `Ω(2)` samples
    band_samples: int
    elsewhere_samples: int
    flagged: int  #: Samples excluded as numerically unstable
    worst: tuple[str, ...]  #: Worst band samples
    margin: float  #: Required gap between `k` and 1
    holomorphic_tolerance: float  #: Allowed `|μ|` off the band
    max_quasiconstant: Optional[float] = None  #: Pinned ceiling of `K`

    @property
    def k(self) -> float:
        return max(self.band_sup, self.elsewhere_sup)

    @property
    def quasiconstant(self) -> float:
        return (1.0 + self.k) / (1.0 - self.k) if self.k < 1 else float("inf")

    @property
    def passed(self) -> bool:
        return not self.offending

    @property
    def offending(self) -> tuple[str, ...]:
        problems = []

        if self.elsewhere_sup >= self.holomorphic_tolerance:
            problems.append(f"|mu| = {self.elsewhere_sup:.3g} off the band")

        if self.k >= 1.0 - self.margin:
            problems.extend(self.worst or (f"k = {self.k:.6g} not below 1 - {self.margin:g}",))

        elif self.max_quasiconstant is not None and self.quasiconstant > self.max_quasiconstant:
            problems.append(f"K = {self.quasiconstant:.6g} exceeds the pinned {self.max_quasiconstant:g}")

        return tuple(problems)

    def measured(self) -> dict[str, Any]:
        return {
            "band_sup": _rounded(self.band_sup),
            "elsewhere_sup": _rounded(self.elsewhere_sup),
            "k": _rounded(self.k),
            "quasiconstant": _rounded(self.quasiconstant),
            "band_samples": self.band_samples,
            "elsewhere_samples": self.elsewhere_samples,
            "flagged": self.flagged,
        }


def _sup(sample: BeltramiSample) -> float:
    valid = sample.modulus[~sample.flagged]
    return float(valid.max()) if valid.size else 0.0


def dilatation_report(
    G: GlobalMap,
    grid: int = 16,
    step: float = 1e-5,
    margin: float = 1e-3,
    holomorphic_tolerance: float = 1e-6,
    seed: int = 0,
    max_quasiconstant: Optional[float] = None,
) -> DilatationReport:
    """
    Sweep `|μ|` over band cell centers and over holomorphic-region samples.
    """

    band_points, owner = band_samples(G, grid)
    band = beltrami_estimate(G, band_points, step)
    elsewhere = beltrami_estimate(G, holomorphic_samples(G, grid, seed), step)

    modulus = np.where(band.flagged, -1.0, band.modulus)
    order = np.argsort(modulus)[::-1][:5]
    worst = tuple(
        f"tract {int(owner[i])} at tau = {complex(G.model.tracts[int(owner[i])].forward(band_points[i])):.6g}: "
        f"|mu| = {modulus[i]:.6g}"
        for i in order
        if modulus[i] >= 0
    )

    report = DilatationReport(
        band_sup=_sup(band),
        elsewhere_sup=_sup(elsewhere),
        band_samples=int(band.points.size),
        elsewhere_samples=int(elsewhere.points.size),
        flagged=int(band.flagged.sum() + elsewhere.flagged.sum()),
        worst=worst,
        margin=margin,
        holomorphic_tolerance=holomorphic_tolerance,
        max_quasiconstant=max_quasiconstant,
    )

    if report.flagged:
        logger.warning(f"{report.flagged} dilatation samples flagged and excluded")

    logger.info(f"dilatation: k = {report.k:.6g}, K = {report.quasiconstant:.6g}")
    return report


@dataclass(frozen=True)
class SingularValueReport:
    """
    Moduli of `g` at the places its singular values come from.
    """

    slit_max: float  #: Largest `|g|` over both sides of every slit
    vertex_max: float  #: Largest `|g|` at fold vertices
    w_max: float  #: Largest `|g|` over `W` samples
    outer_min: float  #: Smallest `|g|` over `Ω(2)` samples
    w_bound: float  #: Strict bound of `|g|` on `W`
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.offending

    @property
    def offending(self) -> tuple[str, ...]:
        problems = []

        if self.slit_max > E + self.tolerance:
            problems.append(f"slit image modulus {self.slit_max:.12g} exceeds e")

        if self.vertex_max > E + self.tolerance:
            problems.append(f"fold vertex image modulus {self.vertex_max:.12g} exceeds e")

        if not self.w_max < self.w_bound:
            problems.append(f"|g| = {self.w_max:.12g} on W reaches {self.w_bound:.6g}")

        if not self.outer_min > E**2:
            problems.append(f"|g| = {self.outer_min:.12g} on Omega(2) does not exceed e^2")

        return tuple(problems)

    def measured(self) -> dict[str, Any]:
        return {
            "slit_max": _rounded(self.slit_max),
            "vertex_max": _rounded(self.vertex_max),
            "w_max": _rounded(self.w_max),
            "outer_min": _rounded(self.outer_min),
            "w_bound": _rounded(self.w_bound),
        }


def singular_value_audit(
    G: GlobalMap,
    per_block: int = 16,
    grid: int = 16,
    tolerance: float = 1e-9,
    seed: int = 0,
) -> SingularValueReport:
    """
    Check that slit and fold-vertex images lie in the closed disk of radius
    `e`, that `|g|` stays below its `W` bound on `W` and exceeds `e²` on
    `Ω(2)`.
    """

    slit_max, vertex_max = 0.0, 0.0

    for assembly in G.assemblies:
        points, _ = assembly.slit_points(per_block)

        if points.size:
            for side in Side:
                slit_max = max(slit_max, float(np.max(np.abs(compose_gj(points, assembly, side=side)))))

        vertices = assembly.fold_vertices()

        if vertices.size:
            for side in Side:
                vertex_max = max(vertex_max, float(np.max(np.abs(compose_gj(vertices, assembly, side=side)))))

    samples = holomorphic_samples(G, grid, seed)
    region, _, _ = G.classify(samples)
    values = np.abs(np.asarray(g_eval(G, samples)))
    w_values = values[region == Region.W]
    outer_values = values[region == Region.OUTER]

    report = SingularValueReport(
        slit_max=slit_max,
        vertex_max=vertex_max,
        w_max=float(w_values.max()) if w_values.size else 0.0,
        outer_min=float(outer_values.min()) if outer_values.size else float("inf"),
        w_bound=G.w_bound,
        tolerance=tolerance,
    )
    logger.info(f"singular values: slit max {slit_max:.12g}, W max {report.w_max:.12g}")
    return report


@dataclass(frozen=True)
class ContinuityReport:
    """
    Extrapolated jumps of `g` across the gluing curves and the slits.
    """

    l1_residual: float  #: Across `τ⁻¹(L₁)`
    l2_residual: float  #: Across `τ⁻¹(L₂)`
    slit_residual: float  #: Between the two sides of every slit
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.offending

    @property
    def offending(self) -> tuple[str, ...]:
        return tuple(
            f"{name} residual {value:.6g} exceeds {self.tolerance:.3g}"
            for name, value in (
                ("L1", self.l1_residual),
                ("L2", self.l2_residual),
                ("slit", self.slit_residual),
            )
            if not value < self.tolerance
        )

    def measured(self) -> dict[str, Any]:
        return {
            "l1_residual": _rounded(self.l1_residual),
            "l2_residual": _rounded(self.l2_residual),
            "slit_residual": _rounded(self.slit_residual),
        }


def straddle_residual(G: GlobalMap, j: int, level: float, ys: ArrayLike) -> float:
    """
    Largest jump of `g` across `τ_j⁻¹(level + iy)`, extrapolated to zero gap.
    """

    tract = G.model.tracts[j]
    jumps = []

    for gap in STRADDLE_GAPS:
        inner, outer = straddle_pairs(tract, level, ys, gap)
        jumps.append(np.abs(np.asarray(g_eval(G, inner)) - np.asarray(g_eval(G, outer))))

    residual = np.abs(extrapolate_gap(jumps[0], jumps[1], *STRADDLE_GAPS))
    return float(np.max(residual)) if residual.size else 0.0


def continuity_audit(
    G: GlobalMap,
    samples: int = 256,
    per_block: int = 16,
    tolerance: float = 1e-6,
) -> ContinuityReport:
    """
    Compare `g` on both sides of `L₁` and `L₂` preimages over every window,
    and on both sides of every slit.
    """

    l1, l2, slit = 0.0, 0.0, 0.0

    for j, assembly in enumerate(G.assemblies):
        lo, hi = assembly.window
        ys = lo + (np.arange(samples) + 0.5) * (hi - lo) / samples
        l1 = max(l1, straddle_residual(G, j, 1.0, ys))
        l2 = max(l2, straddle_residual(G, j, 2.0, ys))

        points, _ = assembly.slit_points(per_block)

        if points.size:
            upper = compose_gj(points, assembly, side=Side.UPPER)
            lower = compose_gj(points, assembly, side=Side.LOWER)
            slit = max(slit, float(np.max(np.abs(upper - lower))))

    report = ContinuityReport(l1_residual=l1, l2_residual=l2, slit_residual=slit, tolerance=tolerance)
    logger.info(f"continuity residuals {report.measured()}")
    return report


def rescaled_map(G: GlobalMap, rho: float) -> Callable[[ArrayLike], NDArray[np.complex128]]:
    """
    `g_ρ = φ_ρ⁻¹ ∘ g ∘ ψ_ρ`, non-holomorphic on `Ω(ρ/2, 2ρ)` only.
    """

    def g_rho(z: ArrayLike) -> NDArray[np.complex128]:
        moved = rescale_psi(G.model, np.atleast_1d(np.asarray(z, dtype=complex)), rho)
        return np.asarray(rescale_phi_inverse(np.asarray(g_eval(G, moved)), rho))

    return g_rho


@dataclass(frozen=True)
class ScalingReport:
    """
    Quasiconstant of `g_ρ` for several levels.
    """

    rhos: tuple[float, ...]
    quasiconstants: tuple[float, ...]
    factor: float = 4.0  #: Allowed growth of `K(ρ) ρ²` over `K(1)`

    @property
    def normalized(self) -> tuple[float, ...]:
        return tuple(K * rho**2 for K, rho in zip(self.quasiconstants, self.rhos))

    @property
    def reference(self) -> float:
        return self.quasiconstants[self.rhos.index(1.0)] if 1.0 in self.rhos else self.quasiconstants[0]

    @property
    def offending(self) -> tuple[str, ...]:
        return tuple(
            f"K(rho) rho^2 = {value:.6g} at rho = {rho:g} exceeds {self.factor:g} K(1)"
            for rho, value in zip(self.rhos, self.normalized)
            if value > self.factor * self.reference
        )

    @property
    def passed(self) -> bool:
        return not self.offending

    def measured(self) -> dict[str, Any]:
        return {
            "rho": list(self.rhos),
            "quasiconstant": [_rounded(K) for K in self.quasiconstants],
            "normalized": [_rounded(v) for v in self.normalized],
        }


def rho_scaling_audit(
    G: GlobalMap,
    rhos: tuple[float, ...] = (1.0, 0.5, 0.25),
    grid: int = 8,
    step: float = 1e-5,
) -> ScalingReport:
    """
    Measure the quasiconstant of `g_ρ` on `Ω(ρ/2, 2ρ)` for every `ρ`.
    """

    quasiconstants = []

    for rho in rhos:
        g_rho = rescaled_map(G, rho)
        points = []
        xs = rho * (0.5 + 1.5 * (np.arange(grid) + 0.5) / grid)

        for j, assembly in enumerate(G.assemblies):
            lo, hi = assembly.window
            rows = grid * max(1, int(np.ceil((hi - lo) / (2.0 * np.pi))))
            ys = lo + (np.arange(rows) + 0.5) * (hi - lo) / rows
            points.append(G.model.tracts[j].inverse((xs[:, None] + 1j * ys[None, :]).ravel()))

        sample = beltrami_of(g_rho, np.concatenate(points), step)
        k = _sup(sample)
        quasiconstants.append((1.0 + k) / (1.0 - k) if k < 1 else float("inf"))
        logger.debug(f"rho = {rho:g}: K = {quasiconstants[-1]:.6g}")

    return ScalingReport(rhos=tuple(rhos), quasiconstants=tuple(quasiconstants))
