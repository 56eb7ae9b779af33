"""
Blaschke products with zeros at geodesic top points of a windowed arc
partition, and the partition `ℒ_j` of `L₁` they induce through `Ψ ∘ τ_j⁻¹`.

Zeros are selected in two passes over the arcs:

 - a greedy maximal `R`-separated net of top points, scanning by angle;
 - for every net element, the shortest arc at most `S` steps away along the
   same boundary curve.

On the circle `B(e^{iθ}) = e^{iΛ(θ)}` for the lifted argument
`Λ(θ) = Σ_a [π - arg a + θ + 2 arg(1 - a e^{-iθ})]`, which is continuous and
strictly increasing with `Λ'(θ) = Σ_a P_a(θ)`.

.. code-block:: python
   :caption: Example

   from qcfold import blaschke
   import numpy as np

   B = blaschke.BlaschkeProduct(zeros=np.array([0.5 + 0j]))

   blaschke.blaschke_eval(B, 1.0)  # -1
   blaschke.boundary_arg_derivative(B, 0.0)  # 3
"""

from qcfold import logging
from qcfold.hyperbolic_disk import (
    ArcOnCircle,
    geodesic_top_point,
    harmonic_measure_arc,
    hyperbolic_distance,
    poisson_kernel,
)
from qcfold.model_domain import Model
from qcfold.riemann_map import BuildError, DiscreteRiemannMap

from dataclasses import dataclass, field
import numpy as np
from scipy import optimize

from collections.abc import Callable, Sequence
from numpy.typing import ArrayLike, NDArray
from typing import Any, Optional, Union


logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class EmptyArcSetError(ValueError):
    """
    Raised when zeros are selected from an empty collection of arcs.
    """

    def __init__(self):
        super().__init__("cannot select zeros from an empty arc collection")


class SelectionError(ValueError):
    """
    Raised when the net parameters violate an enforced separation hypothesis.
    """

    def __init__(self, R: float, S: int, T: float):
        super().__init__(f"R = {R} is below 4·S·T = {4 * S * T:.6g} (S = {S}, T = {T:.6g})")


class PartitionError(BuildError):
    """
    Raised when the level partition cannot be bracketed.
    """

    def __init__(self, reason: str):
        RuntimeError.__init__(self, f"level partition failed: {reason}")


@dataclass(frozen=True)
class ArcRef:
    """
    Position of an arc in the windowed collection.
    """

    chain: int  #: Index of the boundary curve (tract)
    step: int  #: Position along that curve


@dataclass(frozen=True)
class BlaschkeProduct:
    """
    Finite Blaschke product `Π (|a|/a)(a - z)/(1 - conj(a) z)`; a zero at the
    origin contributes the factor `z`.
    """

    zeros: NDArray[np.complex128]  #: Zeros `a_K`, all inside the open disk
    selected: tuple[ArcRef, ...] = ()  #: Arcs whose top points are the zeros
    net: tuple[ArcRef, ...] = ()  #: The `R`-separated net the selection started from
    adjacent_diameter: float = 0.0  #: Largest distance `T` between adjacent top points
    hypothesis_holds: bool = True  #: Whether `R >= 4ST`

    def __post_init__(self):
        zeros = np.asarray(self.zeros, dtype=complex)

        if np.any(np.abs(zeros) >= 1):
            raise ValueError("Blaschke zeros must lie in the open unit disk")

        object.__setattr__(self, "zeros", zeros)

    @property
    def factors_normalizer(self) -> NDArray[np.complex128]:
        modulus = np.abs(self.zeros)
        return np.where(modulus > 0, modulus / np.where(modulus > 0, self.zeros, 1.0), 1.0)

    @property
    def tail_sum(self) -> float:
        return float(np.sum(1.0 - np.abs(self.zeros)))

    def __call__(self, z: ArrayLike) -> Union[complex, NDArray]:
        return blaschke_eval(self, z)

    def to_json(self) -> dict[str, Any]:
        return {
            "zeros": [[float(a.real), float(a.imag)] for a in self.zeros],
            "selected": [[ref.chain, ref.step] for ref in self.selected],
            "net": [[ref.chain, ref.step] for ref in self.net],
            "adjacent_diameter": self.adjacent_diameter,
            "hypothesis_holds": self.hypothesis_holds,
        }


def blaschke_eval(B: BlaschkeProduct, z: ArrayLike) -> Union[complex, NDArray]:
    """
    Evaluate the product on the closed unit disk.
    """

    arr = np.asarray(z, dtype=complex)
    value = np.ones_like(arr)

    for a, unit in zip(B.zeros, B.factors_normalizer):
        if a == 0:
            value = value * arr

        else:
            value = value * unit * (a - arr) / (1.0 - np.conj(a) * arr)

    return complex(value) if value.ndim == 0 else value


def boundary_phase(B: BlaschkeProduct, theta: ArrayLike) -> Union[float, NDArray]:
    """
    Continuous lift `Λ(θ)` of `arg B(e^{iθ})`.
    """

    theta = np.asarray(theta, dtype=float)
    zeros = B.zeros.reshape((1,) * theta.ndim + (-1,))
    th = theta[..., None]

    lifted = np.where(
        zeros == 0,
        th,
        np.pi - np.angle(zeros) + th + 2.0 * np.angle(1.0 - zeros * np.exp(-1j * th)),
    )
    value = np.sum(lifted, axis=-1)
    return float(value) if value.ndim == 0 else value


def boundary_arg_derivative(B: BlaschkeProduct, theta: ArrayLike) -> Union[float, NDArray]:
    """
    `∂θ arg B(e^{iθ}) = Σ_a P_a(θ)`.
    """

    theta = np.asarray(theta, dtype=float)
    value = sum(np.asarray(poisson_kernel(a, theta)) for a in B.zeros)
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def _as_chains(arcs: Sequence) -> list[list[ArcOnCircle]]:
    if arcs and isinstance(arcs[0], ArcOnCircle):
        return [list(arcs)]

    return [list(chain) for chain in arcs]


def adjacent_top_diameter(chains: Sequence[Sequence[ArcOnCircle]]) -> float:
    """
    Largest hyperbolic distance between top points of adjacent arcs.
    """

    diameter = 0.0

    for chain in chains:
        tops = np.array([geodesic_top_point(arc).a for arc in chain])

        if tops.size > 1:
            diameter = max(diameter, float(np.max(hyperbolic_distance(tops[:-1], tops[1:]))))

    return diameter


def select_zero_set(
    arcs: Sequence,
    R: float,
    S: int,
    enforce_separation_hypothesis: bool = False,
) -> BlaschkeProduct:
    """
    Choose the zeros of the Blaschke product.

    :param arcs: One sequence of arcs per boundary curve, or a single sequence
    :param R: Minimal hyperbolic separation of the net
    :param S: Number of steps searched for a shorter arc
    :param enforce_separation_hypothesis: Fail when `R < 4ST`
    :raises EmptyArcSetError: If there is no arc
    :raises SelectionError: If the hypothesis is enforced and fails
    """

    chains = _as_chains(arcs)
    refs = [ArcRef(c, k) for c, chain in enumerate(chains) for k in range(len(chain))]

    if not refs:
        raise EmptyArcSetError()

    T = adjacent_top_diameter(chains)
    holds = R >= 4 * S * T

    if not holds:
        if enforce_separation_hypothesis:
            raise SelectionError(R, S, T)

        logger.warning(f"net parameters R={R}, S={S} do not satisfy R >= 4ST with T={T:.4g}")

    def arc(ref: ArcRef) -> ArcOnCircle:
        return chains[ref.chain][ref.step]

    ordered = sorted(refs, key=lambda ref: (arc(ref).theta_lo, ref.chain, ref.step))
    net: list[ArcRef] = []
    net_tops: list[complex] = []

    for ref in ordered:
        top = geodesic_top_point(arc(ref)).a

        if all(hyperbolic_distance(top, kept) >= R for kept in net_tops):
            net.append(ref)
            net_tops.append(top)

    chosen: dict[ArcRef, None] = {}

    for ref in net:
        chain = chains[ref.chain]
        window = range(max(0, ref.step - S), min(len(chain), ref.step + S + 1))
        best = min(window, key=lambda k: (chain[k].length, abs(k - ref.step), chain[k].theta_lo))
        chosen.setdefault(ArcRef(ref.chain, best))

    selected = tuple(chosen)
    zeros = np.array([geodesic_top_point(arc(ref)).a for ref in selected])
    logger.info(f"selected {len(selected)} zeros from a net of {len(net)} among {len(refs)} arcs")

    return BlaschkeProduct(
        zeros=zeros,
        selected=selected,
        net=tuple(net),
        adjacent_diameter=T,
        hypothesis_holds=holds,
    )


@dataclass(frozen=True)
class HarmonicSums:
    """
    `Σ_{J ∈ ℳ} ω(K, a_J)` for every windowed arc `K`.
    """

    sums: NDArray[np.float64]  #: One sum per arc, chains concatenated
    mean_derivative: NDArray[np.float64]  #: `(1/|K|) ∫_K ∂θ arg B` per arc

    @property
    def epsilon(self) -> float:
        return float(np.min(self.sums))

    @property
    def mu(self) -> float:
        return float(np.max(self.sums))


def harmonic_sums(B: BlaschkeProduct, arcs: Sequence) -> HarmonicSums:
    """
    Harmonic-measure sums and mean boundary derivatives over every arc.
    """

    flat = [arc for chain in _as_chains(arcs) for arc in chain]
    sums = np.array([np.sum(harmonic_measure_arc(arc, B.zeros)) for arc in flat])
    lengths = np.array([arc.length for arc in flat])
    return HarmonicSums(sums=sums, mean_derivative=TWO_PI * sums / lengths)


def tail_bound(B: BlaschkeProduct, dropped: ArrayLike, theta: ArrayLike) -> float:
    """
    Bound on `|B·b_a - B|` over the given boundary angles when the zeros
    `dropped` are appended, from `|1 - b_a(z)| <= (1 - |a|)(1 + |z|) / |1 - conj(a) z|`.
    """

    z = np.exp(1j * np.asarray(theta, dtype=float))
    bound = np.zeros(z.shape)

    for a in np.atleast_1d(np.asarray(dropped, dtype=complex)):
        bound = bound + 2.0 * (1.0 - abs(a)) / np.abs(1.0 - np.conj(a) * z)

    return float(np.max(bound))


@dataclass(frozen=True)
class LevelPartition:
    """
    Points `1 + iy` of `L₁` where `B ∘ Ψ ∘ τ_j⁻¹ = 1`, and the lifted phase
    `y ↦ Λ(θ_j(y))` they were solved from.
    """

    tract: int  #: Tract index
    endpoints: NDArray[np.float64]  #: Increasing imaginary parts
    windings: NDArray[np.int_]  #: Phase of each endpoint divided by 2π
    phase: Callable[[ArrayLike], NDArray] = field(compare=False, repr=False)
    phase_derivative: Optional[Callable[[ArrayLike], NDArray]] = field(
        default=None, compare=False, repr=False
    )

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return list(zip(self.endpoints[:-1].tolist(), self.endpoints[1:].tolist()))

    def alpha(self, k: int, y: ArrayLike) -> NDArray[np.float64]:
        """
        Normalized phase on the `k`-th interval, 0 at its lower end and 1 at
        its upper end.
        """

        return (np.asarray(self.phase(y)) - TWO_PI * self.windings[k]) / TWO_PI

    def to_json(self) -> dict[str, Any]:
        return {
            "tract": self.tract,
            "endpoints": self.endpoints.tolist(),
            "windings": self.windings.tolist(),
        }


def level_partition(
    B: BlaschkeProduct,
    rm: DiscreteRiemannMap,
    m: Model,
    j: int,
    window: int,
    density: int = 64,
) -> LevelPartition:
    """
    Solve `arg B(Ψ(τ_j⁻¹(1 + iy))) ≡ 0 (mod 2π)` over the window by
    bracketing on a dense grid and refining with Brent's method.

    :raises PartitionError: If the phase is not strictly increasing or the
        window holds fewer than two level points
    """

    bound = TWO_PI * window

    def phase(y: ArrayLike) -> NDArray:
        return boundary_phase(B, rm.boundary_angle(j, y))

    grid = np.linspace(-bound, bound, 2 * window * density + 1)
    values = np.asarray(phase(grid))
    steps = np.diff(values)

    if np.any(steps <= 0):
        where = float(grid[int(np.argmin(steps))])
        raise PartitionError(f"phase of tract {j} is not increasing near y = {where:.6g}")

    first = int(np.ceil(values[0] / TWO_PI))
    last = int(np.floor(values[-1] / TWO_PI))
    windings = np.arange(first, last + 1)

    if windings.size < 2:
        raise PartitionError(
            f"tract {j} has {windings.size} level point(s) in the window, the zero set of "
            f"{B.zeros.size} zero(s) is too sparse"
        )

    endpoints = np.empty(windings.size)

    for i, n in enumerate(windings):
        target = TWO_PI * n
        hi = int(np.searchsorted(values, target))

        if hi < values.size and values[hi] == target:
            endpoints[i] = grid[hi]
            continue

        if hi == 0 or hi == values.size:
            raise PartitionError(f"cannot bracket winding {n} of tract {j}")

        endpoints[i] = optimize.brentq(
            lambda y: float(phase(y)) - target,
            grid[hi - 1],
            grid[hi],
            xtol=1e-14,
            rtol=4 * np.finfo(float).eps,
            maxiter=200,
        )

    logger.debug(f"tract {j}: {endpoints.size} level points over the window")

    def phase_derivative(y: ArrayLike) -> NDArray:
        theta = rm.boundary_angle(j, y)
        return boundary_arg_derivative(B, theta) * rm.boundary_angle(j, y, derivative=1)

    return LevelPartition(
        tract=j,
        endpoints=endpoints,
        windings=windings,
        phase=phase,
        phase_derivative=phase_derivative,
    )


@dataclass(frozen=True)
class PartitionReport:
    """
    Incidence counts between `ℒ_j` intervals and `2π` intervals of the window.
    """

    min_hits: int  #: Fewest window intervals met by one `ℒ_j` interval
    max_hits: int  #: Most window intervals met by one `ℒ_j` interval (`M`)
    interval_min_hits: int  #: Fewest `ℒ_j` intervals met by one interior window interval
    interval_max_hits: int  #: Most `ℒ_j` intervals met by one interior window interval
    offending: tuple[str, ...]  #: Window intervals containing both ends of an `ℒ_j` interval

    @property
    def passed(self) -> bool:
        return self.min_hits >= 2 and not self.offending


def verify_partition_property(partition: LevelPartition, window: int) -> PartitionReport:
    """
    Count closed-interval incidences between `ℒ_j` and `𝒥`.

    Every `ℒ_j` interval must meet at least two elements of `𝒥`, so that no
    element of `𝒥` contains both of its endpoints.
    """

    ks = np.arange(-window, window)
    lo = TWO_PI * ks
    hi = lo + TWO_PI
    intervals = np.array(partition.intervals).reshape(-1, 2)

    if intervals.size == 0:
        return PartitionReport(0, 0, 0, 0, ("no level interval inside the window",))

    meets = (lo[None, :] <= intervals[:, 1:2]) & (hi[None, :] >= intervals[:, 0:1])
    contains = (lo[None, :] <= intervals[:, 0:1]) & (hi[None, :] >= intervals[:, 1:2])
    per_level = meets.sum(axis=1)

    first, last = partition.endpoints[0], partition.endpoints[-1]
    interior = (lo >= first) & (hi <= last)
    per_window = meets.sum(axis=0)[interior] if np.any(interior) else np.array([0])

    offending = tuple(
        f"J[{int(ks[col])}] contains K[{row}]" for row, col in zip(*np.nonzero(contains))
    )

    return PartitionReport(
        min_hits=int(per_level.min()),
        max_hits=int(per_level.max()),
        interval_min_hits=int(per_window.min()),
        interval_max_hits=int(per_window.max()),
        offending=offending,
    )
