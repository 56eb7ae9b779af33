"""
Quasiconformal building blocks of the strip `S = {1 < Re z < 2}` and their
composition `g_j`.

Points of the strip (in `τ_j`-coordinates) travel through four stages:

 1. `ψ₁` makes the phase of `B ∘ Ψ ∘ τ_j⁻¹` linear on every `K ∈ ℒ_j`;
 2. `ψ₂` stretches every `K` onto `J′ = J_K` plus its block of `𝒥₂` intervals;
 3. `ψ₃` folds each `J′` onto `J_K`, opening a slit `X_K` whose two sides land
    on paired `𝒥₂` intervals;
 4. `σ_j` is `exp` on `𝒥₁` rectangles and an even fold profile on `𝒥₂`
    rectangles, followed by the modulus-matching stage.

`ψ₁`, `ψ₂` and `ψ₃` are the identity on `L₂` and on horizontal lines through
their cell corners, so `g_j = e^z` on `L₂`.

.. code-block:: python
   :caption: Example

   from qcfold import interpolation
   import numpy as np

   psi3 = interpolation.build_psi3(0.0, 2)
   slit = psi3.slit_point(0.5)

   upper = psi3(slit, side=interpolation.Side.UPPER)
   lower = psi3(slit, side=interpolation.Side.LOWER)

   # both sides sit symmetrically about the block center 4π
   assert abs(upper.imag + lower.imag - 8 * np.pi) < 1e-12
"""

from qcfold import logging
from qcfold.blaschke import LevelPartition
from qcfold.riemann_map import BuildError

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum, auto
from functools import cache
import numpy as np
from scipy import optimize

from collections.abc import Callable, Sequence
from numpy.typing import ArrayLike, NDArray
from typing import Any, Optional, Union


logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
E = float(np.e)
_BARY_TOL = 1e-12


class MonotonicityError(BuildError):
    """
    Raised when the phase data of an interval is not increasing.
    """

    def __init__(self, interval: tuple[float, float], reason: str):
        RuntimeError.__init__(self, f"phase on [{interval[0]:.6g}, {interval[1]:.6g}] {reason}")


class AlignmentError(BuildError):
    """
    Raised when `ℒ_j` cannot be injected into `𝒥` in order.
    """

    def __init__(self, index: int):
        RuntimeError.__init__(
            self,
            f"level interval {index} shares its window interval with a neighbour, "
            "the partition property does not hold",
        )


class FoldingError(ValueError):
    """
    Raised for a block that cannot be folded.
    """

    def __init__(self, n_block: int):
        super().__init__(f"block size must be even and non-negative, got {n_block}")


class Side(Enum):
    """
    Side of a slit used to evaluate points lying on it.
    """

    UPPER = auto()
    LOWER = auto()


class FoldProfile(Enum):
    """
    Even profile `h` used on `𝒥₂` traces of `L₁`.
    """

    COSH = "cosh"
    TENT = "tent"

    def __call__(self, y: ArrayLike) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)

        match self:
            case FoldProfile.COSH:
                return np.cos(y)

            case FoldProfile.TENT:
                distance = np.abs(y - TWO_PI * np.round(y / TWO_PI))
                return 1.0 - 2.0 * distance / np.pi


class ModulusMatching(Enum):
    """
    How the modulus `e` of the strip map on `L₁` meets the unimodular `B ∘ Ψ`.
    """

    STRETCH = "stretch"
    SCALE = "scale"

    @property
    def w_bound(self) -> float:
        """
        Bound of `|g|` on `W`.
        """

        return 1.0 if self is ModulusMatching.STRETCH else E


def match_modulus(w: ArrayLike, mode: ModulusMatching) -> NDArray[np.complex128]:
    """
    `w |w| / e²` in stretch mode, the identity in scale mode.
    """

    w = np.asarray(w, dtype=complex)

    match mode:
        case ModulusMatching.STRETCH:
            return w * np.abs(w) / E**2

        case ModulusMatching.SCALE:
            return w


def singular_values(fx: ArrayLike, fy: ArrayLike) -> tuple[NDArray, NDArray]:
    """
    Largest and smallest singular values of the real Jacobian with columns
    `f_x` and `f_y`, signed so that the smallest is negative for
    orientation-reversing maps.
    """

    fz = 0.5 * np.abs(np.asarray(fx) - 1j * np.asarray(fy))
    fzbar = 0.5 * np.abs(np.asarray(fx) + 1j * np.asarray(fy))
    return fz + fzbar, fz - fzbar


@dataclass(frozen=True)
class Cell:
    """
    One cell of a piecewise map with its measured distortion.
    """

    source: NDArray[np.complex128]  #: Source polygon, counterclockwise
    target: NDArray[np.complex128]  #: Image polygon
    dilatation: float  #: `σ_max / σ_min` of the linear part (sup over samples)
    lipschitz: float  #: `max(σ_max, 1 / σ_min)`

    def to_json(self) -> dict[str, Any]:
        return {
            "source": [[float(p.real), float(p.imag)] for p in self.source],
            "target": [[float(p.real), float(p.imag)] for p in self.target],
            "dilatation": self.dilatation,
            "lipschitz": self.lipschitz,
        }


@dataclass(frozen=True)
class PiecewiseMap(ABC):
    """
    A homeomorphism defined cell by cell.
    """

    cells: tuple[Cell, ...] = ()  #: Cell decomposition of the domain
    domain: str = "strip"  #: Description of the domain
    codomain: str = "strip"  #: Description of the codomain

    @abstractmethod
    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> NDArray[np.complex128]: ...

    @abstractmethod
    def inverse(self, w: ArrayLike) -> NDArray[np.complex128]: ...

    @abstractmethod
    def jacobian(self, z: ArrayLike, side: Optional[Side] = None) -> tuple[NDArray, NDArray]:
        """
        Partial derivatives `(f_x, f_y)` as complex numbers.
        """

    @property
    def max_dilatation(self) -> float:
        return max((cell.dilatation for cell in self.cells), default=1.0)

    @property
    def max_lipschitz(self) -> float:
        return max((cell.lipschitz for cell in self.cells), default=1.0)

    def to_json(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "codomain": self.codomain,
            "cells": [cell.to_json() for cell in self.cells],
        }


def _measure(fx: NDArray, fy: NDArray) -> tuple[float, float]:
    big, small = singular_values(fx, fy)

    if np.any(small <= 0):
        return float("inf"), float("inf")

    return float(np.max(big / small)), float(max(np.max(big), np.max(1.0 / small)))


@dataclass(frozen=True)
class StripInterpolation(PiecewiseMap):
    """
    `x + iy ↦ x + i[(2 - x) P(y) + (x - 1) y]` for an increasing boundary
    profile `P` of `L₁`; the identity on `L₂` and to the right of it.

    Outside its knots `P` is a translation.
    """

    knots: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    profile: Callable[[NDArray], NDArray] = field(default=lambda y: y, repr=False)
    profile_derivative: Callable[[NDArray], NDArray] = field(
        default=lambda y: np.ones_like(y), repr=False
    )
    linear: bool = False  #: Whether `P` is affine between knots

    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> NDArray[np.complex128]:
        z = np.asarray(z, dtype=complex)
        s = np.clip(z.real - 1.0, 0.0, 1.0)
        v = (1.0 - s) * self.profile(z.imag) + s * z.imag
        return z.real + 1j * v

    def jacobian(self, z: ArrayLike, side: Optional[Side] = None) -> tuple[NDArray, NDArray]:
        z = np.asarray(z, dtype=complex)
        s = np.clip(z.real - 1.0, 0.0, 1.0)
        inside = (z.real > 1.0) & (z.real < 2.0)
        shear = np.where(inside, z.imag - self.profile(z.imag), 0.0)
        vy = (1.0 - s) * self.profile_derivative(z.imag) + s
        return 1.0 + 1j * shear, 1j * vy

    def inverse(self, w: ArrayLike) -> NDArray[np.complex128]:
        w = np.asarray(w, dtype=complex)
        flat = np.atleast_1d(w).ravel()
        u, v = flat.real, flat.imag
        s = np.clip(u - 1.0, 0.0, 1.0)
        at_knots = (1.0 - s)[:, None] * self.profile(self.knots)[None, :] + s[:, None] * self.knots
        y = np.empty(flat.shape)

        below = v < at_knots[:, 0]
        above = v > at_knots[:, -1]
        y[below] = self.knots[0] + (v[below] - at_knots[below, 0])
        y[above] = self.knots[-1] + (v[above] - at_knots[above, -1])

        for k in np.flatnonzero(~(below | above)):
            i = int(np.clip(np.searchsorted(at_knots[k], v[k], side="right") - 1, 0, self.knots.size - 2))
            lo, hi = self.knots[i], self.knots[i + 1]
            f_lo, f_hi = at_knots[k, i], at_knots[k, i + 1]

            if self.linear or f_hi == f_lo:
                y[k] = lo + (v[k] - f_lo) * (hi - lo) / (f_hi - f_lo) if f_hi > f_lo else lo
                continue

            def residual(t, k=k):
                return float((1.0 - s[k]) * self.profile(np.array([t]))[0] + s[k] * t - v[k])

            y[k] = optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

        out = (u + 1j * y).reshape(w.shape)
        return out


def _strip_cells(strip: StripInterpolation, rows: int = 5, columns: int = 9) -> tuple[Cell, ...]:
    cells = []
    xs = np.linspace(1.0, 2.0, rows + 2)[1:-1]

    for lo, hi in zip(strip.knots[:-1], strip.knots[1:]):
        source = np.array([1 + 1j * lo, 2 + 1j * lo, 2 + 1j * hi, 1 + 1j * hi])
        ys = np.linspace(lo, hi, columns + 2)[1:-1]
        grid = (xs[:, None] + 1j * ys[None, :]).ravel()
        dilatation, lipschitz = _measure(*strip.jacobian(grid))
        cells.append(Cell(source, strip(source), dilatation, lipschitz))

    return tuple(cells)


def build_psi1(
    K: tuple[float, float],
    alpha: Callable[[NDArray], NDArray],
    alpha_derivative: Optional[Callable[[NDArray], NDArray]] = None,
    samples: int = 257,
) -> StripInterpolation:
    """
    Linearize the normalized phase `α` on `R = [1, 2] × K`.

    The boundary rule is `ψ₁(1 + iy) = 1 + i(a + (b - a) α(y))`; top, bottom
    and right sides are fixed.

    :param K: The interval `[a, b]` of `L₁`, by imaginary parts
    :param alpha: Phase normalized to 0 at `a` and 1 at `b`
    :param alpha_derivative: Derivative of `alpha`; central differences if omitted
    :raises MonotonicityError: If `alpha` is not increasing from 0 to 1 on `K`
    """

    a, b = float(K[0]), float(K[1])
    ys = np.linspace(a, b, samples)
    values = np.asarray(alpha(ys), dtype=float)

    if abs(values[0]) > 1e-8 or abs(values[-1] - 1.0) > 1e-8:
        raise MonotonicityError((a, b), f"runs from {values[0]:.3g} to {values[-1]:.3g}, not 0 to 1")

    if np.any(np.diff(values) <= 0):
        raise MonotonicityError((a, b), "is not strictly increasing")

    if alpha_derivative is None:
        step = 1e-6 * (b - a)

        def alpha_derivative(y):
            return (np.asarray(alpha(y + step)) - np.asarray(alpha(y - step))) / (2 * step)

    def profile(y):
        y = np.asarray(y, dtype=float)
        inside = (y >= a) & (y <= b)
        return np.where(inside, a + (b - a) * np.asarray(alpha(np.clip(y, a, b))), y)

    def profile_derivative(y):
        y = np.asarray(y, dtype=float)
        inside = (y >= a) & (y <= b)
        return np.where(inside, (b - a) * np.asarray(alpha_derivative(np.clip(y, a, b))), 1.0)

    psi1 = StripInterpolation(
        domain=f"[1,2]x[{a:.6g},{b:.6g}]",
        codomain=f"[1,2]x[{a:.6g},{b:.6g}]",
        knots=np.array([a, b]),
        profile=profile,
        profile_derivative=profile_derivative,
    )
    return replace(psi1, cells=_strip_cells(psi1))


def _join(pieces: Sequence[StripInterpolation], domain: str) -> StripInterpolation:
    def dispatch(attribute: str, default: Callable):
        def evaluate(y):
            y = np.asarray(y, dtype=float)
            out = np.asarray(default(y), dtype=float).copy()

            for piece in pieces:
                mask = (y >= piece.knots[0]) & (y <= piece.knots[-1])

                if np.any(mask):
                    out[mask] = getattr(piece, attribute)(y[mask])

            return out

        return evaluate

    return StripInterpolation(
        cells=tuple(cell for piece in pieces for cell in piece.cells),
        domain=domain,
        codomain=domain,
        knots=np.unique(np.concatenate([piece.knots for piece in pieces])),
        profile=dispatch("profile", lambda y: y),
        profile_derivative=dispatch("profile_derivative", np.ones_like),
    )


def linearize_partition(partition: LevelPartition) -> StripInterpolation:
    """
    `ψ₁` over every interval of `ℒ_j`.

    :raises MonotonicityError: If the partition has no interval
    """

    if len(partition.endpoints) < 2:
        where = (float(partition.endpoints[0]),) * 2 if len(partition.endpoints) else (0.0, 0.0)
        raise MonotonicityError(where, f"is not split, tract {partition.tract} has no level interval")

    pieces = []

    for k, (a, b) in enumerate(partition.intervals):
        winding = partition.windings[k]

        def alpha(y, winding=winding):
            return np.asarray(partition.phase(y)) / TWO_PI - winding

        derivative = None

        if partition.phase_derivative is not None:

            def derivative(y):
                return np.asarray(partition.phase_derivative(y)) / TWO_PI

        pieces.append(build_psi1((a, b), alpha, derivative))

    logger.debug(f"tract {partition.tract}: linearized {len(pieces)} level intervals")
    return _join(pieces, domain=f"strip of tract {partition.tract}")


@dataclass(frozen=True)
class AlignmentPlan:
    """
    Order-preserving injection of `ℒ_j` into `𝒥`.

    The `i`-th endpoint of `ℒ_j` goes to the lattice point `2π m_i`, so the
    interval `K_i` maps onto `[2π m_i, 2π m_{i+1}]`: `J_{m_i} ∈ 𝒥₁` followed by
    a block of `m_{i+1} - m_i - 1` intervals of `𝒥₂`.
    """

    endpoints: NDArray[np.float64]  #: Endpoints `y_i` of `ℒ_j`
    initial: NDArray[np.int_]  #: Index of the interval holding each endpoint
    lattice: NDArray[np.int_]  #: Aligned indices `m_i`
    window: int  #: Window `W` of `𝒥`
    base: int  #: Endpoint the parity sweep starts from

    @property
    def mapping(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, int(m)) for i, m in enumerate(self.lattice[:-1]))

    @property
    def gaps(self) -> NDArray[np.int_]:
        return np.diff(self.lattice) - 1

    @property
    def displacement(self) -> NDArray[np.int_]:
        return self.lattice - self.initial

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(range(lo + 1, hi)) for lo, hi in zip(self.lattice[:-1], self.lattice[1:]))

    @property
    def folded(self) -> NDArray[np.int_]:
        """
        Indices of `𝒥₂`.
        """

        return np.array([k for block in self.blocks for k in block], dtype=int)

    def pairs(self, i: int) -> list[tuple[int, int]]:
        """
        Paired `𝒥₂` intervals of the `i`-th block, outermost pair first.
        """

        block = self.blocks[i]
        return [(block[r], block[-1 - r]) for r in range(len(block) // 2)]

    def classify(self, k: ArrayLike) -> NDArray[np.int_]:
        """
        1 for `𝒥₁`, 2 for `𝒥₂`, 0 outside the aligned range.
        """

        k = np.asarray(k)
        inside = (k >= self.lattice[0]) & (k < self.lattice[-1])
        return np.where(inside, np.where(np.isin(k, self.folded), 2, 1), 0)

    def to_json(self) -> dict[str, Any]:
        return {
            "endpoints": self.endpoints.tolist(),
            "initial": self.initial.tolist(),
            "lattice": self.lattice.tolist(),
            "window": self.window,
            "blocks": [list(block) for block in self.blocks],
        }


def align_partitions(partition: Union[LevelPartition, ArrayLike], window: int) -> AlignmentPlan:
    """
    Assign to each `K` the interval of `𝒥` holding its lower endpoint (the
    upper one on ties), then sweep outward from the endpoint nearest the
    origin, moving one slot toward it every interval that would leave an odd
    gap.

    :raises AlignmentError: If two endpoints fall in the same interval
    """

    y = np.asarray(getattr(partition, "endpoints", partition), dtype=float)
    initial = np.floor(y / TWO_PI).astype(int)

    for i in np.flatnonzero(np.diff(initial) <= 0):
        raise AlignmentError(int(i))

    lattice = initial.copy()
    base = int(np.argmin(np.abs(y)))

    for i in range(base + 1, lattice.size):
        if (lattice[i] - lattice[i - 1]) % 2 == 0:
            lattice[i] -= 1

    for i in range(base - 1, -1, -1):
        if (lattice[i + 1] - lattice[i]) % 2 == 0:
            lattice[i] += 1

    if np.any(np.diff(lattice) <= 0):
        raise AlignmentError(int(np.argmin(np.diff(lattice))))

    plan = AlignmentPlan(endpoints=y, initial=initial, lattice=lattice, window=window, base=base)
    logger.debug(f"aligned {y.size - 1} level intervals, {plan.folded.size} folded window intervals")
    return plan


def build_psi2(plan: AlignmentPlan) -> StripInterpolation:
    """
    Piecewise-linear boundary map `K_i → [2π m_i, 2π m_{i+1}]`, extended by
    translation and interpolated in `x` to the identity on `L₂`.
    """

    knots = plan.endpoints
    targets = TWO_PI * plan.lattice.astype(float)
    slopes = np.diff(targets) / np.diff(knots)

    def profile(y):
        y = np.asarray(y, dtype=float)
        inside = np.interp(y, knots, targets)
        below = y + (targets[0] - knots[0])
        above = y + (targets[-1] - knots[-1])
        return np.select([y < knots[0], y > knots[-1]], [below, above], inside)

    def profile_derivative(y):
        y = np.asarray(y, dtype=float)
        index = np.clip(np.searchsorted(knots, y, side="right") - 1, 0, slopes.size - 1)
        outside = (y < knots[0]) | (y > knots[-1])
        return np.where(outside, 1.0, slopes[index])

    psi2 = StripInterpolation(
        domain="strip, level coordinates",
        codomain="strip, window coordinates",
        knots=knots,
        profile=profile,
        profile_derivative=profile_derivative,
        linear=True,
    )
    return replace(psi2, cells=_strip_cells(psi2))


def _affine_coefficients(p: NDArray, q: NDArray) -> tuple[complex, complex, complex]:
    e1, e2 = p[1] - p[0], p[2] - p[0]
    d1, d2 = q[1] - q[0], q[2] - q[0]
    system = np.array([[e1, np.conj(e1)], [e2, np.conj(e2)]])
    a, b = np.linalg.solve(system, np.array([d1, d2]))
    return complex(a), complex(b), complex(q[0] - a * p[0] - b * np.conj(p[0]))


def _barycentric_score(triangles: NDArray, z: NDArray) -> NDArray:
    """
    Smallest barycentric coordinate of every point in every triangle.
    """

    p0 = triangles[None, :, 0]
    e1 = triangles[None, :, 1] - p0
    e2 = triangles[None, :, 2] - p0
    d = z[:, None] - p0

    def cross(u, v):
        return (np.conj(u) * v).imag

    area = cross(e1, e2)
    l1 = cross(d, e2) / area
    l2 = cross(e1, d) / area
    return np.minimum(np.minimum(l1, l2), 1.0 - l1 - l2)


@cache
def _fold_triangulation(n_block: int) -> tuple[NDArray, NDArray, NDArray]:
    """
    Source triangles, target triangles and upper-polygon flags of the fold of
    `[1, 2] × [0, 2π(1 + n)]` onto itself, in local coordinates.
    """

    H = TWO_PI * (1 + n_block)
    y_mid = 0.5 * H
    y_center = H - np.pi * n_block

    A, B = 1 + 0j, 2 + 0j
    M, C = 2 + 1j * y_mid, 2 + 1j * H
    D, T = 1 + 1j * H, 1.5 + 1j * y_mid

    if n_block == 0:
        source = np.array([[A, B, C], [A, C, D]])
        return source, source.copy(), np.array([False, True])

    half = n_block // 2
    slit = D + (T - D) * np.arange(half + 1) / half
    upper_images = 1 + 1j * (H - TWO_PI * np.arange(half + 1))
    lower_images = 1 + 1j * (TWO_PI + TWO_PI * np.arange(half + 1))
    left = 1 + 1j * (H - H * np.arange(1, n_block + 1) / (1 + n_block))
    left_images = 1 + 1j * (TWO_PI - TWO_PI * np.arange(1, n_block + 1) / (1 + n_block))

    upper_source = np.concatenate([slit, [M, C]])
    upper_target = np.concatenate([upper_images, [M, C]])
    lower_source = np.concatenate([[A, B, M], slit[::-1], left])
    lower_target = np.concatenate([[A, B, M], lower_images[::-1], left_images])

    source, target, upper = [], [], []

    for center, poly, image, flag in (
        (1.75 + 0.75j * H, upper_source, upper_target, True),
        (1.25 + 0.25j * H, lower_source, lower_target, False),
    ):
        for k in range(poly.size):
            nxt = (k + 1) % poly.size
            source.append([center, poly[k], poly[nxt]])
            target.append([center, image[k], image[nxt]])
            upper.append(flag)

    return np.array(source), np.array(target), np.array(upper)


@dataclass(frozen=True)
class TriangulatedMap(PiecewiseMap):
    """
    Piecewise-affine fold `ψ₃` of one block rectangle
    `R_K = [1, 2] × [base, base + 2π(1 + n)]`, slit from its upper-left corner
    to its center.
    """

    base: float = 0.0  #: Lower end of `I_K`
    n_block: int = 0  #: Number of `𝒥₂` intervals in the block
    source: NDArray[np.complex128] = field(default_factory=lambda: np.zeros((0, 3), complex))
    target: NDArray[np.complex128] = field(default_factory=lambda: np.zeros((0, 3), complex))
    upper: NDArray[np.bool_] = field(default_factory=lambda: np.zeros(0, bool))
    coefficients: NDArray[np.complex128] = field(default_factory=lambda: np.zeros((0, 3), complex))

    @property
    def height(self) -> float:
        return TWO_PI * (1 + self.n_block)

    @property
    def slit(self) -> tuple[complex, complex]:
        """
        Corner and tip of `X_K`.
        """

        return complex(1 + 1j * (self.base + self.height)), complex(1.5 + 1j * (self.base + 0.5 * self.height))

    @property
    def center(self) -> float:
        """
        Imaginary part of the block center, where both slit sides meet.
        """

        return self.base + self.height - np.pi * self.n_block

    def slit_point(self, s: ArrayLike) -> NDArray[np.complex128]:
        corner, tip = self.slit
        return corner + (tip - corner) * np.asarray(s, dtype=float)

    def _locate(self, z: NDArray, triangles: NDArray, side: Optional[Side]) -> NDArray[np.int_]:
        score = _barycentric_score(triangles, z)

        if side is not None:
            preferred = self.upper if side is Side.UPPER else ~self.upper
            inside = score >= -_BARY_TOL
            score = np.where(inside & preferred[None, :], score + 2.0, np.where(inside, score + 1.0, score))

        return np.argmax(score, axis=1)

    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> NDArray[np.complex128]:
        z = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(z).ravel()
        local = flat - 1j * self.base
        k = self._locate(local, self.source, side)
        a, b, c = self.coefficients[k].T
        out = a * local + b * np.conj(local) + c + 1j * self.base
        return out.reshape(z.shape)

    def inverse(self, w: ArrayLike) -> NDArray[np.complex128]:
        w = np.asarray(w, dtype=complex)
        flat = np.atleast_1d(w).ravel()
        local = flat - 1j * self.base
        k = self._locate(local, self.target, None)
        a, b, c = self.coefficients[k].T
        d = local - c
        z = (np.conj(a) * d - b * np.conj(d)) / (np.abs(a) ** 2 - np.abs(b) ** 2)
        return (z + 1j * self.base).reshape(w.shape)

    def jacobian(self, z: ArrayLike, side: Optional[Side] = None) -> tuple[NDArray, NDArray]:
        z = np.asarray(z, dtype=complex)
        local = np.atleast_1d(z).ravel() - 1j * self.base
        k = self._locate(local, self.source, side)
        a, b, _ = self.coefficients[k].T
        return (a + b).reshape(z.shape), (1j * (a - b)).reshape(z.shape)

    def beltrami(self) -> NDArray[np.complex128]:
        """
        Exact complex dilatation `b / a` of every triangle.
        """

        return self.coefficients[:, 1] / self.coefficients[:, 0]


def build_psi3(base: float, n_block: int) -> TriangulatedMap:
    """
    Fold of the block rectangle starting at `base` with `n_block` intervals of
    `𝒥₂` above `J_K`.

    The left side maps linearly onto `J_K = [base, base + 2π]`, the two sides
    of the slit land on the block symmetrically about its center, and the
    top, bottom and right sides are fixed.

    :raises FoldingError: If `n_block` is odd or negative
    """

    if n_block < 0 or n_block % 2:
        raise FoldingError(n_block)

    source, target, upper = _fold_triangulation(n_block)
    coefficients = np.array([_affine_coefficients(p, q) for p, q in zip(source, target)])
    dilatation = (np.abs(coefficients[:, 0]) + np.abs(coefficients[:, 1])) / (
        np.abs(coefficients[:, 0]) - np.abs(coefficients[:, 1])
    )
    lipschitz = [
        max(abs(a) + abs(b), 1.0 / (abs(a) - abs(b))) for a, b, _ in coefficients
    ]
    shift = 1j * base
    cells = tuple(
        Cell(p + shift, q + shift, float(k), float(lip))
        for p, q, k, lip in zip(source, target, dilatation, lipschitz)
    )

    return TriangulatedMap(
        cells=cells,
        domain=f"U_K over [{base:.6g}, {base + TWO_PI * (1 + n_block):.6g}]",
        codomain="R_K",
        base=float(base),
        n_block=n_block,
        source=source,
        target=target,
        upper=upper,
        coefficients=coefficients,
    )


@dataclass(frozen=True)
class FoldingMap(PiecewiseMap):
    """
    `ψ₃` over the whole aligned window, one fold per block.
    """

    lattice: NDArray[np.int_] = field(default_factory=lambda: np.zeros(0, int))
    folds: tuple[TriangulatedMap, ...] = ()

    def _apply(self, z: ArrayLike, method: Callable[[TriangulatedMap, NDArray], NDArray]) -> NDArray:
        z = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(z).ravel()
        out = flat.copy()
        edges = TWO_PI * self.lattice
        block = np.searchsorted(edges, flat.imag, side="right") - 1
        active = (block >= 0) & (block < len(self.folds)) & (flat.real >= 1.0) & (flat.real <= 2.0)

        for i, fold in enumerate(self.folds):
            mask = active & (block == i)

            if fold.n_block and np.any(mask):
                out[mask] = method(fold, flat[mask])

        return out.reshape(z.shape)

    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> NDArray[np.complex128]:
        return self._apply(z, lambda fold, pts: fold(pts, side=side))

    def inverse(self, w: ArrayLike) -> NDArray[np.complex128]:
        return self._apply(w, lambda fold, pts: fold.inverse(pts))

    def jacobian(self, z: ArrayLike, side: Optional[Side] = None) -> tuple[NDArray, NDArray]:
        z = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(z).ravel()
        fx = np.ones(flat.shape, dtype=complex)
        fy = np.full(flat.shape, 1j)
        block = np.searchsorted(TWO_PI * self.lattice, flat.imag, side="right") - 1

        for i, fold in enumerate(self.folds):
            mask = (block == i) & (flat.real >= 1.0) & (flat.real <= 2.0)

            if fold.n_block and np.any(mask):
                fx[mask], fy[mask] = fold.jacobian(flat[mask], side=side)

        return fx.reshape(z.shape), fy.reshape(z.shape)


def build_folding(plan: AlignmentPlan) -> FoldingMap:
    """
    `ψ₃` for every block of the plan.
    """

    folds = tuple(
        build_psi3(TWO_PI * lo, int(hi - lo - 1)) for lo, hi in zip(plan.lattice[:-1], plan.lattice[1:])
    )
    return FoldingMap(
        cells=tuple(cell for fold in folds if fold.n_block for cell in fold.cells),
        domain="strip minus slits, window coordinates",
        codomain="strip, window coordinates",
        lattice=plan.lattice,
        folds=folds,
    )


def sigma_j(
    z: ArrayLike,
    plan: AlignmentPlan,
    profile: FoldProfile = FoldProfile.COSH,
) -> Union[complex, NDArray[np.complex128]]:
    """
    `exp` on `𝒥₁` rectangles and on `Re z >= 2`; on `𝒥₂` rectangles the
    radial blend `e^x [(1 - t) h(y) + t e^{iy}]`, `t = x - 1`, which is
    `e · h(y)` on `L₁` and `e^z` on `L₂`.
    """

    arr = np.asarray(z, dtype=complex)
    x, y = arr.real, arr.imag

    with np.errstate(over="ignore"):
        out = np.exp(arr)

    k = np.floor(y / TWO_PI).astype(int)
    fold = (x < 2.0) & (plan.classify(k) == 2)

    if np.any(fold):
        t = np.clip(x[fold] - 1.0, 0.0, 1.0)
        yf = y[fold]
        out = np.array(out, dtype=complex)
        out[fold] = np.exp(x[fold]) * ((1.0 - t) * profile(yf) + t * np.exp(1j * yf))

    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StripAssembly:
    """
    Every stage of `g_j` for one tract.
    """

    tract: int  #: Tract index
    partition: LevelPartition  #: `ℒ_j`
    plan: AlignmentPlan
    psi1: StripInterpolation
    psi2: StripInterpolation
    psi3: FoldingMap
    profile: FoldProfile = FoldProfile.COSH
    matching: ModulusMatching = ModulusMatching.STRETCH

    def __call__(self, z: ArrayLike, side: Optional[Side] = None) -> Union[complex, NDArray]:
        return compose_gj(z, self, side=side)

    @property
    def window(self) -> tuple[float, float]:
        """
        Range of `Im z` where the construction is defined by data.
        """

        return float(self.plan.endpoints[0]), float(self.plan.endpoints[-1])

    def stage_dilatation(self) -> dict[str, float]:
        return {
            "psi1": self.psi1.max_dilatation,
            "psi2": self.psi2.max_dilatation,
            "psi3": self.psi3.max_dilatation,
        }

    def pullback(self, w: ArrayLike) -> NDArray[np.complex128]:
        """
        Point of the strip sent to `w` by `ψ₂ ∘ ψ₁`.
        """

        return self.psi1.inverse(self.psi2.inverse(w))

    def slit_points(self, per_block: int = 16) -> tuple[NDArray[np.complex128], NDArray[np.int_]]:
        """
        Interior points of every slit `X_K` in strip coordinates, with the
        index of their block.
        """

        s = (np.arange(per_block) + 0.5) / per_block
        points, owner = [], []

        for i, fold in enumerate(self.psi3.folds):
            if fold.n_block:
                points.append(self.pullback(fold.slit_point(s)))
                owner.append(np.full(per_block, i))

        if not points:
            return np.zeros(0, complex), np.zeros(0, int)

        return np.concatenate(points), np.concatenate(owner)

    def fold_vertices(self) -> NDArray[np.complex128]:
        """
        Slit vertices (corner, subdivision points, tip) in strip coordinates.
        """

        vertices = []

        for fold in self.psi3.folds:
            if fold.n_block:
                s = np.arange(fold.n_block // 2 + 1) / (fold.n_block // 2)
                vertices.append(self.pullback(fold.slit_point(s)))

        return np.concatenate(vertices) if vertices else np.zeros(0, complex)

    def to_json(self) -> dict[str, Any]:
        return {
            "tract": self.tract,
            "profile": self.profile.value,
            "matching": self.matching.value,
            "partition": self.partition.to_json(),
            "plan": self.plan.to_json(),
            "stage_dilatation": self.stage_dilatation(),
            "psi3": self.psi3.to_json(),
        }


def build_strip_assembly(
    partition: LevelPartition,
    window: int,
    profile: FoldProfile = FoldProfile.COSH,
    matching: ModulusMatching = ModulusMatching.STRETCH,
) -> StripAssembly:
    """
    Build `ψ₁`, the alignment, `ψ₂` and `ψ₃` for one tract.
    """

    plan = align_partitions(partition, window)
    assembly = StripAssembly(
        tract=partition.tract,
        partition=partition,
        plan=plan,
        psi1=linearize_partition(partition),
        psi2=build_psi2(plan),
        psi3=build_folding(plan),
        profile=profile,
        matching=matching,
    )
    logger.info(f"tract {partition.tract}: strip assembly with stage dilatation {assembly.stage_dilatation()}")
    return assembly


def compose_gj(
    z: ArrayLike,
    assembly: StripAssembly,
    side: Optional[Side] = None,
) -> Union[complex, NDArray[np.complex128]]:
    """
    `g_j = ϖ ∘ σ_j ∘ ψ₃ ∘ ψ₂ ∘ ψ₁` on the strip, `ϖ` being the modulus
    matching stage.

    :param side: Side of the slit used for points lying on one
    """

    arr = np.asarray(z, dtype=complex)
    w = assembly.psi3(assembly.psi2(assembly.psi1(arr)), side=side)
    out = match_modulus(sigma_j(w, assembly.plan, assembly.profile), assembly.matching)
    return complex(out) if out.ndim == 0 else out
