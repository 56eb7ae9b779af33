"""
Model domains: a finite collection of tracts `Ω_j`, each with a conformal map
`τ_j` onto the right half-plane, and the model function `F = exp ∘ τ`.

Tracts come from a closed-form catalogue. Each entry may be post-composed
with `τ ↦ aτ + ib` (`scale=a > 0`, `shift=b` real) to explore the
normalization family.

.. code-block:: python
   :caption: Example

   from qcfold import model_domain as md
   import numpy as np

   model = md.Model(tracts=md.catalogue_tract(md.TractKind.HALF_PLANE, c=2.0))

   assert abs(md.model_eval(model, 3.0) - np.e) < 1e-12
   assert md.in_level_set(model, 3.5, md.LevelBand(delta=1.0, rho=2.0))

The rescaling maps `σ_ρ`, `ψ_ρ` and `φ_ρ` reduce a model at level `ρ` to
level 1; they satisfy `F ∘ ψ_ρ = φ_ρ ∘ F` on `Ω`.
"""

from qcfold import logging
from qcfold.hyperbolic_disk import DomainError

from dataclasses import dataclass, field
from enum import Enum, auto
import numpy as np

from collections.abc import Callable
from numpy.typing import ArrayLike, NDArray
from typing import Any, Union


logger = logging.getLogger(__name__)

ComplexMap = Callable[[NDArray[np.complex128]], NDArray[np.complex128]]


class TractParameterError(ValueError):
    """
    Raised when a catalogue entry or a model is given invalid parameters.
    """

    def __init__(self, reason: str):
        super().__init__(f"invalid tract parameters: {reason}")


class OutsideDomainError(DomainError):
    """
    Raised when the model is evaluated at a point that lies in no tract.
    """

    def __init__(self, z: complex):
        super().__init__(f"{z} lies in no tract of the model")


class TractKind(Enum):
    """
    Closed-form tracts available to scenarios.
    """

    HALF_PLANE = auto()  #: `{Re z > c}` with `τ(z) = z - c`
    SECTOR = auto()  #: `{|arg z| < π/(2p), Re z^p > c}` with `τ(z) = z^p - c`
    PAIRED_HALF_PLANES = auto()  #: `{Re z > c}` and `{Re z < -c}` with `τ(z) = ±z - c`

    @classmethod
    def parse(cls, name: str) -> "TractKind":
        try:
            return cls[name.upper()]

        except KeyError:
            raise TractParameterError(f"unknown tract kind {name!r}") from None


@dataclass(frozen=True)
class Tract:
    """
    One component `Ω_j` of the model domain.

    All callables accept and return numpy arrays.
    """

    forward: ComplexMap  #: `τ_j`, from `Ω_j` onto the right half-plane
    inverse: ComplexMap  #: `τ_j⁻¹`, from the right half-plane onto `Ω_j`
    contains: Callable[[NDArray[np.complex128]], NDArray[np.bool_]]  #: Membership in `Ω_j`
    label: str  #: Identifier, unique within a model
    params: dict[str, Any] = field(default_factory=dict, compare=False)  #: Catalogue parameters

    def describe(self) -> dict[str, Any]:
        return {"label": self.label, **self.params}


@dataclass(frozen=True)
class LevelBand:
    """
    The level set `Ω(δ, ρ) = {z ∈ Ω : e^δ < |F(z)| < e^ρ}`.

    An infinite `rho` gives the one-sided set `Ω(δ)`.
    """

    delta: float  #: Lower level, `δ >= 0`
    rho: float = np.inf  #: Upper level, `ρ > δ`

    def __post_init__(self):
        if self.delta < 0 or not self.delta < self.rho:
            raise DomainError(f"level band needs 0 <= delta < rho, got ({self.delta}, {self.rho})")

    @classmethod
    def beyond(cls, level: float) -> "LevelBand":
        """
        The one-sided set `Ω(level)`.
        """

        return cls(delta=level)


def _as_complex(z: ArrayLike) -> NDArray[np.complex128]:
    return np.asarray(z, dtype=complex)


def _half_plane(c: float, scale: float, shift: float, sign: float, label: str) -> Tract:
    def forward(z):
        return scale * (sign * _as_complex(z) - c) + 1j * shift

    def inverse(w):
        return sign * ((_as_complex(w) - 1j * shift) / scale + c)

    def contains(z):
        return sign * _as_complex(z).real > c

    params = {"kind": "half_plane", "c": c, "scale": scale, "shift": shift, "sign": sign}
    return Tract(forward=forward, inverse=inverse, contains=contains, label=label, params=params)


def _sector(p: float, c: float, scale: float, shift: float) -> Tract:
    opening = np.pi / (2.0 * p)

    def power(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.exp(p * np.log(_as_complex(z)))

    def forward(z):
        return scale * (power(z) - c) + 1j * shift

    def inverse(w):
        u = (_as_complex(w) - 1j * shift) / scale + c
        return np.exp(np.log(u) / p)

    def contains(z):
        arr = _as_complex(z)
        inside = (np.abs(np.angle(arr)) < opening) & (arr != 0)
        return inside & (power(arr).real > c)

    params = {"kind": "sector", "p": p, "c": c, "scale": scale, "shift": shift}
    return Tract(forward=forward, inverse=inverse, contains=contains, label="sector", params=params)


def catalogue_tract(
    kind: Union[TractKind, str],
    c: float = 0.0,
    p: float = 1.0,
    scale: float = 1.0,
    shift: float = 0.0,
) -> tuple[Tract, ...]:
    """
    Build closed-form tracts.

    :param kind: Catalogue entry
    :param c: Threshold of the half-planes, or the real offset of a sector
    :param p: Sector exponent, the opening is `π/p`
    :param scale: Positive multiplier `a` of the normalization `aτ + ib`
    :param shift: Imaginary offset `b` of the normalization
    :returns: One tract, or two for `PAIRED_HALF_PLANES`
    :raises TractParameterError: If a parameter is out of range
    """

    if isinstance(kind, str):
        kind = TractKind.parse(kind)

    if not scale > 0:
        raise TractParameterError(f"scale must be positive, got {scale}")

    match kind:
        case TractKind.HALF_PLANE:
            return (_half_plane(c, scale, shift, 1.0, "half_plane"),)

        case TractKind.SECTOR:
            if p < 1:
                raise TractParameterError(f"sector exponent must be >= 1, got {p}")

            if c < 0:
                raise TractParameterError(f"sector offset must be >= 0, got {c}")

            return (_sector(p, c, scale, shift),)

        case TractKind.PAIRED_HALF_PLANES:
            if not c > 0:
                raise TractParameterError(f"paired half-planes need c > 0, got {c}")

            return (
                _half_plane(c, scale, shift, 1.0, "half_plane+"),
                _half_plane(c, scale, shift, -1.0, "half_plane-"),
            )


def _tract_samples(tract: Tract) -> NDArray[np.complex128]:
    x = np.array([1e-9, 1e-3, 0.5, 1.0, 3.0])
    y = np.concatenate([-np.logspace(3, -3, 80), [0.0], np.logspace(-3, 3, 80)])
    return tract.inverse((x[:, None] + 1j * y[None, :]).ravel())


@dataclass(frozen=True)
class Model:
    """
    A model domain with its model function `F = exp ∘ τ`.

    Construction runs sampled checks of pairwise disjointness and, when
    `disjoint_type` is set, of `closure(Ω) ∩ {|z| <= 1} = ∅`.
    """

    tracts: tuple[Tract, ...]  #: Components of the model domain
    disjoint_type: bool = True  #: Whether the closure of Ω misses the closed unit disk

    def __post_init__(self):
        if not self.tracts:
            raise TractParameterError("a model needs at least one tract")

        labels = [tract.label for tract in self.tracts]

        if len(set(labels)) != len(labels):
            raise TractParameterError(f"tract labels must be unique, got {labels}")

        for j, tract in enumerate(self.tracts):
            samples = _tract_samples(tract)

            for k, other in enumerate(self.tracts):
                if k != j and np.any(other.contains(samples)):
                    raise TractParameterError(f"tracts {tract.label} and {other.label} intersect")

            if self.disjoint_type and np.min(np.abs(samples)) <= 1.0:
                raise TractParameterError(
                    f"tract {tract.label} meets the closed unit disk, model is not of disjoint type"
                )

        logger.debug(f"model with tracts {labels} validated")

    def describe(self) -> dict[str, Any]:
        return {
            "tracts": [tract.describe() for tract in self.tracts],
            "disjoint_type": self.disjoint_type,
        }

    def locate(self, z: ArrayLike) -> NDArray[np.int_]:
        """
        Index of the tract containing each point, `-1` outside `Ω`.
        """

        arr = _as_complex(z)
        index = np.full(arr.shape, -1, dtype=int)

        for j, tract in enumerate(self.tracts):
            index[(index < 0) & tract.contains(arr)] = j

        return index

    def tau(self, z: ArrayLike) -> tuple[NDArray[np.int_], NDArray[np.complex128]]:
        """
        Containing tract and `τ_j(z)` per point, `nan` outside `Ω`.
        """

        arr = _as_complex(z)
        index = self.locate(arr)
        value = np.full(arr.shape, np.nan + 0j, dtype=complex)

        for j, tract in enumerate(self.tracts):
            mask = index == j

            if np.any(mask):
                value[mask] = tract.forward(arr[mask])

        return index, value

    def evaluate(self, z: ArrayLike) -> NDArray[np.complex128]:
        """
        Batch model function, `nan` outside `Ω`.
        """

        _, value = self.tau(z)

        with np.errstate(over="ignore"):
            return np.exp(value)


def model_eval(m: Model, z: complex) -> complex:
    """
    `F(z) = exp(τ_j(z))` for the tract containing `z`.

    :raises OutsideDomainError: If `z` lies in no tract
    """

    index, value = m.tau(z)

    if index < 0:
        raise OutsideDomainError(z)

    return complex(np.exp(value))


def in_level_set(m: Model, z: ArrayLike, band: LevelBand) -> Union[bool, NDArray[np.bool_]]:
    """
    Membership in `Ω(δ, ρ)`, or in `Ω(δ)` for a one-sided band.
    """

    index, value = m.tau(z)
    real = np.where(index >= 0, value.real, -np.inf)
    inside = (index >= 0) & (real > band.delta) & (real < band.rho)

    if np.ndim(inside) == 0:
        return bool(inside)

    return inside


@dataclass(frozen=True)
class BoundaryPartition:
    """
    The windowed partition `𝒥_j` of `γ_j = ∂Ω_j(1)`.
    """

    tract: int  #: Tract index
    ks: NDArray[np.int_]  #: Indices `-W..W`
    points: NDArray[np.complex128]  #: `τ_j⁻¹(1 + 2πik)`
    lengths: NDArray[np.float64]  #: Arc length of `γ_j` between consecutive points
    adjacent_ratio: float  #: Largest ratio of adjacent segment lengths


def boundary_partition(m: Model, j: int, window: int, subdivisions: int = 64) -> BoundaryPartition:
    """
    Points `τ_j⁻¹(1 + 2πik)` for `k = -W..W` along `γ_j`, with the arc length
    of every segment between them.

    :raises DomainError: If the window is not positive
    """

    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")

    tract = m.tracts[j]
    ks = np.arange(-window, window + 1)
    points = tract.inverse(1.0 + 2j * np.pi * ks)

    t = 2.0 * np.pi * (ks[:-1, None] + np.linspace(0.0, 1.0, subdivisions + 1)[None, :])
    trace = tract.inverse(1.0 + 1j * t)
    lengths = np.sum(np.abs(np.diff(trace, axis=1)), axis=1)
    ratios = np.maximum(lengths[1:] / lengths[:-1], lengths[:-1] / lengths[1:])

    return BoundaryPartition(
        tract=j,
        ks=ks,
        points=points,
        lengths=lengths,
        adjacent_ratio=float(np.max(ratios)) if ratios.size else 1.0,
    )


def _check_rho(rho: float) -> None:
    if not 0 < rho <= 1:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")


def rescale_L(x: ArrayLike, rho: float) -> Union[float, NDArray]:
    """
    The piecewise-linear map `L` sending `ρ/2 ↦ ρ/2`, `ρ ↦ 1`, `2ρ ↦ 2`,
    extended by `x ↦ x + 2 - 2ρ` beyond `2ρ`.

    :raises DomainError: If `x <= 0` or `ρ` is outside `(0, 1]`
    """

    _check_rho(rho)
    arr = np.asarray(x, dtype=float)

    if np.any(arr <= 0):
        raise DomainError("L is defined for x > 0 only")

    half = 0.5 * rho
    flat = np.atleast_1d(arr)
    value = np.select(
        [flat <= half, flat <= rho, flat <= 2.0 * rho],
        [flat, half + (2.0 - rho) / rho * (flat - half), flat / rho],
        flat + 2.0 - 2.0 * rho,
    ).reshape(arr.shape)

    if np.ndim(value) == 0:
        return float(value)

    return value


def rescale_L_inverse(u: ArrayLike, rho: float) -> Union[float, NDArray]:
    _check_rho(rho)
    arr = np.asarray(u, dtype=float)

    if np.any(arr <= 0):
        raise DomainError("L⁻¹ is defined for u > 0 only")

    half = 0.5 * rho
    flat = np.atleast_1d(arr)
    value = np.select(
        [flat <= half, flat <= 1.0, flat <= 2.0],
        [flat, half + rho / (2.0 - rho) * (flat - half), flat * rho],
        flat - 2.0 + 2.0 * rho,
    ).reshape(arr.shape)

    if np.ndim(value) == 0:
        return float(value)

    return value


def rescale_sigma(z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    """
    `σ_ρ(x + iy) = L(x) + iy` on the right half-plane.
    """

    arr = _as_complex(z)
    value = rescale_L(arr.real, rho) + 1j * arr.imag
    return complex(value) if np.ndim(value) == 0 else value


def rescale_sigma_inverse(z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    arr = _as_complex(z)
    value = rescale_L_inverse(arr.real, rho) + 1j * arr.imag
    return complex(value) if np.ndim(value) == 0 else value


def _rescale_tracts(m: Model, z: ArrayLike, rho: float, stage: Callable) -> Union[complex, NDArray]:
    _check_rho(rho)
    arr = _as_complex(z)
    out = arr.copy()
    index, value = m.tau(arr)

    for j, tract in enumerate(m.tracts):
        mask = index == j

        if np.any(mask):
            out[mask] = tract.inverse(stage(value[mask], rho))

    return complex(out) if np.ndim(out) == 0 else out


def rescale_psi(m: Model, z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    """
    `ψ_ρ = τ_j⁻¹ ∘ σ_ρ ∘ τ_j` on `Ω_j`, identity off `Ω`.
    """

    return _rescale_tracts(m, z, rho, rescale_sigma)


def rescale_psi_inverse(m: Model, z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    return _rescale_tracts(m, z, rho, rescale_sigma_inverse)


def _rescale_modulus(z: ArrayLike, rho: float, radial: Callable) -> Union[complex, NDArray]:
    _check_rho(rho)
    arr = _as_complex(z)
    modulus = np.abs(arr)
    outer = modulus >= np.exp(0.5 * rho)
    out = arr.copy()

    if np.any(outer):
        log_modulus = np.log(modulus[outer])
        out[outer] = np.exp(radial(log_modulus, rho)) * arr[outer] / modulus[outer]

    return complex(out) if np.ndim(out) == 0 else out


def rescale_phi(z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    """
    `φ_ρ = exp ∘ σ_ρ ∘ log` outside `|z| < e^{ρ/2}`, identity inside.
    """

    return _rescale_modulus(z, rho, rescale_L)


def rescale_phi_inverse(z: ArrayLike, rho: float) -> Union[complex, NDArray]:
    return _rescale_modulus(z, rho, rescale_L_inverse)


def straddle_pairs(
    tract: Tract,
    level: float,
    ys: ArrayLike,
    delta: float,
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """
    Points `τ⁻¹(level ∓ δ + iy)` on either side of the level curve
    `Re τ = level`.
    """

    ys = np.asarray(ys, dtype=float)
    inner = tract.inverse(level - delta + 1j * ys)
    outer = tract.inverse(level + delta + 1j * ys)
    return inner, outer


def extrapolate_gap(
    residual_wide: ArrayLike,
    residual_narrow: ArrayLike,
    wide: float,
    narrow: float,
) -> Union[float, NDArray]:
    """
    Linear extrapolation to a zero gap of a residual measured at two gaps.
    """

    r1 = np.asarray(residual_wide, dtype=float)
    r2 = np.asarray(residual_narrow, dtype=float)
    value = r2 - (r1 - r2) * narrow / (wide - narrow)
    return float(value) if np.ndim(value) == 0 else value
