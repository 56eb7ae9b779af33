"""
Hyperbolic geometry of the unit disk: Möbius normalizations, geodesics over
boundary arcs, the Poisson kernel and the harmonic measure of arcs.

Distances use the metric `|dz| / (1 - |z|^2)`, so that `ρ(0, r) = atanh(r)`.

.. code-block:: python
   :caption: Example

   from qcfold import hyperbolic_disk as hd
   import numpy as np

   arc = hd.ArcOnCircle.between(-np.pi / 6, np.pi / 6)
   top = hd.geodesic_top_point(arc)

   assert abs(hd.harmonic_measure_arc(arc, top.a) - 0.5) < 1e-12
"""

from dataclasses import dataclass
import numpy as np
from scipy import integrate

from numpy.typing import ArrayLike, NDArray
from typing import Union


TWO_PI = 2.0 * np.pi
_ARC_TOL = 1e-12


Complex = Union[complex, NDArray[np.complex128]]


class DomainError(ValueError):
    """
    Raised when an argument lies outside the domain of an operation.
    """

    def __init__(self, what: str):
        super().__init__(f"outside domain: {what}")


@dataclass(frozen=True)
class ArcOnCircle:
    """
    A proper closed subarc of the unit circle, traversed counterclockwise.

    `theta_lo` lives in `[0, 2π)`; an arc crossing angle zero is stored with
    `theta_hi > 2π`.
    """

    theta_lo: float  #: Starting angle, canonical in [0, 2π)
    theta_hi: float  #: Ending angle, theta_lo < theta_hi < theta_lo + 2π

    @classmethod
    def between(cls, theta_lo: float, theta_hi: float) -> "ArcOnCircle":
        """
        Build the arc going counterclockwise from `theta_lo` to `theta_hi`.

        :param theta_lo: Starting angle (any real)
        :param theta_hi: Ending angle, strictly greater than `theta_lo`
        :raises DomainError: If the arc is empty or covers the whole circle
        """

        length = float(theta_hi) - float(theta_lo)

        if not _ARC_TOL < length < TWO_PI - _ARC_TOL:
            raise DomainError(f"arc of length {length} is not a proper subarc")

        lo = float(np.mod(theta_lo, TWO_PI))
        return cls(theta_lo=lo, theta_hi=lo + length)

    @classmethod
    def from_points(cls, start: complex, end: complex) -> "ArcOnCircle":
        """
        Build the counterclockwise arc between two points of the circle.
        """

        lo = float(np.angle(start))
        length = float(np.mod(np.angle(end) - lo, TWO_PI))
        return cls.between(lo, lo + length)

    @property
    def length(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def center(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    @property
    def endpoints(self) -> tuple[complex, complex]:
        return complex(np.exp(1j * self.theta_lo)), complex(np.exp(1j * self.theta_hi))

    def rotate(self, phi: float) -> "ArcOnCircle":
        return ArcOnCircle.between(self.theta_lo + phi, self.theta_hi + phi)

    def contains(self, theta: ArrayLike) -> NDArray[np.bool_]:
        """
        Whether the angles lie on the closed arc.
        """

        offset = np.mod(np.asarray(theta, dtype=float) - self.theta_lo, TWO_PI)
        return offset <= self.length + _ARC_TOL


@dataclass(frozen=True)
class GeodesicTop:
    """
    The point of the geodesic over an arc that is closest to the origin.
    """

    a: complex  #: Point of the open unit disk


def _require_disk(z: ArrayLike, what: str, closed: bool = False) -> NDArray:
    arr = np.asarray(z, dtype=complex)
    modulus = np.abs(arr)
    bad = modulus > 1.0 + 1e-12 if closed else modulus >= 1.0

    if np.any(bad) or np.any(~np.isfinite(arr)):
        raise DomainError(f"{what} must lie in the {'closed' if closed else 'open'} unit disk")

    return arr


def _unwrap_scalar(value: NDArray, like: ArrayLike):
    if np.ndim(like) == 0:
        return value.item()

    return value


def mobius_to_zero(a: complex, z: ArrayLike) -> Complex:
    """
    The disk automorphism `(z - a) / (1 - conj(a) z)` sending `a` to 0.

    :param a: Point of the open disk
    :param z: Point(s) of the closed disk
    :raises DomainError: If `a` is not in the open disk or `z` is outside the closed one
    """

    a = complex(_require_disk(a, "a"))
    arr = _require_disk(z, "z", closed=True)
    value = (arr - a) / (1.0 - np.conj(a) * arr)
    return _unwrap_scalar(value, z)


def hyperbolic_distance(z1: ArrayLike, z2: ArrayLike) -> Union[float, NDArray]:
    """
    Hyperbolic distance for the metric `|dz| / (1 - |z|^2)`.

    :raises DomainError: If a point is on or outside the unit circle
    """

    p = _require_disk(z1, "z1")
    q = _require_disk(z2, "z2")
    ratio = np.abs(p - q) / np.abs(1.0 - np.conj(p) * q)
    value = np.arctanh(np.minimum(ratio, 1.0))

    if np.ndim(value) == 0:
        return float(value)

    return value


def geodesic_top_point(arc: ArcOnCircle) -> GeodesicTop:
    """
    Point of the geodesic `γ_I` over the arc that is closest to the origin.

    For the arc of half-width `φ` centred on angle `c`, this is
    `e^{ic} cos φ / (1 + sin φ)`; arcs longer than a semicircle give a point on
    the opposite ray.
    """

    half = 0.5 * arc.length
    a = np.exp(1j * arc.center) * np.cos(half) / (1.0 + np.sin(half))
    return GeodesicTop(a=complex(a))


def geodesic_point(arc: ArcOnCircle, s: ArrayLike) -> Complex:
    """
    Point(s) of `γ_I` at signed hyperbolic distance `s` from the top point,
    counterclockwise direction positive.
    """

    r = abs(np.cos(0.5 * arc.length) / (1.0 + np.sin(0.5 * arc.length)))
    direction = arc.center if arc.length <= np.pi else arc.center + np.pi
    sign = 1.0 if arc.length <= np.pi else -1.0
    u = 1j * sign * np.tanh(np.asarray(s, dtype=float))
    value = np.exp(1j * direction) * (u + r) / (1.0 + r * u)
    return _unwrap_scalar(value, s)


def arcs_overlap(first: ArcOnCircle, second: ArcOnCircle) -> bool:
    """
    Whether the interiors of two arcs intersect.
    """

    start = np.mod(second.theta_lo - first.theta_hi, TWO_PI)
    return bool(start + second.length > TWO_PI - first.length + 1e-10)


def arc_distance(first: ArcOnCircle, second: ArcOnCircle) -> float:
    """
    Arc-length distance between two arcs, zero when they overlap.
    """

    if arcs_overlap(first, second):
        return 0.0

    after = np.mod(second.theta_lo - first.theta_hi, TWO_PI)
    before = np.mod(first.theta_lo - second.theta_hi, TWO_PI)
    return float(min(after, before))


def is_epsilon_separated(first: ArcOnCircle, second: ArcOnCircle, eps: float) -> bool:
    """
    `dist(I, J) >= eps * max(|I|, |J|)` for disjoint arcs.
    """

    if arcs_overlap(first, second):
        return False

    return arc_distance(first, second) >= eps * max(first.length, second.length)


class _HalfPlaneChart:
    """
    Möbius map from the disk to the upper half-plane sending the endpoints of
    an arc to 0 and infinity.
    """

    def __init__(self, arc: ArcOnCircle):
        self.p, self.q = (np.complex128(e) for e in arc.endpoints)
        outside = np.exp(1j * (arc.theta_hi + 0.5 * (TWO_PI - arc.length)))
        k = np.exp(-1j * np.angle(self._ratio(outside)))

        if (k * self._ratio(0.0)).imag < 0:
            k = -k

        self.k = k

    def _ratio(self, z):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (z - self.p) / (z - self.q)

    def forward(self, z):
        return self.k * self._ratio(z)

    def inverse(self, w):
        m = w / self.k
        return (self.p - self.q * m) / (1.0 - m)


def closest_point_to_arc(first: ArcOnCircle, second: ArcOnCircle) -> complex:
    """
    The point `a_I^J` of the geodesic over `first` closest to the geodesic
    over `second`.

    :raises DomainError: If the arcs overlap or share an endpoint
    """

    if arcs_overlap(first, second):
        raise DomainError("closest point needs disjoint arcs")

    if arc_distance(first, second) < 1e-12:
        raise DomainError("arcs share an endpoint, the geodesics meet on the circle")

    chart = _HalfPlaneChart(first)
    x1, x2 = (chart.forward(e).real for e in second.endpoints)
    return complex(chart.inverse(1j * np.sqrt(x1 * x2)))


def poisson_kernel(a: ArrayLike, theta: ArrayLike) -> Union[float, NDArray]:
    """
    `P_a(θ) = (1 - |a|^2) / |e^{iθ} - a|^2`.

    :raises DomainError: If `a` is not in the open disk
    """

    arr = _require_disk(a, "a")
    value = (1.0 - np.abs(arr) ** 2) / np.abs(np.exp(1j * np.asarray(theta)) - arr) ** 2

    if np.ndim(value) == 0:
        return float(value)

    return value


def harmonic_measure_arc(arc: ArcOnCircle, a: ArrayLike) -> Union[float, NDArray]:
    """
    `ω(I, a, 𝔻)`, computed as the normalized length of the image of the arc
    under the automorphism sending `a` to the origin.

    :param arc: Proper arc
    :param a: Point(s) of the open disk
    """

    arr = _require_disk(a, "a")
    lo, hi = arc.endpoints
    image_lo = (lo - arr) / (1.0 - np.conj(arr) * lo)
    image_hi = (hi - arr) / (1.0 - np.conj(arr) * hi)
    sweep = np.mod(np.angle(image_hi) - np.angle(image_lo), TWO_PI)
    value = sweep / TWO_PI

    if np.ndim(value) == 0:
        return float(value)

    return value


def poisson_integral(arc: ArcOnCircle, a: complex) -> float:
    """
    Harmonic measure by adaptive quadrature of the Poisson kernel.
    """

    a = complex(_require_disk(a, "a"))
    value, _ = integrate.quad(
        lambda t: poisson_kernel(a, t),
        arc.theta_lo,
        arc.theta_hi,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=400,
    )
    return value / TWO_PI


def harnack_bound(z: complex, w: complex) -> float:
    """
    Upper bound `e^{2ρ(z, w)}` for `u(z) / u(w)` over positive harmonic `u`.
    """

    return float(np.exp(2.0 * hyperbolic_distance(z, w)))


def decay_exponent(distances: ArrayLike, measures: ArrayLike) -> float:
    """
    Least-squares slope of `-log ω` against the hyperbolic distance.
    """

    slope, _ = np.polyfit(np.asarray(distances), -np.log(np.asarray(measures)), 1)
    return float(slope)
