"""
Numerical conformal map `Ψ: W → 𝔻` of the complement `W` of the closed level
set `Ω(1)`.

The map is built by an inversion-preconditioned geodesic zipper:

 - `ι(z) = 1 / (z - z₀)` with `z₀ = τ₀⁻¹(2)` makes `ι(W)` bounded;
 - the boundary curves `γ_j = τ_j⁻¹(1 + it)` are sampled at `t = tan(s)` for
   `s` uniform in `(-π/2, π/2)` and traversed with `W` on the left;
 - every sample is welded to the real line by a slit map, the last map opens
   the remaining arc onto a half-plane, and a Möbius normalization sends the
   origin to 0 with positive derivative.

Within a thin layer along each `γ_j` the interior evaluator switches to the
analytic continuation of the sampled boundary correspondence, so that values
next to the boundary agree with the boundary data used downstream.

.. code-block:: python
   :caption: Example

   from qcfold import model_domain as md, riemann_map as rmap

   model = md.Model(tracts=md.catalogue_tract("half_plane", c=2.0))
   psi = rmap.build_riemann_map(model, resolution=1024)

   psi.interior_evaluator(0.0)  # 0
   psi.inverse_evaluator(0.25)  # close to 1.2
"""

from qcfold import logging
from qcfold.hyperbolic_disk import ArcOnCircle, DomainError
from qcfold.model_domain import Model

from dataclasses import dataclass, field, replace
from pathlib import Path
import numpy as np
from scipy.interpolate import PchipInterpolator
import tenacity

from numpy.typing import ArrayLike, NDArray
from typing import Optional, Union


logger = logging.getLogger(__name__)

CACHE_VERSION = 1
LAYER_WIDTH = 1e-3
_FD_STEP = 1e-6


class BuildError(RuntimeError):
    """
    Raised when the Riemann map cannot be built at the requested resolution.
    """

    def __init__(self, reason: str):
        super().__init__(f"riemann map build failed: {reason}")


class InverseError(RuntimeError):
    """
    Raised when Newton's method fails from every seed.
    """

    def __init__(self, w: complex, attempts: int):
        super().__init__(f"inverse of {w} did not converge after {attempts} seeds")


class _NewtonStalled(Exception):
    pass


@dataclass(frozen=True)
class _Zipper:
    z0: complex
    z1: complex
    b: NDArray[np.float64]
    c: NDArray[np.float64]
    zeta0: float
    sign: float
    v0: complex
    rotation: complex


def _slit_forward(w: NDArray, b: float, c: float) -> NDArray:
    if not np.isinf(b):
        w = w / (1.0 - w / b)

    with np.errstate(divide="ignore", invalid="ignore"):
        return w * np.sqrt(1.0 + (c / w) ** 2)


def _slit_inverse(zeta: NDArray, b: float, c: float) -> NDArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        w = zeta * np.sqrt(1.0 - (c / zeta) ** 2)

    w = np.where(w.imag < 0, -w, w)

    if np.isinf(b):
        return w

    return w / (1.0 + w / b)


def _slit_parameters(a: complex) -> tuple[float, float]:
    modulus = abs(a) ** 2
    c = modulus / a.imag
    b = np.inf if abs(a.real) <= 1e-15 * abs(a) else modulus / a.real
    return b, c


def _open_arc(w: NDArray, zeta0: float) -> NDArray:
    if np.isinf(zeta0):
        return w

    with np.errstate(divide="ignore", invalid="ignore"):
        return w / (1.0 - w / zeta0)


def _zip_forward(zipper: _Zipper, u: NDArray) -> NDArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 1j * np.sqrt((u - zipper.z1) / (u - zipper.z0))

    for b, c in zip(zipper.b, zipper.c):
        w = _slit_forward(w, b, c)

    return zipper.sign * _open_arc(w, zipper.zeta0) ** 2


def _zip_inverse(zipper: _Zipper, v: NDArray) -> NDArray:
    root = np.sqrt(zipper.sign * v)
    w = np.where(root.imag < 0, -root, root)

    if not np.isinf(zipper.zeta0):
        w = w / (1.0 + w / zipper.zeta0)

    for b, c in zip(zipper.b[::-1], zipper.c[::-1]):
        w = _slit_inverse(w, b, c)

    q = -(w**2)
    return (zipper.z1 - q * zipper.z0) / (1.0 - q)


def _normalize(zipper: _Zipper, v: NDArray) -> NDArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (v - zipper.v0) / (v - np.conj(zipper.v0))

    ratio = np.where(np.isfinite(v), ratio, 1.0 + 0j)
    return zipper.rotation * ratio


def _tract_order(model: Model) -> list[int]:
    far = 1e6
    starts = [complex(t.inverse(1.0 - 1j * far)) for t in model.tracts]
    ends = [complex(t.inverse(1.0 + 1j * far)) for t in model.tracts]
    order = [0]

    while len(order) < len(model.tracts):
        current = ends[order[-1]]
        candidates = [j for j in range(len(model.tracts)) if j not in order]
        turn = [np.mod(np.angle(starts[j]) - np.angle(current), 2 * np.pi) for j in candidates]
        order.append(candidates[int(np.argmin(turn))])

    return order


def _sample_parameters(count: int) -> NDArray[np.float64]:
    s = -0.5 * np.pi + np.pi * (np.arange(count) + 0.5) / count
    return np.tan(s)


@dataclass
class DiscreteRiemannMap:
    """
    Numerical Riemann map of `W` onto the unit disk, normalized by `Ψ(0) = 0`
    and `Ψ'(0) > 0`.
    """

    model: Model  #: Model whose level set `Ω(1)` bounds `W`
    resolution: int  #: Total number of boundary samples
    inversion_center: complex  #: Point `z₀` of the preconditioning inversion
    sample_tract: NDArray[np.int_]  #: Tract index of each boundary sample
    sample_t: NDArray[np.float64]  #: Parameter `t` of each sample, `γ_j(t) = τ_j⁻¹(1 + it)`
    sample_point: NDArray[np.complex128]  #: Boundary point of each sample
    sample_angle: NDArray[np.float64]  #: Unwrapped angle of `Ψ` at each sample
    zipper: _Zipper
    newton_max_iter: int = 50
    inverse_tolerance: float = 1e-10
    base_point: complex = 0j
    _correspondence: dict[int, PchipInterpolator] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for j in range(len(self.model.tracts)):
            mask = self.sample_tract == j
            s = np.arctan(self.sample_t[mask])
            self._correspondence[j] = PchipInterpolator(s, self.sample_angle[mask])

    @property
    def boundary_samples(self) -> list[tuple[complex, float]]:
        return list(zip(self.sample_point.tolist(), self.sample_angle.tolist()))

    @property
    def normalization(self) -> dict[str, complex]:
        return {"base_point": self.base_point, "rotation": self.zipper.rotation}

    def parameter_range(self, j: int) -> tuple[float, float]:
        t = self.sample_t[self.sample_tract == j]
        return float(t.min()), float(t.max())

    def boundary_angle(self, j: int, t: ArrayLike, derivative: int = 0) -> NDArray[np.float64]:
        """
        Angle `θ_j(t)` of `Ψ(γ_j(t))`, unwrapped and increasing in `t`.

        :param derivative: Order of the `t`-derivative to return (0 or 1)
        """

        t = np.asarray(t, dtype=float)
        s = np.arctan(t)
        interpolant = self._correspondence[j]

        match derivative:
            case 0:
                return interpolant(s)

            case 1:
                return interpolant.derivative()(s) / (1.0 + t**2)

            case _:
                raise ValueError(f"unsupported derivative order {derivative}")

    def _zipper_eval(self, z: NDArray) -> NDArray:
        with np.errstate(divide="ignore", invalid="ignore"):
            u = 1.0 / (z - self.inversion_center)

        return _normalize(self.zipper, _zip_forward(self.zipper, u))

    def interior_evaluator(self, z: ArrayLike) -> Union[complex, NDArray]:
        """
        `Ψ(z)` for `z` in `W` or on its boundary.
        """

        arr = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(arr).ravel()
        out = self._zipper_eval(flat)

        for j, tract in enumerate(self.model.tracts):
            with np.errstate(all="ignore"):
                w = tract.forward(flat)

            gap = 1.0 - w.real
            layer = np.isfinite(w) & (gap >= 0) & (gap < LAYER_WIDTH)

            if np.any(layer):
                y = w[layer].imag
                theta = self.boundary_angle(j, y) + 1j * gap[layer] * self.boundary_angle(j, y, 1)
                out[layer] = np.exp(1j * theta)

        out = out.reshape(arr.shape)
        return complex(out) if out.ndim == 0 else out

    def derivative(self, z: complex) -> complex:
        h = _FD_STEP * (1.0 + abs(z))
        ahead, behind = self._zipper_eval(np.array([z + h, z - h]))
        return complex((ahead - behind) / (2.0 * h))

    def _seeds(self, w: complex) -> list[complex]:
        direct = self._chain_inverse(np.array([w]))[0]
        nearest = np.argsort(np.abs(np.mod(self.sample_angle - np.angle(w) + np.pi, 2 * np.pi) - np.pi))
        fallback = [complex(self.sample_point[k]) for k in nearest[:3]]
        return [complex(direct), *fallback]

    def _chain_inverse(self, w: NDArray) -> NDArray:
        r = w / self.zipper.rotation
        v = (self.zipper.v0 - r * np.conj(self.zipper.v0)) / (1.0 - r)
        u = _zip_inverse(self.zipper, v)
        return self.inversion_center + 1.0 / u

    def _newton(self, w: complex, seed: complex) -> complex:
        z = seed

        for _ in range(self.newton_max_iter):
            residual = self._zipper_eval(np.array([z]))[0] - w

            if not np.isfinite(residual):
                raise _NewtonStalled()

            if abs(residual) < self.inverse_tolerance:
                return complex(z)

            slope = self.derivative(z)

            if slope == 0 or not np.isfinite(slope):
                raise _NewtonStalled()

            z = z - residual / slope

        raise _NewtonStalled()

    def inverse_evaluator(self, w: complex) -> complex:
        """
        `Ψ⁻¹(w)` for `w` in the open unit disk.

        The closed-form inverse of the zipper chain is the first seed; nearby
        boundary samples follow. Each seed gets at most `newton_max_iter`
        Newton steps.

        :raises DomainError: If `w` is not in the open unit disk
        :raises InverseError: If every seed fails
        """

        if not abs(w) < 1:
            raise DomainError("Ψ⁻¹ needs a point of the open unit disk")

        seeds = self._seeds(complex(w))
        retrying = tenacity.Retrying(
            stop=tenacity.stop_after_attempt(len(seeds)),
            retry=tenacity.retry_if_exception_type(_NewtonStalled),
            reraise=True,
            after=_seed_logger(complex(w)),
        )

        try:
            for attempt in retrying:
                with attempt:
                    seed = seeds[attempt.retry_state.attempt_number - 1]
                    z = self._newton(complex(w), seed)

        except _NewtonStalled:
            raise InverseError(complex(w), len(seeds)) from None

        return z

    def save(self, path: Path) -> None:
        np.savez(
            path,
            cache_version=CACHE_VERSION,
            resolution=self.resolution,
            inversion_center=self.inversion_center,
            sample_tract=self.sample_tract,
            sample_t=self.sample_t,
            sample_point=self.sample_point,
            sample_angle=self.sample_angle,
            zipper_points=np.array([self.zipper.z0, self.zipper.z1, self.zipper.v0, self.zipper.rotation]),
            zipper_b=self.zipper.b,
            zipper_c=self.zipper.c,
            zipper_scalars=np.array([self.zipper.zeta0, self.zipper.sign]),
            newton=np.array([self.newton_max_iter, self.inverse_tolerance]),
        )

    @classmethod
    def load(cls, path: Path, model: Model) -> Optional["DiscreteRiemannMap"]:
        """
        Load a cached map, `None` when the file was written by another cache version.
        """

        with np.load(path) as data:
            if int(data["cache_version"]) != CACHE_VERSION:
                return None

            z0, z1, v0, rotation = data["zipper_points"]
            zeta0, sign = data["zipper_scalars"]
            max_iter, tolerance = data["newton"]
            zipper = _Zipper(
                z0=complex(z0),
                z1=complex(z1),
                b=data["zipper_b"],
                c=data["zipper_c"],
                zeta0=float(zeta0),
                sign=float(sign),
                v0=complex(v0),
                rotation=complex(rotation),
            )
            return cls(
                model=model,
                resolution=int(data["resolution"]),
                inversion_center=complex(data["inversion_center"]),
                sample_tract=data["sample_tract"],
                sample_t=data["sample_t"],
                sample_point=data["sample_point"],
                sample_angle=data["sample_angle"],
                zipper=zipper,
                newton_max_iter=int(max_iter),
                inverse_tolerance=float(tolerance),
            )


class _seed_logger:
    def __init__(self, w: complex):
        self.w = w

    def __call__(self, retry_state: tenacity.RetryCallState) -> None:
        if retry_state.outcome is not None and retry_state.outcome.failed:
            logger.debug(f"Newton inverse of {self.w}: seed {retry_state.attempt_number} stalled")


def _zip(points: NDArray[np.complex128]) -> tuple[list[float], list[float], float, NDArray]:
    z0, z1 = points[0], points[1]

    with np.errstate(divide="ignore", invalid="ignore"):
        pending = 1j * np.sqrt((points[2:] - z1) / (points[2:] - z0))

    welded = np.zeros(len(points) - 1)
    welded_count = 1
    zeta0 = np.inf
    bs, cs = [], []

    for k in range(len(pending)):
        a = complex(pending[k])

        if not a.imag > 0:
            raise BuildError(f"boundary sample {k + 2} is not resolved (image {a} left the half-plane)")

        b, c = _slit_parameters(a)
        bs.append(b)
        cs.append(c)
        pending[k + 1 :] = _slit_forward(pending[k + 1 :], b, c)

        previous = welded[:welded_count]
        moved = previous if np.isinf(b) else previous / (1.0 - previous / b)
        opened = np.sign(moved) * np.sqrt(moved**2 + c**2)
        opened[previous == 0.0] = -c
        welded[:welded_count] = opened
        welded[welded_count] = 0.0
        welded_count += 1

        if np.isinf(zeta0):
            if not np.isinf(b):
                zeta0 = -b
                zeta0 = float(np.sign(zeta0) * np.sqrt(zeta0**2 + c**2))

        else:
            moved0 = zeta0 if np.isinf(b) else zeta0 / (1.0 - zeta0 / b)
            zeta0 = float(np.sign(moved0) * np.sqrt(moved0**2 + c**2))

    return bs, cs, zeta0, welded


def build_riemann_map(
    m: Model,
    resolution: int,
    newton_max_iter: int = 50,
    inverse_tolerance: float = 1e-10,
) -> DiscreteRiemannMap:
    """
    Build `Ψ: W → 𝔻` from `resolution` boundary samples.

    :param m: Disjoint-type model, so that the origin lies in `W`
    :param resolution: Total number of boundary samples, at least 64
    :raises BuildError: If the model is not of disjoint type, the resolution is
        too low, or the boundary angles are not strictly monotone
    """

    if resolution < 64:
        raise BuildError(f"resolution must be >= 64, got {resolution}")

    if not m.disjoint_type:
        raise BuildError("the model must be of disjoint type so that 0 lies in W")

    logger.info(f"building Riemann map with {resolution} boundary samples")

    center = complex(m.tracts[0].inverse(np.array(2.0 + 0j)))
    order = _tract_order(m)
    per_tract = resolution // len(m.tracts)
    t = _sample_parameters(per_tract)

    tract_ids, ts, curve = [], [], []

    for j in order:
        tract_ids.append(np.full(per_tract, j))
        ts.append(t)
        curve.append(m.tracts[j].inverse(1.0 + 1j * t))

    sample_tract = np.concatenate(tract_ids)
    sample_t = np.concatenate(ts)
    sample_point = np.concatenate(curve)

    with np.errstate(divide="ignore"):
        u = 1.0 / (sample_point - center)

    single = len(m.tracts) == 1
    points = np.concatenate([[0j], u]) if single else u
    bs, cs, zeta0, welded = _zip(points)

    zipper = _Zipper(
        z0=complex(points[0]),
        z1=complex(points[1]),
        b=np.asarray(bs),
        c=np.asarray(cs),
        zeta0=zeta0,
        sign=1.0,
        v0=0j,
        rotation=1.0 + 0j,
    )

    base = 1.0 / (0.0 - center)
    v_base = complex(_zip_forward(zipper, np.array([base]))[0])
    sign = 1.0 if v_base.imag > 0 else -1.0
    zipper = replace(zipper, sign=sign, v0=sign * v_base)

    h = _FD_STEP
    u_pair = 1.0 / (np.array([h, -h]) - center)
    ahead, behind = _normalize(zipper, _zip_forward(zipper, u_pair))
    rotation = np.exp(-1j * np.angle((ahead - behind) / (2.0 * h)))
    zipper = replace(zipper, rotation=complex(rotation))

    boundary_v = sign * _open_arc(welded.astype(complex), zeta0) ** 2
    raw = np.angle(_normalize(zipper, boundary_v))

    if not single:
        raw = np.concatenate([[np.angle(zipper.rotation)], raw])

    steps = np.mod(np.diff(raw), 2 * np.pi)

    bad = np.flatnonzero((steps <= 0) | (steps >= np.pi))

    if bad.size:
        raise BuildError(
            f"boundary angles are not monotone near sample {int(bad[0])}, increase the resolution"
        )

    angle = raw[0] + np.concatenate([[0.0], np.cumsum(steps)])

    logger.debug(f"zipper welded {len(bs)} arcs, boundary angle span {angle[-1] - angle[0]:.6f}")

    rm = DiscreteRiemannMap(
        model=m,
        resolution=resolution,
        inversion_center=center,
        sample_tract=sample_tract,
        sample_t=sample_t,
        sample_point=sample_point,
        sample_angle=angle,
        zipper=zipper,
        newton_max_iter=newton_max_iter,
        inverse_tolerance=inverse_tolerance,
    )
    logger.info("Riemann map built")
    return rm


def reflect_extend(rm: DiscreteRiemannMap, m: Model, z: ArrayLike) -> Union[complex, NDArray]:
    """
    Continuation of `Ψ` to `W₂` by `Ψ(T(z)) = 1 / conj(Ψ(z))`, where
    `T = τ_j⁻¹ ∘ R₁ ∘ τ_j` reflects across `γ_j`.

    Points of `Ω_j(0, 1]` are evaluated directly.

    :raises DomainError: If a point lies outside `Ω(0, 2)`
    """

    arr = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(arr).ravel()
    index, w = m.tau(flat)

    if np.any(index < 0) or np.any(w.real >= 2.0):
        raise DomainError("reflection is defined on Ω(0, 2) only")

    out = np.empty_like(flat)
    inner = w.real <= 1.0

    if np.any(inner):
        out[inner] = rm.interior_evaluator(flat[inner])

    for j, tract in enumerate(m.tracts):
        mask = (~inner) & (index == j)

        if np.any(mask):
            partner = tract.inverse(2.0 - np.conj(w[mask]))
            out[mask] = 1.0 / np.conj(rm.interior_evaluator(partner))

    out = out.reshape(arr.shape)
    return complex(out) if out.ndim == 0 else out


def pushforward_partition(rm: DiscreteRiemannMap, m: Model, j: int, window: int) -> list[ArcOnCircle]:
    """
    Images `Ψ(𝒥_j)` of the windowed boundary partition, ordered by `k`.

    :raises BuildError: If the window reaches beyond the sampled part of `γ_j`
    """

    t_min, t_max = rm.parameter_range(j)
    ks = np.arange(-window, window + 1)
    t = 2.0 * np.pi * ks

    if t[0] < t_min or t[-1] > t_max:
        raise BuildError(f"window {window} exceeds the sampled boundary of tract {j}")

    theta = rm.boundary_angle(j, t)
    return [ArcOnCircle.between(lo, hi) for lo, hi in zip(theta[:-1], theta[1:])]


def adjacent_length_ratio(arcs: list[ArcOnCircle]) -> float:
    """
    Largest ratio between the lengths of adjacent arcs.
    """

    lengths = np.array([arc.length for arc in arcs])
    ratios = np.maximum(lengths[1:] / lengths[:-1], lengths[:-1] / lengths[1:])
    return float(np.max(ratios)) if ratios.size else 1.0
