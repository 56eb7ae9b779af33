"""
Iteration of a model `F = exp ∘ τ` and the pull-back iteration
`Φ_{n+1} = G⁻¹ ∘ Φ_n ∘ F` conjugating two disjoint-type models.

A point stays in play as long as its iterates land in `Ω`; the step at which
it leaves is its exit step. Points whose orbit reaches `Re τ > 700` are
recorded as escaping to infinity, since the next iterate would overflow.

.. code-block:: python
   :caption: Example

   from qcfold import dynamics, model_domain as md

   model = md.Model(tracts=md.catalogue_tract("half_plane", c=2.0))
   record = dynamics.iterate_model(model, 3.0, max_iter=10)

   assert record.exit_step == 3
"""

from qcfold import logging
from qcfold.model_domain import Model

from dataclasses import dataclass, field, replace
from enum import Enum
import numpy as np

from collections.abc import Callable
from numpy.typing import ArrayLike, NDArray
from typing import Any, Optional


logger = logging.getLogger(__name__)

OVERFLOW_CAP = 700.0
RETAINED = -1
MAX_RESOLUTION = 2048


class ResolutionError(ValueError):
    """
    Raised when a raster exceeds the resolution cap.
    """

    def __init__(self, resolution: int):
        super().__init__(f"resolution {resolution} exceeds the cap of {MAX_RESOLUTION}")


class CorrespondenceError(ValueError):
    """
    Raised for a correspondence that is not a homeomorphism fixing the
    closed unit disk, or that pairs models with different tract counts.
    """

    def __init__(self, reason: str):
        super().__init__(f"invalid correspondence: {reason}")


class ExitReason(Enum):
    LEFT_DOMAIN = "left_domain"
    ESCAPED = "escaped"
    RETAINED = "retained"


@dataclass(frozen=True)
class OrbitRecord:
    """
    Forward orbit of one point under the model function.
    """

    start: complex
    orbit: NDArray[np.complex128]  #: `z, F(z), ...` up to the first point outside `Ω`
    exit_step: Optional[int]  #: Index of the first orbit point outside `Ω`
    reason: ExitReason

    def to_json(self) -> dict[str, Any]:
        return {
            "start": [self.start.real, self.start.imag],
            "orbit": [[float(z.real), float(z.imag)] for z in self.orbit],
            "exit_step": self.exit_step,
            "reason": self.reason.value,
        }


def iterate_model(m: Model, z: complex, max_iter: int) -> OrbitRecord:
    """
    Iterate `F` from `z` while the iterates stay in `Ω`.
    """

    orbit = [complex(z)]

    for step in range(max_iter + 1):
        index, tau = m.tau(orbit[-1])

        if index < 0:
            return OrbitRecord(complex(z), np.array(orbit), step, ExitReason.LEFT_DOMAIN)

        if step == max_iter:
            break

        if tau.real > OVERFLOW_CAP:
            return OrbitRecord(complex(z), np.array(orbit), None, ExitReason.ESCAPED)

        orbit.append(complex(np.exp(tau)))

    return OrbitRecord(complex(z), np.array(orbit), None, ExitReason.RETAINED)


def exit_steps(m: Model, z: ArrayLike, max_iter: int) -> NDArray[np.int_]:
    """
    Batch exit steps, `RETAINED` for points that never leave `Ω` within
    `max_iter` steps or that escape to infinity.
    """

    current = np.atleast_1d(np.asarray(z, dtype=complex)).ravel().copy()
    steps = np.full(current.shape, RETAINED, dtype=int)
    alive = np.ones(current.shape, dtype=bool)

    for step in range(max_iter + 1):
        if not np.any(alive):
            break

        index, tau = m.tau(current[alive])
        positions = np.flatnonzero(alive)
        left = index < 0
        steps[positions[left]] = step
        alive[positions[left]] = False

        if step == max_iter:
            break

        escaped = (~left) & (tau.real > OVERFLOW_CAP)
        alive[positions[escaped]] = False
        moving = (~left) & (~escaped)
        current[positions[moving]] = np.exp(tau[moving])

    return steps.reshape(np.shape(z))


@dataclass(frozen=True)
class JuliaRaster:
    """
    Exit steps over a rectangle; retained pixels approximate `𝒥(F)`.
    """

    region: tuple[float, float, float, float]  #: `(xmin, xmax, ymin, ymax)`
    resolution: int
    max_iter: int
    steps: NDArray[np.int_]  #: Row 0 at `ymin`

    @property
    def retained(self) -> NDArray[np.bool_]:
        return self.steps == RETAINED


def julia_grid(
    m: Model,
    region: tuple[float, float, float, float],
    resolution: int,
    max_iter: int,
) -> JuliaRaster:
    """
    Classify the pixel centers of a `resolution × resolution` grid.

    :raises ResolutionError: If `resolution` exceeds `MAX_RESOLUTION`
    """

    if resolution > MAX_RESOLUTION:
        raise ResolutionError(resolution)

    xmin, xmax, ymin, ymax = region
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    steps = exit_steps(m, xs[None, :] + 1j * ys[:, None], max_iter)
    logger.debug(f"julia raster: {int(np.sum(steps == RETAINED))} retained pixels")
    return JuliaRaster(tuple(region), resolution, max_iter, steps)


@dataclass(frozen=True)
class Correspondence:
    """
    Homeomorphism `φ` used off `Ω`: `z ↦ z + s β(Re z)` with `β` ramping
    linearly from 0 at `start` to 1 at `stop`. The identity when `s = 0`.
    """

    shift: float = 0.0
    start: float = 1.0
    stop: float = 2.0

    def __post_init__(self):
        if self.start < 1.0:
            raise CorrespondenceError(f"ramp must start at Re z >= 1, got {self.start}")

        if self.stop <= self.start:
            raise CorrespondenceError("ramp stop must exceed its start")

        if self.shift <= -(self.stop - self.start):
            raise CorrespondenceError(f"shift {self.shift} folds the ramp")

    @classmethod
    def identity(cls) -> "Correspondence":
        return cls()

    @property
    def is_identity(self) -> bool:
        return self.shift == 0.0

    def __call__(self, z: ArrayLike) -> NDArray[np.complex128]:
        z = np.asarray(z, dtype=complex)
        ramp = np.clip((z.real - self.start) / (self.stop - self.start), 0.0, 1.0)
        return z + self.shift * ramp


@dataclass(frozen=True)
class ConjugacyPair:
    """
    Two disjoint-type models with matched tracts and a correspondence.
    """

    source: Model  #: Model `F` being conjugated
    target: Model  #: Model `G` it is conjugated to
    correspondence: Correspondence = field(default_factory=Correspondence)
    guard: float = 1e-3  #: Smallest gap between the two nearest branches

    def __post_init__(self):
        if len(self.source.tracts) != len(self.target.tracts):
            raise CorrespondenceError("models must have the same number of tracts")

        if not (self.source.disjoint_type and self.target.disjoint_type):
            raise CorrespondenceError("both models must be of disjoint type")


@dataclass(frozen=True)
class ConjugacyState:
    """
    `Φ_n` sampled on a fixed point set.
    """

    n: int  #: Iteration index
    samples: NDArray[np.complex128]
    orbits: NDArray[np.complex128]  #: Source orbits, `nan` past the exit step
    exits: NDArray[np.int_]  #: Source exit steps, `RETAINED` if none
    values: NDArray[np.complex128]  #: `Φ_n(samples)`
    converged: NDArray[np.bool_]  #: Exit step below `n`, so `Φ_n` no longer changes
    flagged: NDArray[np.bool_]  #: Branch ambiguity or escape met on the way
    increments: tuple[float, ...] = ()  #: `max |Φ_n - Φ_{n-1}|` on converged samples

    def to_json(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "converged": int(self.converged.sum()),
            "flagged": int(self.flagged.sum()),
            "increments": [float(f"{value:.12g}") for value in self.increments],
        }


def _orbits(m: Model, samples: NDArray, length: int) -> tuple[NDArray, NDArray]:
    orbits = np.full((samples.size, length + 1), np.nan + 0j, dtype=complex)
    exits = np.full(samples.size, RETAINED, dtype=int)
    orbits[:, 0] = samples
    alive = np.ones(samples.size, dtype=bool)

    for step in range(length + 1):
        positions = np.flatnonzero(alive)

        if positions.size == 0:
            break

        index, tau = m.tau(orbits[positions, step])
        left = index < 0
        exits[positions[left]] = step
        alive[positions[left]] = False

        if step == length:
            break

        capped = (~left) & (tau.real > OVERFLOW_CAP)
        alive[positions[capped]] = False
        moving = (~left) & (~capped)
        orbits[positions[moving], step + 1] = np.exp(tau[moving])

    return orbits, exits


def _inverse_branch(
    pair: ConjugacyPair,
    j: NDArray[np.int_],
    w: NDArray[np.complex128],
    guide: NDArray[np.float64],
) -> tuple[NDArray[np.complex128], NDArray[np.bool_]]:
    """
    `τ'_j⁻¹(Log w + 2πik)` with `k` putting the imaginary part nearest `guide`.
    """

    with np.errstate(divide="ignore", invalid="ignore"):
        log = np.log(w)

    k = np.round((guide - log.imag) / (2.0 * np.pi))
    lifted = log + 2j * np.pi * k
    distance = np.abs(guide - lifted.imag)
    ambiguous = (2.0 * np.pi - 2.0 * distance) < pair.guard
    outside = ~(lifted.real > 0) | ~np.isfinite(lifted)

    out = np.full(w.shape, np.nan + 0j, dtype=complex)

    for tract_index, tract in enumerate(pair.target.tracts):
        mask = (j == tract_index) & ~outside

        if np.any(mask):
            out[mask] = tract.inverse(lifted[mask])

    return out, ambiguous | outside


def _pull_back(pair: ConjugacyPair, state: ConjugacyState, n: int, offset: int = 0) -> tuple[NDArray, NDArray]:
    """
    `Φ_n` at the orbit point of index `offset`, pulled back along the source
    orbit from its `n`-th successor.
    """

    count = state.samples.size
    values = np.full(count, np.nan + 0j, dtype=complex)
    flagged = np.zeros(count, dtype=bool)
    exits = np.where(state.exits == RETAINED, np.iinfo(int).max, state.exits) - offset
    depth = np.minimum(exits, n)
    top = offset + depth
    rows = np.arange(count)
    available = top < state.orbits.shape[1]

    start = np.full(count, np.nan + 0j, dtype=complex)
    start[available] = state.orbits[rows[available], top[available]]
    past_exit = available & (depth == exits) & (depth < n)
    values[:] = start
    values[past_exit] = pair.correspondence(start[past_exit])
    flagged |= ~available | ~np.isfinite(values)

    for level in range(int(depth[available].max(initial=0)) - 1, -1, -1):
        active = available & (level < depth) & ~flagged
        point = state.orbits[active, offset + level]
        index, tau = pair.source.tau(point)
        pulled, bad = _inverse_branch(pair, index, values[active], tau.imag)
        values[active] = pulled
        flagged[np.flatnonzero(active)[bad]] = True

    return values, flagged


def conjugacy_start(pair: ConjugacyPair, samples: ArrayLike, max_iter: int) -> ConjugacyState:
    """
    `Φ_0 = id` on the samples, with their source orbits up to `max_iter`.
    """

    points = np.atleast_1d(np.asarray(samples, dtype=complex)).ravel()
    orbits, exits = _orbits(pair.source, points, max_iter + 1)
    return ConjugacyState(
        n=0,
        samples=points,
        orbits=orbits,
        exits=exits,
        values=points.copy(),
        converged=np.zeros(points.size, dtype=bool),
        flagged=np.zeros(points.size, dtype=bool),
    )


def conjugacy_step(state: ConjugacyState, pair: ConjugacyPair) -> ConjugacyState:
    """
    Advance to `Φ_{n+1}`: `φ` off `Ω`, `G⁻¹ ∘ Φ_n ∘ F` on `Ω`.
    """

    n = state.n + 1
    values, flagged = _pull_back(pair, state, n)
    converged = (state.exits != RETAINED) & (state.exits < n) & ~flagged
    stable = converged & state.converged
    increment = float(np.max(np.abs(values[stable] - state.values[stable]))) if np.any(stable) else 0.0

    if np.any(flagged & ~state.flagged):
        logger.warning(f"conjugacy step {n}: {int(np.sum(flagged & ~state.flagged))} samples flagged")

    return replace(
        state,
        n=n,
        values=values,
        converged=converged,
        flagged=state.flagged | flagged,
        increments=(*state.increments, increment),
    )


def semiconjugacy_residual(state: ConjugacyState, pair: ConjugacyPair) -> float:
    """
    Largest relative residual `|Φ(F(z)) - G(Φ(z))| / max(1, |G(Φ(z))|)` over
    converged samples that lie in `Ω`.
    """

    image, flagged = _pull_back(pair, state, state.n, offset=1)
    in_domain = state.exits != 0
    usable = state.converged & in_domain & ~flagged & ~state.flagged

    if not np.any(usable):
        return 0.0

    target = pair.target.evaluate(state.values[usable])
    residual = np.abs(image[usable] - target) / np.maximum(1.0, np.abs(target))
    return float(np.max(residual))


def run_conjugacy(
    pair: ConjugacyPair,
    samples: ArrayLike,
    iterations: int,
    on_step: Optional[Callable[[ConjugacyState], None]] = None,
) -> ConjugacyState:
    """
    `iterations` steps from the identity.
    """

    state = conjugacy_start(pair, samples, iterations)

    for _ in range(iterations):
        state = conjugacy_step(state, pair)

        if on_step is not None:
            on_step(state)

    logger.info(
        f"conjugacy: {int(state.converged.sum())} of {state.samples.size} samples converged "
        f"after {state.n} steps"
    )
    return state
