"""
Scenario files: a versioned JSON document describing the model, the
discretization parameters, the audit tolerances and the outputs.

Unknown keys are rejected at every level; missing keys take the defaults of
the dataclasses below.

.. code-block:: python
   :caption: Example

   from qcfold import scenario

   config = scenario.load("halfplane-default")

   assert config.window == 24
   assert len(config.config_hash) == 64
"""

from qcfold import logging
from qcfold.dynamics import MAX_RESOLUTION, Correspondence, CorrespondenceError
from qcfold.interpolation import FoldProfile, ModulusMatching
from qcfold.model_domain import Model, TractKind, TractParameterError, catalogue_tract

from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
import hashlib
import json

from collections.abc import Mapping
from typing import Any, Optional, Union


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """
    Raised for a missing, malformed or out-of-range scenario.
    """

    def __init__(self, reason: str):
        super().__init__(f"invalid scenario: {reason}")


@dataclass(frozen=True)
class TractConfig:
    kind: str = "half_plane"  #: Catalogue entry
    c: float = 2.0  #: Offset of the level-0 curve
    p: float = 2.0  #: Sector exponent
    scale: float = 1.0  #: Normalization `a > 0` in `τ ↦ aτ + ib`
    shift: float = 0.0  #: Normalization `b`


@dataclass(frozen=True)
class ModelConfig:
    tracts: tuple[TractConfig, ...] = (TractConfig(),)
    disjoint_type: bool = True


@dataclass(frozen=True)
class RiemannConfig:
    resolution: int = 1024  #: Boundary samples of the zipper
    newton_max_iter: int = 50
    inverse_tolerance: float = 1e-10


@dataclass(frozen=True)
class NetConfig:
    R: float = 2.0  #: Hyperbolic separation of the net
    S: int = 1  #: Maximal step between selected arcs
    enforce_separation_hypothesis: bool = False


@dataclass(frozen=True)
class InterpolationConfig:
    fold_profile: str = FoldProfile.COSH.value
    modulus_matching: str = ModulusMatching.STRETCH.value


@dataclass(frozen=True)
class AuditConfig:
    grid: int = 16  #: Samples per unit width and per `2π` of height
    finite_difference: float = 1e-5
    margin: float = 1e-3  #: Required gap between `sup |μ|` and 1
    holomorphic_tolerance: float = 1e-6
    continuity_tolerance: float = 1e-6
    oracle_tolerance: float = 1e-3
    conformality_tolerance: float = 1e-4
    rho_values: tuple[float, ...] = (1.0, 0.5, 0.25)
    max_hits: Optional[int] = None  #: Pinned `M` of the partition property
    max_quasiconstant: Optional[float] = None  #: Pinned ceiling of `K`


@dataclass(frozen=True)
class CorrespondenceConfig:
    kind: str = "identity"  #: `identity` or `ramp_shift`
    shift: float = 0.0
    start: float = 1.0
    stop: float = 2.0


@dataclass(frozen=True)
class ConjugacyConfig:
    target: tuple[TractConfig, ...] = (TractConfig(),)  #: Tracts of the target model
    correspondence: CorrespondenceConfig = field(default_factory=CorrespondenceConfig)
    iterations: int = 20
    guard: float = 1e-3


@dataclass(frozen=True)
class DynamicsConfig:
    max_iter: int = 32
    samples: int = 1024
    julia_region: tuple[float, float, float, float] = (-1.0, 7.0, -4.0, 4.0)
    julia_resolution: int = 512
    conjugacy: Optional[ConjugacyConfig] = None


@dataclass(frozen=True)
class Scenario:
    """
    A validated scenario.
    """

    name: str = "unnamed"
    model: ModelConfig = field(default_factory=ModelConfig)
    window: int = 24  #: Window `W`: intervals `-W..W-1` of every boundary partition
    riemann: RiemannConfig = field(default_factory=RiemannConfig)
    net: NetConfig = field(default_factory=NetConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    output: str = "out"
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical.encode("utf-8")).hexdigest()

    @property
    def model_hash(self) -> str:
        payload = json.dumps(asdict(self.model), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @property
    def fold_profile(self) -> FoldProfile:
        return FoldProfile(self.interpolation.fold_profile)

    @property
    def modulus_matching(self) -> ModulusMatching:
        return ModulusMatching(self.interpolation.modulus_matching)

    def build_model(self) -> Model:
        return build_model(self.model.tracts, self.model.disjoint_type)

    def correspondence(self) -> Correspondence:
        config = self.dynamics.conjugacy.correspondence

        match config.kind:
            case "identity":
                return Correspondence.identity()

            case "ramp_shift":
                return Correspondence(shift=config.shift, start=config.start, stop=config.stop)

        raise ConfigError(f"unknown correspondence {config.kind!r}")


def build_model(tracts: tuple[TractConfig, ...], disjoint_type: bool = True) -> Model:
    """
    Model from tract configurations, with labels made unique by position.
    """

    built = []

    for tract in tracts:
        for entry in catalogue_tract(
            TractKind.parse(tract.kind),
            c=tract.c,
            p=tract.p,
            scale=tract.scale,
            shift=tract.shift,
        ):
            built.append(replace(entry, label=f"{len(built)}:{entry.label}"))

    return Model(tracts=tuple(built), disjoint_type=disjoint_type)


def _parse(cls: type, data: Any, where: str) -> Any:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be an object")

    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))

    if unknown:
        raise ConfigError(f"unknown keys {unknown} in {where}")

    values = {}

    for name, raw in data.items():
        values[name] = _convert(cls, name, raw, f"{where}.{name}")

    try:
        return cls(**values)

    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


_NESTED = {
    (Scenario, "model"): ModelConfig,
    (Scenario, "riemann"): RiemannConfig,
    (Scenario, "net"): NetConfig,
    (Scenario, "interpolation"): InterpolationConfig,
    (Scenario, "audit"): AuditConfig,
    (Scenario, "dynamics"): DynamicsConfig,
    (DynamicsConfig, "conjugacy"): ConjugacyConfig,
    (ConjugacyConfig, "correspondence"): CorrespondenceConfig,
}

_PINS = {"max_hits": int, "max_quasiconstant": float}


def _convert(cls: type, name: str, raw: Any, where: str) -> Any:
    if (cls, name) in _NESTED:
        if raw is None and name == "conjugacy":
            return None

        return _parse(_NESTED[(cls, name)], raw, where)

    if name in ("tracts", "target"):
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{where} must be a non-empty list")

        return tuple(_parse(TractConfig, item, f"{where}[{i}]") for i, item in enumerate(raw))

    if name in ("rho_values", "julia_region"):
        if not isinstance(raw, list) or not all(isinstance(v, (int, float)) for v in raw):
            raise ConfigError(f"{where} must be a list of numbers")

        return tuple(float(v) for v in raw)

    if name in _PINS:
        if raw is None:
            return None

        expected = _PINS[name]

    else:
        expected = {f.name: f.type for f in fields(cls)}[name]

    if expected is bool and not isinstance(raw, bool):
        raise ConfigError(f"{where} must be a boolean")

    if expected is int and (isinstance(raw, bool) or not isinstance(raw, int)):
        raise ConfigError(f"{where} must be an integer")

    if expected is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{where} must be a number")

        return float(raw)

    if expected is str and not isinstance(raw, str):
        raise ConfigError(f"{where} must be a string")

    return raw


def _validate(config: Scenario) -> Scenario:
    if config.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {config.schema_version}")

    checks = [
        (config.window >= 1, f"window must be >= 1, got {config.window}"),
        (config.riemann.resolution >= 64, "riemann.resolution must be >= 64"),
        (config.net.R >= 0, "net.R must be >= 0"),
        (config.net.S >= 0, "net.S must be >= 0"),
        (config.audit.grid >= 2, "audit.grid must be >= 2"),
        (0 < config.audit.margin < 1, "audit.margin must lie in (0, 1)"),
        (all(0 < rho <= 1 for rho in config.audit.rho_values), "audit.rho_values must lie in (0, 1]"),
        (config.dynamics.julia_resolution <= MAX_RESOLUTION, f"dynamics.julia_resolution must be <= {MAX_RESOLUTION}"),
        (len(config.dynamics.julia_region) == 4, "dynamics.julia_region needs four numbers"),
        (config.dynamics.max_iter >= 1, "dynamics.max_iter must be >= 1"),
        (config.audit.max_hits is None or config.audit.max_hits >= 2, "audit.max_hits must be >= 2"),
        (
            config.audit.max_quasiconstant is None or config.audit.max_quasiconstant >= 1,
            "audit.max_quasiconstant must be >= 1",
        ),
    ]

    for ok, reason in checks:
        if not ok:
            raise ConfigError(reason)

    for value, enum in (
        (config.interpolation.fold_profile, FoldProfile),
        (config.interpolation.modulus_matching, ModulusMatching),
    ):
        try:
            enum(value)

        except ValueError:
            raise ConfigError(f"unknown {enum.__name__} {value!r}") from None

    try:
        config.build_model()

        if config.dynamics.conjugacy is not None:
            build_model(config.dynamics.conjugacy.target, True)
            config.correspondence()

    except (TractParameterError, CorrespondenceError) as err:
        raise ConfigError(str(err)) from err

    return config


def parse(data: Any) -> Scenario:
    """
    Validate a decoded JSON document.

    :raises ConfigError: On unknown keys, wrong types or out-of-range values
    """

    return _validate(_parse(Scenario, data, "scenario"))


def bundled() -> list[str]:
    """
    Names of the scenarios shipped with the package.
    """

    folder = resources.files("qcfold") / "scenarios"
    return sorted(entry.name.removesuffix(".json") for entry in folder.iterdir() if entry.name.endswith(".json"))


def load(source: Union[str, Path]) -> Scenario:
    """
    Load a scenario from a path or a bundled name.

    :raises ConfigError: If the file is missing or invalid
    """

    path = Path(source)

    if path.is_file():
        text = path.read_text(encoding="utf-8")

    elif str(source) in bundled():
        text = (resources.files("qcfold") / "scenarios" / f"{source}.json").read_text(encoding="utf-8")

    else:
        raise ConfigError(f"no scenario file or bundled scenario named {str(source)!r}")

    try:
        data = json.loads(text)

    except json.JSONDecodeError as err:
        raise ConfigError(f"{source}: {err}") from err

    config = parse(data)
    logger.debug(f"scenario {config.name} loaded, hash {config.config_hash[:12]}")
    return config
