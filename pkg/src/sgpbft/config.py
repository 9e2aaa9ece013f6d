"""Config.

Scenario configuration: a flat TOML table (arrays and inline tables allowed),
then `SGPBFT_<KEY>` environment overrides, then explicit overrides from the
command line. Unknown keys are errors.

An example scenario file::

    scenario_id = "sg-silent-master"
    protocol = "SGPBFT"
    n = 8
    f = 1
    requests = 20
    faults = [{ node = 3, behavior = "silent" }]
"""

# standard
from dataclasses import dataclass, fields, replace
from enum import Enum
import logging
import os
from pathlib import Path
import sys
from typing import Any, Callable, Dict, Mapping, MutableMapping, Optional, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# local
from sgpbft.faults import FaultSpec
from sgpbft.pbft import PbftConfig
from sgpbft.sg_pbft import sg_init
from sgpbft.utils import ConfigurationError, validator

logger = logging.getLogger(__name__)

ENV_PREFIX = "SGPBFT_"
LATENCY_KINDS = ("constant", "uniform")
QUORUM_MODES = ("geq", "strict")
WORKLOAD_MODES = ("sequential", "burst")
DEFAULT_SWEEP_N = (8, 16, 32, 64, 128, 256, 512, 1000)


class ProtocolKind(str, Enum):
    """Protocols the benchmark knows about; only PBFT and SGPBFT have engines."""

    PBFT = "PBFT"
    SGPBFT = "SGPBFT"
    GPBFT = "GPBFT"
    CPBFT = "CPBFT"

    @property
    def simulated(self):
        """Whether an engine runs this protocol (the others are analytic baselines)."""
        return self in (ProtocolKind.PBFT, ProtocolKind.SGPBFT)

    @classmethod
    def parse(cls, value: Union[str, "ProtocolKind"], /):
        """Read a protocol name, ignoring case, dashes and underscores.

        Examples:
            >>> ProtocolKind.parse("sg-pbft")
            <ProtocolKind.SGPBFT: 'SGPBFT'>

        Raises:
            (ConfigurationError): For an unknown name.
        """
        if isinstance(value, ProtocolKind):
            return value
        name = str(value).upper().replace("-", "").replace("_", "")
        try:
            return cls(name)
        except ValueError as exp:
            raise ConfigurationError(f"unknown protocol {value!r}") from exp


ALL_PROTOCOLS = tuple(ProtocolKind)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines one run (or one sweep)."""

    scenario_id: str = "scenario"
    protocol: ProtocolKind = ProtocolKind.PBFT
    n: int = 4
    f: int = 1
    requests: int = 1
    seed: int = 0
    latency_kind: str = "constant"
    latency_ticks: int = 1
    latency_lo: int = 1
    latency_hi: int = 1
    per_message_overhead: int = 0
    service_ticks: int = 0
    faults: Tuple[FaultSpec, ...] = ()
    rotation_m: Optional[int] = None
    rotation_period: int = 50
    quorum_mode: str = "geq"
    timeout_ticks: Optional[int] = None
    workload_mode: str = "sequential"
    max_ticks: int = 1_000_000
    vehicles: int = 5
    forged_vehicles: int = 1
    sweep_n: Tuple[int, ...] = DEFAULT_SWEEP_N
    sweep_protocols: Tuple[ProtocolKind, ...] = ALL_PROTOCOLS
    max_messages_per_cell: int = 3_000_000

    @property
    def consensus_size(self):
        """Nodes that vote: all of them for PBFT, half for SG-PBFT."""
        return self.n // 2 if self.protocol is ProtocolKind.SGPBFT else self.n

    def to_mapping(self) -> Dict[str, Any]:
        """Plain, JSON-friendly echo of the configuration."""
        echo: Dict[str, Any] = {}
        for item in fields(self):
            value = getattr(self, item.name)
            if item.name == "protocol":
                value = value.value
            elif item.name == "faults":
                value = [fault.to_mapping() for fault in value]
            elif item.name == "sweep_protocols":
                value = [protocol.value for protocol in value]
            elif isinstance(value, tuple):
                value = list(value)
            echo[item.name] = value
        return echo


KEYS = tuple(item.name for item in fields(ScenarioConfig))

_INT_KEYS = frozenset(
    (
        "n",
        "f",
        "requests",
        "seed",
        "latency_ticks",
        "latency_lo",
        "latency_hi",
        "per_message_overhead",
        "service_ticks",
        "rotation_period",
        "max_ticks",
        "vehicles",
        "forged_vehicles",
        "max_messages_per_cell",
    )
)


def _integer(value: Any, /):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


_CONVERTERS: Dict[str, Callable[[Any], Any]] = {
    "protocol": ProtocolKind.parse,
    "faults": lambda value: tuple(FaultSpec.from_mapping(item) for item in value),
    "rotation_m": _integer,
    "timeout_ticks": _integer,
    "sweep_n": lambda value: tuple(_integer(item) for item in value),
    "sweep_protocols": lambda value: tuple(ProtocolKind.parse(item) for item in value),
}


def from_mapping(data: Mapping[str, Any], /):
    """Build a `ScenarioConfig` from parsed key-value data.

    Examples:
        >>> from_mapping({"protocol": "sgpbft", "n": 8}).consensus_size
        4

    Raises:
        (ConfigurationError): On unknown keys or values of the wrong type.
    """
    unknown = sorted(set(data) - set(KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    values: Dict[str, Any] = {}
    for key, value in data.items():
        try:
            if key in _CONVERTERS:
                values[key] = _CONVERTERS[key](value)
            elif key in _INT_KEYS:
                values[key] = _integer(value)
            else:
                values[key] = str(value)
        except (TypeError, ValueError) as exp:
            if isinstance(exp, ConfigurationError):
                raise
            raise ConfigurationError(f"bad value for {key}: {exp}") from exp
    return ScenarioConfig(**values)


def _parse_env(raw: str, /) -> Any:
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def env_overrides(environ: Optional[Mapping[str, str]] = None, /):
    """Config values taken from `SGPBFT_<KEY>` environment variables.

    Examples:
        >>> env_overrides({"SGPBFT_N": "16", "SGPBFT_PROTOCOL": "SGPBFT", "HOME": "/"})
        {'protocol': 'SGPBFT', 'n': 16}
    """
    environ = os.environ if environ is None else environ
    found: Dict[str, Any] = {}
    for key in KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            found[key] = _parse_env(raw)
    return found


def check(config: ScenarioConfig, /):
    """Raise if `config` cannot drive an engine run.

    Raises:
        (ConfigurationError): Naming the first violated precondition.
    """
    if not config.protocol.simulated:
        raise ConfigurationError(f"{config.protocol.value} is an analytic baseline only")
    if config.protocol is ProtocolKind.PBFT:
        PbftConfig(config.n, config.f)
    else:
        sg_init(
            config.n,
            config.f,
            config.seed,
            rotation_m=config.rotation_m,
            rotation_period=config.rotation_period,
        )
    if config.requests < 0 or config.seed < 0:
        raise ConfigurationError("`requests` and `seed` must be non-negative")
    if config.latency_kind not in LATENCY_KINDS:
        raise ConfigurationError(f"`latency_kind` must be one of {LATENCY_KINDS}")
    if config.latency_kind == "constant" and config.latency_ticks < 1:
        raise ConfigurationError("`latency_ticks` must be at least 1")
    if config.latency_kind == "uniform" and not 1 <= config.latency_lo <= config.latency_hi:
        raise ConfigurationError("uniform latency needs 1 <= latency_lo <= latency_hi")
    if config.per_message_overhead < 0 or config.service_ticks < 0:
        raise ConfigurationError("`per_message_overhead` and `service_ticks` must be non-negative")
    if config.quorum_mode not in QUORUM_MODES:
        raise ConfigurationError(f"`quorum_mode` must be one of {QUORUM_MODES}")
    if config.workload_mode not in WORKLOAD_MODES:
        raise ConfigurationError(f"`workload_mode` must be one of {WORKLOAD_MODES}")
    if config.timeout_ticks is not None and config.timeout_ticks < 1:
        raise ConfigurationError("`timeout_ticks` must be positive")
    if config.rotation_m is not None and config.rotation_m < 0:
        raise ConfigurationError("`rotation_m` must be non-negative")
    if config.max_ticks < 1 or config.max_messages_per_cell < 1:
        raise ConfigurationError("`max_ticks` and `max_messages_per_cell` must be positive")
    if config.vehicles < 0 or config.forged_vehicles < 0:
        raise ConfigurationError("vehicle counts must be non-negative")
    faulty = [fault.node for fault in config.faults]
    if len(set(faulty)) != len(faulty):
        raise ConfigurationError("at most one fault behaviour per node")
    if any(not 0 <= node < config.n for node in faulty):
        raise ConfigurationError(f"fault nodes must lie in 0..{config.n - 1}")
    if len(faulty) > config.f:
        logger.warning(
            "scenario %s injects %s faults with f=%s; safety is not guaranteed",
            config.scenario_id,
            len(faulty),
            config.f,
        )


@validator
def scenario(config: ScenarioConfig, /):
    """Validate a scenario configuration.

    Examples:
        >>> scenario(ScenarioConfig(protocol=ProtocolKind.PBFT, n=4, f=1))
        True
        >>> print(scenario(ScenarioConfig(protocol=ProtocolKind.SGPBFT, n=6, f=1)))
        SG-PBFT needs n/2 >= 3f + 1, got n=6 f=1

    Args:
        config:
            Scenario to check.

    Returns:
        (Literal[True]): If `config` can drive an engine run.
        (ValidationError): Carrying the reason otherwise.
    """
    check(config)
    return True


def load_config(
    path: Optional[Union[str, Path]] = None,
    /,
    *,
    environ: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    base: Optional[ScenarioConfig] = None,
):
    """Read a scenario file, then apply environment and explicit overrides.

    Missing keys keep the values of `base` (the defaults if not given). The
    result is only parsed, not checked: sweeps may carry analytic protocols.

    Raises:
        (ConfigurationError): For unreadable files, bad TOML or bad values.
    """
    data: MutableMapping[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                data.update(tomllib.load(handle))
        except OSError as exp:
            raise ConfigurationError(f"cannot read {path}: {exp}") from exp
        except tomllib.TOMLDecodeError as exp:
            raise ConfigurationError(f"bad TOML in {path}: {exp}") from exp
    data.update(env_overrides(environ))
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    parsed = from_mapping(data)
    if base is None:
        return parsed
    return replace(base, **{key: getattr(parsed, key) for key in data})
