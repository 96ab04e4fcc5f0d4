"""Steady-state temperature, device power and cooling power as affine functions of bandwidth."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigurationError, ThermalShutdown
from .protocol import RequestType

IDLE_SYSTEM_POWER = 100.0  # W


@dataclass(frozen=True)
class CoolingConfig:
    name: str
    fan_voltage: float
    fan_current: float
    fan_distance_cm: float
    idle_temperature: float
    cooling_power: float


def load_cooling(path: str | None = None) -> dict[str, CoolingConfig]:
    if path is None:
        data = json.loads(resources.files("hmcsim.data").joinpath("presets.json").read_text())
    else:
        with open(path) as fh:
            data = json.load(fh)
    return {name: CoolingConfig(name=name, **fields) for name, fields in data["cooling"].items()}


def cooling_preset(name: str) -> CoolingConfig:
    presets = load_cooling()
    try:
        return presets[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown cooling config {name!r}; choose from {sorted(presets)}") from None


@dataclass(frozen=True)
class ThermalModel:
    """Temperature = idle + slope(type) x bandwidth, in degC and GB/s.

    ``slopes`` must keep wo steeper than rw and rw steeper than ro.
    """

    slopes: tuple[tuple[RequestType, float], ...] = (
        (RequestType.READ_ONLY, 3.0 / 15.0),
        (RequestType.READ_MODIFY_WRITE, 4.0 / 15.0),
        (RequestType.WRITE_ONLY, 2.0),
    )
    read_limit: float = 85.0
    write_limit: float = 75.0
    junction_offset: tuple[float, float] = (5.0, 10.0)  # heatsink reads this much below die

    def __post_init__(self):
        s = dict(self.slopes)
        if set(s) != set(RequestType):
            raise ConfigurationError("a slope is required for every request type")
        if min(s.values()) <= 0:
            raise ConfigurationError("thermal slopes must be positive")
        if not (s[RequestType.WRITE_ONLY] > s[RequestType.READ_MODIFY_WRITE]
                > s[RequestType.READ_ONLY]):
            raise ConfigurationError("slopes must be ordered wo > rw > ro")

    def slope(self, request_type: RequestType) -> float:
        return dict(self.slopes)[request_type]

    def limit(self, request_type: RequestType) -> float:
        return self.write_limit if request_type.has_writes else self.read_limit


@dataclass(frozen=True)
class PowerModel:
    idle_power: float = IDLE_SYSTEM_POWER
    device_slope: float = 2.0 / 15.0  # W per GB/s
    cooling_slope: float = 1.5 / 16.0  # W per GB/s at a fixed target temperature

    def __post_init__(self):
        if self.device_slope <= 0 or self.cooling_slope <= 0:
            raise ConfigurationError("power slopes must be positive")


DEFAULT_THERMAL = ThermalModel()
DEFAULT_POWER = PowerModel()


def _check_bandwidth(bandwidth: float) -> None:
    if bandwidth < 0:
        raise ValueError("bandwidth must be nonnegative")


def steady_temperature(model: ThermalModel, cooling: CoolingConfig, bandwidth: float,
                       request_type: RequestType) -> float:
    _check_bandwidth(bandwidth)
    return cooling.idle_temperature + model.slope(request_type) * bandwidth


def device_power(model: PowerModel, bandwidth: float) -> float:
    """Device power above the idle system power, in W."""
    _check_bandwidth(bandwidth)
    return model.device_slope * bandwidth


def system_power(model: PowerModel, bandwidth: float) -> float:
    return model.idle_power + device_power(model, bandwidth)


class Status(enum.Enum):
    OK = "ok"
    THERMAL_FAILURE = "thermal_failure"


def check_failure(temperature: float, request_type: RequestType,
                  model: ThermalModel = DEFAULT_THERMAL) -> Status:
    if temperature >= model.limit(request_type):
        return Status.THERMAL_FAILURE
    return Status.OK


@dataclass
class DeviceState:
    """Halts on a thermal failure; stored data is lost until ``reset``."""

    model: ThermalModel = DEFAULT_THERMAL
    halted: bool = False
    data_lost: bool = False
    failures: int = 0
    history: list = field(default_factory=list)

    def apply(self, temperature: float, request_type: RequestType) -> Status:
        if self.halted:
            raise ThermalShutdown("device halted by a thermal failure; reset() first")
        status = check_failure(temperature, request_type, self.model)
        self.history.append((temperature, request_type, status))
        if status is Status.THERMAL_FAILURE:
            self.halted = True
            self.data_lost = True
            self.failures += 1
        return status

    def reset(self) -> None:
        self.halted = False
        self.data_lost = False


@dataclass(frozen=True)
class CoolingRequirement:
    watts: float
    feasible: bool


def cooling_power_required(target: float, bandwidth: float, request_type: RequestType,
                           presets: dict[str, CoolingConfig] | None = None,
                           thermal: ThermalModel = DEFAULT_THERMAL,
                           power: PowerModel = DEFAULT_POWER) -> CoolingRequirement:
    """Fan power needed to hold ``target`` degC at ``bandwidth`` GB/s.

    Interpolates the presets' (idle temperature, cooling power) points at the
    target, extrapolating linearly outside them, then adds the per-GB/s cost.
    Infeasible when even the strongest preset runs hotter than the target.
    """
    _check_bandwidth(bandwidth)
    presets = presets or load_cooling()
    pts = sorted((c.idle_temperature, c.cooling_power) for c in presets.values())
    if len(pts) < 2:
        raise ConfigurationError("at least two cooling presets are needed")
    temps = np.array([p[0] for p in pts])
    watts = np.array([p[1] for p in pts])
    i = int(np.clip(np.searchsorted(temps, target) - 1, 0, len(temps) - 2))
    frac = (target - temps[i]) / (temps[i + 1] - temps[i])
    base = float(watts[i] + frac * (watts[i + 1] - watts[i]))
    coolest = temps[0] + thermal.slope(request_type) * bandwidth
    return CoolingRequirement(base + power.cooling_slope * bandwidth, target >= coolest)


def fit_line(x, y) -> tuple[float, float] | None:
    """Least-squares (slope, intercept); None when x is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return None
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
