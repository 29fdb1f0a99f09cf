"""Scenario configuration: geometry, radio, kinematics, energy and solver knobs.

All lengths are meters, powers watts, rates bits/s/Hz.  dB / dBm values
appear only in the two reference-gain fields and are converted through the
``alpha0`` / ``noise_power_w`` properties.  Configurations are immutable
after construction and safe to share between concurrent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import tomli


class ConfigError(ValueError):
    """Raised for unparseable or invariant-violating scenario input."""


def _as_xy(value, name: str) -> tuple[float, float]:
    try:
        x, y = value
        return (float(x), float(y))
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a 2-element coordinate, got {value!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Network geometry, antenna layout and service requirements.

    Defaults reproduce the reference evaluation scenario; parameters that
    scenario leaves unspecified (antenna grids, spacings, carrier
    wavelength, step count/duration, RIS ground position) carry project
    defaults, documented in the README, and are all configurable.
    """

    area: tuple[float, float] = (500.0, 500.0)
    ue_positions: tuple[tuple[float, float], ...] = ((20.0, 450.0), (250.0, 0.0), (500.0, 200.0))
    bs_position: tuple[float, float] = (0.0, 0.0)
    bs_height: float = 15.0
    ris_position: tuple[float, float] = (450.0, 450.0)  # not in the baseline table; far from the UE cluster
    ris_height: float = 10.0
    uav_start: tuple[float, float] = (0.0, 0.0)
    uav_end: tuple[float, float] = (500.0, 500.0)
    uav_height: float = 20.0
    n_steps: int = 50
    timestep_s: float = 1.0
    v_max: float = 20.0           # m/s
    v_acc: float = 4.0            # m/s^2
    pi_min: float = 0.1           # m/s, velocity-slack floor (keeps induced power finite)
    r_min: tuple[float, ...] = (0.257,)   # bits/s/Hz, scalar shorthand broadcasts over UEs
    energy_budget_multiplier: float = 1.5
    alpha0_db: float = -61.0      # reference power gain at 1 m, dB
    noise_dbm: float = -174.0     # noise power in the normalized 1 Hz band, dBm
    carrier_wavelength: float = 0.01   # m
    bs_grid: tuple[int, int] = (4, 4)
    uav_grid: tuple[int, int] = (4, 4)
    ris_grid: tuple[int, int] = (10, 10)
    bs_spacing: tuple[float, float] | None = None    # None -> lambda_c / 2
    uav_spacing: tuple[float, float] | None = None
    ris_spacing: tuple[float, float] | None = None
    tie_link_powers: bool = False        # force equal UAV power on direct and RIS link
    per_hop_cascade_gain: bool = False   # apply the reference gain once per hop in the cascade

    def __post_init__(self):
        object.__setattr__(self, "area", _as_xy(self.area, "area"))
        ues = tuple(_as_xy(p, "ue_positions") for p in self.ue_positions)
        object.__setattr__(self, "ue_positions", ues)
        for name in ("bs_position", "ris_position", "uav_start", "uav_end"):
            object.__setattr__(self, name, _as_xy(getattr(self, name), name))
        rmin = self.r_min if isinstance(self.r_min, (tuple, list)) else (self.r_min,)
        if len(rmin) == 1:
            rmin = tuple(rmin) * len(ues)
        object.__setattr__(self, "r_min", tuple(float(r) for r in rmin))
        for name in ("bs_grid", "uav_grid", "ris_grid"):
            gx, gy = getattr(self, name)
            object.__setattr__(self, name, (int(gx), int(gy)))
        half = self.carrier_wavelength / 2.0
        for name in ("bs_spacing", "uav_spacing", "ris_spacing"):
            sp = getattr(self, name)
            object.__setattr__(self, name, (half, half) if sp is None else _as_xy(sp, name))
        self._validate()

    def _validate(self):
        def req(cond: bool, field_name: str, msg: str):
            if not cond:
                raise ConfigError(f"{field_name}: {msg}")

        req(len(self.ue_positions) >= 1, "ue_positions", "at least one UE required")
        req(self.n_steps >= 2, "n_steps", "need at least 2 timesteps")
        req(self.timestep_s > 0, "timestep_s", "must be positive")
        req(self.v_max > 0, "v_max", "must be positive")
        req(self.v_acc > 0, "v_acc", "must be positive")
        req(0 < self.pi_min <= self.v_max, "pi_min", "must lie in (0, v_max]")
        req(len(self.r_min) == len(self.ue_positions), "r_min",
            f"expected 1 or {len(self.ue_positions)} values, got {len(self.r_min)}")
        req(all(r > 0 for r in self.r_min), "r_min", "rates must be positive")
        req(self.energy_budget_multiplier >= 1.0, "energy_budget_multiplier", "must be >= 1")
        for name, h in (("bs_height", self.bs_height), ("ris_height", self.ris_height),
                        ("uav_height", self.uav_height)):
            req(h > 0, name, "height must be positive")
        req(self.uav_height > self.ris_height, "ris_height",
            f"UAV must fly above the RIS (uav_height={self.uav_height} <= ris_height={self.ris_height})")
        for name in ("bs_grid", "uav_grid", "ris_grid"):
            gx, gy = getattr(self, name)
            req(gx >= 1 and gy >= 1, name, "antenna counts must be >= 1")
        for name in ("bs_spacing", "uav_spacing", "ris_spacing"):
            sx, sy = getattr(self, name)
            req(sx > 0 and sy > 0, name, "element spacings must be positive")
        req(self.carrier_wavelength > 0, "carrier_wavelength", "must be positive")
        reach = self.n_steps * self.timestep_s * self.v_max
        dist = math.dist(self.uav_start, self.uav_end)
        req(dist <= reach + 1e-9, "uav_end",
            f"endpoints {dist:.1f} m apart exceed reachable {reach:.1f} m in n_steps*timestep*v_max")

    # -- derived radio quantities -------------------------------------------------

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    @property
    def alpha0(self) -> float:
        """Amplitude gain at 1 m (the table's dB entry read as a power gain)."""
        return 10.0 ** (self.alpha0_db / 20.0)

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    @property
    def m_bs(self) -> int:
        return self.bs_grid[0] * self.bs_grid[1]

    @property
    def m_uav(self) -> int:
        return self.uav_grid[0] * self.uav_grid[1]

    @property
    def m_ris(self) -> int:
        return self.ris_grid[0] * self.ris_grid[1]


@dataclass(frozen=True)
class EnergyParams:
    """Rotary-wing propulsion model constants (reference airframe values)."""

    omega: float = 300.0          # blade angular velocity, rad/s
    rotor_radius: float = 0.4     # m
    air_density: float = 1.225    # kg/m^3
    rotor_solidity: float = 0.05
    rotor_disc_area: float = 0.503   # enters the parasite term as a bare factor
    induced_velocity: float = 4.03   # m/s
    fuselage_drag: float = 0.3
    blade_power: float = 79.86    # W, hover blade-profile power
    induced_power: float = 88.63  # W, hover induced power

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"{f.name}: energy parameters must be strictly positive")


@dataclass(frozen=True)
class SimControls:
    """Iteration limits, tolerances and reproducibility knobs."""

    max_iterations: int = 30
    convergence_tol: float = 1e-3     # relative total-power change between iterations
    solver_tol: float = 1e-6          # feasibility tolerance
    rng_seed: int = 0
    max_power_w: float = 1e12         # attainability guard for transmit powers
    trust_radius: float = 50.0        # m, per-iteration trajectory move bound
    aux_objective: str = "slack_distance"   # or "propulsion"
    solver: str = "auto"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations: must be >= 1")
        if self.convergence_tol <= 0:
            raise ConfigError("convergence_tol: must be positive")
        if self.solver_tol <= 0:
            raise ConfigError("solver_tol: must be positive")
        if self.max_power_w <= 0:
            raise ConfigError("max_power_w: must be positive")
        if self.trust_radius <= 0:
            raise ConfigError("trust_radius: must be positive")
        if self.aux_objective not in ("slack_distance", "propulsion"):
            raise ConfigError("aux_objective: expected 'slack_distance' or 'propulsion'")


def baseline_scenario() -> tuple[ScenarioConfig, EnergyParams]:
    """The reference evaluation scenario plus project defaults for open fields."""
    return ScenarioConfig(), EnergyParams()


# TOML <-> dataclass field mapping; tuples become TOML arrays.
_SECTIONS = {"scenario": ScenarioConfig, "energy": EnergyParams, "solver": SimControls}


def _coerce(section: str, cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def load_scenario(path) -> tuple[ScenarioConfig, EnergyParams, SimControls]:
    """Load and validate a TOML scenario file.

    Missing keys take the documented defaults; unknown keys or invariant
    violations raise :class:`ConfigError` naming the offending field.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed scenario file {path}: {exc}") from exc
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    scenario = _coerce("scenario", ScenarioConfig, raw.get("scenario", {}))
    energy = _coerce("energy", EnergyParams, raw.get("energy", {}))
    controls = _coerce("solver", SimControls, raw.get("solver", {}))
    return scenario, energy, controls


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def save_scenario(path, scenario: ScenarioConfig, energy: EnergyParams,
                  controls: SimControls) -> None:
    """Write a TOML file that :func:`load_scenario` parses back identically."""
    lines = []
    for section, obj in (("scenario", scenario), ("energy", energy), ("solver", controls)):
        lines.append(f"[{section}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
