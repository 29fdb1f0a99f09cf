"""Rotary-wing propulsion power and trajectory energy accounting.

The model is the standard blade-profile + induced + parasite decomposition
with the induced term in its high-speed 1/v form, which is singular at
hover; a configurable speed floor guards it.
"""

from __future__ import annotations

import math

import numpy as np

from .scenario import EnergyParams, ScenarioConfig

DEFAULT_SPEED_FLOOR = 0.1  # m/s


class SpeedFloorError(ValueError):
    """Speed (or speed slack) below the floor where the model is singular."""


def _blade_and_parasite(speed_sq, speed_cubed, params: EnergyParams):
    blade = params.blade_power * (1.0 + 3.0 * speed_sq / (params.omega ** 2 * params.rotor_radius ** 2))
    parasite = 0.5 * (params.fuselage_drag * params.air_density * params.rotor_solidity
                      * params.rotor_disc_area) * speed_cubed
    return blade + parasite


def propulsion_power(speed: float, params: EnergyParams,
                     floor: float = DEFAULT_SPEED_FLOOR) -> float:
    """In-flight propulsion power [W] at airspeed ``speed`` [m/s].

    Raises :class:`SpeedFloorError` below ``floor``, where the induced term
    diverges.
    """
    if speed < floor:
        raise SpeedFloorError(f"speed {speed} m/s below floor {floor} m/s")
    induced = params.induced_power * params.induced_velocity / speed
    return _blade_and_parasite(speed * speed, speed ** 3, params) + induced


def propulsion_power_slack(speed: float, pi_slack: float, params: EnergyParams,
                           floor: float = DEFAULT_SPEED_FLOOR) -> float:
    """Propulsion power with the induced term divided by the slack speed.

    For ``pi_slack <= speed`` this upper-bounds :func:`propulsion_power`,
    with equality at ``pi_slack == speed``; it is the convex surrogate the
    trajectory subproblem budgets against.
    """
    if pi_slack < floor:
        raise SpeedFloorError(f"speed slack {pi_slack} m/s below floor {floor} m/s")
    induced = params.induced_power * params.induced_velocity / pi_slack
    return _blade_and_parasite(speed * speed, speed ** 3, params) + induced


def trajectory_energy(velocities: np.ndarray, tau: float, params: EnergyParams,
                      floor: float = DEFAULT_SPEED_FLOOR) -> float:
    """Total propulsion energy [J] of per-step velocities (N x 2), each held tau seconds."""
    speeds = np.linalg.norm(np.asarray(velocities, dtype=float), axis=-1)
    return sum(propulsion_power(s, params, floor) for s in speeds) * tau


def straight_line_speed(scenario: ScenarioConfig) -> float:
    """Constant speed of the direct start-to-end path flown over all steps."""
    dist = math.dist(scenario.uav_start, scenario.uav_end)
    return dist / (scenario.n_steps * scenario.timestep_s)


def straight_line_min_energy(scenario: ScenarioConfig, params: EnergyParams) -> float:
    """Energy [J] of the constant-velocity straight path; the budget reference E_min.

    Raises :class:`SpeedFloorError` if the required constant speed falls
    outside [pi_min, v_max].
    """
    speed = straight_line_speed(scenario)
    if speed < scenario.pi_min:
        raise SpeedFloorError(
            f"straight-line speed {speed:.3f} m/s below pi_min {scenario.pi_min} m/s")
    if speed > scenario.v_max:
        raise SpeedFloorError(
            f"straight-line speed {speed:.3f} m/s exceeds v_max {scenario.v_max} m/s")
    power = propulsion_power(speed, params, floor=scenario.pi_min)
    return power * scenario.n_steps * scenario.timestep_s


def energy_budget(scenario: ScenarioConfig, params: EnergyParams) -> float:
    """E_max = multiplier * E_min."""
    return scenario.energy_budget_multiplier * straight_line_min_energy(scenario, params)
