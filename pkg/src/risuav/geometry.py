"""Link geometry, UPA steering vectors, channel construction and RIS phase control.

Conventions (all verified against closed forms in the tests):

* Steering vectors carry phases ``exp(-j * 2*pi*spacing/lambda * (m-1) * s)``
  per axis and are Kronecker-combined x-major; entry (1,1) is always 1.
* Channel entries have amplitude ``alpha0 / distance``.  The RIS-to-UE
  vector is stored conjugated relative to the other links so that the
  per-element cascade factor accumulates the incoming and outgoing phase
  progressions with a common sign; the closed-form phase policy is then
  the exact argmax of the cascade modulus.
* The UAV-RIS-UE cascade applies the reference gain once across both hops
  by default (matching the closed-form effective gains); the per-hop
  alternative sits behind ``ScenarioConfig.per_hop_cascade_gain``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig


@dataclass(frozen=True)
class AngleTriple:
    """Vertical/horizontal angle sines for one link.

    ``sin_theta`` can exceed 1 only for the BS-UAV link in near-overhead
    geometries (its numerator is the BS height, taken verbatim from the
    angle definitions); steering phases remain well defined there.
    """
    sin_theta: float
    sin_xi: float
    cos_xi: float


@dataclass(frozen=True)
class LinkAngles:
    bu: AngleTriple
    ug: tuple[AngleTriple, ...]   # per UE
    ur: AngleTriple               # identical seen from either end
    rg: tuple[AngleTriple, ...]   # per UE


@dataclass(frozen=True)
class ChannelSet:
    h_bu: np.ndarray      # (M_B,)
    h_ug: np.ndarray      # (K, M_U)
    h_ur: np.ndarray      # (M_R, M_U), rank one
    h_rg: np.ndarray      # (K, M_R), stored conjugated (see module docstring)
    d_bu: float
    d_ug: np.ndarray      # (K,)
    d_ur: float
    d_rg: np.ndarray      # (K,)
    alpha0: float


@dataclass(frozen=True)
class RISPhaseProfile:
    """Per-element phase shifts, radians in [0, 2*pi); shape (M_Rx, M_Ry, K, N)."""
    phi: np.ndarray

    def __post_init__(self):
        if np.any(self.phi < 0) or np.any(self.phi >= 2 * np.pi):
            raise ValueError("phase values must lie in [0, 2*pi)")


def _horizontal_angles(dx: float, dy: float) -> tuple[float, float]:
    # Absolute-value convention from the angle definitions; degenerate
    # overhead geometry falls back to (sin, cos) = (0, 1).
    h = math.hypot(dx, dy)
    if h == 0.0:
        return 0.0, 1.0
    return abs(dx) / h, abs(dy) / h


def node_positions(scenario: ScenarioConfig, uav_xy) -> dict[str, np.ndarray]:
    """3-D coordinates of every node with the UAV at ``uav_xy``."""
    ux, uy = float(uav_xy[0]), float(uav_xy[1])
    pos = {
        "uav": np.array([ux, uy, scenario.uav_height]),
        "bs": np.array([*scenario.bs_position, scenario.bs_height]),
        "ris": np.array([*scenario.ris_position, scenario.ris_height]),
    }
    for k, ue in enumerate(scenario.ue_positions):
        pos[f"ue{k}"] = np.array([ue[0], ue[1], 0.0])
    return pos


def link_angles(scenario: ScenarioConfig, uav_xy) -> LinkAngles:
    """Angle triples for every link at one UAV position."""
    pos = node_positions(scenario, uav_xy)
    uav, bs, ris = pos["uav"], pos["bs"], pos["ris"]

    d_bu = float(np.linalg.norm(bs - uav))
    bu = AngleTriple(scenario.bs_height / d_bu,
                     *_horizontal_angles(bs[0] - uav[0], bs[1] - uav[1]))

    d_ur = float(np.linalg.norm(ris - uav))
    ur = AngleTriple(abs(scenario.uav_height - scenario.ris_height) / d_ur,
                     *_horizontal_angles(ris[0] - uav[0], ris[1] - uav[1]))

    ug = []
    rg = []
    for k in range(scenario.n_ues):
        ue = pos[f"ue{k}"]
        d_ug = float(np.linalg.norm(ue - uav))
        ug.append(AngleTriple(scenario.uav_height / d_ug,
                              *_horizontal_angles(ue[0] - uav[0], ue[1] - uav[1])))
        d_rg = float(np.linalg.norm(ue - ris))
        rg.append(AngleTriple(scenario.ris_height / d_rg,
                              *_horizontal_angles(ue[0] - ris[0], ue[1] - ris[1])))
    return LinkAngles(bu=bu, ug=tuple(ug), ur=ur, rg=tuple(rg))


def steering_vector(grid: tuple[int, int], spacings: tuple[float, float],
                    wavelength: float, sin_theta: float, sin_xi: float,
                    cos_xi: float) -> np.ndarray:
    """Unit-modulus UPA phase vector, x-major Kronecker of the two axes."""
    mx, my = grid
    dx, dy = spacings
    px = np.exp(-1j * 2 * np.pi * dx / wavelength * np.arange(mx) * sin_theta * cos_xi)
    py = np.exp(-1j * 2 * np.pi * dy / wavelength * np.arange(my) * sin_theta * sin_xi)
    return np.kron(px, py)


def link_distances(scenario: ScenarioConfig, uav_xy):
    """(d_bu, d_ug[K], d_ur, d_rg[K]) as full 3-D norms."""
    pos = node_positions(scenario, uav_xy)
    uav = pos["uav"]
    d_bu = float(np.linalg.norm(pos["bs"] - uav))
    d_ur = float(np.linalg.norm(pos["ris"] - uav))
    d_ug = np.array([np.linalg.norm(pos[f"ue{k}"] - uav) for k in range(scenario.n_ues)])
    d_rg = np.array([np.linalg.norm(pos[f"ue{k}"] - pos["ris"]) for k in range(scenario.n_ues)])
    return d_bu, d_ug, d_ur, d_rg


def build_channels(scenario: ScenarioConfig, uav_xy) -> ChannelSet:
    """All four deterministic LoS channels for one UAV position."""
    ang = link_angles(scenario, uav_xy)
    d_bu, d_ug, d_ur, d_rg = link_distances(scenario, uav_xy)
    lam = scenario.carrier_wavelength
    a0 = scenario.alpha0

    h_bu = (a0 / d_bu) * steering_vector(scenario.bs_grid, scenario.bs_spacing, lam,
                                         ang.bu.sin_theta, ang.bu.sin_xi, ang.bu.cos_xi)
    h_ug = np.stack([
        (a0 / d_ug[k]) * steering_vector(scenario.uav_grid, scenario.uav_spacing, lam,
                                         t.sin_theta, t.sin_xi, t.cos_xi)
        for k, t in enumerate(ang.ug)])
    a_ris_ur = steering_vector(scenario.ris_grid, scenario.ris_spacing, lam,
                               ang.ur.sin_theta, ang.ur.sin_xi, ang.ur.cos_xi)
    a_uav_ur = steering_vector(scenario.uav_grid, scenario.uav_spacing, lam,
                               ang.ur.sin_theta, ang.ur.sin_xi, ang.ur.cos_xi)
    h_ur = (a0 / d_ur) * np.outer(a_ris_ur, a_uav_ur.conj())
    h_rg = np.stack([
        (a0 / d_rg[k]) * steering_vector(scenario.ris_grid, scenario.ris_spacing, lam,
                                         t.sin_theta, t.sin_xi, t.cos_xi).conj()
        for k, t in enumerate(ang.rg)])
    return ChannelSet(h_bu=h_bu, h_ug=h_ug, h_ur=h_ur, h_rg=h_rg,
                      d_bu=d_bu, d_ug=d_ug, d_ur=d_ur, d_rg=d_rg, alpha0=a0)


def optimal_ris_phase(angles: LinkAngles, scenario: ScenarioConfig, k: int) -> np.ndarray:
    """Closed-form per-element phases (M_Rx, M_Ry) aligning the cascade for UE k.

    Each element compensates the sum of the incoming (UAV side) and
    outgoing (UE side) phase progressions; values are reduced into
    [0, 2*pi).
    """
    mx, my = scenario.ris_grid
    dx, dy = scenario.ris_spacing
    lam = scenario.carrier_wavelength
    ur, rg = angles.ur, angles.rg[k]
    sx = ur.sin_theta * ur.cos_xi + rg.sin_theta * rg.cos_xi
    sy = ur.sin_theta * ur.sin_xi + rg.sin_theta * rg.sin_xi
    ix = np.arange(mx)[:, None]
    iy = np.arange(my)[None, :]
    phi = 2 * np.pi * (dx / lam * ix * sx + dy / lam * iy * sy)
    return np.mod(phi, 2 * np.pi)


def phase_profile(scenario: ScenarioConfig, uav_positions) -> RISPhaseProfile:
    """Optimal phases for every UE at every trajectory position (M_Rx, M_Ry, K, N)."""
    uav_positions = np.atleast_2d(np.asarray(uav_positions, dtype=float))
    mx, my = scenario.ris_grid
    phi = np.empty((mx, my, scenario.n_ues, len(uav_positions)))
    for n, xy in enumerate(uav_positions):
        ang = link_angles(scenario, xy)
        for k in range(scenario.n_ues):
            phi[:, :, k, n] = optimal_ris_phase(ang, scenario, k)
    return RISPhaseProfile(phi=phi)


def ris_phase_matrix(profile: RISPhaseProfile, k: int, n: int) -> np.ndarray:
    """Diagonal unit-modulus reflection matrix for UE k at step n."""
    phi = profile.phi[:, :, k, n].ravel()   # x-major, matching the steering Kronecker
    return np.diag(np.exp(1j * phi))


def cascade_channel(channels: ChannelSet, phase: np.ndarray, k: int,
                    per_hop_gain: bool = False) -> np.ndarray:
    """End-to-end UAV-to-UE row vector (M_U,) through the phased RIS."""
    m_r = channels.h_rg.shape[1]
    if phase.shape != (m_r, m_r):
        raise ValueError(f"phase matrix {phase.shape} does not match RIS size {m_r}")
    row = channels.h_rg[k].conj() @ phase @ channels.h_ur
    if not per_hop_gain:
        # Single reference gain across both hops, matching the closed forms.
        row = row / channels.alpha0
    return row


@dataclass(frozen=True)
class EffectiveGains:
    """Real beamformed channel gains under maximum-ratio transmission."""
    bs_uav: float
    uav_ue: np.ndarray    # (K,)
    uav_ris_ue: np.ndarray  # (K,)


def _gains_from_distances(scenario: ScenarioConfig, d_bu, d_ug, d_ur, d_rg) -> EffectiveGains:
    a0 = scenario.alpha0
    bu = math.sqrt(scenario.m_bs) * a0 / d_bu
    ug = math.sqrt(scenario.m_uav) * a0 / d_ug
    cascade_a0 = a0 ** 2 if scenario.per_hop_cascade_gain else a0
    urg = math.sqrt(scenario.m_uav) * scenario.m_ris * cascade_a0 / (d_rg * d_ur)
    return EffectiveGains(bs_uav=bu, uav_ue=ug, uav_ris_ue=urg)


def mrt_effective_gains(channels: ChannelSet, scenario: ScenarioConfig) -> EffectiveGains:
    """Closed-form gains; tests verify them against explicit beamformed products."""
    return _gains_from_distances(scenario, channels.d_bu, channels.d_ug,
                                 channels.d_ur, channels.d_rg)


def effective_gains_at(scenario: ScenarioConfig, uav_xy) -> EffectiveGains:
    """Gains at a UAV position straight from the link distances (no channel build)."""
    d_bu, d_ug, d_ur, d_rg = link_distances(scenario, uav_xy)
    return _gains_from_distances(scenario, d_bu, d_ug, d_ur, d_rg)
