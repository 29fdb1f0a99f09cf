"""SNRs, spectral efficiencies and the per-watt / slack SNR decompositions.

Two equivalent SNR factorizations drive the optimizer:

* power control works with ``gamma = P * kappa`` where kappa folds the full
  geometry (per-watt SNR, 1/W);
* trajectory shaping works with ``gamma = hat_gamma / slack`` where the
  slack upper-bounds a squared link distance and hat_gamma keeps the power
  and antenna factors.

Both reproduce the direct gain**2 * P / sigma**2 computation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import EffectiveGains, link_distances
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class LinkCoefficients:
    """Per-watt SNR coefficients and, when powers are bound, surrogate numerators.

    ``kappa_ue[:, 0]`` is the direct UAV-UE link, ``[:, 1]`` the RIS link.
    ``hat_gamma_*`` are the slack-SNR numerators (units of m^2: SNR times a
    squared distance); ``None`` until powers are supplied.
    """
    kappa_bs: float
    kappa_ue: np.ndarray           # (K, 2)
    hat_gamma_bs: float | None = None
    hat_gamma_ue: np.ndarray | None = None   # (K, 2)


def snr_set(gains: EffectiveGains, p_bs: float, p_ue: np.ndarray,
            noise_w: float) -> tuple[float, np.ndarray]:
    """SNRs gamma = gain**2 * power / noise for one timestep.

    ``p_ue`` has shape (K, 2): direct and RIS-link UAV powers per UE.
    """
    p_ue = np.asarray(p_ue, dtype=float)
    if np.any(p_ue < 0) or p_bs < 0:
        raise ValueError("transmit powers must be nonnegative")
    if noise_w <= 0:
        raise ValueError("noise power must be positive")
    gamma_bs = gains.bs_uav ** 2 * p_bs / noise_w
    gamma_ue = np.stack([gains.uav_ue ** 2 * p_ue[:, 0],
                         gains.uav_ris_ue ** 2 * p_ue[:, 1]], axis=1) / noise_w
    return gamma_bs, gamma_ue


def rates(gamma_bs: float, gamma_ue: np.ndarray):
    """(backhaul capacity, per-link rates (K,2), per-UE sum rates (K,)) in bits/s/Hz."""
    gamma_ue = np.asarray(gamma_ue, dtype=float)
    capacity = float(np.log2(1.0 + gamma_bs))
    r_ue = np.log2(1.0 + gamma_ue)
    return capacity, r_ue, r_ue.sum(axis=1)


def surrogate_per_watt(scenario: ScenarioConfig) -> tuple[float, np.ndarray]:
    """Per-watt slack-SNR numerators (UAV-position independent).

    Returns (bs factor, (K, 2) UE factors): hat_gamma = factor * power.
    """
    a0sq = scenario.alpha0 ** 2
    noise = scenario.noise_power_w
    bs = scenario.m_bs * a0sq / noise
    direct = np.full(scenario.n_ues, scenario.m_uav * a0sq / noise)
    _, _, _, d_rg = link_distances(scenario, scenario.uav_start)
    ris_a0 = a0sq ** 2 if scenario.per_hop_cascade_gain else a0sq
    ris = scenario.m_uav * scenario.m_ris ** 2 * ris_a0 / (d_rg ** 2 * noise)
    return bs, np.stack([direct, ris], axis=1)


def kappa_coefficients(scenario: ScenarioConfig, uav_xy,
                       p_bs: float | None = None,
                       p_ue: np.ndarray | None = None) -> LinkCoefficients:
    """Per-watt SNR coefficients at one UAV position; P * kappa == snr_set exactly.

    Passing powers also fills the surrogate numerators so the result can be
    fed to :func:`slack_snr`.
    """
    d_bu, d_ug, d_ur, d_rg = link_distances(scenario, uav_xy)
    a0sq = scenario.alpha0 ** 2
    noise = scenario.noise_power_w
    kappa_bs = scenario.m_bs * a0sq / (d_bu ** 2 * noise)
    k1 = scenario.m_uav * a0sq / (d_ug ** 2 * noise)
    ris_a0 = a0sq ** 2 if scenario.per_hop_cascade_gain else a0sq
    k2 = scenario.m_uav * scenario.m_ris ** 2 * ris_a0 / (d_rg ** 2 * d_ur ** 2 * noise)
    kappa_ue = np.stack([k1, k2], axis=1)
    hat_bs = None
    hat_ue = None
    if p_bs is not None or p_ue is not None:
        if p_bs is None or p_ue is None:
            raise ValueError("provide both p_bs and p_ue or neither")
        per_bs, per_ue = surrogate_per_watt(scenario)
        hat_bs = per_bs * float(p_bs)
        hat_ue = per_ue * np.asarray(p_ue, dtype=float)
    return LinkCoefficients(kappa_bs=kappa_bs, kappa_ue=kappa_ue,
                            hat_gamma_bs=hat_bs, hat_gamma_ue=hat_ue)


def slack_snr(coeffs: LinkCoefficients, lam_ue: np.ndarray, mu: float):
    """SNR surrogates gamma = hat_gamma / slack.

    ``lam_ue`` (K, 2) and ``mu`` are squared-distance slacks; with the
    slacks tight at the true squared distances this equals the exact SNR,
    and it only under-estimates as slacks grow.
    """
    if coeffs.hat_gamma_bs is None or coeffs.hat_gamma_ue is None:
        raise ValueError("coefficients were built without powers; no surrogate numerators")
    lam_ue = np.asarray(lam_ue, dtype=float)
    if mu <= 0 or np.any(lam_ue <= 0):
        raise ValueError("slack values must be strictly positive")
    return coeffs.hat_gamma_bs / mu, coeffs.hat_gamma_ue / lam_ue
