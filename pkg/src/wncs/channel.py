"""Rayleigh block-fading uplink: channel draws, SNR, minimum feasible
power, and MMSE decoding with its error covariance.

Fading is real-valued: states and the plant matrices are real, and the
Rayleigh behaviour enters through the Gaussian matrix norm. Powers are
linear (dB helpers provided); only ratios against N0 matter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mathkit import RngStream

log = logging.getLogger(__name__)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class ChannelConfig:
    """Uplink parameters; gamma0 and Pmax are stored linear."""

    N0: float = 1.0
    omega: float = 1.0
    gamma0: float = 100.0  # 20 dB
    Pmax: float = 1000.0  # 30 dBm
    sigma2_h: float = 0.02

    def __post_init__(self):
        for name in ("N0", "omega", "gamma0", "Pmax", "sigma2_h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_db(cls, gamma0_db: float = 20.0, pmax_dbm: float = 30.0, **kwargs):
        return cls(gamma0=db_to_linear(gamma0_db), Pmax=db_to_linear(pmax_dbm), **kwargs)


@dataclass
class UplinkResult:
    """Outcome of one scheduled transmission."""

    x_tilde: np.ndarray
    V_cov: np.ndarray
    gamma: float
    success: bool
    p_used: float


def draw_channel(rng: RngStream, D: int, sigma2_h: float) -> np.ndarray:
    """D x D channel with i.i.d. zero-mean Gaussian entries of variance sigma2_h."""
    if sigma2_h <= 0:
        raise ValueError("sigma2_h must be positive")
    return np.sqrt(sigma2_h) * rng.standard_normal((D, D))


def snr(p: float, H, cfg: ChannelConfig) -> float:
    """Uplink SNR p * ||H||_F^2 / (N0 * omega)."""
    if p < 0:
        raise ValueError("power must be nonnegative")
    H = np.asarray(H, dtype=float)
    return float(p * np.sum(H * H) / (cfg.N0 * cfg.omega))


def required_power(H, cfg: ChannelConfig):
    """Minimum power whose SNR meets gamma0, or None when infeasible.

    The division is bumped by ulps until the round-tripped SNR really
    clears the threshold, so a transmission at the returned power never
    fails by rounding alone.
    """
    H = np.asarray(H, dtype=float)
    if not np.all(np.isfinite(H)):
        raise ValueError("channel entries must be finite")
    g2 = float(np.sum(H * H))
    if g2 <= 0.0:
        return None
    p = cfg.gamma0 * cfg.N0 * cfg.omega / g2
    for _ in range(4):
        if snr(p, H, cfg) >= cfg.gamma0:
            break
        p = np.nextafter(p, np.inf)
    if p > cfg.Pmax:
        return None
    return float(p)


def mmse_error_cov(p: float, H, Omega, S, cfg: ChannelConfig):
    """MMSE gain G and error covariance V for the linear decode.

    G = sqrt(p) S H'O' (p O H S H'O' + N0 w I)^-1, with the inverse taken
    through an eigendecomposition of the PSD part so priors spanning many
    orders of magnitude stay solvable. V uses the square-root form
    V = S^(1/2) (I + p/(N0 w) S^(1/2) (OH)'(OH) S^(1/2))^-1 S^(1/2),
    which is algebraically S - G sqrt(p) O H S but free of the catastrophic
    cancellation the subtraction incurs for huge priors; V never exceeds
    S in the PSD order.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    D = S.shape[0]
    scale = max(1.0, float(np.abs(S).max()))
    eig_S, vec_S = np.linalg.eigh(0.5 * (S + S.T))
    if eig_S.min() < -1e-10 * scale:
        raise ValueError("prior covariance S must be positive semi-definite")
    eig_S = np.clip(eig_S, 0.0, None)
    S_half = (vec_S * np.sqrt(eig_S)) @ vec_S.T
    OH = Omega @ H
    sqp = np.sqrt(p)
    n0w = cfg.N0 * cfg.omega

    # every PSD intermediate is formed as a Gram product so roundoff can
    # never make it indefinite, even for priors spanning ~300 decades
    N_ = OH @ S_half
    mu, U = np.linalg.eigh(N_ @ N_.T)  # eigenvalues of OH S (OH)'
    mu = np.clip(mu, 0.0, None)
    inv_innov = (U / (p * mu + n0w)) @ U.T
    G = sqp * S @ OH.T @ inv_innov

    lam, Uc = np.linalg.eigh((p / n0w) * (N_.T @ N_))
    lam = np.clip(lam, 0.0, None)
    V_factor = S_half @ (Uc / np.sqrt(1.0 + lam))
    V = V_factor @ V_factor.T
    return G, 0.5 * (V + V.T)


def mmse_v_only(p: float, H, Omega, S, cfg: ChannelConfig) -> np.ndarray:
    """Error covariance V without the gain matrix (one eigh fewer);
    identical arithmetic to the V path of mmse_error_cov."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    scale = max(1.0, float(np.abs(S).max()))
    eig_S, vec_S = np.linalg.eigh(0.5 * (S + S.T))
    if eig_S.min() < -1e-10 * scale:
        raise ValueError("prior covariance S must be positive semi-definite")
    eig_S = np.clip(eig_S, 0.0, None)
    S_half = (vec_S * np.sqrt(eig_S)) @ vec_S.T
    N_ = (Omega @ H) @ S_half
    lam, Uc = np.linalg.eigh((p / (cfg.N0 * cfg.omega)) * (N_.T @ N_))
    lam = np.clip(lam, 0.0, None)
    V_factor = S_half @ (Uc / np.sqrt(1.0 + lam))
    V = V_factor @ V_factor.T
    return 0.5 * (V + V.T)


def transmit_ul(x, p: float, H, Omega, S, cfg: ChannelConfig, rng: RngStream) -> UplinkResult:
    """One uplink transmission: y = sqrt(p) O H x + n, MMSE decode of x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not 0.0 <= p <= cfg.Pmax:
        raise ValueError(f"power {p} outside [0, Pmax]")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    G, V = mmse_error_cov(p, H, Omega, S, cfg)
    noise = np.sqrt(cfg.N0 * cfg.omega) * rng.standard_normal(x.shape[0])
    y = np.sqrt(p) * Omega @ H @ x + noise
    gamma = snr(p, H, cfg)
    return UplinkResult(
        x_tilde=G @ y,
        V_cov=V,
        gamma=gamma,
        success=bool(gamma >= cfg.gamma0),
        p_used=float(p),
    )
