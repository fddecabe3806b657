"""Pure evaluation of SINR, radar output SNR, beampatterns, and residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, RdarsState, steering_vector

__all__ = [
    "Beamformer",
    "user_sinr",
    "radar_snr",
    "radar_snr_db",
    "beampattern",
    "penalty_residuals",
    "DB_FLOOR",
]

DB_FLOOR = -120.0


@dataclass
class Beamformer:
    """Compound transmit beamformer (top block BS, bottom block connected) and receive filter."""

    f: np.ndarray   # (M+a, K)
    w: np.ndarray   # (M,)

    def f_bs(self, m: int) -> np.ndarray:
        return self.f[:m, :]

    def f_connected(self, m: int) -> np.ndarray:
        return self.f[m:, :]

    def power(self) -> float:
        return float(np.sum(np.abs(self.f) ** 2))


def user_sinr(h1: np.ndarray, f: np.ndarray, sigma1_sq) -> np.ndarray:
    """Per-user SINR (linear) of the composite channels h1 (K, M+a)."""
    h1 = np.atleast_2d(h1)
    k = h1.shape[0]
    sigma1_sq = np.broadcast_to(np.asarray(sigma1_sq, dtype=float), (k,))
    gains = np.abs(h1 @ f) ** 2          # gains[k, i] = |h1_k^T f_i|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    denom = interference + sigma1_sq
    if np.any((denom == 0) & (signal == 0)):
        raise ValueError("SINR undefined: zero noise, interference and signal")
    return signal / denom


def radar_snr(w: np.ndarray, h2: np.ndarray, f: np.ndarray,
              sigma_alpha_sq: float, sigma2_sq: float) -> float:
    """Filtered echo power ratio; invariant to rescaling of w."""
    wn = float(np.real(np.vdot(w, w)))
    if wn == 0:
        raise ValueError("receive filter must be nonzero")
    through = w.conj() @ h2 @ f
    return sigma_alpha_sq * float(np.real(np.vdot(through, through))) / (sigma2_sq * wn)


def radar_snr_db(w, h2, f, sigma_alpha_sq, sigma2_sq) -> float:
    value = radar_snr(w, h2, f, sigma_alpha_sq, sigma2_sq)
    if value <= 0:
        return DB_FLOOR
    return max(10.0 * np.log10(value), DB_FLOOR)


def _gain_db(power: np.ndarray) -> np.ndarray:
    out = np.full(power.shape, DB_FLOOR)
    mask = power > 0
    out[mask] = np.maximum(10.0 * np.log10(power[mask]), DB_FLOOR)
    return out


def beampattern(site: str, f: np.ndarray, channels: ChannelSet, state: RdarsState,
                theta_grid: np.ndarray, psi_grid: np.ndarray | None = None,
                spacing_ratio: float = 0.5, upa_dims=None) -> np.ndarray:
    """Transmit power pattern in dB (floored at DB_FLOOR).

    site="BS": sum_k |a_ULA(theta)^T f_k1|^2 over theta_grid -> (T,).
    site="RDARS": aperture emission (reflected BS signal plus connected
    elements) scanned over (theta, psi) -> (T, P).
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid.size == 0:
        raise ValueError("angle grid must be non-empty")
    m = channels.m
    f1 = f[:m, :]
    if site == "BS":
        steer = np.stack([steering_vector("ULA", t, dims=m, spacing_ratio=spacing_ratio)
                          for t in theta_grid])
        power = np.sum(np.abs(steer @ f1) ** 2, axis=1)
        return _gain_db(power)
    if site == "RDARS":
        if psi_grid is None:
            raise ValueError("RDARS pattern needs an elevation grid")
        if upa_dims is None:
            raise ValueError("RDARS pattern needs the UPA dims")
        refl = (1.0 - state.a_vec.astype(float)) * state.phi
        emission = refl[:, None] * (channels.h_br @ f1)          # (N, K)
        emission = emission + state.a_cols.astype(float) @ f[m:, :]
        power = np.zeros((theta_grid.size, np.asarray(psi_grid).size))
        for ti, theta in enumerate(theta_grid):
            for pi, psi in enumerate(np.asarray(psi_grid, dtype=float)):
                a_vec = steering_vector("UPA", theta, psi, upa_dims, spacing_ratio)
                power[ti, pi] = np.sum(np.abs(a_vec @ emission) ** 2)
        return _gain_db(power)
    raise ValueError(f"unknown beampattern site {site!r}")


def penalty_residuals(a_diag: np.ndarray, a_cols: np.ndarray, s: np.ndarray,
                      h1: np.ndarray, f: np.ndarray) -> dict:
    """Squared violations of the two lifted equality constraints.

    comm_residual  = sum_{k,i} |h1_k^T f_i - s_{k,i}|^2
    selection_residual = || diag(a) - A_a A_a^T ||_F^2
    """
    vals = np.atleast_2d(h1) @ f
    comm = float(np.sum(np.abs(vals - s) ** 2))
    a_mat = np.diag(np.asarray(a_diag, dtype=float))
    cols = np.asarray(a_cols, dtype=float)
    sel = float(np.sum(np.abs(a_mat - cols @ cols.T) ** 2))
    return {"comm_residual": comm, "selection_residual": sel}
