"""Channel synthesis and composite-channel assembly.

Five links are modeled: the BS->RDARS matrix, per-user BS->user and
RDARS->user vectors (all Rician), and the BS->target / RDARS->target
steering vectors (pure line of sight).  Synthesis is pure given
(config, geometry, seed); every link draws from its own counter-keyed
RNG stream so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .scenario import Geometry, SystemConfig, db_to_linear

__all__ = [
    "ChannelSet",
    "RdarsState",
    "steering_vector",
    "path_loss_gain",
    "synthesize_channels",
    "assemble_composites",
    "link_rng",
    "initial_rdars_state",
    "dump_channels",
    "load_channels",
]

# Stable stream ids for the counter-keyed RNG.
STREAM_H_BR = 0
STREAM_H_BU = 1
STREAM_H_RU = 2
STREAM_USER_POS = 3
STREAM_PHI_INIT = 4
STREAM_PHI_RANDOM = 5
STREAM_F_INIT = 6


def link_rng(seed: int, *key: int) -> np.random.Generator:
    """Splittable RNG keyed by (seed, stream id, ...); order-independent."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def steering_vector(kind: str, theta: float, psi: float = 0.0, dims=None,
                    spacing_ratio: float = 0.5) -> np.ndarray:
    """Array response toward azimuth ``theta`` / elevation ``psi`` (radians).

    ULA of ``dims`` elements: entry m is exp(-j*2*pi*ratio*m*sin(theta)).
    UPA of ``dims = (n1, n2)`` elements: entry (m1, m2), flattened with m2
    fastest, is exp(-j*2*pi*ratio*(m1*sin(theta)*cos(psi) + m2*sin(psi))).
    """
    if not (math.isfinite(theta) and math.isfinite(psi)):
        raise ValueError("steering angle must be finite")
    if kind == "ULA":
        m = int(dims)
        if m < 1:
            raise ValueError("ULA needs at least one element")
        idx = np.arange(m)
        return np.exp(-2j * np.pi * spacing_ratio * idx * np.sin(theta))
    if kind == "UPA":
        n1, n2 = (int(d) for d in dims)
        if n1 < 1 or n2 < 1:
            raise ValueError("UPA needs at least one element per axis")
        i1 = np.arange(n1)[:, None]
        i2 = np.arange(n2)[None, :]
        phase = i1 * (np.sin(theta) * np.cos(psi)) + i2 * np.sin(psi)
        return np.exp(-2j * np.pi * spacing_ratio * phase).reshape(n1 * n2)
    raise ValueError(f"unknown array kind {kind!r}")


def path_loss_gain(d_m: float, alpha: float, p0_db: float = -30.0, d0_m: float = 1.0) -> float:
    """Linear power gain of the distance-based path loss model."""
    if d_m <= 0:
        raise ValueError("distance must be positive")
    return db_to_linear(p0_db - 10.0 * alpha * math.log10(d_m / d0_m))


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the five links plus their path-loss gains.

    Immutable; shared read-only by every scheme evaluated on the same trial.
    """

    h_br: np.ndarray          # (N, M) BS -> RDARS
    h_bu: np.ndarray          # (K, M) BS -> user k
    h_ru: np.ndarray          # (K, N) RDARS -> user k
    h_bt: np.ndarray          # (M,)   BS -> target
    h_rt: np.ndarray          # (N,)   RDARS -> target
    gains: dict
    user_positions: np.ndarray  # (K, 3)

    @property
    def n(self) -> int:
        return self.h_br.shape[0]

    @property
    def m(self) -> int:
        return self.h_br.shape[1]

    @property
    def k(self) -> int:
        return self.h_bu.shape[0]


@dataclass
class RdarsState:
    """Reflection coefficients and the connected-element selection.

    ``phi`` is carried for every element; entries belonging to connected
    elements are multiplied by (I - A) downstream and never affect outputs.
    ``a_vec`` is the 0/1 selection diagonal and ``a_cols`` the (N, a) one-hot
    column matrix with A = a_cols @ a_cols.T on the feasible set.
    """

    phi: np.ndarray
    a_vec: np.ndarray
    a_cols: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def a_count(self) -> int:
        return self.a_cols.shape[1]

    def selection_diag(self) -> np.ndarray:
        return self.a_vec.astype(float)

    def validate(self, unit_modulus_tol: float = 5e-16) -> "RdarsState":
        if np.any(np.abs(np.abs(self.phi) - 1.0) > unit_modulus_tol):
            raise ValueError("reflection coefficients must be unit modulus")
        if not np.array_equal(self.a_vec, self.a_vec.astype(bool).astype(self.a_vec.dtype)):
            raise ValueError("a_vec must be binary")
        cols = self.a_cols
        if cols.shape[0] != self.n:
            raise ValueError("a_cols row count must equal N")
        if np.any(cols.sum(axis=0) != 1):
            raise ValueError("each selection column must be one-hot")
        rows = np.flatnonzero(cols.sum(axis=1))
        if cols.sum() != self.a_count or len(rows) != self.a_count:
            raise ValueError("selection columns must pick distinct rows")
        return self


def initial_rdars_state(n: int, a_count: int, phi: np.ndarray | None = None) -> RdarsState:
    """First ``a_count`` elements connected; matching one-hot columns."""
    a_vec = np.zeros(n, dtype=np.int64)
    a_vec[:a_count] = 1
    a_cols = np.zeros((n, a_count), dtype=np.int64)
    for j in range(a_count):
        a_cols[j, j] = 1
    if phi is None:
        phi = np.ones(n, dtype=complex)
    return RdarsState(phi=np.asarray(phi, dtype=complex), a_vec=a_vec, a_cols=a_cols)


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _azimuth_elevation(src: np.ndarray, dst: np.ndarray) -> tuple[float, float]:
    """Azimuth of dst seen from src, and downward-positive elevation."""
    delta = dst - src
    horiz = math.hypot(delta[0], delta[1])
    theta = math.atan2(delta[1], delta[0])
    psi = math.atan2(src[2] - dst[2], horiz)
    return theta, psi


def synthesize_channels(config: SystemConfig, geometry: Geometry, seed: int) -> ChannelSet:
    """Draw one channel realization; fully determined by ``seed``.

    The Rician links mix the geometric LoS response (weight sqrt(kappa))
    with i.i.d. CN(0,1) entries (weight sqrt(1-kappa)); both target links
    are pure LoS.  User positions are uniform over the configured disk.
    """
    m, n, k = config.m, config.n, config.k
    ratio = config.spacing_ratio
    dims = (config.n1, config.n2)
    pl = config.pathloss

    rng_pos = link_rng(seed, STREAM_USER_POS)
    radii = geometry.user_radius * np.sqrt(rng_pos.uniform(size=k))
    angles = rng_pos.uniform(0.0, 2.0 * np.pi, size=k)
    users = np.stack([
        geometry.user_center[0] + radii * np.cos(angles),
        geometry.user_center[1] + radii * np.sin(angles),
        np.full(k, geometry.user_center[2]),
    ], axis=1)

    sqrt_kappa = math.sqrt(config.kappa)
    sqrt_nkappa = math.sqrt(1.0 - config.kappa)

    gain_br = path_loss_gain(geometry.dist_bs_rdars, pl.alpha_h_br, pl.p0_db, pl.d0_m)
    los_br = np.outer(
        steering_vector("UPA", geometry.theta_br_arr, geometry.psi_br_arr, dims, ratio),
        steering_vector("ULA", geometry.theta_br_dep, dims=m, spacing_ratio=ratio),
    )
    h_br = math.sqrt(gain_br) * (
        sqrt_kappa * los_br + sqrt_nkappa * _complex_normal(link_rng(seed, STREAM_H_BR), (n, m))
    )

    gains = {"h_br": gain_br, "h_bu": np.zeros(k), "h_ru": np.zeros(k)}
    h_bu = np.zeros((k, m), dtype=complex)
    h_ru = np.zeros((k, n), dtype=complex)
    for i in range(k):
        d_bu = float(np.linalg.norm(users[i] - geometry.pos_bs))
        d_ru = float(np.linalg.norm(users[i] - geometry.pos_rdars))
        g_bu = path_loss_gain(d_bu, pl.alpha_h_bu, pl.p0_db, pl.d0_m)
        g_ru = path_loss_gain(d_ru, pl.alpha_h_ru, pl.p0_db, pl.d0_m)
        gains["h_bu"][i] = g_bu
        gains["h_ru"][i] = g_ru
        theta_bu, _ = _azimuth_elevation(geometry.pos_bs, users[i])
        theta_ru, psi_ru = _azimuth_elevation(geometry.pos_rdars, users[i])
        h_bu[i] = math.sqrt(g_bu) * (
            sqrt_kappa * steering_vector("ULA", theta_bu, dims=m, spacing_ratio=ratio)
            + sqrt_nkappa * _complex_normal(link_rng(seed, STREAM_H_BU, i), m)
        )
        h_ru[i] = math.sqrt(g_ru) * (
            sqrt_kappa * steering_vector("UPA", theta_ru, psi_ru, dims, ratio)
            + sqrt_nkappa * _complex_normal(link_rng(seed, STREAM_H_RU, i), n)
        )

    gain_bt = path_loss_gain(geometry.dist_bs_target, pl.alpha_h_bt, pl.p0_db, pl.d0_m)
    gain_rt = path_loss_gain(geometry.dist_rdars_target, pl.alpha_h_rt, pl.p0_db, pl.d0_m)
    gains["h_bt"] = gain_bt
    gains["h_rt"] = gain_rt
    h_bt = math.sqrt(gain_bt) * steering_vector("ULA", geometry.theta_bt_dep, dims=m, spacing_ratio=ratio)
    h_rt = math.sqrt(gain_rt) * steering_vector("UPA", geometry.theta_rt_dep, geometry.psi_rt_dep, dims, ratio)

    return ChannelSet(h_br=h_br, h_bu=h_bu, h_ru=h_ru, h_bt=h_bt, h_rt=h_rt,
                      gains=gains, user_positions=users)


@dataclass(frozen=True)
class CompositeChannels:
    """Composite downlink channels and the round-trip echo channel."""

    h1: np.ndarray   # (K, M+a) composite BS+connected -> user k
    h2: np.ndarray   # (M, M+a) rank-one echo channel
    h3: np.ndarray   # (N, M)   reflection-side BS -> RDARS, (I-A) H_br
    h4: np.ndarray   # (M,)     one-way BS -> target including reflection


def assemble_composites(channels: ChannelSet, state: RdarsState) -> CompositeChannels:
    """Assemble h1[k], the echo channel H2 = h4 [h4^T, h_rt^T A_a], and parts.

    Raises if the selection column matrix disagrees with the element count.
    """
    n, m = channels.n, channels.m
    if state.phi.shape != (n,) or state.a_cols.shape[0] != n:
        raise ValueError("RDARS state dimensions do not match the channel set")
    refl = (1.0 - state.a_vec.astype(float)) * state.phi   # diag((I-A) Phi)
    h3 = (1.0 - state.a_vec.astype(float))[:, None] * channels.h_br
    a_cols = state.a_cols.astype(float)

    # h1_k = [h_bu_k + ((I-A) Phi h_ru_k)^T H_br, h_ru_k^T A_a]
    first = channels.h_bu + (channels.h_ru * refl[None, :]) @ channels.h_br
    second = channels.h_ru @ a_cols
    h1 = np.concatenate([first, second], axis=1)

    h4 = channels.h_bt + channels.h_br.T @ (refl * channels.h_rt)
    row = np.concatenate([h4, a_cols.T @ channels.h_rt])
    h2 = np.outer(h4, row)
    return CompositeChannels(h1=h1, h2=h2, h3=h3, h4=h4)


# ---------------------------------------------------------------------------
# Text fixture format: header lines "name rows cols" followed by rows of
# "re,im" pairs separated by whitespace.
# ---------------------------------------------------------------------------

def _write_complex(fh, name: str, arr: np.ndarray) -> None:
    mat = np.atleast_2d(arr)
    fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        fh.write(" ".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row) + "\n")


def _read_complex(lines, idx):
    name, rows, cols = lines[idx].split()
    rows, cols = int(rows), int(cols)
    out = np.zeros((rows, cols), dtype=complex)
    for r in range(rows):
        parts = lines[idx + 1 + r].split()
        if len(parts) != cols:
            raise ConfigError(f"channel dump: row width mismatch in {name}")
        for c, part in enumerate(parts):
            re, im = part.split(",")
            out[r, c] = float(re) + 1j * float(im)
    return name, out, idx + 1 + rows


def dump_channels(channels: ChannelSet, path) -> None:
    """Write a ChannelSet as plain text (complex entries as "re,im")."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"gains {len(channels.gains)}\n")
        for key in ("h_br", "h_bt", "h_rt"):
            fh.write(f"{key} {float(channels.gains[key])!r}\n")
        for key in ("h_bu", "h_ru"):
            fh.write(f"{key} " + " ".join(repr(float(g)) for g in channels.gains[key]) + "\n")
        _write_complex(fh, "H_br", channels.h_br)
        _write_complex(fh, "h_bu", channels.h_bu)
        _write_complex(fh, "h_ru", channels.h_ru)
        _write_complex(fh, "h_bt", channels.h_bt)
        _write_complex(fh, "h_rt", channels.h_rt)
        fh.write(f"users {channels.user_positions.shape[0]}\n")
        for row in channels.user_positions:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_channels(path) -> ChannelSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("gains"):
        raise ConfigError("channel dump: missing gains header")
    gains = {}
    idx = 1
    for key in ("h_br", "h_bt", "h_rt"):
        name, value = lines[idx].split(maxsplit=1)
        gains[name] = float(value)
        idx += 1
    for key in ("h_bu", "h_ru"):
        parts = lines[idx].split()
        gains[parts[0]] = np.array([float(p) for p in parts[1:]])
        idx += 1
    arrays = {}
    for _ in range(5):
        name, arr, idx = _read_complex(lines, idx)
        arrays[name] = arr
    count = int(lines[idx].split()[1])
    users = np.array([[float(v) for v in lines[idx + 1 + r].split()] for r in range(count)])
    return ChannelSet(
        h_br=arrays["H_br"],
        h_bu=arrays["h_bu"],
        h_ru=arrays["h_ru"],
        h_bt=arrays["h_bt"].ravel(),
        h_rt=arrays["h_rt"].ravel(),
        gains=gains,
        user_positions=users,
    )
