"""Experiment configuration and placement geometry.

All powers cross the module boundary in dBm and all angles in radians;
internally everything is converted to watts / linear scale.  The config file
format is flat ``key = value`` text with dotted section prefixes; see
``CONFIG_KEYS`` and the README for the full schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateGeometryError

__all__ = [
    "PathlossParams",
    "PenaltyParams",
    "StoppingParams",
    "Placement",
    "FixedAngles",
    "SystemConfig",
    "Geometry",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "default_config",
    "desk_config",
    "load_config",
    "save_config",
    "parse_config_text",
    "config_to_text",
    "derive_geometry",
    "upa_dims_for",
]


def dbm_to_watt(p_dbm: float) -> float:
    """Convert a power in dBm to watts (20 dBm -> 0.1 W)."""
    return 10.0 ** (p_dbm / 10.0) / 1000.0


def watt_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w * 1000.0)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class PathlossParams:
    """Distance-based path loss: gain_db = p0_db - 10*alpha*log10(d/d0)."""

    p0_db: float = -30.0
    d0_m: float = 1.0
    alpha_h_br: float = 2.4
    alpha_h_bt: float = 2.3
    alpha_h_bu: float = 3.0
    alpha_h_rt: float = 2.0
    alpha_h_ru: float = 2.6


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weights for the two equality constraints and their decay."""

    rho1_init: float = 1.0e3
    rho2_init: float = 1.0e5
    c1: float = 0.8
    c2: float = 0.8
    rho_floor: float = 1.0e-8


@dataclass(frozen=True)
class StoppingParams:
    rel_tol: float = 1.0e-4
    residual_tol: float = 1.0e-6
    max_iters: int = 200


@dataclass(frozen=True)
class Placement:
    """Raw 3D positions (meters) of the sites and the user disk."""

    pos_bs: tuple = (15.0, 0.0, 5.0)
    pos_rdars: tuple = (0.0, 0.0, 5.0)
    pos_target: tuple = (0.0, 10.0, 0.0)
    user_center: tuple = (50.0, 50.0, 0.0)
    user_radius: float = 5.0


@dataclass(frozen=True)
class FixedAngles:
    """Configured array angles (radians) for the BS<->RDARS and RDARS->target links."""

    theta_br_dep: float = math.pi / 2.0
    theta_br_arr: float = math.pi / 4.0
    psi_br_arr: float = 0.0
    theta_rt_dep: float = math.pi / 4.0


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one experiment instance.

    Immutable after load; safe to share read-only across parallel trials.
    """

    m: int = 16
    n: int = 120
    n1: int = 12
    n2: int = 10
    a: int = 3
    k: int = 2
    p_dbm: float = 20.0
    sigma1_dbm: tuple = (-80.0, -80.0)
    sigma2_dbm: float = -80.0
    gamma_bar_db: tuple = (10.0, 10.0)
    sigma_alpha_sq: float = 1.0
    kappa: float = 0.5
    spacing_ratio: float = 0.5
    pathloss: PathlossParams = field(default_factory=PathlossParams)
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    stopping: StoppingParams = field(default_factory=StoppingParams)
    placement: Placement = field(default_factory=Placement)
    angles: FixedAngles = field(default_factory=FixedAngles)
    seed: int = 1

    # -- derived conveniences (linear units) ------------------------------
    @property
    def power_w(self) -> float:
        return dbm_to_watt(self.p_dbm)

    @property
    def sigma1_sq_w(self) -> np.ndarray:
        return np.array([dbm_to_watt(x) for x in self.sigma1_dbm])

    @property
    def sigma2_sq_w(self) -> float:
        return dbm_to_watt(self.sigma2_dbm)

    @property
    def gamma_bar_lin(self) -> np.ndarray:
        return np.array([db_to_linear(x) for x in self.gamma_bar_db])

    def validate(self) -> "SystemConfig":
        """Check all invariants; raise ConfigError naming the offending key."""
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.n1 < 1 or self.n2 < 1 or self.n1 * self.n2 != self.n:
            raise ConfigError(f"n1*n2 must equal n (got {self.n1}*{self.n2} != {self.n})")
        if self.a < 1:
            raise ConfigError("a must be >= 1")
        if self.a > self.n:
            raise ConfigError(f"a must be <= n (got a={self.a}, n={self.n})")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not (0.0 <= self.kappa <= 1.0):
            raise ConfigError("kappa must lie in [0, 1]")
        if len(self.sigma1_dbm) != self.k:
            raise ConfigError(f"sigma1_dbm must have k={self.k} entries")
        if len(self.gamma_bar_db) != self.k:
            raise ConfigError(f"gamma_bar_db must have k={self.k} entries")
        for name, value in (("p_dbm", self.p_dbm), ("sigma2_dbm", self.sigma2_dbm)):
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite")
        if any(not math.isfinite(v) for v in self.sigma1_dbm):
            raise ConfigError("sigma1_dbm entries must be finite")
        if not (self.penalty.rho1_init > 0 and self.penalty.rho2_init > 0):
            raise ConfigError("penalty.rho1_init and penalty.rho2_init must be > 0")
        if not (0.0 < self.penalty.c1 < 1.0 and 0.0 < self.penalty.c2 < 1.0):
            raise ConfigError("penalty.c1 and penalty.c2 must lie in (0, 1)")
        if self.penalty.rho_floor <= 0:
            raise ConfigError("penalty.rho_floor must be > 0")
        if self.spacing_ratio <= 0:
            raise ConfigError("spacing_ratio must be > 0")
        if self.stopping.max_iters < 1:
            raise ConfigError("stopping.max_iters must be >= 1")
        return self


@dataclass(frozen=True)
class Geometry:
    """Placement-derived distances (m) and angles (rad).

    ``d_br`` and ``d_rt`` are azimuth-plane (horizontal) distances and
    ``d_h`` is the BS/RDARS height, matching the convention used for the
    derived angles; the ``dist_*`` fields are 3D link distances used for
    path loss.
    """

    pos_bs: np.ndarray
    pos_rdars: np.ndarray
    pos_target: np.ndarray
    user_center: np.ndarray
    user_radius: float
    d_br: float
    d_rt: float
    d_h: float
    dist_bs_rdars: float
    dist_bs_target: float
    dist_rdars_target: float
    theta_br_dep: float
    theta_br_arr: float
    psi_br_arr: float
    theta_rt_dep: float
    psi_rt_dep: float
    theta_bt_dep: float


def derive_geometry(config: SystemConfig, placement: Placement | None = None) -> Geometry:
    """Populate distances and all six angles from raw positions.

    The BS<->RDARS and RDARS->target azimuth angles come from the configured
    constants; the BS->target azimuth and RDARS->target elevation are
    recomputed from the horizontal distances.
    """
    pl = placement if placement is not None else config.placement
    pos_bs = np.asarray(pl.pos_bs, dtype=float)
    pos_rdars = np.asarray(pl.pos_rdars, dtype=float)
    pos_target = np.asarray(pl.pos_target, dtype=float)
    for name, p in (("bs", pos_bs), ("rdars", pos_rdars), ("target", pos_target)):
        if not np.all(np.isfinite(p)) or p.shape != (3,):
            raise ConfigError(f"placement position '{name}' must be a finite 3D point")

    d_br = float(np.linalg.norm((pos_bs - pos_rdars)[:2]))
    d_rt = float(np.linalg.norm((pos_rdars - pos_target)[:2]))
    d_h = float(pos_bs[2])
    if np.linalg.norm(pos_bs - pos_rdars) < 1e-9:
        raise DegenerateGeometryError("BS and RDARS positions coincide")
    if d_rt < 1e-9:
        raise DegenerateGeometryError("RDARS and target share the same horizontal position")

    return Geometry(
        pos_bs=pos_bs,
        pos_rdars=pos_rdars,
        pos_target=pos_target,
        user_center=np.asarray(pl.user_center, dtype=float),
        user_radius=float(pl.user_radius),
        d_br=d_br,
        d_rt=d_rt,
        d_h=d_h,
        dist_bs_rdars=float(np.linalg.norm(pos_bs - pos_rdars)),
        dist_bs_target=float(np.linalg.norm(pos_bs - pos_target)),
        dist_rdars_target=float(np.linalg.norm(pos_rdars - pos_target)),
        theta_br_dep=config.angles.theta_br_dep,
        theta_br_arr=config.angles.theta_br_arr,
        psi_br_arr=config.angles.psi_br_arr,
        theta_rt_dep=config.angles.theta_rt_dep,
        psi_rt_dep=math.atan(d_h / d_rt),
        theta_bt_dep=math.atan(d_br / d_rt),
    )


def upa_dims_for(n: int) -> tuple[int, int]:
    """Near-square UPA factorization: n1 is the smallest divisor of n >= sqrt(n)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    root = math.isqrt(n)
    for n1 in range(root, n + 1):
        if n % n1 == 0 and n1 * n1 >= n:
            return n1, n // n1
    return n, 1


def default_config() -> SystemConfig:
    """Full-size default parameter set (M=16, N=120, a=3)."""
    return SystemConfig().validate()


def desk_config(trials_hint: int = 20) -> SystemConfig:
    """Small configuration for fast runs: M=8, N=24 (6x4), a=2, K=2."""
    del trials_hint
    return SystemConfig(m=8, n=24, n1=6, n2=4, a=2).validate()


# ---------------------------------------------------------------------------
# Config file parsing.  Flat "key = value" lines; '#' starts a comment;
# dotted prefixes address the nested parameter groups; list values are
# comma-separated.  Unknown keys are rejected.
# ---------------------------------------------------------------------------

_SCALAR_INT = {"m", "n", "n1", "n2", "a", "k", "seed", "stopping.max_iters"}
_SCALAR_FLOAT = {
    "p_dbm", "sigma2_dbm", "sigma_alpha_sq", "kappa", "spacing_ratio",
    "pathloss.p0_db", "pathloss.d0_m", "pathloss.alpha_h_br", "pathloss.alpha_h_bt",
    "pathloss.alpha_h_bu", "pathloss.alpha_h_rt", "pathloss.alpha_h_ru",
    "penalty.rho1_init", "penalty.rho2_init", "penalty.c1", "penalty.c2",
    "penalty.rho_floor",
    "stopping.rel_tol", "stopping.residual_tol",
    "geometry.user_radius",
    "angles.theta_br_dep", "angles.theta_br_arr", "angles.psi_br_arr",
    "angles.theta_rt_dep",
}
_VECTOR_FLOAT = {
    "sigma1_dbm", "gamma_bar_db",
    "geometry.bs", "geometry.rdars", "geometry.target", "geometry.user_center",
}
CONFIG_KEYS = sorted(_SCALAR_INT | _SCALAR_FLOAT | _VECTOR_FLOAT)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _SCALAR_INT:
            return int(raw)
        if key in _SCALAR_FLOAT:
            return float(raw)
        return tuple(float(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for '{key}': {raw!r}") from exc


def parse_config_text(text: str) -> SystemConfig:
    """Build a validated SystemConfig from config-file text.

    Keys not present fall back to the full-size defaults; an empty file
    yields ``default_config()``.  Scalar ``sigma1_dbm``/``gamma_bar_db``
    values broadcast to all K users.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCALAR_INT and key not in _SCALAR_FLOAT and key not in _VECTOR_FLOAT:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = _parse_value(key, raw)

    base = SystemConfig()
    k = values.get("k", base.k)

    def per_user(key, default):
        v = values.get(key)
        if v is None:
            v = default if len(default) == k else (default[0],) * k
        if len(v) == 1:
            v = v * k
        return v

    n = values.get("n", base.n)
    if "n1" in values or "n2" in values:
        n1 = values.get("n1", base.n1)
        n2 = values.get("n2", base.n2)
    elif n == base.n:
        n1, n2 = base.n1, base.n2
    else:
        n1, n2 = upa_dims_for(n)

    cfg = SystemConfig(
        m=values.get("m", base.m),
        n=n,
        n1=n1,
        n2=n2,
        a=values.get("a", base.a),
        k=k,
        p_dbm=values.get("p_dbm", base.p_dbm),
        sigma1_dbm=per_user("sigma1_dbm", base.sigma1_dbm),
        sigma2_dbm=values.get("sigma2_dbm", base.sigma2_dbm),
        gamma_bar_db=per_user("gamma_bar_db", base.gamma_bar_db),
        sigma_alpha_sq=values.get("sigma_alpha_sq", base.sigma_alpha_sq),
        kappa=values.get("kappa", base.kappa),
        spacing_ratio=values.get("spacing_ratio", base.spacing_ratio),
        pathloss=PathlossParams(
            p0_db=values.get("pathloss.p0_db", base.pathloss.p0_db),
            d0_m=values.get("pathloss.d0_m", base.pathloss.d0_m),
            alpha_h_br=values.get("pathloss.alpha_h_br", base.pathloss.alpha_h_br),
            alpha_h_bt=values.get("pathloss.alpha_h_bt", base.pathloss.alpha_h_bt),
            alpha_h_bu=values.get("pathloss.alpha_h_bu", base.pathloss.alpha_h_bu),
            alpha_h_rt=values.get("pathloss.alpha_h_rt", base.pathloss.alpha_h_rt),
            alpha_h_ru=values.get("pathloss.alpha_h_ru", base.pathloss.alpha_h_ru),
        ),
        penalty=PenaltyParams(
            rho1_init=values.get("penalty.rho1_init", base.penalty.rho1_init),
            rho2_init=values.get("penalty.rho2_init", base.penalty.rho2_init),
            c1=values.get("penalty.c1", base.penalty.c1),
            c2=values.get("penalty.c2", base.penalty.c2),
            rho_floor=values.get("penalty.rho_floor", base.penalty.rho_floor),
        ),
        stopping=StoppingParams(
            rel_tol=values.get("stopping.rel_tol", base.stopping.rel_tol),
            residual_tol=values.get("stopping.residual_tol", base.stopping.residual_tol),
            max_iters=values.get("stopping.max_iters", base.stopping.max_iters),
        ),
        placement=Placement(
            pos_bs=values.get("geometry.bs", base.placement.pos_bs),
            pos_rdars=values.get("geometry.rdars", base.placement.pos_rdars),
            pos_target=values.get("geometry.target", base.placement.pos_target),
            user_center=values.get("geometry.user_center", base.placement.user_center),
            user_radius=values.get("geometry.user_radius", base.placement.user_radius),
        ),
        angles=FixedAngles(
            theta_br_dep=values.get("angles.theta_br_dep", base.angles.theta_br_dep),
            theta_br_arr=values.get("angles.theta_br_arr", base.angles.theta_br_arr),
            psi_br_arr=values.get("angles.psi_br_arr", base.angles.psi_br_arr),
            theta_rt_dep=values.get("angles.theta_rt_dep", base.angles.theta_rt_dep),
        ),
        seed=values.get("seed", base.seed),
    )
    return cfg.validate()


def load_config(path) -> SystemConfig:
    """Load and validate a config file; missing keys take the defaults."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: SystemConfig) -> str:
    """Serialize a config in the documented flat key/value schema."""
    pairs = [
        ("m", cfg.m), ("n", cfg.n), ("n1", cfg.n1), ("n2", cfg.n2),
        ("a", cfg.a), ("k", cfg.k), ("p_dbm", cfg.p_dbm),
        ("sigma1_dbm", cfg.sigma1_dbm), ("sigma2_dbm", cfg.sigma2_dbm),
        ("gamma_bar_db", cfg.gamma_bar_db), ("sigma_alpha_sq", cfg.sigma_alpha_sq),
        ("kappa", cfg.kappa), ("spacing_ratio", cfg.spacing_ratio), ("seed", cfg.seed),
        ("pathloss.p0_db", cfg.pathloss.p0_db), ("pathloss.d0_m", cfg.pathloss.d0_m),
        ("pathloss.alpha_h_br", cfg.pathloss.alpha_h_br),
        ("pathloss.alpha_h_bt", cfg.pathloss.alpha_h_bt),
        ("pathloss.alpha_h_bu", cfg.pathloss.alpha_h_bu),
        ("pathloss.alpha_h_rt", cfg.pathloss.alpha_h_rt),
        ("pathloss.alpha_h_ru", cfg.pathloss.alpha_h_ru),
        ("penalty.rho1_init", cfg.penalty.rho1_init),
        ("penalty.rho2_init", cfg.penalty.rho2_init),
        ("penalty.c1", cfg.penalty.c1), ("penalty.c2", cfg.penalty.c2),
        ("penalty.rho_floor", cfg.penalty.rho_floor),
        ("stopping.rel_tol", cfg.stopping.rel_tol),
        ("stopping.residual_tol", cfg.stopping.residual_tol),
        ("stopping.max_iters", cfg.stopping.max_iters),
        ("geometry.bs", cfg.placement.pos_bs), ("geometry.rdars", cfg.placement.pos_rdars),
        ("geometry.target", cfg.placement.pos_target),
        ("geometry.user_center", cfg.placement.user_center),
        ("geometry.user_radius", cfg.placement.user_radius),
        ("angles.theta_br_dep", cfg.angles.theta_br_dep),
        ("angles.theta_br_arr", cfg.angles.theta_br_arr),
        ("angles.psi_br_arr", cfg.angles.psi_br_arr),
        ("angles.theta_rt_dep", cfg.angles.theta_rt_dep),
    ]
    return "".join(f"{key} = {_fmt(value)}\n" for key, value in pairs)


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(config_to_text(cfg), encoding="utf-8")


def with_overrides(cfg: SystemConfig, **kwargs) -> SystemConfig:
    """Return a validated copy with top-level fields replaced."""
    return replace(cfg, **kwargs).validate()
