"""Closed-form coefficient expansions of the penalized objective.

The penalized objective (negated radar quotient plus the two weighted
equality penalties) is re-expressed, block by block, as an explicit
polynomial in the reflection phases, the selection diagonal, or the stacked
selection columns.  Every expansion is validated against
``penalized_objective_direct``, the brute-force term-by-term evaluation,
which acts as the oracle for the whole module.

The echo through-gain w^H H2 f_k is affine-quadratic in the phases and in
the selection diagonal, and affine in the stacked columns; quadratic parts
are kept in factored form (left/right vectors) so nothing of size N^2 x N^2
is ever materialized outside of tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, RdarsState, assemble_composites
from .metrics import penalty_residuals, radar_snr

__all__ = [
    "EchoAffineParts",
    "PhiCoefficients",
    "SelectionCoefficients",
    "ColumnCoefficients",
    "SurrogateState",
    "echo_affine_decomposition",
    "build_block_coefficients",
    "evaluate_block_objective",
    "penalized_objective_direct",
]

KRON_CAP_DEFAULT = 256


@dataclass(frozen=True)
class EchoAffineParts:
    """Per-user expansion value_k(v) = const_k + lin_k @ v + (quad_left_k @ v)(quad_right @ v).

    For the reflection block, value_k is w^H H2 f_k as a function of the
    phase vector; the identity holds for arbitrary complex v, not only
    unit-modulus ones.
    """

    const: np.ndarray        # (K,)
    lin: np.ndarray          # (K, N)
    quad_left: np.ndarray    # (K, N)
    quad_right: np.ndarray   # (N,)

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.const + self.lin @ v + (self.quad_left @ v) * (self.quad_right @ v)

    def lifted_rows(self) -> np.ndarray:
        """Dense (K, N^2) rows of the Kronecker-lifted quadratic term."""
        return np.stack([np.kron(cl, self.quad_right) for cl in self.quad_left])

    def scaled(self, factor: float) -> "EchoAffineParts":
        root = np.sqrt(factor)
        return EchoAffineParts(const=self.const * root, lin=self.lin * root,
                               quad_left=self.quad_left * root, quad_right=self.quad_right)


@dataclass(frozen=True)
class ColumnAffineParts:
    """Per-user affine expansion value_k = const_k + lin_k @ a_a (stacked columns)."""

    const: np.ndarray   # (K,)
    lin: np.ndarray     # (K, N*a)

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.const + self.lin @ v

    def scaled(self, factor: float) -> "ColumnAffineParts":
        root = np.sqrt(factor)
        return ColumnAffineParts(const=self.const * root, lin=self.lin * root)


@dataclass(frozen=True)
class PhiCoefficients:
    """Reflection-block expansion coefficients.

    Radar terms carry the quotient scale sigma_alpha^2 / (sigma2^2 w^H w) so
    that the expansion equals the penalized objective (minus its
    phase-independent selection penalty).  Penalty terms are stored without
    their 1/(2 rho1) weight.
    """

    rho1: float
    rho2: float
    echo: EchoAffineParts          # scaled
    const: float                   # sum_k |x_k|^2
    lin: np.ndarray                # (N,)
    quad: np.ndarray               # (N, N) Hermitian PSD
    pen_const: float
    pen_lin: np.ndarray            # (N,)
    pen_quad: np.ndarray           # (N, N) Hermitian PSD
    lin_lift: np.ndarray | None = None    # (N^2,)
    cross: np.ndarray | None = None       # (N^2, N)
    quad_lift: np.ndarray | None = None   # (N^2, N^2)


@dataclass(frozen=True)
class SelectionCoefficients:
    """Selection-diagonal expansion coefficients (same layout as PhiCoefficients
    plus the linear selection-penalty terms)."""

    rho1: float
    rho2: float
    echo: EchoAffineParts
    const: float
    lin: np.ndarray
    quad: np.ndarray
    pen_const: float
    pen_lin: np.ndarray
    pen_quad: np.ndarray
    sel_lin: np.ndarray            # (N,) real, diag(I - 2 A_a A_a^T)
    sel_const: float               # tr(A_a A_a^T)
    lin_lift: np.ndarray | None = None
    cross: np.ndarray | None = None
    quad_lift: np.ndarray | None = None


@dataclass(frozen=True)
class ColumnCoefficients:
    """Stacked-column expansion coefficients (purely quadratic block)."""

    rho1: float
    rho2: float
    echo: ColumnAffineParts
    const: float
    lin: np.ndarray                # (N*a,)
    quad: np.ndarray               # (N*a, N*a) Hermitian PSD
    pen_const: float
    pen_lin: np.ndarray
    pen_quad: np.ndarray
    a_diag: np.ndarray             # (N,) current selection diagonal
    a_count: int


@dataclass(frozen=True)
class SurrogateState:
    """Everything the coefficient builders need about the current iterate."""

    channels: ChannelSet
    rdars_state: RdarsState
    w: np.ndarray
    f: np.ndarray
    s: np.ndarray
    rho1: float
    rho2: float
    sigma_alpha_sq: float
    sigma2_sq: float


def _radar_scale(state: SurrogateState) -> float:
    wn = float(np.real(np.vdot(state.w, state.w)))
    return state.sigma_alpha_sq / (state.sigma2_sq * wn)


def echo_affine_decomposition(channels: ChannelSet, a_vec: np.ndarray,
                              a_cols: np.ndarray, w: np.ndarray,
                              f: np.ndarray) -> EchoAffineParts:
    """Expand w^H H2 f_k as an affine-quadratic function of the phase vector.

    Unscaled: the identity w^H H2 f_k = x_k + Y_k phi + (c_k phi)(b phi)
    holds exactly for every complex phi.
    """
    m = channels.m
    off = (1.0 - np.asarray(a_vec, dtype=float))
    h3 = off[:, None] * channels.h_br
    cols = np.asarray(a_cols, dtype=float)
    b = channels.h_rt * (h3 @ np.conj(w))
    wh_bt = np.vdot(w, channels.h_bt)

    f1 = f[:m, :]
    f2 = f[m:, :]
    t = (cols.T @ channels.h_rt) @ f2            # (K,) connected-element feed
    d = channels.h_bt @ f1                       # (K,)
    c_rows = (channels.h_rt[:, None] * (h3 @ f1)).T   # (K, N)
    const = wh_bt * (d + t)
    lin = wh_bt * c_rows + (d + t)[:, None] * b[None, :]
    return EchoAffineParts(const=const, lin=lin, quad_left=c_rows, quad_right=b)


def _mode_affine_decomposition(channels: ChannelSet, state: RdarsState,
                               w: np.ndarray, f: np.ndarray) -> EchoAffineParts:
    """Expand w^H H2 f_k in the selection diagonal (phases and columns fixed)."""
    m = channels.m
    u = state.phi * channels.h_rt                # Phi h_rt
    big_g = channels.h_br.T * u[None, :]         # (M, N)
    h4_full = channels.h_bt + channels.h_br.T @ u
    c0 = np.vdot(w, h4_full)
    g = big_g.T @ np.conj(w)                     # (N,)

    f1 = f[:m, :]
    f2 = f[m:, :]
    cols = state.a_cols.astype(float)
    t = (cols.T @ channels.h_rt) @ f2            # (K,)
    d = h4_full @ f1                             # (K,)
    e_rows = (big_g.T @ f1).T                    # (K, N)
    const = c0 * (d + t)
    lin = -((d + t)[:, None] * g[None, :] + c0 * e_rows)
    return EchoAffineParts(const=const, lin=lin, quad_left=e_rows, quad_right=g)


def _column_affine_decomposition(channels: ChannelSet, state: RdarsState,
                                 w: np.ndarray, f: np.ndarray) -> ColumnAffineParts:
    """Expand w^H H2 f_k in the stacked selection columns (phases and diagonal fixed)."""
    m = channels.m
    refl = (1.0 - state.a_vec.astype(float)) * state.phi
    h4 = channels.h_bt + channels.h_br.T @ (refl * channels.h_rt)
    wh4 = np.vdot(w, h4)
    f1 = f[:m, :]
    f2 = f[m:, :]
    const = wh4 * (h4 @ f1)
    lin = np.stack([wh4 * np.kron(f2[:, k], channels.h_rt) for k in range(f.shape[1])])
    return ColumnAffineParts(const=const, lin=lin)


def _radar_sums(parts, lifted: bool, kron_cap: int):
    """Constant/linear/quadratic sums of -|value_k|^2 grouped by polynomial order."""
    const = float(np.sum(np.abs(parts.const) ** 2))
    lin = (parts.const[:, None] * np.conj(parts.lin)).sum(axis=0)
    quad = np.conj(parts.lin).T @ parts.lin
    out = {"const": const, "lin": lin, "quad": quad,
           "lin_lift": None, "cross": None, "quad_lift": None}
    if isinstance(parts, ColumnAffineParts):
        return out
    n = parts.quad_right.shape[0]
    if n <= kron_cap:
        rows = parts.lifted_rows()
        out["lin_lift"] = (parts.const[:, None] * np.conj(rows)).sum(axis=0)
        if lifted:
            out["cross"] = np.conj(rows).T @ parts.lin
            out["quad_lift"] = np.conj(rows).T @ rows
    return out


def _comm_penalty_sums(tilde: np.ndarray, vrows: np.ndarray, sign: float):
    """Sums for sum_{k,i} |tilde_{k,i} + sign * v_{k,i}^T x|^2."""
    pen_const = float(np.sum(np.abs(tilde) ** 2))
    flat_t = tilde.reshape(-1)
    flat_v = vrows.reshape(flat_t.shape[0], -1)
    pen_lin = sign * (flat_t[:, None] * np.conj(flat_v)).sum(axis=0)
    pen_quad = flat_v.T @ np.conj(flat_v)
    return pen_const, pen_lin, pen_quad


def build_block_coefficients(block: str, state: SurrogateState, lifted: bool = False,
                             kron_cap: int = KRON_CAP_DEFAULT):
    """Coefficient expansion of the penalized objective in one block variable.

    block="phi" expands in the reflection phases, "a" in the selection
    diagonal, "aa" in the stacked one-hot selection columns.  ``lifted``
    additionally materializes the dense Kronecker-lifted matrices (test use
    only; sizes N^2 x N and N^2 x N^2).
    """
    ch = state.channels
    rs = state.rdars_state
    scale = _radar_scale(state)
    m = ch.m
    f1 = state.f[:m, :]
    f2 = state.f[m:, :]
    cols = rs.a_cols.astype(float)
    off = 1.0 - rs.a_vec.astype(float)

    if block == "phi":
        parts = echo_affine_decomposition(ch, rs.a_vec, rs.a_cols, state.w, state.f).scaled(scale)
        sums = _radar_sums(parts, lifted, kron_cap)
        # residual_{k,i} = tilde_{k,i} + v_{k,i}^T phi
        tilde = ch.h_bu @ f1 + (cols.T @ ch.h_ru.T).T @ f2 - state.s
        h3f = (off[:, None] * ch.h_br) @ f1                    # (N, K)
        vrows = ch.h_ru[:, None, :] * h3f.T[None, :, :]        # (K, K, N)
        pen_const, pen_lin, pen_quad = _comm_penalty_sums(tilde, vrows, +1.0)
        return PhiCoefficients(rho1=state.rho1, rho2=state.rho2, echo=parts,
                               const=sums["const"], lin=sums["lin"], quad=sums["quad"],
                               pen_const=pen_const, pen_lin=pen_lin, pen_quad=pen_quad,
                               lin_lift=sums["lin_lift"], cross=sums["cross"],
                               quad_lift=sums["quad_lift"])

    if block == "a":
        parts = _mode_affine_decomposition(ch, rs, state.w, state.f).scaled(scale)
        sums = _radar_sums(parts, lifted, kron_cap)
        # residual_{k,i} = tilde2_{k,i} - v2_{k,i}^T a
        hbrf = ch.h_br @ f1                                    # (N, K)
        tilde = ch.h_bu @ f1 + (ch.h_ru * rs.phi[None, :]) @ hbrf \
            + (cols.T @ ch.h_ru.T).T @ f2 - state.s
        vrows = (ch.h_ru * rs.phi[None, :])[:, None, :] * hbrf.T[None, :, :]
        pen_const, pen_lin, pen_quad = _comm_penalty_sums(tilde, vrows, -1.0)
        row_marks = cols.sum(axis=1)
        return SelectionCoefficients(rho1=state.rho1, rho2=state.rho2, echo=parts,
                                     const=sums["const"], lin=sums["lin"], quad=sums["quad"],
                                     pen_const=pen_const, pen_lin=pen_lin, pen_quad=pen_quad,
                                     sel_lin=1.0 - 2.0 * row_marks,
                                     sel_const=float(cols.sum()),
                                     lin_lift=sums["lin_lift"], cross=sums["cross"],
                                     quad_lift=sums["quad_lift"])

    if block == "aa":
        parts = _column_affine_decomposition(ch, rs, state.w, state.f).scaled(scale)
        sums = _radar_sums(parts, lifted, kron_cap)
        # residual_{k,i} = tilde3_{k,i} + u_{k,i}^T a_a
        tilde = ch.h_bu @ f1 + (ch.h_ru * (off * rs.phi)[None, :]) @ (ch.h_br @ f1) - state.s
        k = ch.k
        urows = np.zeros((k, k, ch.n * rs.a_count), dtype=complex)
        for i in range(k):
            block_row = np.kron(f2[:, i], np.ones(ch.n))[None, :] * np.tile(ch.h_ru, (1, rs.a_count))
            urows[:, i, :] = block_row
        pen_const, pen_lin, pen_quad = _comm_penalty_sums(tilde, urows, +1.0)
        return ColumnCoefficients(rho1=state.rho1, rho2=state.rho2, echo=parts,
                                  const=sums["const"], lin=sums["lin"], quad=sums["quad"],
                                  pen_const=pen_const, pen_lin=pen_lin, pen_quad=pen_quad,
                                  a_diag=rs.a_vec.astype(float), a_count=rs.a_count)

    raise ValueError(f"unknown block {block!r}")


def _radar_terms(coeffs, v: np.ndarray) -> float:
    """The six grouped radar terms, evaluated through the stored coefficients."""
    parts = coeffs.echo
    y = parts.lin @ v
    z = (parts.quad_left @ v) * (parts.quad_right @ v)
    t_const = coeffs.const
    t_lin = 2.0 * np.real(np.vdot(coeffs.lin, v))
    t_lin_lift = 2.0 * float(np.real(np.sum(np.conj(parts.const) * z)))
    t_quad = float(np.real(np.conj(v) @ coeffs.quad @ v))
    t_cross = 2.0 * float(np.real(np.sum(np.conj(z) * y)))
    t_quad_lift = float(np.sum(np.abs(z) ** 2))
    return -(t_const + t_lin + t_lin_lift + t_quad + t_cross + t_quad_lift)


def evaluate_block_objective(block: str, variable: np.ndarray, coeffs) -> float:
    """Evaluate the closed-form expansion at a feasible block variable.

    For "phi" the result omits the phase-independent selection penalty; for
    "a" and "aa" all terms of the penalized objective are present.
    """
    v = np.asarray(variable)
    if block == "phi":
        if v.shape != coeffs.lin.shape:
            raise ValueError("phase vector has wrong shape")
        pen = coeffs.pen_const + 2.0 * np.real(np.vdot(coeffs.pen_lin, v)) \
            + float(np.real(v @ coeffs.pen_quad @ np.conj(v)))
        return _radar_terms(coeffs, v) + pen / (2.0 * coeffs.rho1)
    if block == "a":
        a = v.astype(float)
        pen = coeffs.pen_const + 2.0 * np.real(np.vdot(coeffs.pen_lin, a)) \
            + float(np.real(a @ coeffs.pen_quad @ a))
        sel = float(coeffs.sel_lin @ a) + coeffs.sel_const
        return _radar_terms(coeffs, a) + pen / (2.0 * coeffs.rho1) + sel / (2.0 * coeffs.rho2)
    if block == "aa":
        aa = v.astype(float)
        radar = -(coeffs.const + 2.0 * np.real(np.vdot(coeffs.lin, aa))
                  + float(np.real(aa @ coeffs.quad @ aa)))
        pen = coeffs.pen_const + 2.0 * np.real(np.vdot(coeffs.pen_lin, aa)) \
            + float(np.real(aa @ coeffs.pen_quad @ aa))
        cols = aa.reshape(coeffs.a_count, -1)
        overlap = float(np.sum(cols * (coeffs.a_diag[None, :] * cols)))
        return radar + pen / (2.0 * coeffs.rho1) + (coeffs.a_count - overlap) / coeffs.rho2
    raise ValueError(f"unknown block {block!r}")


def penalized_objective_direct(channels: ChannelSet, rdars_state: RdarsState,
                               w: np.ndarray, f: np.ndarray, s: np.ndarray,
                               rho1: float, rho2: float,
                               sigma_alpha_sq: float, sigma2_sq: float) -> float:
    """Brute-force evaluation of the penalized objective from fresh composites.

    This is the oracle for every coefficient expansion above: the negated
    radar quotient plus the weighted communication and selection penalties.
    """
    comps = assemble_composites(channels, rdars_state)
    quot = radar_snr(w, comps.h2, f, sigma_alpha_sq, sigma2_sq)
    res = penalty_residuals(rdars_state.a_vec, rdars_state.a_cols, s, comps.h1, f)
    return -quot + res["comm_residual"] / (2.0 * rho1) + res["selection_residual"] / (2.0 * rho2)
