"""Block updates and the alternating driver for the penalized radar-SNR maximization.

One outer iteration updates, in order: the receive filter (dominant
eigenvector), the transmit beamformer (linearized SOCP), the reflection
phases (closed-form phase alignment of a linear surrogate), the auxiliary
communication variables (per-user dual bisection), the selection diagonal
(top-a pick of a linear surrogate), and the selection columns (linear
assignment).  The penalty weights then decay geometrically toward a floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import channel as chan
from .channel import ChannelSet, RdarsState, assemble_composites, initial_rdars_state, link_rng
from .errors import OptimizationAborted, SinrInfeasibleError, SocpInfeasibleError, ZeroEchoError
from .metrics import Beamformer, penalty_residuals, radar_snr, user_sinr
from .scenario import SystemConfig
from .surrogate import (
    ColumnCoefficients,
    PhiCoefficients,
    SelectionCoefficients,
    SurrogateState,
    build_block_coefficients,
    penalized_objective_direct,
)

__all__ = [
    "AuxiliaryState",
    "PenaltySchedule",
    "SocUser",
    "SocpProblem",
    "LinearSocp",
    "SocCone",
    "SocpSolution",
    "OptimizerOptions",
    "JointSolution",
    "solve_linear_socp",
    "update_receive_filter",
    "build_socp_problem",
    "update_transmit_beamformer",
    "update_auxiliary",
    "reflection_step_pieces",
    "update_reflection",
    "mode_step_pieces",
    "update_mode_selection",
    "column_step_pieces",
    "update_selection_columns",
    "initialize",
    "run_joint_optimization",
]


@dataclass
class AuxiliaryState:
    """Auxiliary communication values s[k, i] and their duals mu[k] in [0, 1)."""

    s: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class PenaltySchedule:
    rho1: float
    rho2: float
    c1: float
    c2: float
    rho_floor: float

    def decayed(self) -> "PenaltySchedule":
        return replace(self, rho1=max(self.c1 * self.rho1, self.rho_floor),
                       rho2=max(self.c2 * self.rho2, self.rho_floor))


@dataclass(frozen=True)
class OptimizerOptions:
    """Which blocks are active; schemes disable blocks through these flags.

    ``connected_count`` overrides the configured number of connected
    elements (0 turns the surface fully passive).
    """

    optimize_phase: bool = True
    optimize_selection: bool = True
    enforce_sinr: bool = True
    reflection_enabled: bool = True
    resample_phase: bool = False
    connected_count: int | None = None


@dataclass
class JointSolution:
    beamformer: Beamformer
    rdars_state: RdarsState
    aux: AuxiliaryState
    penalty: PenaltySchedule
    trace: list
    block_audit: list
    converged: bool
    iterations: int


# ---------------------------------------------------------------------------
# Linear-objective SOCP layer (cvxopt conelp backend).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SocCone:
    """One constraint ||a_mat @ x + b|| <= d @ x + e."""

    a_mat: np.ndarray
    b: np.ndarray
    d: np.ndarray
    e: float


@dataclass(frozen=True)
class LinearSocp:
    """maximize c @ x subject to the listed second-order cones."""

    c: np.ndarray
    cones: list


@dataclass
class SocpSolution:
    x: np.ndarray
    status: str
    objective: float
    kkt_residual: float
    gap: float


_CVXOPT_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-9,
    "reltol": 1e-9,
    "feastol": 1e-9,
    "maxiters": 200,
}


def _cone_residual(cone: SocCone, x: np.ndarray) -> float:
    slack = cone.d @ x + cone.e - np.linalg.norm(cone.a_mat @ x + cone.b)
    return max(0.0, -float(slack))


def solve_linear_socp(problem: LinearSocp) -> SocpSolution:
    """Solve max c@x over an intersection of second-order cones.

    Returns a point whose KKT residual (stationarity, cone feasibility and
    duality gap, each normalized) is at most 1e-7 * (1 + |objective|);
    infeasible or unbounded problems raise SocpInfeasibleError.
    """
    from cvxopt import matrix, solvers

    n = problem.c.shape[0]
    if not problem.cones:
        raise SocpInfeasibleError("unbounded: no cones constrain the variable")
    gq, hq = [], []
    for cone in problem.cones:
        # Each cone is invariant under positive scaling; normalizing to O(1)
        # entries keeps the interior-point scaling updates well conditioned.
        scale = max(np.abs(cone.a_mat).max(initial=0.0), np.abs(cone.b).max(initial=0.0),
                    np.abs(cone.d).max(initial=0.0), abs(cone.e), 1e-12)
        g = np.zeros((cone.a_mat.shape[0] + 1, n))
        g[0, :] = -cone.d / scale
        g[1:, :] = -cone.a_mat / scale
        h = np.concatenate([[cone.e / scale], cone.b / scale])
        gq.append(matrix(g))
        hq.append(matrix(h))
    sol = None
    for options in (_CVXOPT_OPTIONS, {**_CVXOPT_OPTIONS, "abstol": 1e-8, "reltol": 1e-8,
                                      "feastol": 1e-8, "refinement": 2}):
        solvers.options.clear()
        solvers.options.update(options)
        try:
            sol = solvers.socp(matrix(-problem.c), Gq=gq, hq=hq)
            break
        except (ValueError, ArithmeticError):
            sol = None
    if sol is None:
        raise SocpInfeasibleError("SOCP interior-point breakdown")
    status = sol["status"]
    if status == "primal infeasible":
        raise SocpInfeasibleError("SOCP primal infeasible")
    if status == "dual infeasible":
        raise SocpInfeasibleError("SOCP unbounded (dual infeasible)")
    if sol["x"] is None:
        raise SocpInfeasibleError(f"SOCP solver failed with status {status!r}")
    x = np.array(sol["x"]).ravel()
    objective = float(problem.c @ x)

    # KKT residuals from the returned primal/dual pair.
    stat = -problem.c.copy()
    gap = 0.0
    feas = 0.0
    for cone, g, h, z in zip(problem.cones, gq, hq, sol["zq"]):
        z_arr = np.array(z).ravel()
        stat += np.array(g).T @ z_arr
        s_arr = np.array(h).ravel() - np.array(g) @ x
        gap += float(s_arr @ z_arr)
        feas = max(feas, _cone_residual(cone, x))
    kkt = max(float(np.max(np.abs(stat))), feas, abs(gap))
    scale = 1.0 + abs(objective)
    if status != "optimal" and kkt > 1e-7 * scale:
        raise SocpInfeasibleError(f"SOCP solver inconclusive (status {status!r}, kkt {kkt:.2e})")
    return SocpSolution(x=x, status=status, objective=objective,
                        kkt_residual=kkt, gap=abs(gap))


# ---------------------------------------------------------------------------
# Individual block updates.
# ---------------------------------------------------------------------------

def update_receive_filter(h2: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Unit-norm dominant eigenvector of (H2 F)(H2 F)^H; maximizes the radar quotient."""
    through = h2 @ f
    if not np.any(np.abs(through) > 0):
        raise ZeroEchoError("echo channel carries no energy: H2 F = 0")
    gram = through @ through.conj().T
    _, vecs = np.linalg.eigh(gram)
    w = vecs[:, -1]
    return w / np.linalg.norm(w)


@dataclass(frozen=True)
class SocUser:
    h1: np.ndarray
    gamma_bar: float
    sigma1: float


@dataclass(frozen=True)
class SocpProblem:
    """Transmit-beamformer subproblem data at the complex level."""

    c: np.ndarray          # (K*(M+a),) objective vector on vec(F)
    users: list            # SocUser entries; empty when SINR is not enforced
    power: float
    n_streams: int         # K
    n_tx: int              # M + a


def build_socp_problem(h2: np.ndarray, h1: np.ndarray, w: np.ndarray, f_prev: np.ndarray,
                       gamma_bar_lin, sigma1_sq, power: float) -> SocpProblem:
    """Assemble the linearized transmit subproblem around f_prev.

    The objective vector is C f_t with C = (I_K kron H2^H w w^H H2) / (w^H w);
    per-user SINR thresholds become rotated second-order cone constraints.
    """
    n_tx, k = f_prev.shape
    y = h2.conj().T @ w                       # (M+a,)
    wn = float(np.real(np.vdot(w, w)))
    c = ((np.conj(y) @ f_prev) / wn)[None, :] * y[:, None]   # (M+a, K) columns c_k
    users = []
    if gamma_bar_lin is not None:
        for idx in range(k):
            users.append(SocUser(h1=np.asarray(h1)[idx],
                                 gamma_bar=float(np.asarray(gamma_bar_lin)[idx]),
                                 sigma1=math.sqrt(float(np.asarray(sigma1_sq)[idx]))))
    return SocpProblem(c=c.T.reshape(-1), users=users, power=power, n_streams=k, n_tx=n_tx)


def _build_linear_socp(problem: SocpProblem, minimize_power: bool) -> LinearSocp:
    """Realify the transmit subproblem (optionally the min-power variant)."""
    k, n_tx = problem.n_streams, problem.n_tx
    nc = k * n_tx
    extra = 1 if minimize_power else 0
    n = 2 * nc + extra
    cones = []
    for u_idx, user in enumerate(problem.users):
        h = user.h1 / user.sigma1
        a_mat = np.zeros((2 * k + 1, n))
        for i in range(k):
            re_sl = slice(i * n_tx, (i + 1) * n_tx)
            im_sl = slice(nc + i * n_tx, nc + (i + 1) * n_tx)
            a_mat[2 * i, re_sl] = np.real(h)
            a_mat[2 * i, im_sl] = -np.imag(h)
            a_mat[2 * i + 1, re_sl] = np.imag(h)
            a_mat[2 * i + 1, im_sl] = np.real(h)
        b = np.zeros(2 * k + 1)
        b[-1] = 1.0
        d = np.zeros(n)
        ratio = math.sqrt((1.0 + user.gamma_bar) / user.gamma_bar)
        re_sl = slice(u_idx * n_tx, (u_idx + 1) * n_tx)
        im_sl = slice(nc + u_idx * n_tx, nc + (u_idx + 1) * n_tx)
        d[re_sl] = ratio * np.real(h)
        d[im_sl] = -ratio * np.imag(h)
        cones.append(SocCone(a_mat=a_mat, b=b, d=d, e=0.0))

    if minimize_power:
        a_mat = np.zeros((2 * nc, n))
        a_mat[:, :2 * nc] = np.eye(2 * nc)
        d = np.zeros(n)
        d[-1] = 1.0
        cones.append(SocCone(a_mat=a_mat, b=np.zeros(2 * nc), d=d, e=0.0))
        c = np.zeros(n)
        c[-1] = -1.0
    else:
        a_mat = np.eye(2 * nc)
        cones.append(SocCone(a_mat=a_mat, b=np.zeros(2 * nc), d=np.zeros(n),
                             e=math.sqrt(problem.power)))
        c = np.concatenate([np.real(problem.c), np.imag(problem.c)])
        # Unit-norm objective: pure positive rescale (argmax-invariant) that
        # keeps the interior-point stopping criteria meaningful at physical scales.
        c = c / np.linalg.norm(c)
    return LinearSocp(c=c, cones=cones)


def _devectorize(x: np.ndarray, k: int, n_tx: int) -> np.ndarray:
    nc = k * n_tx
    f_vec = x[:nc] + 1j * x[nc:2 * nc]
    return f_vec.reshape(k, n_tx).T


def update_transmit_beamformer(f_prev: np.ndarray, problem: SocpProblem) -> np.ndarray:
    """Maximize the linearized radar objective under the SINR cones and power ball."""
    if not np.any(np.abs(problem.c) > 0):
        return f_prev.copy()
    try:
        sol = solve_linear_socp(_build_linear_socp(problem, minimize_power=False))
    except SocpInfeasibleError as exc:
        raise SocpInfeasibleError(f"SINR targets unattainable this iteration: {exc}") from exc
    return _devectorize(sol.x, problem.n_streams, problem.n_tx)


def minimum_power_beamformer(problem: SocpProblem) -> np.ndarray:
    """Feasibility version: the least-power F meeting every SINR cone."""
    sol = solve_linear_socp(_build_linear_socp(problem, minimize_power=True))
    return _devectorize(sol.x, problem.n_streams, problem.n_tx)


def update_auxiliary(h1: np.ndarray, f: np.ndarray, gamma_bar_lin,
                     sigma1_sq) -> AuxiliaryState:
    """Project the through-values onto the auxiliary SINR-feasible set.

    Slack users copy their values with a zero dual; tight users solve the
    stationarity system through a bisection on the dual in (0, 1).
    """
    vals = np.atleast_2d(h1) @ f
    k = vals.shape[0]
    s = vals.copy()
    mu = np.zeros(k)
    if gamma_bar_lin is None:
        return AuxiliaryState(s=s, mu=mu)
    gamma_bar_lin = np.broadcast_to(np.asarray(gamma_bar_lin, dtype=float), (k,))
    sigma1_sq = np.broadcast_to(np.asarray(sigma1_sq, dtype=float), (k,))
    failures = {}
    for i in range(k):
        gb = gamma_bar_lin[i]
        sq = np.abs(vals[i]) ** 2
        interf = float(sq.sum() - sq[i])
        if gb * (interf + sigma1_sq[i]) - sq[i] <= 0:
            continue
        if sq[i] == 0:
            failures[i] = "zero through-gain with a positive SINR target"
            continue

        def f_mu(m, i=i, gb=gb):
            sqv = np.abs(vals[i]) ** 2
            inter = (sqv.sum() - sqv[i]) / (1.0 + m * gb) ** 2
            return gb * (inter + sigma1_sq[i]) - sqv[i] / (1.0 - m) ** 2

        lo, hi = 0.0, 1.0 - 1e-12
        if f_mu(hi) > 0:
            failures[i] = "no dual root in (0, 1)"
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f_mu(mid) > 0:
                lo = mid
            else:
                hi = mid
        mu[i] = 0.5 * (lo + hi)
        s[i, :] = vals[i, :] / (1.0 + mu[i] * gb)
        s[i, i] = vals[i, i] / (1.0 - mu[i])
    if failures:
        raise SinrInfeasibleError("per-user SINR projection failed", per_user=failures)
    return AuxiliaryState(s=s, mu=mu)


# -- reflection block -------------------------------------------------------

def _real_stack(v: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(v), np.imag(v)])


def _sym_max_eig(mat: np.ndarray) -> float:
    sym = 0.5 * (mat + mat.conj().T)
    return float(np.linalg.eigvalsh(sym)[-1])


def reflection_step_pieces(coeffs: PhiCoefficients, phi_t: np.ndarray, rho1: float) -> dict:
    """Intermediate quantities of the reflection surrogate at phi_t."""
    parts = coeffs.echo
    n = phi_t.shape[0]
    y = parts.lin @ phi_t
    z = (parts.quad_left @ phi_t) * (parts.quad_right @ phi_t)
    g = parts.const + y + z
    q1 = (np.conj(parts.lin) * g[:, None]).sum(axis=0)
    q2_mat = np.einsum("k,i,kj->ij", g, np.conj(parts.quad_right), np.conj(parts.quad_left))
    qbar = np.block([[-np.real(q2_mat), -np.imag(q2_mat)],
                     [-np.imag(q2_mat), np.real(q2_mat)]])
    lam1 = float(np.linalg.eigvalsh(qbar + qbar.T)[-1])
    phi_bar = _real_stack(phi_t)
    u3 = (qbar + qbar.T - lam1 * np.eye(2 * n)) @ phi_bar
    q3 = u3[:n] + 1j * u3[n:]
    r9 = coeffs.pen_quad
    rbar = np.block([[np.real(r9), np.imag(r9)],
                     [-np.imag(r9), np.real(r9)]])
    lam2 = float(np.linalg.eigvalsh(rbar + rbar.T)[-1])
    u4 = (rbar + rbar.T - lam2 * np.eye(2 * n)) @ phi_bar
    q4 = u4[:n] + 1j * u4[n:]
    q5 = -2.0 * q1 + 2.0 * q3 + (2.0 * coeffs.pen_lin + q4) / (2.0 * rho1)
    return {"q1": q1, "q2_mat": q2_mat, "qbar": qbar, "lam1": lam1,
            "q3": q3, "rbar": rbar, "lam2": lam2, "q4": q4, "q5": q5}


def update_reflection(coeffs: PhiCoefficients, phi_t: np.ndarray, rho1: float) -> np.ndarray:
    """Phase alignment against the linear surrogate; zero entries keep their phase."""
    q5 = reflection_step_pieces(coeffs, phi_t, rho1)["q5"]
    phi = -np.exp(1j * np.angle(q5))
    dead = np.abs(q5) == 0.0
    if np.any(dead):
        phi[dead] = phi_t[dead]
    return phi


# -- selection diagonal block ----------------------------------------------

def mode_step_pieces(coeffs: SelectionCoefficients, a_t: np.ndarray,
                     rho1: float, rho2: float) -> dict:
    parts = coeffs.echo
    n = a_t.shape[0]
    a_t = a_t.astype(float)
    y = parts.lin @ a_t
    z = (parts.quad_left @ a_t) * (parts.quad_right @ a_t)
    g = parts.const + y + z
    q6 = (np.conj(parts.lin) * g[:, None]).sum(axis=0)
    q7_mat = np.einsum("k,i,kj->ij", g, np.conj(parts.quad_right), np.conj(parts.quad_left))
    q7_tilde = -np.real(q7_mat)
    lam3 = float(np.linalg.eigvalsh(q7_tilde + q7_tilde.T)[-1])
    q8 = -2.0 * q6 + 2.0 * (q7_tilde + q7_tilde.T - lam3 * np.eye(n)) @ a_t
    lam4 = _sym_max_eig(coeffs.pen_quad)
    q9 = coeffs.pen_lin + (coeffs.pen_quad - lam4 * np.eye(n)) @ a_t
    q10 = q8 + q9 / rho1 + coeffs.sel_lin / (2.0 * rho2)
    return {"q6": q6, "q7_mat": q7_mat, "q7_tilde": q7_tilde, "lam3": lam3,
            "q8": q8, "lam4": lam4, "q9": q9, "q10": q10}


def update_mode_selection(coeffs: SelectionCoefficients, a_t: np.ndarray,
                          rho1: float, rho2: float, a_count: int) -> np.ndarray:
    """Indicator of the a_count smallest entries of the surrogate cost."""
    q10 = mode_step_pieces(coeffs, a_t, rho1, rho2)["q10"]
    order = np.argsort(np.real(q10), kind="stable")
    a_new = np.zeros(a_t.shape[0], dtype=np.int64)
    a_new[order[:a_count]] = 1
    return a_new


# -- selection columns block ------------------------------------------------

def column_step_pieces(coeffs: ColumnCoefficients, a_cols_t: np.ndarray,
                       a_diag: np.ndarray, rho1: float, rho2: float) -> dict:
    aa_t = a_cols_t.astype(float).T.reshape(-1)
    q16 = coeffs.lin + coeffs.quad.conj().T @ aa_t
    lam = _sym_max_eig(coeffs.pen_quad)
    q17 = coeffs.pen_lin + (coeffs.pen_quad - lam * np.eye(aa_t.shape[0])) @ aa_t
    q18 = (a_cols_t.astype(float) * np.asarray(a_diag, dtype=float)[:, None]).T.reshape(-1)
    q19 = -2.0 * q16 + q17 / rho1 - 2.0 * q18 / rho2
    return {"q16": q16, "lam": lam, "q17": q17, "q18": q18, "q19": q19}


def update_selection_columns(coeffs: ColumnCoefficients, a_cols_t: np.ndarray,
                             a_diag: np.ndarray, rho1: float, rho2: float) -> np.ndarray:
    """Distinct-row one-hot columns minimizing the linearized cost (optimal assignment)."""
    a_count = a_cols_t.shape[1]
    if a_count == 0:
        return a_cols_t.copy()
    q19 = column_step_pieces(coeffs, a_cols_t, a_diag, rho1, rho2)["q19"]
    cost = np.real(q19).reshape(a_count, -1)
    rows, cols = linear_sum_assignment(cost)
    a_cols = np.zeros_like(a_cols_t)
    for i, l in zip(rows, cols):
        a_cols[l, i] = 1
    return a_cols


# ---------------------------------------------------------------------------
# Initialization and the outer loop.
# ---------------------------------------------------------------------------

def initialize(config: SystemConfig, channels: ChannelSet, seed: int,
               options: OptimizerOptions | None = None):
    """Feasible starting point: random phases, first-a selection, min-power F scaled to P.

    Without SINR enforcement the beamformer starts as a random matrix at
    full power instead of the feasibility solve.
    """
    options = options or OptimizerOptions()
    n, m, k = config.n, config.m, config.k
    a_count = config.a if options.connected_count is None else options.connected_count
    stream = chan.STREAM_PHI_RANDOM if options.resample_phase else chan.STREAM_PHI_INIT
    phases = link_rng(seed, stream).uniform(0.0, 2.0 * np.pi, size=n)
    phi = np.exp(1j * phases)
    if not options.reflection_enabled:
        phi = np.zeros(n, dtype=complex)
    state = initial_rdars_state(n, a_count, phi=phi)
    comps = assemble_composites(channels, state)

    power = config.power_w
    if options.enforce_sinr:
        problem = SocpProblem(c=np.zeros(k * (m + a_count), dtype=complex),
                              users=[SocUser(h1=comps.h1[i],
                                             gamma_bar=float(config.gamma_bar_lin[i]),
                                             sigma1=math.sqrt(float(config.sigma1_sq_w[i])))
                                     for i in range(k)],
                              power=power, n_streams=k, n_tx=m + a_count)
        try:
            f_min = minimum_power_beamformer(problem)
        except SocpInfeasibleError as exc:
            diags = {i: f"target {config.gamma_bar_db[i]} dB" for i in range(k)}
            raise SinrInfeasibleError(f"infeasible SINR targets: {exc}", per_user=diags) from exc
        used = float(np.sum(np.abs(f_min) ** 2))
        if used > power * (1.0 + 1e-8):
            diags = {i: f"target {config.gamma_bar_db[i]} dB" for i in range(k)}
            raise SinrInfeasibleError(
                f"infeasible SINR targets: minimum power {used:.3e} W exceeds budget {power:.3e} W",
                per_user=diags)
        f = f_min * math.sqrt(power / used)
    else:
        raw = link_rng(seed, chan.STREAM_F_INIT)
        f = raw.standard_normal((m + a_count, k)) + 1j * raw.standard_normal((m + a_count, k))
        f *= math.sqrt(power / float(np.sum(np.abs(f) ** 2)))

    w = update_receive_filter(comps.h2, f)
    gamma = config.gamma_bar_lin if options.enforce_sinr else None
    aux = update_auxiliary(comps.h1, f, gamma, config.sigma1_sq_w)
    return Beamformer(f=f, w=w), state, aux


def run_joint_optimization(config: SystemConfig, channels: ChannelSet,
                           options: OptimizerOptions | None = None) -> JointSolution:
    """Alternate all enabled blocks until the radar SNR and both penalty
    residuals settle, then re-solve the filter/beamformer/auxiliary blocks
    once so every constraint holds exactly at the returned solution.

    Deterministic given (config, channels); the per-iteration trace and the
    per-block objective audit are returned alongside the solution.
    """
    options = options or OptimizerOptions()
    cfg = config
    beam, state, aux = initialize(cfg, channels, cfg.seed, options)
    f = beam.f
    w = beam.w
    sched = PenaltySchedule(rho1=cfg.penalty.rho1_init, rho2=cfg.penalty.rho2_init,
                            c1=cfg.penalty.c1, c2=cfg.penalty.c2,
                            rho_floor=cfg.penalty.rho_floor)
    gamma = cfg.gamma_bar_lin if options.enforce_sinr else None
    sigma1_sq = cfg.sigma1_sq_w
    sig_a, sig_2 = cfg.sigma_alpha_sq, cfg.sigma2_sq_w

    trace: list = []
    audit: list = []
    prev_snr = None
    converged = False
    iterations = 0

    def direct(state_, s_):
        return penalized_objective_direct(channels, state_, w, f, s_,
                                          sched.rho1, sched.rho2, sig_a, sig_2)

    def snapshot():
        return JointSolution(beamformer=Beamformer(f=f.copy(), w=w.copy()),
                             rdars_state=RdarsState(phi=state.phi.copy(),
                                                    a_vec=state.a_vec.copy(),
                                                    a_cols=state.a_cols.copy()),
                             aux=AuxiliaryState(s=aux.s.copy(), mu=aux.mu.copy()),
                             penalty=sched, trace=list(trace), block_audit=list(audit),
                             converged=converged, iterations=iterations)

    for it in range(1, cfg.stopping.max_iters + 1):
        iterations = it
        comps = assemble_composites(channels, state)
        try:
            w = update_receive_filter(comps.h2, f)
            problem = build_socp_problem(comps.h2, comps.h1, w, f, gamma, sigma1_sq, cfg.power_w)
            f = update_transmit_beamformer(f, problem)
        except (SocpInfeasibleError, ZeroEchoError) as exc:
            raise OptimizationAborted(f"iteration {it}: {exc}", iteration=it,
                                      last_solution=snapshot()) from exc

        if options.optimize_phase and options.reflection_enabled:
            surr = SurrogateState(channels=channels, rdars_state=state, w=w, f=f, s=aux.s,
                                  rho1=sched.rho1, rho2=sched.rho2,
                                  sigma_alpha_sq=sig_a, sigma2_sq=sig_2)
            coeffs = build_block_coefficients("phi", surr)
            before = direct(state, aux.s)
            state.phi = update_reflection(coeffs, state.phi, sched.rho1)
            audit.append((it, "phi", before, direct(state, aux.s)))

        comps = assemble_composites(channels, state)
        before = direct(state, aux.s)
        try:
            aux = update_auxiliary(comps.h1, f, gamma, sigma1_sq)
        except SinrInfeasibleError as exc:
            raise OptimizationAborted(f"iteration {it}: {exc}", iteration=it,
                                      last_solution=snapshot()) from exc
        audit.append((it, "s", before, direct(state, aux.s)))

        # With every element connected there is a single feasible support and
        # column relabelings are absorbed by the next beamformer solve, so the
        # selection blocks only run for 0 < a < N.
        if options.optimize_selection and 0 < state.a_count < cfg.n:
            surr = SurrogateState(channels=channels, rdars_state=state, w=w, f=f, s=aux.s,
                                  rho1=sched.rho1, rho2=sched.rho2,
                                  sigma_alpha_sq=sig_a, sigma2_sq=sig_2)
            coeffs_a = build_block_coefficients("a", surr)
            before = direct(state, aux.s)
            state.a_vec = update_mode_selection(coeffs_a, state.a_vec, sched.rho1,
                                                sched.rho2, state.a_count)
            audit.append((it, "a", before, direct(state, aux.s)))

            surr = SurrogateState(channels=channels, rdars_state=state, w=w, f=f, s=aux.s,
                                  rho1=sched.rho1, rho2=sched.rho2,
                                  sigma_alpha_sq=sig_a, sigma2_sq=sig_2)
            coeffs_aa = build_block_coefficients("aa", surr)
            before = direct(state, aux.s)
            state.a_cols = update_selection_columns(coeffs_aa, state.a_cols, state.a_vec,
                                                    sched.rho1, sched.rho2)
            audit.append((it, "aa", before, direct(state, aux.s)))

        comps = assemble_composites(channels, state)
        snr = radar_snr(w, comps.h2, f, sig_a, sig_2)
        res = penalty_residuals(state.a_vec, state.a_cols, aux.s, comps.h1, f)
        sinrs = user_sinr(comps.h1, f, sigma1_sq)
        trace.append({
            "iter": it,
            "radar_snr_db": 10.0 * math.log10(snr) if snr > 0 else float("-inf"),
            "penalized_obj": direct(state, aux.s),
            "comm_residual": res["comm_residual"],
            "selection_residual": res["selection_residual"],
            "min_sinr_db": 10.0 * math.log10(float(np.min(sinrs))) if np.min(sinrs) > 0 else float("-inf"),
            "rho1": sched.rho1,
            "rho2": sched.rho2,
        })

        if prev_snr is not None:
            rel = abs(snr - prev_snr) / max(abs(prev_snr), 1e-300)
            if (rel < cfg.stopping.rel_tol
                    and res["comm_residual"] < cfg.stopping.residual_tol
                    and res["selection_residual"] < cfg.stopping.residual_tol):
                converged = True
        prev_snr = snr
        if converged:
            break
        sched = sched.decayed()

    # Final polish: with the settled phases/selection, re-solve the convex
    # blocks so the SINR constraints hold exactly at the returned iterate.
    comps = assemble_composites(channels, state)
    try:
        w = update_receive_filter(comps.h2, f)
        problem = build_socp_problem(comps.h2, comps.h1, w, f, gamma, sigma1_sq, cfg.power_w)
        f = update_transmit_beamformer(f, problem)
        before = direct(state, aux.s)
        aux = update_auxiliary(comps.h1, f, gamma, sigma1_sq)
        audit.append((iterations, "s", before, direct(state, aux.s)))
    except (SocpInfeasibleError, ZeroEchoError, SinrInfeasibleError) as exc:
        raise OptimizationAborted(f"final polish: {exc}", iteration=iterations,
                                  last_solution=snapshot()) from exc

    return JointSolution(beamformer=Beamformer(f=f, w=w), rdars_state=state, aux=aux,
                         penalty=sched, trace=trace, block_audit=audit,
                         converged=converged, iterations=iterations)
