"""Per-trajectory entropy accounting.

Every detected jump |chi> -> A|chi>/||A chi|| carries an entropy flux into the
environment.  With the direct rate R_D = gamma ||A chi||^2 and the reversed
rate R_R = gamma_b <chi|(A^dag A)^2|chi> / ||A chi||^2 the per-jump flux is

    -ln(R_D / R_R) = ln(gamma_b / gamma) + ln(1 - eta),

an exact split into a thermal part (rate ratio only) and a nonthermal part
driven by the quantum fluctuations of Lambda = A^dag A in the pre-jump state:

    eta = -Var(Lambda) / ||A chi||^4 <= 0.

Drift intervals contribute the difference of forward and reversed log
survival norms.  The reversed norm can be taken on the state the backward
trajectory occupies when it enters the interval (mode "backward", the
default and the bookkeeping the backward construction itself produces), on
the forward post-jump state at the interval's upper end (mode "paper"), or on
the forward exit state (mode "exit", the convention the fluctuation-theorem
weight uses, which makes exp(-sigma) and the weight algebraically
consistent).  All entropies are in nats.

The drift analogue of eta is kappa = -Var(U^dag U) / ||U psi||^4, which is
second order in the measurement step, while the jump nonthermal flux is of
order one; ``appendix_var1_expansion`` provides the leading-order estimate of
Var(U^dag U) from time-ordered integrals of the decay operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import EPS_ZERO, NearZeroNorm, adjoint, is_hermitian, matrix_exp, norm_sq
from .model import Channel, LindbladModel, effective_hamiltonian
from .trajectory import DriftSegment, JumpEvent, TrajectoryRecord

__all__ = [
    "EntropyLedger",
    "JumpEntry",
    "DriftEntry",
    "direct_rate",
    "reversed_rate",
    "eta",
    "var1_state",
    "jump_flux",
    "drift_flux_exact",
    "appendix_I1",
    "appendix_I2",
    "appendix_var1_expansion",
    "drift_kappa",
    "ledger_for_trajectory",
    "sigma_with_boundary_densities",
]


def _lambda_moments(channel: Channel, chi: np.ndarray) -> tuple[float, float]:
    """(<Lambda>, <Lambda^2>) = (||A chi||^2, ||Lambda chi||^2) for normalized chi."""
    a_chi = channel.operator @ chi
    lam_chi = channel.operator.conj().T @ a_chi
    return norm_sq(a_chi), norm_sq(lam_chi)


def direct_rate(channel: Channel, t: float, chi: np.ndarray) -> float:
    """Detected-transition rate gamma(t) ||A chi||^2."""
    return float(channel.rate(t)) * norm_sq(channel.operator @ chi)


def reversed_rate(channel: Channel, t: float, chi: np.ndarray) -> float:
    """Fictitious reversed-transition rate gamma_b(t) <Lambda^2> / ||A chi||^2."""
    m1, m2 = _lambda_moments(channel, chi)
    if m1 <= EPS_ZERO:
        raise NearZeroNorm("reversed rate undefined: the direct jump is impossible "
                           f"(||A chi||^2 = {m1:.3e})")
    return float(channel.backward_rate(t)) * m2 / m1


def eta(channel: Channel, chi: np.ndarray) -> float:
    """Jump fluctuation measure (<Lambda>^2 - <Lambda^2>) / ||A chi||^4; always <= 0."""
    m1, m2 = _lambda_moments(channel, chi)
    if m1 <= EPS_ZERO:
        raise NearZeroNorm("eta undefined: the direct jump is impossible "
                           f"(||A chi||^2 = {m1:.3e})")
    return (m1 * m1 - m2) / (m1 * m1)


def var1_state(op: np.ndarray, psi: np.ndarray) -> float:
    """<Q^2> - <Q>^2 of a Hermitian operator in a pure state."""
    if not is_hermitian(op, 1e-10):
        raise ValueError("var1_state requires a Hermitian operator")
    q_psi = op @ psi
    m1 = float(np.real(np.vdot(psi, q_psi)))
    m2 = norm_sq(q_psi)
    return m2 - m1 * m1


def _safe_log(x: float) -> float:
    if x > 0.0:
        return math.log(x)
    return float("-inf")


@dataclass(frozen=True)
class JumpEntry:
    k: int
    time: float
    channel: int
    R_D: float
    R_R: float
    thermal: float      # ln(gamma_b / gamma)
    nonthermal: float   # ln(1 - eta)
    eta: float


@dataclass(frozen=True)
class DriftEntry:
    k: int
    t_start: float
    t_end: float
    log_D_fwd: float
    log_D_rev: float
    kappa: float


@dataclass
class EntropyLedger:
    """Accumulated entropy fluxes of one trajectory."""

    jump_flux: float = 0.0    # -sum ln(R_D / R_R)
    drift_flux: float = 0.0   # -sum (log_D_fwd - log_D_rev)
    per_jump: list = field(default_factory=list)
    per_drift: list = field(default_factory=list)
    mode: str = "backward"

    @property
    def total_flux(self) -> float:
        return self.jump_flux + self.drift_flux

    @property
    def thermal_total(self) -> float:
        return sum(e.thermal for e in self.per_jump)

    @property
    def nonthermal_jump_total(self) -> float:
        return sum(e.nonthermal for e in self.per_jump)

    @property
    def kappa_sum(self) -> float:
        return sum(e.kappa for e in self.per_drift)


def jump_flux(ledger: EntropyLedger, jump: JumpEvent, model: LindbladModel,
              t: float | None = None) -> EntropyLedger:
    """Fold one jump into the ledger; rates evaluated at t (default: jump.time)."""
    if t is None:
        t = jump.time
    channel = model.channels[jump.channel]
    gamma = float(channel.rate(t))
    gamma_b = float(channel.backward_rate(t))
    m1, m2 = _lambda_moments(channel, jump.pre_state)
    if m1 <= EPS_ZERO:
        raise NearZeroNorm("jump with vanishing direct norm cannot be scored")
    r_d = gamma * m1
    r_r = gamma_b * m2 / m1
    eta_k = (m1 * m1 - m2) / (m1 * m1)
    thermal = _safe_log(gamma_b) - _safe_log(gamma)
    nonthermal = math.log(1.0 - eta_k)
    ledger.per_jump.append(JumpEntry(k=len(ledger.per_jump), time=jump.time,
                                     channel=jump.channel, R_D=r_d, R_R=r_r,
                                     thermal=thermal, nonthermal=nonthermal,
                                     eta=eta_k))
    ledger.jump_flux += _safe_log(r_r) - _safe_log(r_d)
    return ledger


def drift_flux_exact(fwd_segment: DriftSegment, bwd_segment: DriftSegment) -> float:
    """Drift flux of one interval from the matching backward segment.

    Both segments must cover an interval of the same length; the reversed log
    norm is the backward segment's own log survival.
    """
    len_f = fwd_segment.t_end - fwd_segment.t_start
    len_b = bwd_segment.t_end - bwd_segment.t_start
    if abs(len_f - len_b) > 1e-9 * max(len_f, 1.0):
        raise ValueError(f"drift interval mismatch: forward {len_f}, backward {len_b}")
    return -(fwd_segment.log_survival - bwd_segment.log_survival)


def ledger_for_trajectory(fwd: TrajectoryRecord, bwd: TrajectoryRecord,
                          model: LindbladModel, mode: str = "backward") -> EntropyLedger:
    """Full entropy ledger of a forward/backward pair.

    Jump rates are evaluated at the midpoint of the jump's measurement step,
    matching the rate tables the simulation sampled from.  ``mode`` selects
    the reversed drift-norm state: "backward" (default), "paper", or "exit".
    """
    if bwd.direction != "backward" or fwd.direction != "forward":
        raise ValueError("ledger_for_trajectory expects a (forward, backward) pair")
    if bwd.n_jumps != fwd.n_jumps:
        raise ValueError("records do not describe the same trajectory")
    nj = fwd.n_jumps
    ledger = EntropyLedger(mode=mode)
    for jump in fwd.jumps:
        jump_flux(ledger, jump, model, t=jump.time + 0.5 * fwd.dt)

    if mode == "backward":
        # backward segment at walk position nj - k matches forward segment k
        log_rev = [bwd.drifts[nj - k].log_survival for k in range(nj + 1)]
    elif mode == "paper":
        if bwd.aux_rev_post_log is None:
            raise ValueError("backward record lacks reversed-norm streams")
        log_rev = list(bwd.aux_rev_post_log)
    elif mode == "exit":
        if bwd.aux_rev_exit_log is None:
            raise ValueError("backward record lacks reversed-norm streams")
        log_rev = list(bwd.aux_rev_exit_log)
    else:
        raise ValueError(f"unknown drift mode {mode!r}")

    for k, seg in enumerate(fwd.drifts):
        ledger.per_drift.append(DriftEntry(k=k, t_start=seg.t_start, t_end=seg.t_end,
                                           log_D_fwd=seg.log_survival,
                                           log_D_rev=float(log_rev[k]),
                                           kappa=seg.kappa))
        ledger.drift_flux += -(seg.log_survival - float(log_rev[k]))
    return ledger


def sigma_with_boundary_densities(ledger: EntropyLedger, logP_initial: float,
                                  logP_final: float) -> float:
    """Total trajectory entropy production given boundary log densities.

    sigma = (ln P_initial - ln P_final) + sum ln(R_D/R_R) + sum (log_D_fwd -
    log_D_rev) = boundary term - total flux.  The densities come from the
    caller (a known initial ensemble or an external estimator).
    """
    return (logP_initial - logP_final) - ledger.total_flux


# -- short-time expansion of the drift fluctuations --------------------------------


def appendix_I1(model: LindbladModel, t: float, dt: float, n_sub: int = 16) -> np.ndarray:
    """Midpoint-quadrature integral of the decay operator Omega over [t, t+dt]."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    h = dt / n_sub
    out = np.zeros((model.dim, model.dim), dtype=np.complex128)
    for m in range(n_sub):
        out += model.decay_operator(t + (m + 0.5) * h)
    return out * h


def appendix_I2(model: LindbladModel, t: float, dt: float, n_sub: int = 16) -> np.ndarray:
    """Time-ordered double integral of Omega(t1) Omega(t2) over [t, t+dt]^2.

    Later times stand to the left; the two orderings of each off-diagonal
    cell pair contribute symmetrically, diagonal cells as plain squares.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    h = dt / n_sub
    omegas = [model.decay_operator(t + (m + 0.5) * h) for m in range(n_sub)]
    out = np.zeros((model.dim, model.dim), dtype=np.complex128)
    for m in range(n_sub):
        out += omegas[m] @ omegas[m]
        for l in range(m):
            out += 2.0 * (omegas[m] @ omegas[l])
    return out * (h * h)


def appendix_var1_expansion(model: LindbladModel, t: float, dt: float,
                            psi: np.ndarray, n_sub: int = 16) -> float:
    """Leading-order Var(U^dag U) estimate: <I2> - <I1>^2 on the state psi."""
    i1 = appendix_I1(model, t, dt, n_sub)
    i2 = appendix_I2(model, t, dt, n_sub)
    m1 = float(np.real(np.vdot(psi, i1 @ psi)))
    m2 = float(np.real(np.vdot(psi, i2 @ psi)))
    return m2 - m1 * m1


def _composed_propagator(model: LindbladModel, t: float, dt: float, n_sub: int) -> np.ndarray:
    h = dt / n_sub
    u = np.eye(model.dim, dtype=np.complex128)
    for m in range(n_sub):
        u = matrix_exp(-1j * h * effective_hamiltonian(model, t + (m + 0.5) * h)) @ u
    return u


def drift_kappa(model: LindbladModel, t: float, dt: float, psi: np.ndarray,
                n_sub: int = 16) -> float:
    """Exact drift fluctuation measure -Var(U^dag U) / ||U psi||^4 over [t, t+dt].

    U is the composed substep propagator, accurate well beyond the O(dt^2)
    signal this quantity carries.  Always <= 0; zero for unitary steps.
    """
    u = _composed_propagator(model, t, dt, n_sub)
    m = adjoint(u) @ u
    w = norm_sq(u @ psi)
    if w <= EPS_ZERO:
        raise NearZeroNorm("drift annihilated the state")
    return -var1_state(m, psi) / (w * w)
