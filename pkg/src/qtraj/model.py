"""Time-dependent open-system models.

A model is a free Hamiltonian H(t) given as schedule-weighted constant
matrices plus a list of decay channels (A_i, gamma_i(t)).  Channels come in
adjoint pairs: the partner of channel i carries the operator A_i^dagger, and
its forward rate doubles as the backward rate gamma_i^b of channel i.  For a
thermal pair (sigma_-, gamma_1) / (sigma_+, gamma_2) this reproduces the
detailed-balance ratio gamma_1^b / gamma_1 = gamma_2 / gamma_1.

The model produces the non-Hermitian drift generator

    H_eff(t) = H(t) - (i/2) * Omega(t),    Omega(t) = sum_i gamma_i(t) A_i^dag A_i,

and midpoint-rule step propagators U = exp(-i * H_eff(t + dt/2) * dt), whose
ordered composition approximates the time-ordered exponential to second order
in the step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hilbert
from .hilbert import adjoint, as_operator, matrix_exp

__all__ = [
    "Schedule",
    "Channel",
    "LindbladModel",
    "effective_hamiltonian",
    "step_propagator",
    "backward_step_propagator",
    "lindblad_generator",
    "build_two_level_direct",
    "build_two_level_homodyne",
    "build_two_level_thermal",
    "build_eigenstate_jump_model",
]

_PAIRING_TOL = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Scalar function of time: constant, exponential decay, or saturating rise."""

    kind: str                 # "constant" | "exp_decay" | "exp_rise"
    g: float
    tau: float | None = None

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("constant", float(value))

    @classmethod
    def exp_decay(cls, g: float, tau: float) -> "Schedule":
        # g * exp(-t / tau)
        if tau <= 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        return cls("exp_decay", float(g), float(tau))

    @classmethod
    def exp_rise(cls, g: float, tau: float) -> "Schedule":
        # g * (1 - exp(-t / tau))
        if tau <= 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        return cls("exp_rise", float(g), float(tau))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.g + 0.0 * t
        if self.kind == "exp_decay":
            return self.g * np.exp(-t / self.tau)
        if self.kind == "exp_rise":
            return self.g * (1.0 - np.exp(-t / self.tau))
        raise ValueError(f"unknown schedule kind {self.kind!r}")

    def is_nonnegative(self) -> bool:
        """True when the schedule stays >= 0 for all t >= 0."""
        return self.g >= 0.0


def _as_rate(value) -> Schedule:
    if isinstance(value, Schedule):
        return value
    return Schedule.constant(float(value))


@dataclass(frozen=True)
class Channel:
    """One decay channel: operator, forward rate, backward rate, adjoint partner."""

    operator: np.ndarray
    rate: Schedule
    backward_rate: Schedule
    adjoint_partner: int

    def __post_init__(self):
        op = as_operator(self.operator)
        op = np.ascontiguousarray(op)
        op.flags.writeable = False
        object.__setattr__(self, "operator", op)
        if not self.rate.is_nonnegative():
            raise ValueError("channel rate schedule must be nonnegative")


@dataclass(eq=False)
class LindbladModel:
    """Hamiltonian schedule terms plus adjoint-paired decay channels."""

    dim: int
    hamiltonian_terms: tuple  # ((Schedule, matrix), ...)
    channels: tuple           # (Channel, ...)
    label: str = ""
    _adaga: tuple = field(init=False, repr=False)

    def __post_init__(self):
        terms = []
        for sched, mat in self.hamiltonian_terms:
            mat = np.ascontiguousarray(as_operator(mat))
            if mat.shape[0] != self.dim:
                raise ValueError("Hamiltonian term dimension mismatch")
            mat.flags.writeable = False
            terms.append((sched, mat))
        self.hamiltonian_terms = tuple(terms)
        self.channels = tuple(self.channels)
        self._validate()
        self._adaga = tuple(
            np.ascontiguousarray(adjoint(ch.operator) @ ch.operator) for ch in self.channels
        )

    def _validate(self):
        n = len(self.channels)
        for i, ch in enumerate(self.channels):
            if ch.operator.shape[0] != self.dim:
                raise ValueError(f"channel {i} operator dimension mismatch")
            j = ch.adjoint_partner
            if not (0 <= j < n):
                raise ValueError(f"channel {i} has invalid adjoint partner {j}")
            if self.channels[j].adjoint_partner != i:
                raise ValueError(f"adjoint pairing of channels {i} and {j} is not mutual")
            if np.max(np.abs(self.channels[j].operator - adjoint(ch.operator))) > _PAIRING_TOL:
                raise ValueError(f"channel {j} is not the adjoint of channel {i}")
            if ch.backward_rate != self.channels[j].rate:
                raise ValueError(f"backward rate of channel {i} must equal the partner forward rate")
        for t in (0.0, 0.37, 5.0, 41.0):
            h = self.hamiltonian(t)
            if not hilbert.is_hermitian(h, 1e-12):
                raise ValueError(f"hamiltonian not Hermitian at t={t}")

    # -- time-dependent pieces ------------------------------------------------

    def hamiltonian(self, t: float) -> np.ndarray:
        h = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for sched, mat in self.hamiltonian_terms:
            h += float(sched(t)) * mat
        return h

    def rates(self, t) -> np.ndarray:
        """Per-channel forward rates; shape (n_channels,) or (n_channels, len(t))."""
        return np.array([ch.rate(t) for ch in self.channels])

    def decay_operator(self, t: float) -> np.ndarray:
        """Omega(t) = sum_i gamma_i(t) A_i^dag A_i (Hermitian, positive)."""
        om = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for ch, adaga in zip(self.channels, self._adaga):
            om += float(ch.rate(t)) * adaga
        return om

    @property
    def partner_index(self) -> np.ndarray:
        return np.array([ch.adjoint_partner for ch in self.channels], dtype=np.int64)


def effective_hamiltonian(model: LindbladModel, t: float) -> np.ndarray:
    """H(t) - (i/2) Omega(t): the non-Hermitian drift generator."""
    return model.hamiltonian(t) - 0.5j * model.decay_operator(t)


def step_propagator(model: LindbladModel, t_start: float, dt: float) -> np.ndarray:
    """One midpoint-rule factor exp(-i H_eff(t+dt/2) dt) of the drift propagator."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    h_eff = effective_hamiltonian(model, t_start + 0.5 * dt)
    return matrix_exp(-1j * dt * h_eff)


def backward_step_propagator(model: LindbladModel, t_start: float, dt: float) -> np.ndarray:
    """Adjoint of the forward factor; reversed-order composition walks time down."""
    return adjoint(step_propagator(model, t_start, dt))


def lindblad_generator(model: LindbladModel, t: float, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the ensemble master equation at time t."""
    rho = as_operator(rho)
    if rho.shape[0] != model.dim:
        raise ValueError("density matrix dimension mismatch")
    h = model.hamiltonian(t)
    out = -1j * (h @ rho - rho @ h)
    for ch, adaga in zip(model.channels, model._adaga):
        g = float(ch.rate(t))
        if g == 0.0:
            continue
        a = ch.operator
        out += g * (a @ rho @ a.conj().T - 0.5 * (adaga @ rho + rho @ adaga))
    return out


# -- builders -----------------------------------------------------------------


def _two_level_hamiltonian(omega0: float, tau: float):
    return ((Schedule.exp_rise(0.5 * omega0, tau), hilbert.SIGMA_X),)


def _check_positive(**params):
    for name, val in params.items():
        if not (val > 0) or not math.isfinite(val):
            raise ValueError(f"{name} must be a positive finite number, got {val}")


def build_two_level_direct(omega0: float, tau: float, g1: float, tau1: float,
                           g2: float, tau2: float) -> LindbladModel:
    """Driven two-level atom with emission/absorption channels.

    H(t) = omega(t)/2 * sigma_x with omega(t) = omega0 (1 - exp(-t/tau));
    channels (sigma_-, g1 exp(-t/tau1)) paired with (sigma_+, g2 (1 - exp(-t/tau2))).
    """
    _check_positive(omega0=omega0, tau=tau, tau1=tau1, tau2=tau2)
    if g1 < 0 or g2 < 0:
        raise ValueError("rate amplitudes g1, g2 must be >= 0")
    gamma1 = Schedule.exp_decay(g1, tau1)
    gamma2 = Schedule.exp_rise(g2, tau2)
    channels = (
        Channel(hilbert.SIGMA_MINUS, gamma1, gamma2, adjoint_partner=1),
        Channel(hilbert.SIGMA_PLUS, gamma2, gamma1, adjoint_partner=0),
    )
    return LindbladModel(2, _two_level_hamiltonian(omega0, tau), channels,
                         label="two_level_direct")


def build_two_level_homodyne(omega0: float, tau: float, g1: float, tau1: float,
                             g2: float, tau2: float, beta: complex) -> LindbladModel:
    """Same atom unraveled with four displaced operators sigma_-+/-i*beta etc.

    The four channels run at half the direct rates and reproduce the direct
    scheme's ensemble generator for any complex beta.
    """
    _check_positive(omega0=omega0, tau=tau, tau1=tau1, tau2=tau2)
    if g1 < 0 or g2 < 0:
        raise ValueError("rate amplitudes g1, g2 must be >= 0")
    beta = complex(beta)
    eye = np.eye(2, dtype=np.complex128)
    a1m = hilbert.SIGMA_MINUS - 1j * beta * eye
    a1p = hilbert.SIGMA_MINUS + 1j * beta * eye
    a2m = hilbert.SIGMA_PLUS - 1j * np.conj(beta) * eye   # = adjoint(a1p)
    a2p = hilbert.SIGMA_PLUS + 1j * np.conj(beta) * eye   # = adjoint(a1m)
    g1h = Schedule.exp_decay(0.5 * g1, tau1)
    g2h = Schedule.exp_rise(0.5 * g2, tau2)
    channels = (
        Channel(a1m, g1h, g2h, adjoint_partner=3),
        Channel(a1p, g1h, g2h, adjoint_partner=2),
        Channel(a2m, g2h, g1h, adjoint_partner=1),
        Channel(a2p, g2h, g1h, adjoint_partner=0),
    )
    return LindbladModel(2, _two_level_hamiltonian(omega0, tau), channels,
                         label="two_level_homodyne")


def build_two_level_thermal(omega0: float, tau: float, n_mean: float,
                            c: float) -> LindbladModel:
    """Driven atom in a thermal field: constant rates c*(N+1) down, c*N up."""
    _check_positive(omega0=omega0, tau=tau, c=c)
    if n_mean < 0:
        raise ValueError(f"mean photon number must be >= 0, got {n_mean}")
    gamma1 = Schedule.constant(c * (n_mean + 1.0))
    gamma2 = Schedule.constant(c * n_mean)
    channels = (
        Channel(hilbert.SIGMA_MINUS, gamma1, gamma2, adjoint_partner=1),
        Channel(hilbert.SIGMA_PLUS, gamma2, gamma1, adjoint_partner=0),
    )
    return LindbladModel(2, _two_level_hamiltonian(omega0, tau), channels,
                         label="two_level_thermal")


def build_eigenstate_jump_model(energies, downward_rates, upward_rates=None) -> LindbladModel:
    """Undriven N-level system jumping between energy eigenstates.

    ``energies`` must be strictly increasing with nondegenerate gaps.  Rates
    are keyed by level pairs (i, j) with i < j, 0-based: ``downward_rates[i, j]``
    drives |j> -> |i> through the operator |i><j|, ``upward_rates[i, j]`` the
    adjoint transition.  Pairs missing from one table default to rate zero so
    every channel keeps its adjoint partner.
    """
    energies = np.asarray(energies, dtype=float)
    n = energies.shape[0]
    if n < 2:
        raise ValueError("need at least two levels")
    if np.any(np.diff(energies) <= 0):
        raise ValueError("energies must be strictly increasing")
    gaps = sorted(energies[j] - energies[i] for i in range(n) for j in range(i + 1, n))
    scale = max(abs(energies[0]), abs(energies[-1]), 1.0)
    for a, b in zip(gaps, gaps[1:]):
        if b - a <= 1e-9 * scale:
            raise ValueError(f"degenerate energy gaps {a} and {b}; the eigenstate-jump "
                             "construction needs nondegenerate gaps")

    downward_rates = dict(downward_rates)
    upward_rates = dict(upward_rates or {})
    for table, name in ((downward_rates, "downward"), (upward_rates, "upward")):
        for (i, j) in table:
            if not (0 <= i < j < n):
                raise ValueError(f"{name} rate key ({i}, {j}) must satisfy 0 <= i < j < n")

    pairs = sorted(set(downward_rates) | set(upward_rates))
    channels = []
    for (i, j) in pairs:
        down = _as_rate(downward_rates.get((i, j), 0.0))
        up = _as_rate(upward_rates.get((i, j), 0.0))
        k = len(channels)
        op_down = np.zeros((n, n), dtype=np.complex128)
        op_down[i, j] = 1.0
        channels.append(Channel(op_down, down, up, adjoint_partner=k + 1))
        channels.append(Channel(op_down.conj().T, up, down, adjoint_partner=k))

    h = ((Schedule.constant(1.0), np.diag(energies).astype(np.complex128)),)
    return LindbladModel(n, h, tuple(channels), label="eigenstate_jump")
