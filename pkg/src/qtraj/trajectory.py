"""Piecewise-deterministic trajectory simulation on a fixed measurement grid.

The horizon [0, T] is divided into n_steps intervals of length dt, one per
environment measurement.  At each step the walker either jumps through one
channel (with probability gamma_i * ||A_i psi||^2 * dt, the step's rates and
propagator both evaluated at the interval midpoint) or drifts with the
contractive factor U = exp(-i H_eff dt), renormalizing after every step and
accumulating the log survival norm per drift segment.

A jump consumes its whole measurement step: the jump recorded at time
t_k = s*dt replaces the drift factor of step s, and the following drift
segment starts at t_k + dt.  Between consecutive jumps the segments may
therefore be empty (t_end == t_start, zero accumulated log norm).

The backward trajectory is a pure function of the forward record: it starts
from the forward final state, walks the same grid downward applying adjoint
drift factors, and at each forward jump step applies the adjoint jump
operator.  Alongside its own state the backward walk propagates copies of the
forward segment exit states and post-jump states, recording the reversed
drift log norms needed by the entropy ledger and the fluctuation-theorem
weight.  Backward records are stored on their own elapsed-time axis
(tau = T - t) so that they read like forward records; their jump events are
labeled with the adjoint-partner channel, which is the channel whose operator
the backward process actually applies.

Reproducibility: each trajectory consumes randomness only through a
counter-based Philox stream keyed by (seed, trajectory index), so results do
not depend on how trajectories are scheduled across workers.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .hilbert import EPS_ZERO, NearZeroNorm, adjoint, as_state, norm_sq
from .model import LindbladModel, effective_hamiltonian, matrix_exp

__all__ = [
    "StepTooLarge",
    "JumpEvent",
    "DriftSegment",
    "TrajectoryRecord",
    "StepTables",
    "step_tables",
    "Scratch",
    "philox_stream",
    "sample_initial_state",
    "random_two_level_sampler",
    "basis_state_sampler",
    "forward_simulate",
    "backward_construct",
    "validate_record",
]

P_GUARD = 0.1  # per-step total jump probability ceiling


class StepTooLarge(RuntimeError):
    """Total per-step jump probability hit the weak-jump guard."""

    def __init__(self, step: int, time: float, total_probability: float, dt: float,
                 context: str = ""):
        self.step = step
        self.time = time
        self.total_probability = total_probability
        self.dt = dt
        self.context = context
        msg = (f"total jump probability {total_probability:.4g} >= {P_GUARD} at "
               f"step {step} (t = {time:.6g}, dt = {dt:.6g}); reduce dt or the rates")
        if context:
            msg += f" [{context}]"
        super().__init__(msg)


@dataclass(frozen=True)
class JumpEvent:
    """One detected transition: pre/post states around a single channel jump."""

    time: float
    channel: int
    pre_state: np.ndarray
    post_state: np.ndarray
    step: int


@dataclass(frozen=True)
class DriftSegment:
    """No-jump interval with its accumulated log survival norm.

    ``log_survival = ln ||U_eff(t_end, t_start) entry_state||^2 <= 0``.
    ``kappa`` is the summed per-step drift fluctuation measure (NaN when the
    simulation was run without it).  Segments squeezed between jumps in
    adjacent steps are empty: t_end == t_start.
    """

    t_start: float
    t_end: float
    entry_state: np.ndarray
    exit_state: np.ndarray
    log_survival: float
    kappa: float = float("nan")
    step_start: int = 0
    step_end: int = 0


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One realization: interleaved jumps and drift segments over [0, T].

    Backward records use their own elapsed time (tau = T - t_physical) and
    carry the reversed drift log norms of the matching forward record in
    ``aux_rev_exit_log`` / ``aux_rev_post_log`` (indexed by forward segment).
    """

    direction: str
    dt: float
    horizon: float
    n_steps: int
    rng_seed: tuple | None
    initial_state: np.ndarray
    final_state: np.ndarray
    jumps: tuple
    drifts: tuple
    aux_rev_exit_log: np.ndarray | None = None
    aux_rev_post_log: np.ndarray | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)


# -- precomputed per-grid tables ------------------------------------------------


@dataclass(eq=False)
class StepTables:
    """Per-step propagators and rates for one (model, dt, n_steps) grid."""

    model: LindbladModel
    dt: float
    n_steps: int
    u_ops: np.ndarray       # (n_steps, d, d) midpoint drift factors
    u_dag_ops: np.ndarray   # adjoints, also the backward drift factors
    a_ops: np.ndarray       # (n_ch, d, d)
    a_dag_ops: np.ndarray
    gamma_mid: np.ndarray   # (n_steps, n_ch) rates at step midpoints
    p_coeff: np.ndarray     # gamma_mid * dt
    partner: np.ndarray     # (n_ch,) adjoint partner indices

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def gamma_b_mid(self) -> np.ndarray:
        """Backward rates at step midpoints: the partner's forward rates."""
        return self.gamma_mid[:, self.partner]

    @classmethod
    def build(cls, model: LindbladModel, dt: float, T: float) -> "StepTables":
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        n_steps = int(round(T / dt))
        if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"horizon T={T} is not a whole number of steps of dt={dt}")
        d = model.dim
        n_ch = len(model.channels)
        t_mid = (np.arange(n_steps) + 0.5) * dt

        gamma_mid = np.empty((n_steps, n_ch), dtype=np.float64)
        for c, ch in enumerate(model.channels):
            gamma_mid[:, c] = ch.rate(t_mid)
        if np.any(gamma_mid < 0):
            raise ValueError("negative channel rate encountered on the step grid")

        u_ops = np.empty((n_steps, d, d), dtype=np.complex128)
        for s in range(n_steps):
            u_ops[s] = matrix_exp(-1j * dt * effective_hamiltonian(model, t_mid[s]))
        u_dag_ops = np.ascontiguousarray(u_ops.conj().transpose(0, 2, 1))

        if n_ch:
            a_ops = np.ascontiguousarray(
                np.stack([ch.operator for ch in model.channels]))
            a_dag_ops = np.ascontiguousarray(
                np.stack([adjoint(ch.operator) for ch in model.channels]))
        else:
            a_ops = np.empty((0, d, d), dtype=np.complex128)
            a_dag_ops = np.empty((0, d, d), dtype=np.complex128)

        return cls(model=model, dt=dt, n_steps=n_steps,
                   u_ops=u_ops, u_dag_ops=u_dag_ops,
                   a_ops=a_ops, a_dag_ops=a_dag_ops,
                   gamma_mid=gamma_mid, p_coeff=np.ascontiguousarray(gamma_mid * dt),
                   partner=model.partner_index)


_tables_cache: "weakref.WeakKeyDictionary[LindbladModel, dict]" = weakref.WeakKeyDictionary()


def step_tables(model: LindbladModel, dt: float, T: float) -> StepTables:
    """Cached StepTables for (model, dt, T); models are immutable so this is safe."""
    per_model = _tables_cache.setdefault(model, {})
    key = (float(dt), int(round(T / dt)))
    tables = per_model.get(key)
    if tables is None:
        tables = StepTables.build(model, dt, T)
        per_model[key] = tables
    return tables


@dataclass(eq=False)
class Scratch:
    """Reusable per-worker kernel buffers (one walker's worth)."""

    n_steps: int
    dim: int
    n_ch: int
    jump_steps: np.ndarray = field(init=False)
    jump_channels: np.ndarray = field(init=False)
    jump_pre: np.ndarray = field(init=False)
    jump_post: np.ndarray = field(init=False)
    seg_log: np.ndarray = field(init=False)
    seg_kappa: np.ndarray = field(init=False)
    psi_out: np.ndarray = field(init=False)
    b_pre: np.ndarray = field(init=False)
    b_post: np.ndarray = field(init=False)
    b_seg_log: np.ndarray = field(init=False)
    rev_exit_log: np.ndarray = field(init=False)
    rev_post_log: np.ndarray = field(init=False)

    def __post_init__(self):
        n, d = self.n_steps, self.dim
        self.jump_steps = np.empty(n, dtype=np.int64)
        self.jump_channels = np.empty(n, dtype=np.int64)
        self.jump_pre = np.empty((n, d), dtype=np.complex128)
        self.jump_post = np.empty((n, d), dtype=np.complex128)
        self.seg_log = np.empty(n + 1, dtype=np.float64)
        self.seg_kappa = np.empty(n + 1, dtype=np.float64)
        self.psi_out = np.empty(d, dtype=np.complex128)
        self.b_pre = np.empty((n, d), dtype=np.complex128)
        self.b_post = np.empty((n, d), dtype=np.complex128)
        self.b_seg_log = np.empty(n + 1, dtype=np.float64)
        self.rev_exit_log = np.empty(n + 1, dtype=np.float64)
        self.rev_post_log = np.empty(n + 1, dtype=np.float64)

    @classmethod
    def for_tables(cls, tables: StepTables) -> "Scratch":
        return cls(tables.n_steps, tables.dim, tables.a_ops.shape[0])


# -- randomness ------------------------------------------------------------------

_U64 = (1 << 64) - 1


def philox_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, keyed by (seed, index)."""
    key = np.array([int(seed) & _U64, int(index) & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_initial_state(rng: np.random.Generator) -> np.ndarray:
    """Random two-level state: uniform moduli in [0, 1], uniform relative phase.

    The ground amplitude is real and nonnegative, the excited amplitude
    carries the phase.  This is not uniform on the Bloch sphere: the moduli
    distribution piles weight at the poles of the population ratio.
    """
    while True:
        m_e = rng.random()
        m_g = rng.random()
        phase = 2.0 * np.pi * rng.random()
        if m_e < 1e-8 and m_g < 1e-8:
            continue
        psi = np.array([m_g, m_e * np.exp(1j * phase)], dtype=np.complex128)
        return psi / np.sqrt(norm_sq(psi))


def random_two_level_sampler(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim != 2:
        raise ValueError("random_two_level_sampler needs a two-level model")
    return sample_initial_state(rng)


def basis_state_sampler(index: int):
    """Sampler that always starts from the given basis state (no draws)."""
    def sampler(rng: np.random.Generator, dim: int) -> np.ndarray:
        if not 0 <= index < dim:
            raise ValueError(f"basis index {index} out of range for dim {dim}")
        psi = np.zeros(dim, dtype=np.complex128)
        psi[index] = 1.0
        return psi
    return sampler


# -- simulation -------------------------------------------------------------------

_NO_SAMPLES = np.empty(0, dtype=np.int64)
_NO_SAMPLES_OUT = np.empty((0, 1), dtype=np.complex128)


def _forward_kernel(tables: StepTables, psi0: np.ndarray, uniforms: np.ndarray,
                    want_kappa: bool, scratch: Scratch,
                    sample_steps: np.ndarray | None = None):
    if sample_steps is None:
        samp_in, samp_out = _NO_SAMPLES, _NO_SAMPLES_OUT
    else:
        samp_in = np.ascontiguousarray(sample_steps, dtype=np.int64)
        samp_out = np.empty((len(samp_in), tables.dim), dtype=np.complex128)
    status, nj, err_step, err_val = backend.forward_walk(
        tables.u_ops, tables.u_dag_ops, tables.a_ops, tables.p_coeff,
        uniforms, psi0, samp_in, P_GUARD, EPS_ZERO, want_kappa,
        scratch.psi_out, scratch.jump_steps, scratch.jump_channels,
        scratch.jump_pre, scratch.jump_post, scratch.seg_log, scratch.seg_kappa,
        samp_out)
    if status == backend.STATUS_STEP_TOO_LARGE:
        raise StepTooLarge(int(err_step), err_step * tables.dt, float(err_val),
                           tables.dt, context=tables.model.label)
    if status == backend.STATUS_ZERO_NORM:
        raise NearZeroNorm(f"forward branch annihilated the state at step {err_step} "
                           f"(squared norm {err_val:.3e})")
    return nj, samp_out


def _segment_bounds(jump_steps: np.ndarray, n_steps: int) -> list:
    """Step ranges [b, e) of the n_jumps + 1 drift segments."""
    bounds = []
    start = 0
    for s in jump_steps:
        bounds.append((start, int(s)))
        start = int(s) + 1
    bounds.append((start, n_steps))
    return bounds


def forward_simulate(model: LindbladModel, psi0: np.ndarray, dt: float, T: float,
                     rng: np.random.Generator, *, want_kappa: bool = True,
                     tables: StepTables | None = None, scratch: Scratch | None = None,
                     rng_seed: tuple | None = None) -> TrajectoryRecord:
    """Simulate one forward trajectory from the normalized state psi0.

    Consumes exactly n_steps uniforms from ``rng`` (one per measurement step).
    """
    if tables is None:
        tables = step_tables(model, dt, T)
    psi0 = as_state(psi0)
    if abs(norm_sq(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    if scratch is None:
        scratch = Scratch.for_tables(tables)
    uniforms = rng.random(tables.n_steps)
    nj, _ = _forward_kernel(tables, psi0, uniforms, want_kappa, scratch)

    n_steps, dt = tables.n_steps, tables.dt
    jump_steps = scratch.jump_steps[:nj].copy()
    jump_channels = scratch.jump_channels[:nj].copy()
    jump_pre = scratch.jump_pre[:nj].copy()
    jump_post = scratch.jump_post[:nj].copy()
    seg_log = scratch.seg_log[:nj + 1].copy()
    seg_kappa = scratch.seg_kappa[:nj + 1].copy() if want_kappa \
        else np.full(nj + 1, np.nan)
    final_state = scratch.psi_out.copy()

    jumps = tuple(
        JumpEvent(time=int(s) * dt, channel=int(c), pre_state=jump_pre[k],
                  post_state=jump_post[k], step=int(s))
        for k, (s, c) in enumerate(zip(jump_steps, jump_channels))
    )
    drifts = []
    for k, (b, e) in enumerate(_segment_bounds(jump_steps, n_steps)):
        entry = psi0 if k == 0 else jump_post[k - 1]
        exit_ = jump_pre[k] if k < nj else final_state
        drifts.append(DriftSegment(t_start=b * dt, t_end=e * dt,
                                   entry_state=entry, exit_state=exit_,
                                   log_survival=float(seg_log[k]),
                                   kappa=float(seg_kappa[k]),
                                   step_start=b, step_end=e))
    return TrajectoryRecord(direction="forward", dt=dt, horizon=tables.horizon,
                            n_steps=n_steps, rng_seed=rng_seed,
                            initial_state=psi0.copy(), final_state=final_state,
                            jumps=jumps, drifts=tuple(drifts))


def backward_construct(model: LindbladModel, fwd: TrajectoryRecord, *,
                       tables: StepTables | None = None,
                       scratch: Scratch | None = None) -> TrajectoryRecord:
    """Deterministically build the backward trajectory of a forward record.

    Starts from the forward final state, applies adjoint drift factors in
    reversed grid order and the adjoint jump operator at each forward jump
    step.  Consumes no randomness.  Raises NearZeroNorm when a backward jump
    annihilates the state (the pair should then be discarded).
    """
    if fwd.direction != "forward":
        raise ValueError("backward_construct expects a forward record")
    if tables is None:
        tables = step_tables(model, fwd.dt, fwd.horizon)
    if tables.n_steps != fwd.n_steps:
        raise ValueError("record and tables disagree on the step grid")
    if scratch is None:
        scratch = Scratch.for_tables(tables)

    nj = fwd.n_jumps
    jump_steps = np.array([j.step for j in fwd.jumps], dtype=np.int64)
    jump_channels = np.array([j.channel for j in fwd.jumps], dtype=np.int64)
    jump_pre = (np.stack([j.pre_state for j in fwd.jumps])
                if nj else np.empty((0, tables.dim), dtype=np.complex128))
    jump_post = (np.stack([j.post_state for j in fwd.jumps])
                 if nj else np.empty((0, tables.dim), dtype=np.complex128))

    status, err_jump, err_val = backend.backward_walk(
        tables.u_dag_ops, tables.a_dag_ops, jump_steps, jump_channels,
        np.ascontiguousarray(jump_pre), np.ascontiguousarray(jump_post),
        np.ascontiguousarray(fwd.final_state), EPS_ZERO,
        scratch.psi_out, scratch.b_pre, scratch.b_post, scratch.b_seg_log,
        scratch.rev_exit_log, scratch.rev_post_log)
    if status == backend.STATUS_ZERO_NORM:
        raise NearZeroNorm(
            f"backward jump {err_jump} annihilated the state "
            f"(squared norm {err_val:.3e}); discard the trajectory pair")

    dt, T, n_steps = tables.dt, tables.horizon, tables.n_steps
    b_pre = scratch.b_pre[:nj].copy()
    b_post = scratch.b_post[:nj].copy()
    b_seg_log = scratch.b_seg_log[:nj + 1].copy()
    rev_exit_log = scratch.rev_exit_log[:nj + 1].copy()
    rev_post_log = scratch.rev_post_log[:nj + 1].copy()
    b_final = scratch.psi_out.copy()
    partner = tables.partner

    # Walk order: forward segment nj, jump nj-1, segment nj-1, ..., jump 0,
    # segment 0.  On the tau axis the backward jump at forward step s starts
    # its step at tau = T - (s + 1) dt.
    jumps = []
    drifts = []
    seg_bounds = _segment_bounds(jump_steps, n_steps)
    for pos in range(nj, -1, -1):
        b, e = seg_bounds[pos]
        tau_start = T - e * dt
        tau_end = T - b * dt
        if pos == nj:
            entry = fwd.final_state.copy()
        else:
            entry = b_post[pos]
        exit_ = b_pre[pos - 1] if pos > 0 else b_final
        drifts.append(DriftSegment(t_start=tau_start, t_end=tau_end,
                                   entry_state=entry, exit_state=exit_,
                                   log_survival=float(b_seg_log[pos]),
                                   step_start=n_steps - e, step_end=n_steps - b))
        if pos > 0:
            k = pos - 1
            s = int(jump_steps[k])
            jumps.append(JumpEvent(time=T - (s + 1) * dt,
                                   channel=int(partner[jump_channels[k]]),
                                   pre_state=b_pre[k], post_state=b_post[k],
                                   step=n_steps - 1 - s))
    return TrajectoryRecord(direction="backward", dt=dt, horizon=T,
                            n_steps=n_steps, rng_seed=fwd.rng_seed,
                            initial_state=fwd.final_state.copy(), final_state=b_final,
                            jumps=tuple(jumps), drifts=tuple(drifts),
                            aux_rev_exit_log=rev_exit_log,
                            aux_rev_post_log=rev_post_log)


# -- consistency checks (used by the test suite and the validator) ----------------


def validate_record(record: TrajectoryRecord, model: LindbladModel | None = None) -> None:
    """Assert the structural invariants of a record; raises AssertionError."""
    nj = record.n_jumps
    assert len(record.drifts) == nj + 1, "need n_jumps + 1 drift segments"
    dt = record.dt
    prev_end = 0.0
    for k, seg in enumerate(record.drifts):
        assert seg.t_end >= seg.t_start - 1e-12, "segment runs backwards"
        assert seg.log_survival <= 1e-12, "drift must be contractive"
        assert abs(seg.t_start - prev_end) < 1e-9, "segments must tile the horizon"
        if k < nj:
            jump = record.jumps[k]
            assert abs(jump.time - seg.t_end) < 1e-9, "jump must sit at segment end"
            prev_end = jump.time + dt  # the jump transition consumes one step
            assert np.allclose(seg.exit_state, jump.pre_state, atol=1e-10)
            assert np.allclose(record.drifts[k + 1].entry_state, jump.post_state,
                               atol=1e-10)
    assert abs(record.drifts[-1].t_end - record.horizon) < 1e-9
    assert np.allclose(record.drifts[0].entry_state, record.initial_state, atol=1e-10)
    assert np.allclose(record.drifts[-1].exit_state, record.final_state, atol=1e-10)

    if model is not None:
        tables = step_tables(model, record.dt, record.horizon)
        for jump in record.jumps:
            op = model.channels[jump.channel].operator
            ref = op @ jump.pre_state
            ref = ref / np.sqrt(norm_sq(ref))
            assert np.max(np.abs(ref - jump.post_state)) < 1e-10, \
                "jump post state must be the normalized operator image"
        if record.direction == "forward":
            for seg in record.drifts:
                psi = seg.entry_state.copy()
                acc = 0.0
                for s in range(seg.step_start, seg.step_end):
                    psi = tables.u_ops[s] @ psi
                    w = norm_sq(psi)
                    acc += np.log(w)
                    psi = psi / np.sqrt(w)
                assert np.max(np.abs(psi - seg.exit_state)) < 1e-8
                assert abs(acc - seg.log_survival) < 1e-8
