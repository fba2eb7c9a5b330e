"""Ensemble-level cross-validation.

Integrates the master equation directly on density matrices with classical
RK4 on the same step grid the trajectories use, and compares against the
trajectory ensemble average E[|psi><psi|].  Agreement of the two, for every
unraveling of the same generator, is the consistency contract between the
stochastic and the ensemble picture.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .hilbert import as_operator, norm_sq
from .model import LindbladModel, Schedule, lindblad_generator
from .trajectory import (Scratch, TrajectoryRecord, _forward_kernel, philox_stream,
                         step_tables)

__all__ = [
    "check_density_matrix",
    "integrate_master_equation",
    "ensemble_average",
    "trajectory_ensemble",
    "trace_distance",
    "invariant_suite",
]

_TRACE_TOL = 1e-8
_HERM_TOL = 1e-8
_EIG_FLOOR = -1e-8


def check_density_matrix(rho: np.ndarray, where: str = "density matrix") -> None:
    """Hermitian within 1e-10, unit trace within 1e-10, eigenvalues >= -1e-8."""
    rho = as_operator(rho)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError(f"{where}: not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10 or abs(np.trace(rho).imag) > 1e-10:
        raise ValueError(f"{where}: trace is not 1")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < _EIG_FLOOR:
        raise ValueError(f"{where}: negative eigenvalue beyond tolerance")


def integrate_master_equation(model: LindbladModel, rho0: np.ndarray, dt: float,
                              T: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 integration of the ensemble generator; returns (times, rhos).

    ``rhos[k]`` is the solution at ``times[k] = k * dt``.  Trace and
    Hermiticity are monitored, positivity is monitored but not enforced;
    drifting past tolerance aborts with a diagnostic.
    """
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"horizon T={T} is not a whole number of steps of dt={dt}")
    rho = np.array(as_operator(rho0), dtype=np.complex128)
    check_density_matrix(rho, "initial state")

    rhos = np.empty((n_steps + 1, model.dim, model.dim), dtype=np.complex128)
    rhos[0] = rho
    for s in range(n_steps):
        t = s * dt
        k1 = lindblad_generator(model, t, rho)
        k2 = lindblad_generator(model, t + 0.5 * dt, rho + 0.5 * dt * k1)
        k3 = lindblad_generator(model, t + 0.5 * dt, rho + 0.5 * dt * k2)
        k4 = lindblad_generator(model, t + dt, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rhos[s + 1] = rho
        if (s + 1) % 128 == 0 or s + 1 == n_steps:
            tr = np.trace(rho)
            if abs(tr.real - 1.0) > _TRACE_TOL or abs(tr.imag) > _TRACE_TOL:
                raise RuntimeError(f"trace drifted to {tr} at step {s + 1}")
            if np.max(np.abs(rho - rho.conj().T)) > _HERM_TOL:
                raise RuntimeError(f"Hermiticity lost at step {s + 1}")
            if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < _EIG_FLOOR:
                raise RuntimeError(f"positivity lost at step {s + 1}")
    return np.arange(n_steps + 1) * dt, rhos


def _state_at_steps(record: TrajectoryRecord, steps: np.ndarray,
                    tables) -> np.ndarray:
    """Normalized states of one record at the requested grid steps.

    Re-propagates segment entry states with the same per-step renormalization
    the simulation used.  The state at a jump's own step is the pre-jump
    state (the snapshot taken before that measurement resolves).
    """
    out = np.empty((len(steps), tables.dim), dtype=np.complex128)
    order = np.argsort(steps, kind="stable")
    segs = record.drifts
    si = 0
    for pos in order:
        target = int(steps[pos])
        if target >= record.n_steps:
            out[pos] = record.final_state
            continue
        while si + 1 < len(segs) and target > segs[si].step_end:
            si += 1
        # a jump's own step belongs to the segment ending there (pre-jump snapshot)
        seg = segs[si]
        psi = seg.entry_state.copy()
        for s in range(seg.step_start, target):
            psi = tables.u_ops[s] @ psi
            psi = psi / np.sqrt(norm_sq(psi))
        out[pos] = psi
    return out


def ensemble_average(trajectories, sample_times, model: LindbladModel) -> np.ndarray:
    """Average projector |psi><psi| over records at the given grid times."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    dt = trajectories[0].dt
    horizon = trajectories[0].horizon
    for rec in trajectories:
        if abs(rec.dt - dt) > 1e-12 or abs(rec.horizon - horizon) > 1e-9:
            raise ValueError("mismatched grids: records disagree on dt or horizon")
    steps = np.asarray(np.round(np.asarray(sample_times, dtype=float) / dt), dtype=np.int64)
    if np.max(np.abs(steps * dt - np.asarray(sample_times, dtype=float))) > 1e-9:
        raise ValueError("mismatched grids: sample times must be multiples of dt")
    tables = step_tables(model, dt, horizon)

    dim = model.dim
    acc = np.zeros((len(steps), dim, dim), dtype=np.complex128)
    for rec in trajectories:
        states = _state_at_steps(rec, steps, tables)
        acc += np.einsum("ti,tj->tij", states, states.conj())
    return acc / len(trajectories)


def trajectory_ensemble(model: LindbladModel, n: int, dt: float, T: float,
                        initial_sampler, master_seed: int, sample_steps, *,
                        threads: int = 1) -> np.ndarray:
    """Ensemble average at the given grid steps, straight from the kernel.

    Equivalent to averaging records through ``ensemble_average`` but without
    materializing them.  Batch sums are merged in a fixed order, so the
    result is independent of the worker count.
    """
    tables = step_tables(model, dt, T)
    sample_steps = np.ascontiguousarray(sample_steps, dtype=np.int64)
    seed = int(master_seed) & ((1 << 64) - 1)
    dim = model.dim
    batch = 64
    batches = [range(lo, min(lo + batch, n)) for lo in range(0, n, batch)]
    sums: list = [None] * len(batches)

    def job(bi: int):
        scratch = Scratch.for_tables(tables)
        acc = np.zeros((len(sample_steps), dim, dim), dtype=np.complex128)
        for idx in batches[bi]:
            rng = philox_stream(seed, idx)
            psi0 = initial_sampler(rng, dim)
            uniforms = rng.random(tables.n_steps)
            _, samples = _forward_kernel(tables, psi0, uniforms, False, scratch,
                                         sample_steps)
            acc += np.einsum("ti,tj->tij", samples, samples.conj())
        sums[bi] = acc

    if threads <= 1 or len(batches) == 1:
        for bi in range(len(batches)):
            job(bi)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, range(len(batches))))
    total = np.zeros((len(sample_steps), dim, dim), dtype=np.complex128)
    for acc in sums:
        total += acc
    return total / n


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the sum of singular values of (a - b); in [0, 1] for states."""
    a = as_operator(a)
    b = as_operator(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.sum(np.linalg.svd(a - b, compute_uv=False)))


# -- invariant suite (shared by `qtraj validate` and the acceptance tests) ---------


def _random_channel(rng: np.random.Generator, dim: int):
    from .model import Channel
    op = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    gamma = float(rng.uniform(0.1, 3.0))
    gamma_b = float(rng.uniform(0.1, 3.0))
    return Channel(op, Schedule.constant(gamma), Schedule.constant(gamma_b),
                   adjoint_partner=0)


def decomposition_identity_check(n_pairs: int = 10_000, seed: int = 7,
                                 tol: float = 1e-10) -> tuple[bool, str]:
    """thermal + nonthermal == -ln(R_D/R_R) and the eta cross-identity."""
    from .entropy import direct_rate, eta, reversed_rate
    rng = np.random.default_rng(seed)
    worst_split = 0.0
    worst_eta = 0.0
    for _ in range(n_pairs):
        dim = int(rng.integers(2, 5))
        ch = _random_channel(rng, dim)
        chi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        chi = chi / math.sqrt(norm_sq(chi))
        if norm_sq(ch.operator @ chi) < 1e-6:
            continue
        r_d = direct_rate(ch, 0.0, chi)
        r_r = reversed_rate(ch, 0.0, chi)
        e = eta(ch, chi)
        gamma = float(ch.rate(0.0))
        gamma_b = float(ch.backward_rate(0.0))
        split = math.log(gamma_b / gamma) + math.log(1.0 - e) - (-math.log(r_d / r_r))
        cross = e - (1.0 - gamma * r_r / (gamma_b * r_d))
        worst_split = max(worst_split, abs(split))
        worst_eta = max(worst_eta, abs(cross))
    ok = worst_split <= tol and worst_eta <= tol
    return ok, (f"decomposition split max |err| = {worst_split:.3e}, "
                f"eta cross-identity max |err| = {worst_eta:.3e} over {n_pairs} pairs")


def expansion_order_check(dts=(1e-2, 5e-3, 2.5e-3), gamma: float = 1.0,
                          lo: float = 6.0, hi: float = 10.0) -> tuple[bool, str]:
    """Error of the short-time Var(U^dag U) expansion shrinks ~8x per dt halving."""
    from .entropy import appendix_var1_expansion
    from .hilbert import SIGMA_MINUS, SIGMA_PLUS
    from .model import Channel, LindbladModel
    channels = (
        Channel(SIGMA_MINUS, Schedule.constant(gamma), Schedule.constant(0.0), 1),
        Channel(SIGMA_PLUS, Schedule.constant(0.0), Schedule.constant(gamma), 0),
    )
    model = LindbladModel(2, (), channels)
    psi = np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0)
    errs = []
    for dt in dts:
        x = gamma * dt
        exact = 0.5 * (1.0 + math.exp(-2.0 * x)) - 0.25 * (1.0 + math.exp(-x)) ** 2
        approx = appendix_var1_expansion(model, 0.0, dt, psi)
        errs.append(abs(exact - approx))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    leading = appendix_var1_expansion(model, 0.0, dts[-1], psi)
    rel = abs(leading - (gamma * dts[-1]) ** 2 / 4.0) / ((gamma * dts[-1]) ** 2 / 4.0)
    ok = all(lo <= r <= hi for r in ratios) and rel <= 0.02
    return ok, (f"error ratios per halving: {[f'{r:.2f}' for r in ratios]}, "
                f"leading term off by {rel:.2e} from gamma^2 dt^2 / 4")


def eigenstate_weight_check(n_traj: int = 100, seed: int = 11,
                            tol: float = 1e-9) -> tuple[bool, str]:
    """Eigenstate-jump trajectories must carry weight exactly one."""
    from .estimator import run_pairs
    from .model import build_eigenstate_jump_model
    from .trajectory import basis_state_sampler
    model = build_eigenstate_jump_model(
        [0.0, 1.0e-3, 2.35e-3],
        {(0, 1): 1.6e-3, (0, 2): 1.1e-3, (1, 2): 1.4e-3},
        {(0, 1): 9.0e-4, (0, 2): 4.0e-4, (1, 2): 6.0e-4})
    outcomes = run_pairs(model, n_traj, 1.0, 1250.0, basis_state_sampler(1), seed)
    worst = max(abs(o.weight - 1.0) for o in outcomes if not o.discarded)
    return worst <= tol, f"max |W - 1| = {worst:.3e} over {n_traj} trajectories"


def invariant_suite(seed: int = 1234) -> dict:
    """Run the three structural checks; returns name -> (passed, detail)."""
    return {
        "decomposition_identity": decomposition_identity_check(2000, seed),
        "expansion_order": expansion_order_check(),
        "eigenstate_weight_one": eigenstate_weight_check(100, seed),
    }
