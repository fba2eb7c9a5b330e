"""Monte-Carlo estimation of the integral-fluctuation-theorem average.

Each forward trajectory and its deterministically constructed backward
partner yield one weight

    W = prod_jumps  R_R[chi_k_fwd] / R_D[chi_k_bwd]
      * prod_drifts ||rev drift on fwd exit state||^2 / ||bwd drift on own state||^2,

where the jump denominator is the backward trajectory's own direct rate
(adjoint operator at the backward pre-jump state).  The backward rate factors
of numerator and denominator cancel, so W is computed rate-free in log space
and stays finite even when a backward schedule passes through zero.  The
sample mean of W estimates <exp(-sigma_f)> = 1 + zeta_f; in the classical
limit of eigenstate-to-eigenstate jumps every factor is exactly one.

Sampling is forward: trajectories are drawn from the forward process and W is
evaluated on the constructed backward partner.  Means use exact compensated
summation over the index-ordered weight list, so results are identical for
any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hilbert import NearZeroNorm, norm_sq
from .model import LindbladModel
from .entropy import ledger_for_trajectory
from .trajectory import (Scratch, StepTables, TrajectoryRecord, backward_construct,
                         forward_simulate, philox_stream, step_tables)

__all__ = [
    "IFTEstimate",
    "TrajOutcome",
    "SweepPoint",
    "trajectory_weight",
    "run_pairs",
    "summarize",
    "estimate",
    "sweep",
    "point_seed",
]

_BATCH = 64
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class IFTEstimate:
    """Summary of one Monte-Carlo run of the weight average."""

    mean: float
    std_error: float
    zeta: float
    n_trajectories: int
    n_discarded: int
    sweep_coordinate: tuple | None = None   # (label, value)
    w_q95: float = float("nan")             # heavy-tail diagnostic
    reliable: bool = True                   # False when discards exceed 1%


@dataclass(frozen=True)
class TrajOutcome:
    """Per-trajectory results collected by the runner."""

    index: int
    discarded: bool
    weight: float
    n_jumps: int
    jump_flux: float
    drift_flux: float
    thermal_total: float
    nonthermal_jump_total: float
    kappa_sum: float
    dump: dict | None = None


def _amps(psi) -> list:
    return [[float(v.real), float(v.imag)] for v in psi]


def _dump_record(idx: int, seed: int, fwd: TrajectoryRecord, weight: float) -> dict:
    return {
        "traj": idx,
        "stream_key": [seed, idx],
        "initial": _amps(fwd.initial_state),
        "final": _amps(fwd.final_state),
        "jumps": [{"t": j.time, "channel": j.channel,
                   "pre": _amps(j.pre_state), "post": _amps(j.post_state)}
                  for j in fwd.jumps],
        "drifts": [{"t_start": s.t_start, "t_end": s.t_end,
                    "log_survival": s.log_survival} for s in fwd.drifts],
        "weight": weight,
    }


@dataclass(frozen=True)
class SweepPoint:
    label: str
    value: float
    estimate: IFTEstimate | None
    error: str | None = None


def trajectory_weight(fwd: TrajectoryRecord, bwd: TrajectoryRecord,
                      model: LindbladModel) -> float:
    """Weight of one trajectory pair; bwd must come from backward_construct."""
    nj = fwd.n_jumps
    if bwd.aux_rev_exit_log is None or bwd.n_jumps != nj:
        raise ValueError("bwd must be the backward construction of fwd")
    lw = 0.0
    for k, jump in enumerate(fwd.jumps):
        a_op = model.channels[jump.channel].operator
        a_chi = a_op @ jump.pre_state
        m1 = norm_sq(a_chi)                       # <Lambda> = ||A chi_f||^2
        m2 = norm_sq(a_op.conj().T @ a_chi)       # <Lambda^2>
        chi_b = bwd.jumps[nj - 1 - k].pre_state
        nb = norm_sq(a_op.conj().T @ chi_b)       # backward direct norm
        # R_R[chi_f] / R_D[chi_b] with the common backward rate cancelled
        lw += math.log(m2) - math.log(m1) - math.log(nb)
    for k in range(nj + 1):
        # reversed drift norm on the forward exit state over the backward
        # trajectory's own survival norm (walk position nj - k)
        lw += float(bwd.aux_rev_exit_log[k]) - bwd.drifts[nj - k].log_survival
    return math.exp(lw)


def _run_indices(model: LindbladModel, tables: StepTables, indices, sampler,
                 seed: int, want_kappa: bool, collect_dump: bool) -> list:
    scratch = Scratch.for_tables(tables)
    out = []
    for idx in indices:
        rng = philox_stream(seed, idx)
        psi0 = sampler(rng, model.dim)
        fwd = forward_simulate(model, psi0, tables.dt, tables.horizon, rng,
                               want_kappa=want_kappa, tables=tables,
                               scratch=scratch, rng_seed=(seed, idx))
        try:
            bwd = backward_construct(model, fwd, tables=tables, scratch=scratch)
        except NearZeroNorm:
            out.append(TrajOutcome(index=idx, discarded=True, weight=float("nan"),
                                   n_jumps=fwd.n_jumps, jump_flux=float("nan"),
                                   drift_flux=float("nan"), thermal_total=float("nan"),
                                   nonthermal_jump_total=float("nan"),
                                   kappa_sum=float("nan"),
                                   dump=_dump_record(idx, seed, fwd, float("nan"))
                                   if collect_dump else None))
            continue
        ledger = ledger_for_trajectory(fwd, bwd, model)
        w = trajectory_weight(fwd, bwd, model)
        out.append(TrajOutcome(index=idx, discarded=False, weight=w,
                               n_jumps=fwd.n_jumps, jump_flux=ledger.jump_flux,
                               drift_flux=ledger.drift_flux,
                               thermal_total=ledger.thermal_total,
                               nonthermal_jump_total=ledger.nonthermal_jump_total,
                               kappa_sum=ledger.kappa_sum,
                               dump=_dump_record(idx, seed, fwd, w)
                               if collect_dump else None))
    return out


def run_pairs(model: LindbladModel, n: int, dt: float, T: float, initial_sampler,
              master_seed: int, *, threads: int = 1, want_kappa: bool = False,
              collect_dump: bool = False) -> list:
    """Simulate n trajectory pairs; outcomes ordered by trajectory index.

    The per-trajectory random streams are keyed by (master_seed, index), so
    the outcome list does not depend on ``threads``.
    """
    if n < 1:
        raise ValueError(f"need at least one trajectory, got n={n}")
    tables = step_tables(model, dt, T)
    seed = int(master_seed) & _U64
    batches = [range(lo, min(lo + _BATCH, n)) for lo in range(0, n, _BATCH)]

    results: list = [None] * len(batches)
    errors: list = [None] * len(batches)

    def job(bi: int):
        try:
            results[bi] = _run_indices(model, tables, batches[bi], initial_sampler,
                                       seed, want_kappa, collect_dump)
        except Exception as exc:  # first trajectory of the batch to fail
            errors[bi] = exc

    if threads <= 1 or len(batches) == 1:
        for bi in range(len(batches)):
            job(bi)
            if errors[bi] is not None:
                raise errors[bi]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, range(len(batches))))
        for exc in errors:
            if exc is not None:
                raise exc
    outcomes = [o for chunk in results for o in chunk]
    return outcomes


def summarize(outcomes, coordinate: tuple | None = None) -> IFTEstimate:
    """Mean, standard error and diagnostics from index-ordered outcomes."""
    weights = [o.weight for o in outcomes if not o.discarded]
    n_disc = sum(1 for o in outcomes if o.discarded)
    if not weights:
        raise RuntimeError("all trajectory pairs were discarded; nothing to average")
    n = len(weights)
    mean = math.fsum(weights) / n
    if n > 1:
        var = math.fsum((w - mean) ** 2 for w in weights) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = 0.0
    q95 = float(np.quantile(np.asarray(weights), 0.95))
    return IFTEstimate(mean=mean, std_error=se, zeta=mean - 1.0,
                       n_trajectories=n, n_discarded=n_disc,
                       sweep_coordinate=coordinate, w_q95=q95,
                       reliable=(n_disc <= 0.01 * len(outcomes)))


def estimate(model: LindbladModel, n: int, dt: float, T: float, initial_sampler,
             master_seed: int, *, threads: int = 1,
             coordinate: tuple | None = None) -> IFTEstimate:
    """Average the pair weight over n forward trajectories."""
    outcomes = run_pairs(model, n, dt, T, initial_sampler, master_seed,
                         threads=threads)
    return summarize(outcomes, coordinate=coordinate)


def point_seed(master_seed: int, point_index: int) -> int:
    """Stable per-point seed for sweeps, derived from (master_seed, index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & _U64,
                                spawn_key=(int(point_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep(model_family, coordinates, n: int, dt: float, T: float, seed: int, *,
          initial_sampler, label: str = "k", threads: int = 1) -> list:
    """One estimate per coordinate; failing points carry their error message.

    ``model_family(coordinate)`` must return the model for that point.  Each
    point runs on its own derived seed, so inserting or removing points does
    not perturb the others.
    """
    coordinates = list(coordinates)
    if not coordinates:
        raise ValueError("sweep needs at least one coordinate")
    points = []
    for i, coord in enumerate(coordinates):
        pseed = point_seed(seed, i)
        try:
            model = model_family(coord)
            est = estimate(model, n, dt, T, initial_sampler, pseed,
                           threads=threads, coordinate=(label, float(coord)))
            points.append(SweepPoint(label=label, value=float(coord), estimate=est))
        except Exception as exc:
            points.append(SweepPoint(label=label, value=float(coord),
                                     estimate=None, error=str(exc)))
    return points
