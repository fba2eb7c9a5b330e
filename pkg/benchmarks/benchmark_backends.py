#!/usr/bin/env python3
"""Benchmark the compiled stepping kernels against the pure-Python fallback.

Runs identical trajectory pairs (same Philox streams) through both backends
and reports steps/second plus the speedup.  The two backends implement the
same floating-point operation order, so the outputs are also compared.

Usage: python benchmarks/benchmark_backends.py [--n 100] [--steps 1250]
"""

import argparse
import math
import time

import numpy as np

from qtraj import _pycore
from qtraj.hilbert import EPS_ZERO
from qtraj.model import build_two_level_direct
from qtraj.trajectory import (P_GUARD, Scratch, philox_stream,
                              random_two_level_sampler, step_tables)

try:
    from qtraj import _core
except ImportError:
    _core = None


def run_backend(kernel, tables, n, seed):
    scratch = Scratch.for_tables(tables)
    samp_in = np.empty(0, dtype=np.int64)
    samp_out = np.empty((0, tables.dim), dtype=np.complex128)
    checksum = 0.0
    start = time.perf_counter()
    for idx in range(n):
        rng = philox_stream(seed, idx)
        psi0 = random_two_level_sampler(rng, tables.dim)
        uniforms = rng.random(tables.n_steps)
        status, nj, _, _ = kernel.forward_walk(
            tables.u_ops, tables.u_dag_ops, tables.a_ops, tables.p_coeff,
            uniforms, psi0, samp_in, P_GUARD, EPS_ZERO, True,
            scratch.psi_out, scratch.jump_steps, scratch.jump_channels,
            scratch.jump_pre, scratch.jump_post, scratch.seg_log,
            scratch.seg_kappa, samp_out)
        assert status == 0
        kernel.backward_walk(
            tables.u_dag_ops, tables.a_dag_ops,
            scratch.jump_steps[:nj].copy(), scratch.jump_channels[:nj].copy(),
            scratch.jump_pre[:nj].copy(), scratch.jump_post[:nj].copy(),
            scratch.psi_out.copy(), EPS_ZERO,
            scratch.psi_out, scratch.b_pre, scratch.b_post, scratch.b_seg_log,
            scratch.rev_exit_log, scratch.rev_post_log)
        checksum += float(np.sum(scratch.b_seg_log[:nj + 1])) + nj
    elapsed = time.perf_counter() - start
    return elapsed, checksum


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100, help="trajectory pairs")
    parser.add_argument("--steps", type=int, default=1250, help="grid steps")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    model = build_two_level_direct(omega0=8e-3, tau=1 / 2.7e-3, g1=4.8e-3,
                                   tau1=1 / 1.3e-3, g2=8e-4, tau2=1 / 1e-3)
    tables = step_tables(model, 1.0, float(args.steps))
    total_steps = 2 * args.n * args.steps  # forward + backward walks

    results = {}
    for name, kernel in (("python", _pycore),) + (
            (("compiled", _core),) if _core is not None else ()):
        elapsed, checksum = run_backend(kernel, tables, args.n, args.seed)
        results[name] = (elapsed, checksum)
        print(f"{name:9s} {elapsed:8.3f} s   {total_steps / elapsed:12.0f} steps/s")

    if "compiled" in results:
        py_t, py_sum = results["python"]
        c_t, c_sum = results["compiled"]
        agree = math.isclose(py_sum, c_sum, rel_tol=0, abs_tol=0) or py_sum == c_sum
        print(f"speedup   {py_t / c_t:8.1f} x   outputs identical: {agree}")
    else:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
