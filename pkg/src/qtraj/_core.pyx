# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
# cython: cdivision=True
# cython: initializedcheck=False
"""Compiled stepping kernels.

Fixed-step jump/no-jump walks over precomputed per-step propagators and rate
tables.  The pure-Python mirror in ``_pycore`` implements the identical
floating-point operation order; both backends must agree value-for-value.
"""

from libc.math cimport log, sqrt

import numpy as np

cdef int _OK = 0
cdef int _STEP_TOO_LARGE = 1
cdef int _ZERO_NORM = 2

STATUS_OK = _OK
STATUS_STEP_TOO_LARGE = _STEP_TOO_LARGE
STATUS_ZERO_NORM = _ZERO_NORM

ctypedef double complex cplx


cdef inline void _matvec(const cplx[:, :, ::1] ops, Py_ssize_t k,
                         const cplx* x, cplx* y, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef cplx acc
    for i in range(d):
        acc = 0
        for j in range(d):
            acc = acc + ops[k, i, j] * x[j]
        y[i] = acc


cdef inline double _norm_sq(const cplx* x, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(d):
        s = s + (x[i].real * x[i].real + x[i].imag * x[i].imag)
    return s


cdef inline void _scale_into(const cplx* y, double inv, cplx* dst,
                             Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(d):
        dst[i] = y[i] * inv


def forward_walk(const cplx[:, :, ::1] u_ops,
                 const cplx[:, :, ::1] u_dag_ops,
                 const cplx[:, :, ::1] a_ops,
                 const double[:, ::1] p_coeff,
                 const double[::1] uniforms,
                 const cplx[::1] psi0,
                 const long long[::1] sample_steps,
                 double p_guard,
                 double eps_zero,
                 bint want_kappa,
                 cplx[::1] psi_out,
                 long long[::1] jump_steps_out,
                 long long[::1] jump_channels_out,
                 cplx[:, ::1] jump_pre_out,
                 cplx[:, ::1] jump_post_out,
                 double[::1] seg_log_out,
                 double[::1] seg_kappa_out,
                 cplx[:, ::1] samples_out):
    """One forward walk; returns (status, n_jumps, err_step, err_value).

    Each step is either a jump through one channel (consuming the step) or a
    drift factor with renormalization.  Per segment the kernel accumulates the
    log survival norm and, optionally, the drift fluctuation measure kappa.
    """
    cdef Py_ssize_t n_steps = u_ops.shape[0]
    cdef Py_ssize_t d = u_ops.shape[1]
    cdef Py_ssize_t n_ch = a_ops.shape[0]
    cdef Py_ssize_t n_samp = sample_steps.shape[0]

    psi_buf = np.empty(d, dtype=np.complex128)
    y_buf = np.empty(d, dtype=np.complex128)
    z_buf = np.empty(d, dtype=np.complex128)
    p_buf = np.empty(n_ch, dtype=np.float64)
    cdef cplx[::1] psi_mv = psi_buf
    cdef cplx[::1] y_mv = y_buf
    cdef cplx[::1] z_mv = z_buf
    cdef double[::1] p_mv = p_buf
    cdef cplx* psi = &psi_mv[0]
    cdef cplx* y = &y_mv[0]
    cdef cplx* z = &z_mv[0]
    cdef double* pch = &p_mv[0]

    cdef Py_ssize_t s, c, i, pick
    cdef Py_ssize_t nj = 0, seg = 0, si = 0
    cdef double tot, acc, u, w, v, inv
    cdef int status = _OK
    cdef Py_ssize_t err_step = -1
    cdef double err_val = 0.0

    for i in range(d):
        psi[i] = psi0[i]
    seg_log_out[0] = 0.0
    seg_kappa_out[0] = 0.0

    with nogil:
        for s in range(n_steps):
            if si < n_samp and sample_steps[si] == s:
                for i in range(d):
                    samples_out[si, i] = psi[i]
                si += 1
            tot = 0.0
            for c in range(n_ch):
                if p_coeff[s, c] > 0.0:
                    _matvec(a_ops, c, psi, y, d)
                    pch[c] = p_coeff[s, c] * _norm_sq(y, d)
                else:
                    pch[c] = 0.0
                tot = tot + pch[c]
            if tot >= p_guard:
                status = _STEP_TOO_LARGE
                err_step = s
                err_val = tot
                break
            u = uniforms[s]
            if u < tot:
                # jump consumes the step; select the channel by cumulative threshold
                acc = 0.0
                pick = -1
                for c in range(n_ch):
                    acc = acc + pch[c]
                    if u < acc:
                        pick = c
                        break
                if pick < 0:  # unreachable: acc reproduces tot bit-for-bit
                    pick = n_ch - 1
                _matvec(a_ops, pick, psi, y, d)
                w = _norm_sq(y, d)
                if w <= eps_zero:
                    status = _ZERO_NORM
                    err_step = s
                    err_val = w
                    break
                for i in range(d):
                    jump_pre_out[nj, i] = psi[i]
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, psi, d)
                for i in range(d):
                    jump_post_out[nj, i] = psi[i]
                jump_steps_out[nj] = s
                jump_channels_out[nj] = pick
                nj += 1
                seg += 1
                seg_log_out[seg] = 0.0
                seg_kappa_out[seg] = 0.0
            else:
                _matvec(u_ops, s, psi, y, d)
                w = _norm_sq(y, d)
                if w <= eps_zero:
                    status = _ZERO_NORM
                    err_step = s
                    err_val = w
                    break
                if want_kappa:
                    _matvec(u_dag_ops, s, y, z, d)
                    v = _norm_sq(z, d)
                    seg_kappa_out[seg] = seg_kappa_out[seg] + (w * w - v) / (w * w)
                seg_log_out[seg] = seg_log_out[seg] + log(w)
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, psi, d)

    if status == _OK and si < n_samp and sample_steps[si] == n_steps:
        for i in range(d):
            samples_out[si, i] = psi[i]
        si += 1
    for i in range(d):
        psi_out[i] = psi[i]
    return status, nj, err_step, err_val


def backward_walk(const cplx[:, :, ::1] u_dag_ops,
                  const cplx[:, :, ::1] a_dag_ops,
                  const long long[::1] jump_steps,
                  const long long[::1] jump_channels,
                  const cplx[:, ::1] jump_pre,
                  const cplx[:, ::1] jump_post,
                  const cplx[::1] psi_final,
                  double eps_zero,
                  cplx[::1] psi_out,
                  cplx[:, ::1] b_pre_out,
                  cplx[:, ::1] b_post_out,
                  double[::1] b_seg_log_out,
                  double[::1] rev_exit_log_out,
                  double[::1] rev_post_log_out):
    """Deterministic backward walk; returns (status, err_jump, err_value).

    Walks the step grid down from the horizon.  At drift steps it applies the
    adjoint step factor to three vectors: the backward state itself, a copy of
    the forward segment exit state, and a copy of the forward post-jump state,
    accumulating one log norm per segment for each stream.  At forward jump
    steps it applies the adjoint jump operator to the backward state.
    """
    cdef Py_ssize_t n_steps = u_dag_ops.shape[0]
    cdef Py_ssize_t d = u_dag_ops.shape[1]
    cdef Py_ssize_t nj = jump_steps.shape[0]

    vb_buf = np.empty(d, dtype=np.complex128)
    vex_buf = np.empty(d, dtype=np.complex128)
    vpo_buf = np.empty(d, dtype=np.complex128)
    y_buf = np.empty(d, dtype=np.complex128)
    cdef cplx[::1] vb_mv = vb_buf
    cdef cplx[::1] vex_mv = vex_buf
    cdef cplx[::1] vpo_mv = vpo_buf
    cdef cplx[::1] y_mv = y_buf
    cdef cplx* vb = &vb_mv[0]
    cdef cplx* vex = &vex_mv[0]
    cdef cplx* vpo = &vpo_mv[0]
    cdef cplx* y = &y_mv[0]

    cdef Py_ssize_t s, i
    cdef Py_ssize_t seg = nj
    cdef Py_ssize_t jj = nj - 1
    cdef double w, inv
    cdef int status = _OK
    cdef Py_ssize_t err_jump = -1
    cdef double err_val = 0.0

    for i in range(d):
        vb[i] = psi_final[i]
        vex[i] = psi_final[i]
        vpo[i] = psi_final[i]
    b_seg_log_out[seg] = 0.0
    rev_exit_log_out[seg] = 0.0
    rev_post_log_out[seg] = 0.0

    with nogil:
        for s in range(n_steps - 1, -1, -1):
            if jj >= 0 and jump_steps[jj] == s:
                for i in range(d):
                    b_pre_out[jj, i] = vb[i]
                _matvec(a_dag_ops, <Py_ssize_t>jump_channels[jj], vb, y, d)
                w = _norm_sq(y, d)
                if w <= eps_zero:
                    status = _ZERO_NORM
                    err_jump = jj
                    err_val = w
                    break
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, vb, d)
                for i in range(d):
                    b_post_out[jj, i] = vb[i]
                seg = jj
                b_seg_log_out[seg] = 0.0
                rev_exit_log_out[seg] = 0.0
                rev_post_log_out[seg] = 0.0
                for i in range(d):
                    vex[i] = jump_pre[jj, i]
                    vpo[i] = jump_post[jj, i]
                jj -= 1
            else:
                _matvec(u_dag_ops, s, vb, y, d)
                w = _norm_sq(y, d)
                if w <= eps_zero:
                    status = _ZERO_NORM
                    err_jump = jj
                    err_val = w
                    break
                b_seg_log_out[seg] = b_seg_log_out[seg] + log(w)
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, vb, d)

                _matvec(u_dag_ops, s, vex, y, d)
                w = _norm_sq(y, d)
                rev_exit_log_out[seg] = rev_exit_log_out[seg] + log(w)
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, vex, d)

                _matvec(u_dag_ops, s, vpo, y, d)
                w = _norm_sq(y, d)
                rev_post_log_out[seg] = rev_post_log_out[seg] + log(w)
                inv = 1.0 / sqrt(w)
                _scale_into(y, inv, vpo, d)

    for i in range(d):
        psi_out[i] = vb[i]
    return status, err_jump, err_val
