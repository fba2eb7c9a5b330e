"""Pure-Python stepping kernels.

Drop-in replacements for the compiled kernels in ``_core``, looping over
Python complex scalars in the identical floating-point operation order so
both backends produce the same values.  Much slower; useful where the
extension is not built and as the reference in the backend parity tests.
"""

from __future__ import annotations

from math import log, sqrt

STATUS_OK = 0
STATUS_STEP_TOO_LARGE = 1
STATUS_ZERO_NORM = 2


def _rows(matrix):
    return [[complex(v) for v in row] for row in matrix]


def _op_table(ops):
    return [_rows(op) for op in ops]


def _matvec(op, x, d):
    y = [0j] * d
    for i in range(d):
        acc = 0j
        row = op[i]
        for j in range(d):
            acc = acc + row[j] * x[j]
        y[i] = acc
    return y


def _norm_sq(x):
    s = 0.0
    for v in x:
        s = s + (v.real * v.real + v.imag * v.imag)
    return s


def _scaled(y, inv, d):
    return [y[i] * inv for i in range(d)]


def forward_walk(u_ops, u_dag_ops, a_ops, p_coeff, uniforms, psi0, sample_steps,
                 p_guard, eps_zero, want_kappa, psi_out,
                 jump_steps_out, jump_channels_out, jump_pre_out, jump_post_out,
                 seg_log_out, seg_kappa_out, samples_out):
    n_steps, d = u_ops.shape[0], u_ops.shape[1]
    n_ch = a_ops.shape[0]
    n_samp = len(sample_steps)

    u_tab = _op_table(u_ops)
    udag_tab = _op_table(u_dag_ops)
    a_tab = _op_table(a_ops)
    p_tab = [[float(v) for v in row] for row in p_coeff]
    unif = [float(v) for v in uniforms]

    psi = [complex(v) for v in psi0]
    pch = [0.0] * n_ch
    nj = 0
    seg = 0
    si = 0
    status = STATUS_OK
    err_step = -1
    err_val = 0.0
    seg_log_out[0] = 0.0
    seg_kappa_out[0] = 0.0

    for s in range(n_steps):
        if si < n_samp and sample_steps[si] == s:
            for i in range(d):
                samples_out[si, i] = psi[i]
            si += 1
        tot = 0.0
        prow = p_tab[s]
        for c in range(n_ch):
            if prow[c] > 0.0:
                y = _matvec(a_tab[c], psi, d)
                pch[c] = prow[c] * _norm_sq(y)
            else:
                pch[c] = 0.0
            tot = tot + pch[c]
        if tot >= p_guard:
            status = STATUS_STEP_TOO_LARGE
            err_step = s
            err_val = tot
            break
        u = unif[s]
        if u < tot:
            acc = 0.0
            pick = -1
            for c in range(n_ch):
                acc = acc + pch[c]
                if u < acc:
                    pick = c
                    break
            if pick < 0:
                pick = n_ch - 1
            y = _matvec(a_tab[pick], psi, d)
            w = _norm_sq(y)
            if w <= eps_zero:
                status = STATUS_ZERO_NORM
                err_step = s
                err_val = w
                break
            for i in range(d):
                jump_pre_out[nj, i] = psi[i]
            psi = _scaled(y, 1.0 / sqrt(w), d)
            for i in range(d):
                jump_post_out[nj, i] = psi[i]
            jump_steps_out[nj] = s
            jump_channels_out[nj] = pick
            nj += 1
            seg += 1
            seg_log_out[seg] = 0.0
            seg_kappa_out[seg] = 0.0
        else:
            y = _matvec(u_tab[s], psi, d)
            w = _norm_sq(y)
            if w <= eps_zero:
                status = STATUS_ZERO_NORM
                err_step = s
                err_val = w
                break
            if want_kappa:
                z = _matvec(udag_tab[s], y, d)
                v = _norm_sq(z)
                seg_kappa_out[seg] = seg_kappa_out[seg] + (w * w - v) / (w * w)
            seg_log_out[seg] = seg_log_out[seg] + log(w)
            psi = _scaled(y, 1.0 / sqrt(w), d)

    if status == STATUS_OK and si < n_samp and sample_steps[si] == n_steps:
        for i in range(d):
            samples_out[si, i] = psi[i]
        si += 1
    for i in range(d):
        psi_out[i] = psi[i]
    return status, nj, err_step, err_val


def backward_walk(u_dag_ops, a_dag_ops, jump_steps, jump_channels, jump_pre,
                  jump_post, psi_final, eps_zero, psi_out,
                  b_pre_out, b_post_out, b_seg_log_out,
                  rev_exit_log_out, rev_post_log_out):
    n_steps, d = u_dag_ops.shape[0], u_dag_ops.shape[1]
    nj = len(jump_steps)

    udag_tab = _op_table(u_dag_ops)
    adag_tab = _op_table(a_dag_ops)
    steps = [int(v) for v in jump_steps]
    chans = [int(v) for v in jump_channels]

    vb = [complex(v) for v in psi_final]
    vex = list(vb)
    vpo = list(vb)
    seg = nj
    jj = nj - 1
    status = STATUS_OK
    err_jump = -1
    err_val = 0.0
    b_seg_log_out[seg] = 0.0
    rev_exit_log_out[seg] = 0.0
    rev_post_log_out[seg] = 0.0

    for s in range(n_steps - 1, -1, -1):
        if jj >= 0 and steps[jj] == s:
            for i in range(d):
                b_pre_out[jj, i] = vb[i]
            y = _matvec(adag_tab[chans[jj]], vb, d)
            w = _norm_sq(y)
            if w <= eps_zero:
                status = STATUS_ZERO_NORM
                err_jump = jj
                err_val = w
                break
            vb = _scaled(y, 1.0 / sqrt(w), d)
            for i in range(d):
                b_post_out[jj, i] = vb[i]
            seg = jj
            b_seg_log_out[seg] = 0.0
            rev_exit_log_out[seg] = 0.0
            rev_post_log_out[seg] = 0.0
            vex = [complex(v) for v in jump_pre[jj]]
            vpo = [complex(v) for v in jump_post[jj]]
            jj -= 1
        else:
            op = udag_tab[s]
            y = _matvec(op, vb, d)
            w = _norm_sq(y)
            if w <= eps_zero:
                status = STATUS_ZERO_NORM
                err_jump = jj
                err_val = w
                break
            b_seg_log_out[seg] = b_seg_log_out[seg] + log(w)
            vb = _scaled(y, 1.0 / sqrt(w), d)

            y = _matvec(op, vex, d)
            w = _norm_sq(y)
            rev_exit_log_out[seg] = rev_exit_log_out[seg] + log(w)
            vex = _scaled(y, 1.0 / sqrt(w), d)

            y = _matvec(op, vpo, d)
            w = _norm_sq(y)
            rev_post_log_out[seg] = rev_post_log_out[seg] + log(w)
            vpo = _scaled(y, 1.0 / sqrt(w), d)

    for i in range(d):
        psi_out[i] = vb[i]
    return status, err_jump, err_val
