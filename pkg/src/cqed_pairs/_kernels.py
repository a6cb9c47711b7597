"""Numba kernels for the no-jump propagation.

The effective Hamiltonian is ``diag(h) + g1(t) C1 + g2(t) C2`` where ``C1`` and
``C2`` are real symmetric 0/1 matrices stored as index pairs. One RK4 step is a
linear map, so products of steps over fixed blocks of the pulse window are
precomputed once per subspace and a segment only walks step by step inside
the block where its survival threshold is crossed. Past the window the
propagator is diagonal and crossings are located by bisection.

Survival is the squared norm of the unnormalized no-jump state.
"""
import math

import numpy as np
from numba import njit

STATUS_THRESHOLDS_DONE = 0
STATUS_END = 1
STATUS_STEP_TOO_LARGE = 2
STATUS_NO_EXCITATION = 3
STATUS_CROSSED = 4

MAX_JUMP_PROBABILITY = 0.1
BLOCK = 256


@njit(cache=True, nogil=True)
def _rhs(y, h, pairs1, pairs2, g1, g2, out):
    for k in range(y.shape[0]):
        out[k] = h[k] * y[k]
    if g1 != 0.0:
        for j in range(pairs1.shape[0]):
            p = pairs1[j, 0]
            q = pairs1[j, 1]
            out[p] += g1 * y[q]
            out[q] += g1 * y[p]
    if g2 != 0.0:
        for j in range(pairs2.shape[0]):
            p = pairs2[j, 0]
            q = pairs2[j, 1]
            out[p] += g2 * y[q]
            out[q] += g2 * y[p]
    for k in range(y.shape[0]):
        out[k] = complex(out[k].imag, -out[k].real)


@njit(cache=True, nogil=True)
def _rk4_into(psi, out, k1, k2, k3, k4, tmp, h, pairs1, pairs2, g1a, g2a, g1b, g2b, g1c, g2c, dt):
    n = psi.shape[0]
    _rhs(psi, h, pairs1, pairs2, g1a, g2a, k1)
    for k in range(n):
        tmp[k] = psi[k] + 0.5 * dt * k1[k]
    _rhs(tmp, h, pairs1, pairs2, g1b, g2b, k2)
    for k in range(n):
        tmp[k] = psi[k] + 0.5 * dt * k2[k]
    _rhs(tmp, h, pairs1, pairs2, g1b, g2b, k3)
    for k in range(n):
        tmp[k] = psi[k] + dt * k3[k]
    _rhs(tmp, h, pairs1, pairs2, g1c, g2c, k4)
    c = dt / 6.0
    for k in range(n):
        out[k] = psi[k] + c * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])


@njit(cache=True, nogil=True)
def _linear_step(psi, out, work, n, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, dt):
    """Unnormalized one-step map of the no-jump evolution at step ``n``."""
    if n >= n_fast:
        for k in range(psi.shape[0]):
            out[k] = psi[k] * rdiag[k]
    else:
        _rk4_into(psi, out, work[0], work[1], work[2], work[3], work[4], h, pairs1, pairs2,
                  g1grid[2 * n], g2grid[2 * n],
                  g1grid[2 * n + 1], g2grid[2 * n + 1],
                  g1grid[2 * n + 2], g2grid[2 * n + 2], dt)


@njit(cache=True, nogil=True)
def rk4_step(psi, h, pairs1, pairs2, g1a, g2a, g1b, g2b, g1c, g2c, dt):
    """One RK4 step; ``a``, ``b``, ``c`` are the couplings at t, t+dt/2, t+dt."""
    out = np.empty(psi.shape[0], dtype=np.complex128)
    work = np.empty((5, psi.shape[0]), dtype=np.complex128)
    _rk4_into(psi, out, work[0], work[1], work[2], work[3], work[4],
              h, pairs1, pairs2, g1a, g2a, g1b, g2b, g1c, g2c, dt)
    return out


@njit(cache=True, nogil=True)
def block_propagators(h, pairs1, pairs2, g1grid, g2grid, n_fast, dt):
    """Products of the RK4 step maps over blocks ``[b*BLOCK, min((b+1)*BLOCK, n_fast))``."""
    d = h.shape[0]
    n_blocks = (n_fast + BLOCK - 1) // BLOCK
    out = np.zeros((n_blocks, d, d), dtype=np.complex128)
    work = np.empty((5, d), dtype=np.complex128)
    a = np.empty(d, dtype=np.complex128)
    b = np.empty(d, dtype=np.complex128)
    for col in range(d):
        for blk in range(n_blocks):
            a[:] = 0.0
            a[col] = 1.0
            for n in range(blk * BLOCK, min((blk + 1) * BLOCK, n_fast)):
                _linear_step(a, b, work, n, h, pairs1, pairs2, g1grid, g2grid, h, n_fast, dt)
                a, b = b, a
            out[blk, :, col] = a
    return out


@njit(cache=True, nogil=True)
def _norm2(v):
    s = 0.0
    for k in range(v.shape[0]):
        s += v[k].real ** 2 + v[k].imag ** 2
    return s


@njit(cache=True, nogil=True)
def _jump_probability(psi, decay, dt):
    s = 0.0
    for k in range(psi.shape[0]):
        s += decay[k] * (psi[k].real ** 2 + psi[k].imag ** 2)
    return s * dt


@njit(cache=True, nogil=True)
def _tail_log_survival(logw, log_r2, m):
    """log of ``sum_k w_k |r_k|^(2m)`` given ``log w_k`` and ``log |r_k|^2``."""
    top = -np.inf
    for k in range(logw.shape[0]):
        if logw[k] > -np.inf:
            x = logw[k] + m * log_r2[k]
            if x > top:
                top = x
    if top == -np.inf:
        return -np.inf
    s = 0.0
    for k in range(logw.shape[0]):
        if logw[k] > -np.inf:
            s += math.exp(logw[k] + m * log_r2[k] - top)
    return top + math.log(s)


@njit(cache=True, nogil=True)
def _tail_state(psi, logr, m, out):
    """Normalized ``psi * R**m`` for the diagonal tail propagator ``R = exp(logr)``."""
    n = psi.shape[0]
    top = -np.inf
    for k in range(n):
        a = abs(psi[k])
        if a > 0.0:
            x = math.log(a) + m * logr[k].real
            if x > top:
                top = x
    norm = 0.0
    for k in range(n):
        a = abs(psi[k])
        if a > 0.0:
            w = math.exp(math.log(a) + m * logr[k].real - top)
            out[k] = w * (psi[k] / a) * np.exp(1j * (m * logr[k].imag))
            norm += w * w
        else:
            out[k] = 0.0
    scale = 1.0 / math.sqrt(norm)
    for k in range(n):
        out[k] *= scale


@njit(cache=True, nogil=True)
def _tail(psi, n, n_stop, logr, decay, dt, log_s, ptr, thresholds, out_steps, out_states,
          rptr, record_steps, record_states):
    """Closed-form walk through the coupling-free tail starting at step ``n``."""
    d = psi.shape[0]
    if _jump_probability(psi, decay, dt) >= MAX_JUMP_PROBABILITY:
        return STATUS_STEP_TOO_LARGE, n, psi
    logw = np.full(d, -np.inf)
    log_r2 = np.empty(d)
    live_max = 0.0
    for k in range(d):
        w = psi[k].real ** 2 + psi[k].imag ** 2
        log_r2[k] = 2.0 * logr[k].real
        if w > 0.0:
            logw[k] = math.log(w) + log_s
            live_max = max(live_max, decay[k])
    if live_max * dt >= MAX_JUMP_PROBABILITY:
        return STATUS_STEP_TOO_LARGE, n, psi
    n_thr = thresholds.shape[0]
    span = n_stop - n
    last = n_stop
    while ptr < n_thr:
        thr = thresholds[ptr]
        # survival after m steps is S(m); the jump is decided at step n + m - 1
        if _tail_log_survival(logw, log_r2, span) >= thr:
            break
        lo = 0
        hi = span
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _tail_log_survival(logw, log_r2, mid) < thr:
                hi = mid
            else:
                lo = mid
        step = n + hi - 1
        _tail_state(psi, logr, step - n, out_states[ptr])
        out_steps[ptr] = step
        last = step
        ptr += 1
    n_rec = record_steps.shape[0]
    done = n_thr > 0 and ptr == n_thr
    end = last if done else n_stop
    while rptr < n_rec and record_steps[rptr] <= end:
        if record_steps[rptr] >= n:
            _tail_state(psi, logr, record_steps[rptr] - n, record_states[rptr])
        rptr += 1
    if done:
        return STATUS_THRESHOLDS_DONE, last, out_states[n_thr - 1].copy()
    final = np.empty(d, dtype=np.complex128)
    _tail_state(psi, logr, n_stop - n, final)
    return STATUS_END, n_stop, final


@njit(cache=True, nogil=True)
def propagate(psi, n0, n_stop, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, decay, dt,
              blocks, thresholds, out_steps, out_states, record_steps, record_states):
    """Walk steps ``n0 .. n_stop-1`` of the no-jump evolution.

    ``thresholds`` holds log-uniforms sorted in decreasing order. Threshold
    ``j`` is crossed at step ``n`` when the log survival drops below it
    during that step; ``n`` and the normalized pre-step state are written
    to ``out_steps[j]`` and ``out_states[j]``. The walk stops once every
    threshold is crossed. States at ``record_steps`` (sorted) are copied
    into ``record_states``.

    Whole blocks always advance by their precomputed propagator and whether a
    threshold falls inside a block is decided from the survival at the block
    end, so each threshold's outcome does not depend on which other
    thresholds share the pass.

    Returns ``(status, step, psi)`` where ``psi`` is the state at ``step``.
    """
    d = psi.shape[0]
    log_s = 0.0
    ptr = 0
    rptr = 0
    n_thr = thresholds.shape[0]
    n_rec = record_steps.shape[0]
    logr = np.log(rdiag + 0.0j)
    psi = psi / math.sqrt(_norm2(psi))
    nxt = np.empty(d, dtype=np.complex128)
    hop = np.empty(d, dtype=np.complex128)
    walk = np.empty(d, dtype=np.complex128)
    work = np.empty((5, d), dtype=np.complex128)
    while rptr < n_rec and record_steps[rptr] < n0:
        rptr += 1
    n = n0
    end_window = min(n_fast, n_stop)
    while n < end_window:
        blk = n // BLOCK
        full_end = min((blk + 1) * BLOCK, n_fast)
        blk_end = min(full_end, n_stop)
        if _jump_probability(psi, decay, dt) >= MAX_JUMP_PROBABILITY:
            return STATUS_STEP_TOO_LARGE, n, psi
        fine = n != blk * BLOCK or full_end > n_stop
        if fine:
            # partial block: the main path itself walks step by step
            while n < blk_end:
                while rptr < n_rec and record_steps[rptr] == n:
                    record_states[rptr, :] = psi
                    rptr += 1
                if _jump_probability(psi, decay, dt) >= MAX_JUMP_PROBABILITY:
                    return STATUS_STEP_TOO_LARGE, n, psi
                _linear_step(psi, nxt, work, n, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, dt)
                s2 = _norm2(nxt)
                log_s += math.log(s2)
                while ptr < n_thr and log_s < thresholds[ptr]:
                    out_steps[ptr] = n
                    out_states[ptr, :] = psi
                    ptr += 1
                if n_thr > 0 and ptr == n_thr:
                    return STATUS_THRESHOLDS_DONE, n, psi
                scale = 1.0 / math.sqrt(s2)
                for k in range(d):
                    psi[k] = nxt[k] * scale
                n += 1
            continue
        # full block: the main path hops; a throwaway walk locates crossings
        u = blocks[blk]
        for i in range(d):
            acc = 0.0j
            for j in range(d):
                acc += u[i, j] * psi[j]
            hop[i] = acc
        s2 = _norm2(hop)
        log_end = log_s + math.log(s2)
        crossing = ptr < n_thr and thresholds[ptr] > log_end
        recording = rptr < n_rec and record_steps[rptr] < blk_end
        if crossing or recording:
            walk[:] = psi
            log_w = log_s
            for m in range(n, blk_end):
                while rptr < n_rec and record_steps[rptr] == m:
                    record_states[rptr, :] = walk
                    rptr += 1
                if _jump_probability(walk, decay, dt) >= MAX_JUMP_PROBABILITY:
                    return STATUS_STEP_TOO_LARGE, m, walk.copy()
                _linear_step(walk, nxt, work, m, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, dt)
                w2 = _norm2(nxt)
                log_w += math.log(w2)
                while ptr < n_thr and thresholds[ptr] > log_end and (log_w < thresholds[ptr] or m == blk_end - 1):
                    out_steps[ptr] = m
                    out_states[ptr, :] = walk
                    ptr += 1
                if n_thr > 0 and ptr == n_thr:
                    return STATUS_THRESHOLDS_DONE, m, walk.copy()
                scale = 1.0 / math.sqrt(w2)
                for k in range(d):
                    walk[k] = nxt[k] * scale
        log_s = log_end
        scale = 1.0 / math.sqrt(s2)
        for k in range(d):
            psi[k] = hop[k] * scale
        n = blk_end
    if n >= n_stop:
        while rptr < n_rec and record_steps[rptr] == n_stop:
            record_states[rptr, :] = psi
            rptr += 1
        return STATUS_END, n_stop, psi
    return _tail(psi, n, n_stop, logr, decay, dt, log_s, ptr, thresholds, out_steps, out_states,
                 rptr, record_steps, record_states)


@njit(cache=True, nogil=True)
def propagate_stepwise(psi, n0, n_stop, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, decay, excitation, dt,
                       eps):
    """Literal per-step draw: stop at the first step where ``eps[n - n0] < dp``.

    Returns ``(status, step, psi, eps_used)``.
    """
    d = psi.shape[0]
    psi = psi.copy()
    nxt = np.empty(d, dtype=np.complex128)
    work = np.empty((5, d), dtype=np.complex128)
    for n in range(n0, n_stop):
        dp = 0.0
        exc = 0.0
        for k in range(d):
            w = psi[k].real ** 2 + psi[k].imag ** 2
            dp += decay[k] * w
            exc += excitation[k] * w
        dp *= dt
        if dp >= MAX_JUMP_PROBABILITY:
            return STATUS_STEP_TOO_LARGE, n, psi, 0.0
        if exc < 1e-12:
            return STATUS_NO_EXCITATION, n, psi, 0.0
        e = eps[n - n0]
        if e < dp:
            return STATUS_CROSSED, n, psi, e
        _linear_step(psi, nxt, work, n, h, pairs1, pairs2, g1grid, g2grid, rdiag, n_fast, dt)
        scale = 1.0 / math.sqrt(_norm2(nxt))
        for k in range(d):
            psi[k] = nxt[k] * scale
    return STATUS_END, n_stop, psi, 0.0


@njit(cache=True, nogil=True)
def _csr_axpy(indptr, indices, data, scale, v, out):
    for i in range(indptr.shape[0] - 1):
        s = 0.0j
        for j in range(indptr[i], indptr[i + 1]):
            s += data[j] * v[indices[j]]
        out[i] += scale * s


@njit(cache=True, nogil=True)
def _super_rhs(v, l0, l1, l2, g1, g2, out):
    out[:] = 0.0
    _csr_axpy(l0[0], l0[1], l0[2], 1.0, v, out)
    if g1 != 0.0:
        _csr_axpy(l1[0], l1[1], l1[2], g1, v, out)
    if g2 != 0.0:
        _csr_axpy(l2[0], l2[1], l2[2], g2, v, out)


@njit(cache=True, nogil=True)
def density_window(vec, n0, n1, l0, l1, l2, g1grid, g2grid, dt):
    """RK4 on a vectorized density matrix for steps ``n0 .. n1-1``.

    ``l0``, ``l1``, ``l2`` are CSR triplets ``(indptr, indices, data)`` of the
    superoperator ``L0 + g1 L1 + g2 L2``.
    """
    m = vec.shape[0]
    v = vec.copy()
    k1 = np.empty(m, dtype=np.complex128)
    k2 = np.empty(m, dtype=np.complex128)
    k3 = np.empty(m, dtype=np.complex128)
    k4 = np.empty(m, dtype=np.complex128)
    tmp = np.empty(m, dtype=np.complex128)
    for n in range(n0, n1):
        _super_rhs(v, l0, l1, l2, g1grid[2 * n], g2grid[2 * n], k1)
        for k in range(m):
            tmp[k] = v[k] + 0.5 * dt * k1[k]
        _super_rhs(tmp, l0, l1, l2, g1grid[2 * n + 1], g2grid[2 * n + 1], k2)
        for k in range(m):
            tmp[k] = v[k] + 0.5 * dt * k2[k]
        _super_rhs(tmp, l0, l1, l2, g1grid[2 * n + 1], g2grid[2 * n + 1], k3)
        for k in range(m):
            tmp[k] = v[k] + dt * k3[k]
        _super_rhs(tmp, l0, l1, l2, g1grid[2 * n + 2], g2grid[2 * n + 2], k4)
        for k in range(m):
            v[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
    return v
