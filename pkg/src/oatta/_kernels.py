"""Compiled inner loop shared by the single-step API and the stream runner.

Everything here mutates its array arguments in place. The public wrappers in
:mod:`oatta.filter` and :mod:`oatta.gate` own validation and copying.
"""
from __future__ import annotations

import numpy as np
from numba import njit

ACC_EWMA = 0
ACC_WINDOW = 1


@njit(cache=True)
def _normalize_into(v, eps):
    K = v.shape[0]
    s = 0.0
    for k in range(K):
        s += v[k]
    if s < eps:
        for k in range(K):
            v[k] = 1.0 / K
        return True
    for k in range(K):
        v[k] /= s
    return False


@njit(cache=True)
def _entropy(q):
    h = 0.0
    for k in range(q.shape[0]):
        if q[k] > 1e-300:
            h -= q[k] * np.log(q[k])
    return h


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def run_block(
    C, A, p_prev, q_prev, t0, Q,
    inv_rho, use_rho, gamma, tau_h, eps, skip_first,
    gated, carry_gated, pibar, gate_scalars, gate_buf, eta, window, margin, tau_g, gate_eps, acc_mode,
    PI, P, PHAT, W, DELTA, LLR, LAM, DIAG,
):
    """Advance the recursion over the rows of ``Q``.

    ``gate_scalars`` holds ``[llr]``; ``gate_buf`` is the sliding-window
    buffer (only read when ``acc_mode == ACC_WINDOW``). Returns the number of
    steps whose measurement update fell back to uniform.
    """
    T, K = Q.shape
    pi = np.empty(K)
    lik = np.empty(K)
    p = np.empty(K)
    phat = np.empty(K)
    degenerate = 0
    for n in range(T):
        q = Q[n]
        t = t0 + n + 1

        # time update with the previous dynamics estimate
        for j in range(K):
            s = 0.0
            for i in range(K):
                s += A[i, j] * p_prev[i]
            pi[j] = s
        _normalize_into(pi, eps)

        # likelihood conversion and measurement update
        for k in range(K):
            lik[k] = q[k] * inv_rho[k] if use_rho else q[k]
        _normalize_into(lik, eps)
        for k in range(K):
            p[k] = lik[k] * pi[k]
        if _normalize_into(p, eps):
            degenerate += 1

        w = np.exp(-_entropy(q) / tau_h)

        if gated:
            for k in range(K):
                pibar[k] = (1.0 - eta) * pibar[k] + eta * q[k]
            _normalize_into(pibar, eps)
            a = 0.0
            b = 0.0
            for k in range(K):
                a += q[k] * pi[k]
                b += q[k] * pibar[k]
            delta = np.log(a + gate_eps) - np.log(b + gate_eps)
            if acc_mode == ACC_WINDOW:
                nb = gate_buf.shape[0]
                gate_buf[(t - 1) % nb] = delta
                s = 0.0
                for i in range(nb):
                    s += gate_buf[i]
                llr = s / window
            else:
                llr = (1.0 - 1.0 / window) * gate_scalars[0] + delta / window
            gate_scalars[0] = llr
            lam = _sigmoid((llr - margin) / tau_g)
            for k in range(K):
                phat[k] = lam * p[k] + (1.0 - lam) * q[k]
            _normalize_into(phat, eps)
            DELTA[n] = delta
            LLR[n] = llr
            LAM[n] = lam
        else:
            for k in range(K):
                phat[k] = p[k]

        # decoupled transition-count update from raw predictions only
        if not (skip_first and t == 1):
            g = gamma * w
            for i in range(K):
                rs = 0.0
                for j in range(K):
                    c = (1.0 - g) * C[i, j] + g * q_prev[i] * q[j]
                    C[i, j] = c
                    rs += c
                for j in range(K):
                    A[i, j] = C[i, j] / rs
        dsum = 0.0
        for i in range(K):
            dsum += A[i, i]

        for k in range(K):
            PI[n, k] = pi[k]
            P[n, k] = p[k]
            PHAT[n, k] = phat[k]
            p_prev[k] = phat[k] if (gated and carry_gated) else p[k]
            q_prev[k] = q[k]
        W[n] = w
        DIAG[n] = dsum / K
    return degenerate
