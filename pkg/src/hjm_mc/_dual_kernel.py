"""Compiled backward sweep with streaming error-term accumulation.

Mirrors ``duals._step`` and ``duals._ErrorTerms``.  Paths are processed in
blocks of ``B`` with the path index innermost, so every loop is element-wise
across the block (and vectorizes without reordering any sum) while the
``(L+2) x (L+2) x B`` dual block stays in cache.  Scalar functions of the
state are evaluated beforehand in numpy and passed in level-major, ``(N, P)``.
"""

import numpy as np
from numba import njit

BLOCK = 64


@njit(cache=True, nogil=True)
def _accumulate(m, N, L, phi, A, w1, w2, dt, xi2, FU, r, p0, e_tau, e_tim, q):
    K, B = phi.shape
    q[:, :] = 0.0
    for i in range(K):
        for c in range(3):
            w = w1[m, c, i]
            if w != 0.0:
                for b in range(B):
                    q[c, b] += w * phi[i, b]
    for i in range(L):
        for j in range(L):
            u0 = w2[m, 0, i, j]
            u1 = w2[m, 1, i, j]
            u2 = w2[m, 2, i, j]
            for b in range(B):
                a = A[i, j, b]
                q[0, b] += u0 * a
                q[1, b] += u1 * a
                q[2, b] += u2 * a
    for b in range(B):
        p = p0 + b
        if m < N:
            e_tau[p] += dt[m] * xi2[m, p] * q[0, b]
        if m > 0:
            n = m - 1
            t = FU[m, p] - FU[n, p] + (r[m, p] - r[n, p]) * phi[L, b]
            t += xi2[m, p] * q[1, b] - xi2[n, p] * q[2, b]
            e_tim[p] += 0.5 * dt[n] * t


@njit(cache=True, nogil=True)
def sweep(la, d1, d2, tf, ks, dt, lt, lam, dW, a1, b1, a2, b2, jz, jl1, hz, hkl, hll, w1, w2, xi2, FU, r):
    """Backward sweep over every path; returns per-path ``(e_tau, e_tim)``.

    The path count must be a multiple of :data:`BLOCK`.  ``tf`` rows hold
    ``F G'``, ``F G''``, ``F' G'``, ``F'' G`` and ``F' G`` at the terminal
    row; ``d1``/``d2`` (``(cells, P)``) are the composite-functional
    derivatives.  The per-step arrays follow the notation of ``duals._step``.
    """
    N, J, P = dW.shape
    L = lt.shape[1] - 1
    K = L + 2
    B = BLOCK
    nb = L - la
    e_tau = np.zeros(P)
    e_tim = np.zeros(P)
    phi = np.empty((K, B))
    A = np.empty((K, K, B))
    jk = np.empty((K, B))
    lw = np.empty((L, B))
    v = np.empty((K, B))
    vL = np.empty((K, B))
    q = np.empty((3, B))
    phik = np.empty(B)
    hkk = np.empty(B)
    vk = np.empty(B)
    vkl = np.empty(B)
    for p0 in range(0, P, B):
        phi[:, :] = 0.0
        A[:, :, :] = 0.0
        for i in range(nb):
            for b in range(B):
                phi[la + i, b] = tf[0, p0 + b] * d1[i, p0 + b]
            for j in range(nb):
                for b in range(B):
                    A[la + i, la + j, b] = tf[1, p0 + b] * (d1[i, p0 + b] * d1[j, p0 + b])
            for b in range(B):
                A[la + i, la + i, b] += tf[0, p0 + b] * d2[i, p0 + b]
                A[la + i, L, b] = tf[2, p0 + b] * d1[i, p0 + b]
                A[L, la + i, b] = A[la + i, L, b]
        for b in range(B):
            phi[L, b] = tf[4, p0 + b]
            phi[L + 1, b] = 1.0
            A[L, L, b] = tf[3, p0 + b]
        _accumulate(N, N, L, phi, A, w1, w2, dt, xi2, FU, r, p0, e_tau, e_tim, q)

        for n in range(N - 1, -1, -1):
            k = ks[n]
            lw[:, :] = 0.0
            for j in range(L):
                for c in range(J):
                    w = lam[n, j, c]
                    for b in range(B):
                        lw[j, b] += w * dW[n, c, p0 + b]
            for b in range(B):
                hkk[b] = hz[n, p0 + b] * phi[L + 1, b]
            for j in range(L):
                t = lt[n, j]
                for b in range(B):
                    p = p0 + b
                    jk[j, b] = a1[n, p] * t + b1[n, p] * lw[j, b]
                    hkk[b] += (a2[n, p] * t + b2[n, p] * lw[j, b]) * phi[j, b]
            for b in range(B):
                p = p0 + b
                jk[k, b] += 1.0
                jk[L, b] = dt[n]
                jk[L + 1, b] = jz[n, p]
            phik[:] = 0.0
            for j in range(K):
                for b in range(B):
                    phik[b] += jk[j, b] * phi[j, b]
            for b in range(B):
                phi[L, b] += jl1[n, p0 + b] * phi[L + 1, b]
                phi[k, b] = phik[b]

            # columns k and L of A J; A is symmetric so these are also rows of J^T A
            for i in range(K):
                for b in range(B):
                    v[i, b] = 0.0
                for j in range(K):
                    for b in range(B):
                        v[i, b] += A[i, j, b] * jk[j, b]
                for b in range(B):
                    vL[i, b] = A[i, L, b] + jl1[n, p0 + b] * A[i, L + 1, b]
            vk[:] = 0.0
            vkl[:] = 0.0
            for j in range(K):
                for b in range(B):
                    vk[b] += jk[j, b] * v[j, b]
                    vkl[b] += jk[j, b] * vL[j, b]
            for b in range(B):
                vL[L, b] = vL[L, b] + jl1[n, p0 + b] * vL[L + 1, b]
                v[k, b] = vk[b]
                v[L, b] = vkl[b]
                vL[k, b] = vkl[b]
            for i in range(K):
                for b in range(B):
                    A[k, i, b] = v[i, b]
                    A[i, k, b] = v[i, b]
                    A[L, i, b] = vL[i, b]
                    A[i, L, b] = vL[i, b]
            for b in range(B):
                p = p0 + b
                pz = phi[L + 1, b]
                A[k, k, b] += hkk[b]
                A[k, L, b] += hkl[n, p] * pz
                A[L, k, b] += hkl[n, p] * pz
                A[L, L, b] += hll[n, p] * pz
            _accumulate(n, N, L, phi, A, w1, w2, dt, xi2, FU, r, p0, e_tau, e_tim, q)
    return e_tau, e_tim
