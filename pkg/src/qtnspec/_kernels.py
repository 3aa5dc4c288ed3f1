"""Numba kernels for the circuit-compilation cost and its analytic gradient.

Gate kinds: 0 = SU(2) Rz(phi) Ry(theta) Rz(lam) with params (theta, phi, lam);
1 = two-qubit gate Q (A x B) Q^dag with A, B SU(2) and Q the basis matrix passed in
(the conjugate transpose of the magic basis gives SO(4));
2 = (Ry(a) x Ry(b)) CNOT with the first listed qubit as control.
Qubit q of an n-qubit register is bit (n - 1 - q) of the basis index.
"""
import numpy as np
import numba as nb

_JIT = dict(cache=True, fastmath=True, nogil=True)


@nb.njit(**_JIT)
def _su2(th, ph, la, G, dG, off):
    c = np.cos(th / 2)
    s = np.sin(th / 2)
    e00 = np.exp(-0.5j * (ph + la))
    e01 = -np.exp(-0.5j * (ph - la))
    e10 = np.exp(0.5j * (ph - la))
    e11 = np.exp(0.5j * (ph + la))
    G[0, 0] = e00 * c
    G[0, 1] = e01 * s
    G[1, 0] = e10 * s
    G[1, 1] = e11 * c
    dG[off, 0, 0] = -e00 * s / 2
    dG[off, 0, 1] = e01 * c / 2
    dG[off, 1, 0] = e10 * c / 2
    dG[off, 1, 1] = -e11 * s / 2
    for a in range(2):
        for b in range(2):
            dG[off + 1, a, b] = G[a, b] * (-0.5j if a == 0 else 0.5j)
            dG[off + 2, a, b] = G[a, b] * (-0.5j if b == 0 else 0.5j)


@nb.njit(**_JIT)
def _mm4(A, B, out):
    for i in range(4):
        for j in range(4):
            acc = 0j
            for k in range(4):
                acc += A[i, k] * B[k, j]
            out[i, j] = acc


@nb.njit(**_JIT)
def _kron(A, B, out):
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    out[2 * i + k, 2 * j + l] = A[i, j] * B[k, l]


@nb.njit(**_JIT)
def _ry_pair(a, b, A, B, dA, dB):
    ca = np.cos(a / 2)
    sa = np.sin(a / 2)
    cb = np.cos(b / 2)
    sb = np.sin(b / 2)
    A[0, 0] = ca
    A[0, 1] = -sa
    A[1, 0] = sa
    A[1, 1] = ca
    B[0, 0] = cb
    B[0, 1] = -sb
    B[1, 0] = sb
    B[1, 1] = cb
    dA[0, 0] = -sa / 2
    dA[0, 1] = -ca / 2
    dA[1, 0] = ca / 2
    dA[1, 1] = -sa / 2
    dB[0, 0] = -sb / 2
    dB[0, 1] = -cb / 2
    dB[1, 0] = cb / 2
    dB[1, 1] = -sb / 2


@nb.njit(**_JIT)
def build_gates(params, kinds, offs, M, Gs, Fs, dFs):
    """Gate matrices Gs plus the SU(2) factors Fs and their derivatives dFs."""
    Md = M.conj().T.copy()
    K = np.zeros((4, 4), np.complex128)
    tmp = np.zeros((4, 4), np.complex128)
    for g in range(kinds.shape[0]):
        o = offs[g]
        k = kinds[g]
        A = Fs[g, 0]
        B = Fs[g, 1]
        if k == 0:
            _su2(params[o], params[o + 1], params[o + 2], A, dFs[g], 0)
            for a in range(2):
                for b in range(2):
                    Gs[g, a, b] = A[a, b]
        elif k == 1:
            _su2(params[o], params[o + 1], params[o + 2], A, dFs[g], 0)
            _su2(params[o + 3], params[o + 4], params[o + 5], B, dFs[g], 3)
            _kron(A, B, K)
            _mm4(M, K, tmp)
            _mm4(tmp, Md, Gs[g])
        else:
            _ry_pair(params[o], params[o + 1], A, B, dFs[g, 0], dFs[g, 3])
            _kron(A, B, K)
            for i in range(4):
                Gs[g, i, 0] = K[i, 0]
                Gs[g, i, 1] = K[i, 1]
                Gs[g, i, 2] = K[i, 3]
                Gs[g, i, 3] = K[i, 2]


@nb.njit(**_JIT)
def _apply1(G, m0, V, out):
    dim, nc = V.shape
    for r in range(dim):
        if r & m0:
            continue
        r1 = r | m0
        for c in range(nc):
            a = V[r, c]
            b = V[r1, c]
            out[r, c] = G[0, 0] * a + G[0, 1] * b
            out[r1, c] = G[1, 0] * a + G[1, 1] * b


@nb.njit(**_JIT)
def _apply2(G, m0, m1, V, out):
    dim, nc = V.shape
    for r in range(dim):
        if (r & m0) or (r & m1):
            continue
        i0 = r
        i1 = r | m1
        i2 = r | m0
        i3 = r | m0 | m1
        for c in range(nc):
            x0 = V[i0, c]
            x1 = V[i1, c]
            x2 = V[i2, c]
            x3 = V[i3, c]
            out[i0, c] = G[0, 0] * x0 + G[0, 1] * x1 + G[0, 2] * x2 + G[0, 3] * x3
            out[i1, c] = G[1, 0] * x0 + G[1, 1] * x1 + G[1, 2] * x2 + G[1, 3] * x3
            out[i2, c] = G[2, 0] * x0 + G[2, 1] * x1 + G[2, 2] * x2 + G[2, 3] * x3
            out[i3, c] = G[3, 0] * x0 + G[3, 1] * x1 + G[3, 2] * x2 + G[3, 3] * x3


@nb.njit(**_JIT)
def forward(params, kinds, qs, offs, nq, nc, M):
    """Columns 0..nc-1 of the circuit unitary."""
    ng = kinds.shape[0]
    dim = 1 << nq
    Gs = np.zeros((ng, 4, 4), np.complex128)
    Fs = np.zeros((ng, 2, 2, 2), np.complex128)
    dFs = np.zeros((ng, 6, 2, 2), np.complex128)
    build_gates(params, kinds, offs, M, Gs, Fs, dFs)
    V = np.zeros((dim, nc), np.complex128)
    W = np.zeros((dim, nc), np.complex128)
    for c in range(nc):
        V[c, c] = 1
    for g in range(ng):
        m0 = 1 << (nq - 1 - qs[g, 0])
        if qs[g, 1] < 0:
            _apply1(Gs[g], m0, V, W)
        else:
            _apply2(Gs[g], m0, 1 << (nq - 1 - qs[g, 1]), V, W)
        V, W = W, V
    return V


@nb.njit(**_JIT)
def cost_grad(params, kinds, qs, offs, nq, T, mask, M):
    """Phase-optimal masked cost sum_S |e^{i phi} U - T|^2 and its gradient."""
    ng = kinds.shape[0]
    dim, nc = T.shape
    Gs = np.zeros((ng, 4, 4), np.complex128)
    Fs = np.zeros((ng, 2, 2, 2), np.complex128)
    dFs = np.zeros((ng, 6, 2, 2), np.complex128)
    build_gates(params, kinds, offs, M, Gs, Fs, dFs)
    Mc = np.conj(M)
    Mt = M.T.copy()
    E1 = np.empty((4, 4), np.complex128)
    E2 = np.empty((4, 4), np.complex128)
    Vs = np.zeros((ng + 1, dim, nc), np.complex128)
    for c in range(nc):
        Vs[0, c, c] = 1
    for g in range(ng):
        m0 = 1 << (nq - 1 - qs[g, 0])
        if qs[g, 1] < 0:
            _apply1(Gs[g], m0, Vs[g], Vs[g + 1])
        else:
            _apply2(Gs[g], m0, 1 << (nq - 1 - qs[g, 1]), Vs[g], Vs[g + 1])
    U = Vs[ng]
    z = 0j
    su = 0.0
    st = 0.0
    for r in range(dim):
        for c in range(nc):
            if mask[r, c]:
                z += np.conj(T[r, c]) * U[r, c]
                su += U[r, c].real ** 2 + U[r, c].imag ** 2
                st += T[r, c].real ** 2 + T[r, c].imag ** 2
    az = abs(z)
    e = np.conj(z) / az if az > 0 else 1.0 + 0j
    C = su + st - 2 * az
    Y = np.zeros((dim, nc), np.complex128)
    Y2 = np.zeros((dim, nc), np.complex128)
    for r in range(dim):
        for c in range(nc):
            if mask[r, c]:
                Y[r, c] = U[r, c] - np.conj(e) * T[r, c]
    grad = np.zeros(params.shape[0])
    env = np.zeros((4, 4), np.complex128)
    Gd = np.empty((4, 4), np.complex128)
    for g in range(ng - 1, -1, -1):
        V = Vs[g]
        m0 = 1 << (nq - 1 - qs[g, 0])
        k = kinds[g]
        npar = 3 if k == 0 else (6 if k == 1 else 2)
        A = Fs[g, 0]
        B = Fs[g, 1]
        if qs[g, 1] < 0:
            e00 = 0j
            e01 = 0j
            e10 = 0j
            e11 = 0j
            for r in range(dim):
                if r & m0:
                    continue
                r1 = r | m0
                for c in range(nc):
                    y0 = np.conj(Y[r, c])
                    y1 = np.conj(Y[r1, c])
                    v0 = V[r, c]
                    v1 = V[r1, c]
                    e00 += y0 * v0
                    e01 += y0 * v1
                    e10 += y1 * v0
                    e11 += y1 * v1
            for t in range(npar):
                dA = dFs[g, t]
                acc = e00 * dA[0, 0] + e01 * dA[0, 1] + e10 * dA[1, 0] + e11 * dA[1, 1]
                grad[offs[g] + t] = 2 * acc.real
            for a in range(2):
                for b in range(2):
                    Gd[a, b] = np.conj(Gs[g, b, a])
            _apply1(Gd, m0, Y, Y2)
        else:
            m1 = 1 << (nq - 1 - qs[g, 1])
            e00 = e01 = e02 = e03 = 0j
            e10 = e11 = e12 = e13 = 0j
            e20 = e21 = e22 = e23 = 0j
            e30 = e31 = e32 = e33 = 0j
            for r in range(dim):
                if (r & m0) or (r & m1):
                    continue
                i0 = r
                i1 = r | m1
                i2 = r | m0
                i3 = r | m0 | m1
                for c in range(nc):
                    y0 = np.conj(Y[i0, c])
                    y1 = np.conj(Y[i1, c])
                    y2 = np.conj(Y[i2, c])
                    y3 = np.conj(Y[i3, c])
                    v0 = V[i0, c]
                    v1 = V[i1, c]
                    v2 = V[i2, c]
                    v3 = V[i3, c]
                    e00 += y0 * v0
                    e01 += y0 * v1
                    e02 += y0 * v2
                    e03 += y0 * v3
                    e10 += y1 * v0
                    e11 += y1 * v1
                    e12 += y1 * v2
                    e13 += y1 * v3
                    e20 += y2 * v0
                    e21 += y2 * v1
                    e22 += y2 * v2
                    e23 += y2 * v3
                    e30 += y3 * v0
                    e31 += y3 * v1
                    e32 += y3 * v2
                    e33 += y3 * v3
            env[0, 0] = e00
            env[0, 1] = e01
            env[0, 2] = e02
            env[0, 3] = e03
            env[1, 0] = e10
            env[1, 1] = e11
            env[1, 2] = e12
            env[1, 3] = e13
            env[2, 0] = e20
            env[2, 1] = e21
            env[2, 2] = e22
            env[2, 3] = e23
            env[3, 0] = e30
            env[3, 1] = e31
            env[3, 2] = e32
            env[3, 3] = e33
            # pull the environment back through the fixed part of the gate
            if k == 1:
                _mm4(Mt, env, E1)
                _mm4(E1, Mc, E2)
            else:
                for i in range(4):
                    E2[i, 0] = env[i, 0]
                    E2[i, 1] = env[i, 1]
                    E2[i, 2] = env[i, 3]
                    E2[i, 3] = env[i, 2]
            for t in range(npar):
                acc = 0j
                first = t < 3 and (k == 1 or t == 0)
                if first:
                    dA = dFs[g, t]
                else:
                    dB = dFs[g, 3 if k == 2 else t]
                for i in range(2):
                    for j in range(2):
                        for kk in range(2):
                            for l in range(2):
                                if first:
                                    acc += E2[2 * i + kk, 2 * j + l] * dA[i, j] * B[kk, l]
                                else:
                                    acc += E2[2 * i + kk, 2 * j + l] * A[i, j] * dB[kk, l]
                grad[offs[g] + t] = 2 * acc.real
            for a in range(4):
                for b in range(4):
                    Gd[a, b] = np.conj(Gs[g, b, a])
            _apply2(Gd, m0, m1, Y, Y2)
        Y, Y2 = Y2, Y
    return C, grad
