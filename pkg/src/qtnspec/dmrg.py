"""Two-site DMRG with orthogonality penalties for low-lying excited states."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as sla

from .mps import (
    LEFT, RIGHT, Mpo, MpsState, canonicalize, expectation_mpo, local_sum_mpo, mpo_product,
    random_mps, spin_matrices, _keep,
)

log = logging.getLogger(__name__)

DENSE_LOCAL_LIMIT = 600


@dataclass
class SolverConfig:
    chi_max: int = 8
    n_states: int = 1
    variance_tol: float = 1e-8
    penalty_weight: float = 100.0
    max_sweeps: int = 20
    min_sweeps: int = 2
    energy_tol: float = 1e-11
    warmup_chi: int | None = None
    warmup_sweeps: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.variance_tol <= 0:
            raise ValueError("variance_tol must be positive")
        if self.chi_max < 1 or self.n_states < 1:
            raise ValueError("chi_max and n_states must be >= 1")

    @classmethod
    def for_coupling(cls, J: float, **kw) -> "SolverConfig":
        kw.setdefault("penalty_weight", 100.0 * abs(J))
        return cls(**kw)


@dataclass
class EigenResult:
    states: list
    energies: list
    variances: list
    sweep_log: list
    converged: list
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def metadata(self) -> dict:
        return {
            "energies": [float(e) for e in self.energies],
            "variances": [float(v) for v in self.variances],
            "converged": list(self.converged),
            "config": asdict(self.config),
        }


def energy_variance(state: MpsState, h: Mpo) -> float:
    """<H^2> - <H>^2 using the squared MPO."""
    e = expectation_mpo(state, h).real
    e2 = expectation_mpo(state, mpo_product(h, h)).real
    return float(e2 - e * e)


def total_sz(state: MpsState, S: float) -> float:
    sz = spin_matrices(S)["z"]
    return expectation_mpo(state, local_sum_mpo([sz] * state.L)).real


# -- environments ---------------------------------------------------------------

def _left_h(env, a, w):
    # env index order: (bra, mpo, ket)
    t = np.tensordot(env, a, axes=(2, 0))                    # (b, w, i, r)
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))            # (b, r, v, o)
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))     # (rb, r, v)
    return t.transpose(0, 2, 1)


def _right_h(env, b, w):
    t = np.tensordot(b, env, axes=(2, 2))                    # (l, i, rb, u)
    t = np.tensordot(t, w, axes=([1, 3], [3, 1]))            # (l, rb, v, o)
    t = np.tensordot(b.conj(), t, axes=([1, 2], [3, 1]))     # (lb, l, v)
    return t.transpose(0, 2, 1)


def _left_o(env, phi, a):
    # env index order: (reference state, ket)
    t = np.tensordot(env, a, axes=(1, 0))                    # (p, i, r)
    return np.tensordot(phi.conj(), t, axes=([0, 1], [0, 1]))


class _Sweeper:
    def __init__(self, h: Mpo, psi: list, prev: list, lam: float, chi: int, dtype):
        self.h = [np.asarray(w, dtype) for w in h.tensors]
        self.psi = [np.asarray(t, dtype) for t in psi]
        self.prev = [[np.asarray(t, dtype) for t in s] for s in prev]
        self.lam = lam
        self.chi = chi
        self.dtype = dtype
        L = len(self.psi)
        self.L = L
        self.lh = [None] * (L + 1)
        self.rh = [None] * (L + 1)
        self.lo = [[None] * (L + 1) for _ in prev]
        self.ro = [[None] * (L + 1) for _ in prev]
        one3 = np.ones((1, 1, 1), dtype)
        one2 = np.ones((1, 1), dtype)
        self.lh[0] = one3
        self.rh[L] = one3
        for k in range(len(prev)):
            self.lo[k][0] = one2
            self.ro[k][L] = one2
        for j in range(L - 1, 1, -1):
            self._update_right(j)

    def _update_left(self, j):
        a = self.psi[j]
        self.lh[j + 1] = _left_h(self.lh[j], a, self.h[j])
        for k, phi in enumerate(self.prev):
            self.lo[k][j + 1] = _left_o(self.lo[k][j], phi[j], a)

    def _update_right(self, j):
        b = self.psi[j]
        self.rh[j] = _right_h(self.rh[j + 1], b, self.h[j])
        for k, phi in enumerate(self.prev):
            env = self.ro[k][j + 1]                        # (phi, ket)
            t = np.tensordot(b, env, axes=(2, 1))          # (l, i, p)
            self.ro[k][j] = np.tensordot(phi[j].conj(), t, axes=([1, 2], [1, 2]))  # (phi_l, l)

    def _matvec_factory(self, j):
        lh, rh = self.lh[j], self.rh[j + 2]
        w1, w2 = self.h[j], self.h[j + 1]
        shape = (lh.shape[0], w1.shape[2], w2.shape[2], rh.shape[0])
        vecs = []
        for k, phi in enumerate(self.prev):
            lo, ro = self.lo[k][j], self.ro[k][j + 2]      # (phi, ket)
            t = np.tensordot(phi[j], phi[j + 1], axes=(2, 0))   # (pl, i, j, pr)
            t = np.tensordot(lo.conj(), t, axes=(0, 0))         # (l, i, j, pr)
            t = np.tensordot(t, ro.conj(), axes=(3, 0))         # (l, i, j, r)
            vecs.append(t.reshape(-1))
        lam = self.lam

        def mv(x):
            th = x.reshape(shape)
            t = np.tensordot(lh, th, axes=(2, 0))                  # (a, w, i, j, b)
            t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))         # (a, j, b, v, i)
            t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))         # (a, b, i, u, j)
            t = np.tensordot(t, rh, axes=([1, 3], [2, 1]))         # (a, i, j, b)
            out = t.reshape(-1)
            for v in vecs:
                out = out + lam * v * np.vdot(v, x)
            return out

        return mv, shape

    def optimize_pair(self, j, direction):
        th0 = np.tensordot(self.psi[j], self.psi[j + 1], axes=(2, 0))
        mv, shape = self._matvec_factory(j)
        n = int(np.prod(shape))
        if n <= DENSE_LOCAL_LIMIT:
            hm = np.empty((n, n), dtype=self.dtype)
            eye = np.eye(n, dtype=self.dtype)
            for c in range(n):
                hm[:, c] = mv(eye[:, c])
            hm = (hm + hm.conj().T) / 2
            w, v = np.linalg.eigh(hm)
            e, x = w[0], v[:, 0]
        else:
            op = sla.LinearOperator((n, n), matvec=mv, dtype=self.dtype)
            v0 = th0.reshape(-1)
            if not np.any(v0):
                v0 = np.ones(n, self.dtype)
            w, v = sla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-12, ncv=min(n - 1, 24))
            e, x = w[0], v[:, 0]
        th = x.reshape(shape)
        l, d1, d2, r = shape
        u, s, vh = np.linalg.svd(th.reshape(l * d1, d2 * r), full_matrices=False)
        k = _keep(s, self.chi)
        s = s[:k] / np.linalg.norm(s[:k])
        if direction > 0:
            self.psi[j] = u[:, :k].reshape(l, d1, k)
            self.psi[j + 1] = (s[:, None] * vh[:k]).reshape(k, d2, r)
            self._update_left(j)
        else:
            self.psi[j] = (u[:, :k] * s[None, :]).reshape(l, d1, k)
            self.psi[j + 1] = vh[:k].reshape(k, d2, r)
            self._update_right(j + 1)
        return float(e)

    def sweep(self):
        """One left-to-right and one right-to-left half sweep."""
        L = self.L
        for j in range(L - 1):
            self.optimize_pair(j, +1)
        for j in range(L - 2, -1, -1):
            self.optimize_pair(j, -1)


def _as_state(ts) -> MpsState:
    return canonicalize(MpsState([np.asarray(t, complex) for t in ts]), LEFT)


def _right_canonical_tensors(state: MpsState) -> list:
    return [np.array(t) for t in canonicalize(state, RIGHT).tensors]


def solve(h: Mpo, cfg: SolverConfig, S: float | None = None) -> EigenResult:
    """Lowest cfg.n_states eigenstates of h by penalized two-site sweeps.

    If S is given, states closer than 1e-8 in energy are ordered by descending
    total S^z.
    """
    L, d = h.L, h.d
    real = h.is_real()
    dtype = np.float64 if real else np.complex128
    rng = np.random.default_rng(cfg.seed)
    h2 = mpo_product(h, h)
    states, energies, variances, logs, conv = [], [], [], [], []
    prev_tensors = []
    for p in range(cfg.n_states):
        init = random_mps(L, d, cfg.chi_max, rng=rng, real=True)
        sw = _Sweeper(h, _right_canonical_tensors(init), prev_tensors,
                      cfg.penalty_weight, cfg.chi_max, dtype)
        history = []
        last = np.inf
        ok = False
        best = None
        wchi = cfg.warmup_chi if cfg.warmup_chi is not None else 2 * cfg.chi_max
        if wchi > cfg.chi_max:
            sw.chi = wchi
            for _ in range(cfg.warmup_sweeps):
                sw.sweep()
            sw.chi = cfg.chi_max
        for it in range(cfg.max_sweeps):
            sw.sweep()
            st = _as_state(sw.psi)
            e = expectation_mpo(st, h).real
            var = expectation_mpo(st, h2).real - e * e
            history.append(float(e))
            if best is None or e < best[1]:
                best = (st, e, var)
            if it + 1 >= cfg.min_sweeps:
                if var < cfg.variance_tol:
                    ok = True
                    break
                if abs(last - e) < cfg.energy_tol:
                    break
            last = e
        st, e, var = (st, e, var) if ok else best
        if not ok:
            log.warning("state %d: no convergence after %d sweeps (variance %.3e)", p, len(history), var)
        states.append(st)
        energies.append(float(e))
        variances.append(float(max(var, 0.0)))
        logs.append(history)
        conv.append(ok)
        prev_tensors.append([np.asarray(t, dtype if real else complex) for t in st.tensors])
    order = sorted(range(len(states)), key=lambda k: energies[k])
    if S is not None:
        sz = [total_sz(s, S) for s in states]
        order = _tie_order(order, energies, sz)
    return EigenResult(
        [states[k] for k in order], [energies[k] for k in order],
        [variances[k] for k in order], [logs[k] for k in order],
        [conv[k] for k in order], cfg,
    )


def _tie_order(order, energies, sz, tol=1e-8):
    out = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and energies[order[j + 1]] - energies[order[i]] < tol:
            j += 1
        out.extend(sorted(order[i:j + 1], key=lambda k: -sz[k]))
        i = j + 1
    return out
