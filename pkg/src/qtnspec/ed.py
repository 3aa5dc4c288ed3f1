"""Exact diagonalization reference for the spin-ring Hamiltonian."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .mps import ModelParams, onsite_term, spin_matrices

MAX_DIM = 2 ** 20
DENSE_LIMIT = 4096


@dataclass
class DenseSpectrum:
    energies: np.ndarray
    vectors: np.ndarray  # columns
    params: ModelParams

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


def site_operator(L: int, S: float, j: int, op: np.ndarray) -> sp.csr_matrix:
    d = int(round(2 * S + 1))
    return sp.kron(
        sp.kron(sp.identity(d ** j, format="csr"), sp.csr_matrix(op)),
        sp.identity(d ** (L - j - 1), format="csr"),
        format="csr",
    )


def spin_operator(p: ModelParams, j: int, alpha: str) -> sp.csr_matrix:
    return site_operator(p.L, p.S, j, spin_matrices(p.S)[alpha])


def total_spin_operator(p: ModelParams, alpha: str, phases=None) -> sp.csr_matrix:
    out = None
    for j in range(p.L):
        c = 1.0 if phases is None else phases[j]
        term = c * spin_operator(p, j, alpha)
        out = term if out is None else out + term
    return out


def build_hamiltonian(p: ModelParams) -> sp.csr_matrix:
    dim = p.d ** p.L
    if dim > MAX_DIM:
        raise ValueError(f"Hilbert dimension {dim} exceeds the cap {MAX_DIM}")
    s = {a: [spin_operator(p, j, a) for j in range(p.L)] for a in "xyz"}
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for i, j in p.bonds():
        for a in "xyz":
            h = h + p.J * (s[a][i] @ s[a][j])
    loc = onsite_term(p)
    for j in range(p.L):
        h = h + site_operator(p.L, p.S, j, loc)
    h = h.tocsr()
    if not np.any(h.data.imag):
        h = h.real.tocsr()
    h.eliminate_zeros()
    return h


def is_axial(p: ModelParams) -> bool:
    return p.B[0] == 0.0 and p.B[1] == 0.0


def total_sz_diagonal(p: ModelParams) -> np.ndarray:
    m = p.S - np.arange(p.d)
    out = np.zeros(p.d ** p.L)
    for j in range(p.L):
        out += np.kron(np.kron(np.ones(p.d ** j), m), np.ones(p.d ** (p.L - j - 1)))
    return out


def sz_sectors(p: ModelParams) -> dict[float, np.ndarray]:
    mz = np.round(2 * total_sz_diagonal(p)).astype(int)
    return {k / 2: np.flatnonzero(mz == k) for k in sorted(set(mz.tolist()), reverse=True)}


def _lowest(h, n: int) -> tuple[np.ndarray, np.ndarray]:
    dim = h.shape[0]
    n = min(n, dim)
    if dim <= DENSE_LIMIT:
        w, v = np.linalg.eigh(h.toarray() if sp.issparse(h) else h)
        return w[:n], v[:, :n]
    k = min(n, dim - 2)
    v0 = np.ones(dim) / np.sqrt(dim)
    w, v = sla.eigsh(h, k=k, which="SA", tol=1e-13, v0=v0, ncv=max(2 * k + 1, 40))
    order = np.argsort(w)
    return w[order], v[:, order]


def low_eigenpairs(h, n: int, p: ModelParams | None = None, use_blocks: bool = True) -> DenseSpectrum:
    """n lowest eigenpairs; S^z blocks are used when p is given and the field is axial."""
    if n > 64:
        raise ValueError("at most 64 eigenpairs")
    dim = h.shape[0]
    if p is not None and use_blocks and is_axial(p):
        ws, vs = [], []
        for idx in sz_sectors(p).values():
            hb = h[idx][:, idx]
            w, v = _lowest(hb, min(n, len(idx)))
            full = np.zeros((dim, len(w)), dtype=v.dtype)
            full[idx] = v
            ws.append(w)
            vs.append(full)
        w = np.concatenate(ws)
        v = np.concatenate(vs, axis=1)
        order = np.argsort(w, kind="stable")[:n]
        w, v = w[order], v[:, order]
    else:
        w, v = _lowest(h, n)
    w, v = _tie_break(w, v, p)
    return DenseSpectrum(np.asarray(w), v.astype(complex), p)


def _tie_break(w, v, p, tol=1e-8):
    """Within energy windows of width tol order by descending <S^z_tot>."""
    if p is None:
        return w, v
    sz = total_sz_diagonal(p)
    mz = np.einsum("ik,i,ik->k", v.conj(), sz, v).real
    order = list(range(len(w)))
    i = 0
    out = []
    while i < len(order):
        j = i
        while j + 1 < len(order) and w[order[j + 1]] - w[order[i]] < tol:
            j += 1
        grp = sorted(order[i:j + 1], key=lambda k: -mz[k])
        out.extend(grp)
        i = j + 1
    return w[out], v[:, out]


def exact_dipole_elements(spec: DenseSpectrum, p_index: int, i: int, j: int,
                          alpha: str, beta: str) -> complex:
    """<psi_0|S^alpha_i|psi_p><psi_p|S^beta_j|psi_0>."""
    L = spec.params.L
    if not (0 <= i < L and 0 <= j < L):
        raise IndexError("site index out of range")
    if not 0 <= p_index < spec.vectors.shape[1]:
        raise IndexError("state index out of range")
    v0 = spec.vectors[:, 0]
    vp = spec.vectors[:, p_index]
    a = np.vdot(v0, spin_operator(spec.params, i, alpha) @ vp)
    b = np.vdot(vp, spin_operator(spec.params, j, beta) @ v0)
    return complex(a * b)


def dipole_table(p: ModelParams, v0: np.ndarray, vp: np.ndarray) -> np.ndarray:
    """O[alpha, beta, i, j] = <0|S^a_i|p><p|S^b_j|0> for alpha, beta in x, y, z."""
    amp = np.zeros((3, p.L), complex)  # <p|S^a_j|0>
    for a, ax in enumerate("xyz"):
        for j in range(p.L):
            amp[a, j] = np.vdot(vp, spin_operator(p, j, ax) @ v0)
    return np.einsum("ai,bj->abij", amp.conj(), amp)


def project_onto_manifold(spec: DenseSpectrum, vec: np.ndarray, energy: float, tol: float = 1e-6):
    """Closest exact eigenvector to vec inside the eigenspace at the given energy."""
    sel = np.flatnonzero(np.abs(spec.energies - energy) < tol)
    if sel.size == 0:
        raise ValueError("no eigenvalue near the requested energy")
    basis = spec.vectors[:, sel]
    c = basis.conj().T @ vec
    out = basis @ c
    return out / np.linalg.norm(out)


def params_key(p: ModelParams, n: int) -> str:
    blob = json.dumps({"p": asdict(p), "n": n}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cached_spectrum(p: ModelParams, n: int, cache_dir: str | Path | None = None) -> DenseSpectrum:
    """low_eigenpairs of build_hamiltonian(p), cached on disk by a hash of p."""
    if cache_dir is None:
        return low_eigenpairs(build_hamiltonian(p), n, p)
    path = Path(cache_dir) / f"spectrum_{params_key(p, n)}.npz"
    if path.exists():
        z = np.load(path)
        return DenseSpectrum(z["energies"], z["vectors"], p)
    spec = low_eigenpairs(build_hamiltonian(p), n, p)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, energies=spec.energies, vectors=spec.vectors)
    tmp.replace(path)
    return spec


def transition_set(spec: DenseSpectrum, states) -> "TransitionSet":
    """Exact transitions from the ground state to the listed eigenstates."""
    from .spectral import Transition, TransitionSet
    v0 = spec.vectors[:, 0]
    out = []
    for p in sorted(states, key=lambda k: spec.energies[k]):
        tab = dipole_table(spec.params, v0, spec.vectors[:, p])
        out.append(Transition(float(spec.energies[p] - spec.energies[0]), tab, label=f"p={p}"))
    return TransitionSet(out)


def exact_spectrum(spec: DenseSpectrum, geometry, states, q_grid, omega, **kw):
    """Intensity map from exact eigenvectors; keyword arguments go to spectral.intensity."""
    from .spectral import intensity
    return intensity(transition_set(spec, states), geometry, q_grid, omega, **kw)
