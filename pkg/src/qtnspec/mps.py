"""Matrix product states, matrix product operators and spin-model builders.

MPS tensors are stored with index order (left bond, physical, right bond).
MPO tensors are stored as (left bond, right bond, physical out, physical in).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MU_B = 5.7883818060e-2  # meV / T

LEFT = "left"
RIGHT = "right"
MIXED = "mixed"

SVD_REL_CUTOFF = 1e-14


class TargetUnreachable(ValueError):
    """Raised when a compression cannot meet its fidelity tolerance."""

    def __init__(self, loss: float, tol: float, chi_max: int):
        super().__init__(
            f"fidelity loss {loss:.3e} exceeds tol {tol:.3e} at chi_max={chi_max}"
        )
        self.loss = loss
        self.tol = tol
        self.chi_max = chi_max


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MpsState:
    tensors: tuple
    form: str | None = None
    center: int | None = None

    def __post_init__(self):
        ts = tuple(_frozen(t) for t in self.tensors)
        if not ts:
            raise ValueError("MPS needs at least one site")
        for t in ts:
            if t.ndim != 3:
                raise ValueError("MPS tensors must be rank 3 (left, phys, right)")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise ValueError("boundary bonds must be one-dimensional")
        d = ts[0].shape[1]
        for j in range(len(ts)):
            if ts[j].shape[1] != d:
                raise ValueError("all sites must share the physical dimension")
            if j + 1 < len(ts) and ts[j].shape[2] != ts[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")
        if self.form not in (None, LEFT, RIGHT, MIXED):
            raise ValueError(f"unknown canonical form {self.form!r}")
        object.__setattr__(self, "tensors", ts)

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def chi(self) -> int:
        return max(self.bond_dims, default=1)


@dataclass(frozen=True)
class Mpo:
    tensors: tuple

    def __post_init__(self):
        ts = tuple(_frozen(t) for t in self.tensors)
        for t in ts:
            if t.ndim != 4 or t.shape[2] != t.shape[3]:
                raise ValueError("MPO tensors must be (wl, wr, d, d)")
        if ts[0].shape[0] != 1 or ts[-1].shape[1] != 1:
            raise ValueError("boundary MPO bonds must be one-dimensional")
        for j in range(len(ts) - 1):
            if ts[j].shape[1] != ts[j + 1].shape[0]:
                raise ValueError(f"MPO bond mismatch between sites {j} and {j + 1}")
        object.__setattr__(self, "tensors", ts)

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[2]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors[:-1]]

    @property
    def chi(self) -> int:
        return max(self.bond_dims, default=1)

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0][0]  # (wr, out, in)
        for w in self.tensors[1:]:
            out = np.einsum("aij,abkl->bikjl", out, w)
            s = out.shape
            out = out.reshape(s[0], s[1] * s[2], s[3] * s[4])
        return out[0]

    def is_real(self) -> bool:
        return all(not np.any(t.imag) for t in self.tensors)


@dataclass(frozen=True)
class ModelParams:
    L: int
    S: float = 0.5
    J: float = 1.0
    D: float = 0.0
    g: float = 2.0
    B: tuple = (0.0, 0.0, 0.0)
    mu_B: float = MU_B
    periodic: bool = True

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if self.S not in (0.5, 1.5):
            raise ValueError(f"unsupported spin S={self.S}; only 1/2 and 3/2 are encoded")
        B = tuple(float(b) for b in self.B)
        if len(B) != 3:
            raise ValueError("B must be a 3-vector")
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return int(round(2 * self.S + 1))

    def bonds(self) -> list[tuple[int, int]]:
        pairs = [(j, j + 1) for j in range(self.L - 1)]
        if self.periodic and self.L > 2:
            pairs.append((self.L - 1, 0))
        return pairs


def spin_matrices(S: float) -> dict[str, np.ndarray]:
    """Spin operators in the basis M = S, S-1, ..., -S."""
    d = int(round(2 * S + 1))
    m = S - np.arange(d)
    sp = np.zeros((d, d))
    for k in range(1, d):
        sp[k - 1, k] = np.sqrt(S * (S + 1) - m[k] * (m[k] + 1))
    sx = (sp + sp.T) / 2
    sy = (sp - sp.T) / 2j
    sz = np.diag(m)
    return {"x": sx.astype(complex), "y": sy.astype(complex), "z": sz.astype(complex)}


# -- construction -----------------------------------------------------------

def product_mps(L: int, d: int, basis_indices: Sequence[int]) -> MpsState:
    if len(basis_indices) != L:
        raise ValueError("need one basis index per site")
    ts = []
    for i in basis_indices:
        if not 0 <= i < d:
            raise ValueError(f"basis index {i} out of range for d={d}")
        t = np.zeros((1, d, 1), complex)
        t[0, i, 0] = 1.0
        ts.append(t)
    return MpsState(ts, LEFT)


def random_mps(L: int, d: int, chi: int, rng=None, real: bool = True) -> MpsState:
    """Random state with standard-normal entries, left-canonicalized."""
    rng = np.random.default_rng(rng)
    dims = [1] + [min(chi, d ** min(j, L - j)) for j in range(1, L)] + [1]
    ts = []
    for j in range(L):
        shape = (dims[j], d, dims[j + 1])
        t = rng.standard_normal(shape)
        if not real:
            t = t + 1j * rng.standard_normal(shape)
        ts.append(t)
    return canonicalize(MpsState(ts), LEFT)


def from_dense(vec: np.ndarray, L: int, d: int, chi_max: int | None = None) -> MpsState:
    """Left-canonical MPS of a dense vector by successive SVDs."""
    vec = np.asarray(vec, complex)
    if vec.size != d ** L:
        raise ValueError("vector length does not match d**L")
    ts = []
    rest = vec.reshape(1, -1)
    for _ in range(L - 1):
        chil = rest.shape[0]
        m = rest.reshape(chil * d, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        k = _keep(s, chi_max)
        ts.append(u[:, :k].reshape(chil, d, k))
        rest = s[:k, None] * vh[:k]
    nrm = np.linalg.norm(rest)
    if nrm == 0:
        raise ValueError("zero-norm state")
    ts.append((rest / nrm).reshape(-1, d, 1))
    return MpsState(ts, LEFT)


def to_dense(state: MpsState) -> np.ndarray:
    out = state.tensors[0][0]  # (d, r)
    for t in state.tensors[1:]:
        out = np.tensordot(out, t, axes=(1, 0))
        out = out.reshape(-1, t.shape[2])
    return out[:, 0]


def _keep(s: np.ndarray, chi_max: int | None) -> int:
    if s.size == 0 or s[0] == 0:
        return 1
    k = int(np.count_nonzero(s > SVD_REL_CUTOFF * s[0]))
    k = max(k, 1)
    if chi_max is not None:
        k = min(k, chi_max)
    return k


# -- canonical forms ---------------------------------------------------------

def _qr_pos(m: np.ndarray):
    q, r = np.linalg.qr(m)
    ph = np.diagonal(r).copy()
    ph = np.where(np.abs(ph) > 0, ph / np.abs(ph), 1.0)
    return q * ph[None, :], ph.conj()[:, None] * r


def _left_sweep(ts: list, stop: int) -> list:
    """QR left-orthonormalize sites [0, stop) and push the remainder right."""
    ts = list(ts)
    for j in range(stop):
        l, d, r = ts[j].shape
        q, rr = _qr_pos(ts[j].reshape(l * d, r))
        ts[j] = q.reshape(l, d, q.shape[1])
        ts[j + 1] = np.tensordot(rr, ts[j + 1], axes=(1, 0))
    return ts


def _right_sweep(ts: list, stop: int) -> list:
    """QR right-orthonormalize sites (stop, L-1] and push the remainder left."""
    ts = list(ts)
    for j in range(len(ts) - 1, stop, -1):
        l, d, r = ts[j].shape
        q, rr = _qr_pos(ts[j].reshape(l, d * r).T)
        ts[j] = q.T.reshape(q.shape[1], d, r)
        ts[j - 1] = np.tensordot(ts[j - 1], rr.T, axes=(2, 0))
    return ts


def canonicalize(state: MpsState, target: str, center: int | None = None) -> MpsState:
    """Return the same physical state (normalized) in the requested gauge."""
    L = state.L
    ts = [np.array(t) for t in state.tensors]
    if target == LEFT:
        ts = _left_sweep(ts, L - 1)
        c = L - 1
    elif target == RIGHT:
        ts = _right_sweep(ts, 0)
        c = 0
    elif target == MIXED:
        if center is None or not 0 <= center < L:
            raise ValueError("mixed form needs a center site in range")
        ts = _left_sweep(ts, center)
        ts = _right_sweep(ts, center)
        c = center
    else:
        raise ValueError(f"unknown canonical form {target!r}")
    nrm = np.linalg.norm(ts[c])
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("zero-norm state cannot be canonicalized")
    ts[c] = ts[c] / nrm
    return MpsState(ts, target, center if target == MIXED else None)


def isometry_residual(t: np.ndarray, side: str) -> float:
    l, d, r = t.shape
    if side == LEFT:
        m = t.reshape(l * d, r)
        return float(np.abs(m.conj().T @ m - np.eye(r)).max())
    m = t.reshape(l, d * r)
    return float(np.abs(m @ m.conj().T - np.eye(l)).max())


# -- contractions -------------------------------------------------------------

def transfer(e: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Advance the overlap environment e[a, b] through bra tensor x and ket tensor y."""
    t = np.tensordot(e, y, axes=(1, 0))                      # (a, i, d)
    return np.tensordot(x.conj(), t, axes=([0, 1], [0, 1]))  # (c, d)


def overlap(a: MpsState, b: MpsState) -> complex:
    """<a|b>."""
    if a.L != b.L or a.d != b.d:
        raise ValueError("overlap needs matching L and d")
    e = np.ones((1, 1), complex)
    for x, y in zip(a.tensors, b.tensors):
        e = transfer(e, x, y)
    return complex(e[0, 0])


def norm(state: MpsState) -> float:
    return float(np.sqrt(abs(overlap(state, state))))


def expectation_mpo(state: MpsState, op: Mpo) -> complex:
    if state.L != op.L or state.d != op.d:
        raise ValueError("MPO and MPS dimensions differ")
    e = np.ones((1, 1, 1), complex)
    for a, w in zip(state.tensors, op.tensors):
        t = np.tensordot(e, a.conj(), axes=(0, 0))               # (w, b, i, c)
        t = np.tensordot(t, w, axes=([0, 2], [0, 2]))            # (b, c, v, j)
        e = np.tensordot(t, a, axes=([0, 3], [0, 1]))            # (c, v, d)
    return complex(e[0, 0, 0])


def expect_product(state: MpsState, ops: dict[int, np.ndarray]) -> complex:
    """<psi| prod_j O_j |psi> for single-site operators O_j."""
    e = np.ones((1, 1), complex)
    for j, a in enumerate(state.tensors):
        o = ops.get(j)
        b = a if o is None else np.einsum("ij,ajb->aib", o, a)
        e = transfer(e, a, b)
    return complex(e[0, 0])


def apply_mpo(op: Mpo, state: MpsState, chi_max: int, tol: float = 0.0):
    """Compress O|psi> to chi_max; returns (normalized state, norm of O|psi>).

    The returned pair satisfies O|psi> ~= norm * state.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    if state.L != op.L or state.d != op.d:
        raise ValueError("MPO and MPS dimensions differ")
    ts = []
    for a, w in zip(state.tensors, op.tensors):
        t = np.einsum("wvij,ajb->awibv", w, a)
        s = t.shape
        ts.append(t.reshape(s[0] * s[1], s[2], s[3] * s[4]))
    ts = _left_sweep(ts, state.L - 1)
    nrm = float(np.linalg.norm(ts[-1]))
    if nrm < 1e-300:
        zero = [np.zeros((1, state.d, 1), complex) for _ in range(state.L)]
        zero[0][0, 0, 0] = 1.0
        return MpsState(zero, LEFT), 0.0
    ts[-1] = ts[-1] / nrm
    out = _svd_truncate_from_right(ts, chi_max)
    return out, nrm


def _svd_truncate_from_right(ts: list, chi_max: int) -> MpsState:
    """Input left-canonical tensors; output right-canonical truncated state."""
    ts = list(ts)
    for j in range(len(ts) - 1, 0, -1):
        l, d, r = ts[j].shape
        u, s, vh = np.linalg.svd(ts[j].reshape(l, d * r), full_matrices=False)
        k = _keep(s, chi_max)
        ts[j] = vh[:k].reshape(k, d, r)
        ts[j - 1] = np.tensordot(ts[j - 1], u[:, :k] * s[None, :k], axes=(2, 0))
    nrm = np.linalg.norm(ts[0])
    ts[0] = ts[0] / nrm
    return MpsState(ts, RIGHT)


def compress(state: MpsState, chi_max: int, tol: float = 1e-10) -> MpsState:
    """SVD compression to bond dimension chi_max.

    Raises TargetUnreachable if the fidelity loss 1-|<out|in>|^2 exceeds tol.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    src = canonicalize(state, LEFT)
    out = _svd_truncate_from_right([np.array(t) for t in src.tensors], chi_max)
    loss = fidelity_loss(out, src)
    if loss > tol:
        raise TargetUnreachable(loss, tol, chi_max)
    return out


def fidelity_loss(a: MpsState, b: MpsState) -> float:
    f = abs(overlap(a, b)) ** 2 / (abs(overlap(a, a)) * abs(overlap(b, b)))
    return float(max(0.0, 1.0 - f))


# -- operator builders -------------------------------------------------------

def identity_mpo(L: int, d: int) -> Mpo:
    w = np.eye(d, dtype=complex)[None, None]
    return Mpo([w] * L)


def local_sum_mpo(local_ops: Sequence[np.ndarray]) -> Mpo:
    """Bond-dimension-2 MPO for sum_j O_j."""
    L = len(local_ops)
    d = local_ops[0].shape[0]
    eye = np.eye(d)
    if L == 1:
        return Mpo([np.asarray(local_ops[0], complex)[None, None]])
    ts = []
    for j, o in enumerate(local_ops):
        w = np.zeros((2, 2, d, d), complex)
        w[0, 0] = eye
        w[0, 1] = o
        w[1, 1] = eye
        if j == 0:
            w = w[:1]
        if j == L - 1:
            w = w[:, 1:]
        ts.append(w)
    return Mpo(ts)


def field_mpo(h: Sequence[float], S: float = 0.5, alpha: str = "z") -> Mpo:
    op = spin_matrices(S)[alpha]
    return local_sum_mpo([hj * op for hj in h])


def fourier_spin_mpo(L: int, S: float, alpha: str, k: int) -> Mpo:
    """MPO of sum_j exp(2 pi i j k / L) S^alpha_j."""
    if not 0 <= k < L:
        raise ValueError("k must satisfy 0 <= k < L")
    op = spin_matrices(S)[alpha]
    return local_sum_mpo([np.exp(2j * np.pi * j * k / L) * op for j in range(L)])


def onsite_term(p: ModelParams) -> np.ndarray:
    s = spin_matrices(p.S)
    h = p.D * s["z"] @ s["z"]
    for b, a in zip(p.B, "xyz"):
        h = h + p.mu_B * p.g * b * s[a]
    return h


def heisenberg_mpo(p: ModelParams) -> Mpo:
    """J sum_<ij> S_i.S_j + D sum (S^z)^2 + mu_B g sum B.S.

    The ring bond (L-1, 0) is carried through three extra MPO channels, so the
    periodic operator has bond dimension 8 (5 for open chains and L=2).
    """
    s = spin_matrices(p.S)
    d = p.d
    eye = np.eye(d, dtype=complex)
    h = onsite_term(p)
    ring = p.periodic and p.L > 2
    w = 8 if ring else 5
    done = w - 1
    ts = []
    for j in range(p.L):
        m = np.zeros((w, w, d, d), complex)
        m[0, 0] = eye
        m[done, done] = eye
        m[0, done] = h
        for a, ax in enumerate("xyz"):
            m[0, 1 + a] = s[ax]
            m[1 + a, done] = p.J * s[ax]
            if ring:
                if j == 0:
                    m[0, 4 + a] = s[ax]
                elif j == p.L - 1:
                    m[4 + a, done] = p.J * s[ax]
                else:
                    m[4 + a, 4 + a] = eye
        if j == 0:
            m = m[:1]
        if j == p.L - 1:
            m = m[:, done:]
        ts.append(m)
    return Mpo(ts)


def mpo_product(a: Mpo, b: Mpo) -> Mpo:
    """MPO of the operator product a @ b."""
    ts = []
    for x, y in zip(a.tensors, b.tensors):
        t = np.einsum("abij,cdjk->acbdik", x, y)
        s = t.shape
        ts.append(t.reshape(s[0] * s[1], s[2] * s[3], s[4], s[5]))
    return Mpo(ts)


def mpo_add(a: Mpo, b: Mpo, cb: complex = 1.0) -> Mpo:
    """MPO of a + cb * b (direct-sum bonds)."""
    L = a.L
    if L == 1:
        return Mpo([a.tensors[0] + cb * b.tensors[0]])
    ts = []
    for j, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        if j == 0:
            t = np.concatenate([x, cb * y], axis=1)
        elif j == L - 1:
            t = np.concatenate([x, y], axis=0)
        else:
            t = np.zeros((x.shape[0] + y.shape[0], x.shape[1] + y.shape[1]) + x.shape[2:], complex)
            t[: x.shape[0], : x.shape[1]] = x
            t[x.shape[0]:, x.shape[1]:] = y
        ts.append(t)
    return Mpo(ts)


def dense_spin_op(L: int, S: float, ops: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker product of single-site operators (identity elsewhere)."""
    d = int(round(2 * S + 1))
    out = np.ones((1, 1), complex)
    for j in range(L):
        out = np.kron(out, ops.get(j, np.eye(d)))
    return out


# -- serialization -------------------------------------------------------------

def _pack(t: np.ndarray) -> list[float]:
    flat = np.ascontiguousarray(t).reshape(-1)
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out.tolist()


def _unpack(vals: list[float], shape) -> np.ndarray:
    v = np.asarray(vals, dtype=float)
    return (v[0::2] + 1j * v[1::2]).reshape(shape)


def mps_to_dict(state: MpsState) -> dict:
    return {
        "L": state.L,
        "d": state.d,
        "chi_per_bond": state.bond_dims,
        "canonical_form": state.form,
        "center": state.center,
        "tensors": [_pack(t) for t in state.tensors],
    }


def mps_from_dict(obj: dict) -> MpsState:
    L, d = int(obj["L"]), int(obj["d"])
    dims = [1] + list(obj["chi_per_bond"]) + [1]
    if len(dims) != L + 1:
        raise ValueError("chi_per_bond must list L-1 bonds")
    ts = [_unpack(obj["tensors"][j], (dims[j], d, dims[j + 1])) for j in range(L)]
    return MpsState(ts, obj.get("canonical_form"), obj.get("center"))


def mps_to_json(state: MpsState, **meta) -> str:
    obj = mps_to_dict(state)
    if meta:
        obj["metadata"] = meta
    return json.dumps(obj)


def mps_from_json(text: str) -> MpsState:
    return mps_from_dict(json.loads(text))


def mpo_to_json(op: Mpo) -> str:
    return json.dumps({
        "L": op.L,
        "d": op.d,
        "chi_per_bond": op.bond_dims,
        "tensors": [_pack(t) for t in op.tensors],
    })


def mpo_from_json(text: str) -> Mpo:
    obj = json.loads(text)
    L, d = int(obj["L"]), int(obj["d"])
    dims = [1] + list(obj["chi_per_bond"]) + [1]
    return Mpo([_unpack(obj["tensors"][j], (dims[j], dims[j + 1], d, d)) for j in range(L)])
