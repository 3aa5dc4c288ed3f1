"""Unitary embeddings of canonical MPS tensors and greedy variational compilation."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from . import _kernels
from .mps import LEFT, RIGHT

log = logging.getLogger(__name__)

MAGIC = np.array(
    [[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]], dtype=complex
) / np.sqrt(2)
# the kernels compute basis @ (A x B) @ basis^dag
_KERNEL_BASIS = np.ascontiguousarray(MAGIC.conj().T)

KINDS = {"su2": 0, "so4": 1, "cnot_ry": 2}
N_PARAMS = {"su2": 3, "so4": 6, "cnot_ry": 2}
CNOTS_PER_GATE = {"su2": 0, "so4": 2, "cnot_ry": 1}

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


class BudgetExhausted(RuntimeError):
    pass


# -- gate matrices --------------------------------------------------------------

def su2_matrix(params) -> np.ndarray:
    """Rz(phi) Ry(theta) Rz(lam) for params (theta, phi, lam)."""
    th, ph, la = params
    c, s = np.cos(th / 2), np.sin(th / 2)
    return np.array([
        [np.exp(-0.5j * (ph + la)) * c, -np.exp(-0.5j * (ph - la)) * s],
        [np.exp(0.5j * (ph - la)) * s, np.exp(0.5j * (ph + la)) * c],
    ])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def so4_unitary(params) -> np.ndarray:
    """Real orthogonal 4x4 matrix M^dag (A x B) M from two SU(2) parameter triples."""
    p = np.asarray(params, float)
    k = np.kron(su2_matrix(p[:3]), su2_matrix(p[3:6]))
    return (MAGIC.conj().T @ k @ MAGIC).real


def cnot_ry_matrix(params) -> np.ndarray:
    return np.kron(ry_matrix(params[0]), ry_matrix(params[1])) @ CNOT


def gate_matrix(kind: str, params) -> np.ndarray:
    if kind == "su2":
        return su2_matrix(params)
    if kind == "so4":
        return so4_unitary(params).astype(complex)
    if kind == "cnot_ry":
        return cnot_ry_matrix(params)
    raise ValueError(f"unknown gate kind {kind!r}")


def apply_gate(mat: np.ndarray, qubits, n_qubits: int, v: np.ndarray) -> np.ndarray:
    """Apply a gate on the listed qubits to the leading axis of v (dim, ...)."""
    k = len(qubits)
    rest = v.shape[1:]
    t = v.reshape((2,) * n_qubits + rest)
    t = np.moveaxis(t, list(qubits), list(range(k)))
    s = t.shape
    t = (mat @ t.reshape(2 ** k, -1)).reshape(s)
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return t.reshape(v.shape)


@dataclass
class Gate:
    kind: str
    qubits: tuple
    params: np.ndarray

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.params)


@dataclass
class GateSequence:
    gates: list
    n_qubits: int
    achieved_cost: float = float("nan")
    budget_exhausted: bool = False
    history: list = field(default_factory=list)

    @property
    def cnot_count(self) -> int:
        return sum(CNOTS_PER_GATE[g.kind] for g in self.gates)

    @property
    def entangling_count(self) -> int:
        return sum(1 for g in self.gates if len(g.qubits) == 2)

    def gate_counts(self) -> dict:
        out = {k: 0 for k in KINDS}
        for g in self.gates:
            out[g.kind] += 1
        out["cnot"] = self.cnot_count
        return out

    def unitary(self) -> np.ndarray:
        u = np.eye(2 ** self.n_qubits, dtype=complex)
        for g in self.gates:
            u = apply_gate(g.matrix(), g.qubits, self.n_qubits, u)
        return u

    def ops(self) -> list[dict]:
        """Flat op list in the JSON circuit schema."""
        out = []
        for g in self.gates:
            p = [float(x) for x in g.params]
            if g.kind == "cnot_ry":
                out.append({"name": "cx", "qubits": list(g.qubits), "params": []})
                out.append({"name": "ry", "qubits": [g.qubits[0]], "params": [p[0]]})
                out.append({"name": "ry", "qubits": [g.qubits[1]], "params": [p[1]]})
            else:
                out.append({"name": g.kind, "qubits": list(g.qubits), "params": p})
        return out

    def to_json(self) -> str:
        return json.dumps({
            "n_qubits": self.n_qubits,
            "ops": [{"name": g.kind, "qubits": list(g.qubits),
                     "params": [float(x) for x in g.params]} for g in self.gates],
            "achieved_cost": self.achieved_cost,
        })

    @classmethod
    def from_json(cls, text: str) -> "GateSequence":
        obj = json.loads(text)
        gates = [Gate(o["name"], tuple(o["qubits"]), np.asarray(o["params"], float))
                 for o in obj["ops"]]
        return cls(gates, int(obj["n_qubits"]), float(obj.get("achieved_cost", "nan")))

    def to_text(self) -> str:
        lines = []
        for op in self.ops():
            ps = ", ".join(f"{x:.6f}" for x in op["params"])
            lines.append(f"{op['name']} {' '.join(map(str, op['qubits']))} [{ps}]")
        return "\n".join(lines)


# -- embeddings ---------------------------------------------------------------

@dataclass
class Isometry:
    """Target columns: matrix[(i * chi + a), b] for physical i and bond a.

    Qubit order of the embedding register is [physical..., bond...].
    """
    matrix: np.ndarray
    site: int = 0
    side: str = LEFT

    def __post_init__(self):
        m = np.asarray(self.matrix, complex)
        res = np.abs(m.conj().T @ m - np.eye(m.shape[1])).max()
        if res > 1e-8:
            raise ValueError(f"target columns are not orthonormal (residual {res:.2e})")
        self.matrix = m

    @property
    def n_qubits(self) -> int:
        n = int(round(np.log2(self.matrix.shape[0])))
        if 2 ** n != self.matrix.shape[0]:
            raise ValueError("target dimension must be a power of two")
        return n


def register_size(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


def isometry_from_tensor(t: np.ndarray, side: str = LEFT, chi: int | None = None,
                         site: int = 0) -> Isometry:
    """Columns of the preparation unitary fixed by a canonical tensor.

    Left:  <i a| U |0 b> = A[a, i, b]   (prepares sites right to left).
    Right: <i b| U |0 a> = A[a, i, b]   (U is the adjoint of the un-preparation unitary).
    """
    t = np.asarray(t, complex)
    l, d, r = t.shape
    if d & (d - 1):
        raise ValueError("physical dimension must be a power of two")
    if chi is None:
        chi = register_size(max(l, r))
    if side == LEFT:
        if l > chi or r > chi:
            raise ValueError("bond exceeds register size")
        m = np.zeros((d, chi, r), complex)
        m[:, :l, :] = t.transpose(1, 0, 2)
        m = m.reshape(d * chi, r)
    elif side == RIGHT:
        if l > chi or r > chi:
            raise ValueError("bond exceeds register size")
        m = np.zeros((d, chi, l), complex)
        m[:, :r, :] = t.transpose(1, 2, 0)
        m = m.reshape(d * chi, l)
    else:
        raise ValueError(f"unknown side {side!r}")
    return Isometry(m, site, side)


def complete_unitary(cols: np.ndarray) -> np.ndarray:
    cols = np.asarray(cols, complex)
    n, k = cols.shape
    if k == n:
        return cols.copy()
    comp = null_space(cols.conj().T)
    return np.concatenate([cols, comp], axis=1)


def embed(t: np.ndarray, side: str = LEFT, chi: int | None = None) -> np.ndarray:
    """(d chi) x (d chi) unitary whose leading columns reproduce the tensor."""
    iso = isometry_from_tensor(t, side, chi)
    return complete_unitary(iso.matrix)


def support_mask(tm: np.ndarray, delta: float = 1e-10, support: str = "nonzero") -> np.ndarray:
    """Entries the cost compares: |T_ab| > delta ("nonzero") or every entry of the target columns ("columns").

    With "nonzero", amplitude the circuit puts on entries where T vanishes is not penalized.
    """
    if support == "nonzero":
        return np.abs(tm) > delta
    if support == "columns":
        return np.ones(tm.shape, bool)
    raise ValueError(f"unknown support {support!r}")


def compilation_cost(u: np.ndarray, target: Isometry | np.ndarray, delta: float = 1e-10,
                     support: str = "nonzero") -> float:
    """sum over the support of |e^{i phi} U_ab - T_ab|^2 with the best global phase."""
    tm = target.matrix if isinstance(target, Isometry) else np.asarray(target, complex)
    uc = np.asarray(u)[:, : tm.shape[1]]
    mask = support_mask(tm, delta, support)
    z = np.vdot(tm[mask], uc[mask])
    su = float(np.sum(np.abs(uc[mask]) ** 2))
    st = float(np.sum(np.abs(tm[mask]) ** 2))
    return max(0.0, su + st - 2 * abs(z))


# -- greedy compiler --------------------------------------------------------------

@dataclass
class CompilerConfig:
    eps_C: float = 5e-4
    delta: float = 1e-10
    support: str = "nonzero"
    beam_width: int = 4
    max_gates: int = 120
    optimizer: str = "lbfgs"
    restarts: int = 3
    maxiter: int = 200
    menu: tuple = ("so4", "cnot_ry")
    seed: int = 0

    def __post_init__(self):
        if self.eps_C <= 0:
            raise ValueError("eps_C must be positive")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.optimizer not in ("lbfgs", "simplex"):
            raise ValueError("optimizer must be 'lbfgs' or 'simplex'")
        if self.support not in ("nonzero", "columns"):
            raise ValueError("support must be 'nonzero' or 'columns'")


class _Problem:
    def __init__(self, target: np.ndarray, delta: float, support: str = "nonzero"):
        self.T = np.ascontiguousarray(target, dtype=np.complex128)
        self.mask = support_mask(self.T, delta, support)
        self.nq = int(round(np.log2(self.T.shape[0])))

    def arrays(self, circ):
        kinds = np.array([KINDS[k] for k, _ in circ], np.int64)
        qs = np.array([(q[0], q[1] if len(q) > 1 else -1) for _, q in circ], np.int64)
        sizes = [N_PARAMS[k] for k, _ in circ]
        offs = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        return kinds, qs, offs

    def optimize(self, circ, x0, cfg: CompilerConfig, maxiter=None):
        kinds, qs, offs = self.arrays(circ)
        maxiter = maxiter or cfg.maxiter

        def fg(x):
            return _kernels.cost_grad(x, kinds, qs, offs, self.nq, self.T, self.mask, _KERNEL_BASIS)

        if cfg.optimizer == "lbfgs":
            r = minimize(fg, x0, jac=True, method="L-BFGS-B",
                         options=dict(maxiter=maxiter, gtol=1e-12, ftol=1e-15))
            return float(r.fun), r.x
        best = None
        rng = np.random.default_rng(abs(hash(tuple(np.round(x0, 6)))) % 2 ** 32)
        for rep in range(cfg.restarts):
            start = x0 if rep == 0 else x0 + rng.normal(0, 0.1, x0.shape)
            r = minimize(lambda x: fg(x)[0], start, method="Nelder-Mead",
                         options=dict(maxiter=maxiter * len(x0), xatol=1e-10, fatol=1e-14))
            if best is None or r.fun < best[0]:
                best = (float(r.fun), r.x)
        return best


def _menu(nq: int, kinds) -> list:
    out = []
    for kind in kinds:
        if kind == "so4":
            out += [("so4", p) for p in itertools.combinations(range(nq), 2)]
        elif kind == "cnot_ry":
            out += [("cnot_ry", p) for p in itertools.permutations(range(nq), 2)]
        else:
            raise ValueError(f"unknown entangling gate {kind!r}")
    return out


def _sequence(circ, x, nq, cost, exhausted, history) -> GateSequence:
    gates = []
    o = 0
    for kind, q in circ:
        n = N_PARAMS[kind]
        gates.append(Gate(kind, tuple(int(v) for v in q), np.array(x[o:o + n])))
        o += n
    return GateSequence(gates, nq, float(cost), exhausted, list(history))


def compile_isometry(target: Isometry, cfg: CompilerConfig | None = None) -> GateSequence:
    """Greedy beam search over appended entangling gates.

    Starts from one SU(2) per qubit; each round appends one entangling gate of
    every allowed kind and placement to every beam member, re-optimizes all
    parameters, and keeps the beam_width best candidates.
    """
    cfg = cfg or CompilerConfig()
    prob = _Problem(target.matrix, cfg.delta, cfg.support)
    nq = target.n_qubits
    rng = np.random.default_rng(cfg.seed)
    circ0 = [("su2", (q,)) for q in range(nq)]
    best0 = None
    for _ in range(max(1, cfg.restarts)):
        x0 = rng.uniform(-np.pi, np.pi, 3 * nq) if best0 else rng.uniform(-0.1, 0.1, 3 * nq)
        c, x = prob.optimize(circ0, x0, cfg, maxiter=500)
        if best0 is None or c < best0[0]:
            best0 = (c, circ0, x)
        if c < cfg.eps_C:
            break
    beam = [best0]
    history = [best0[0]]
    menu = _menu(nq, cfg.menu)
    n_ent = 0
    while beam[0][0] >= cfg.eps_C and n_ent < cfg.max_gates:
        cands = []
        for c0, circ, x in beam:
            for key, (kind, pair) in enumerate(menu):
                new = circ + [(kind, pair)]
                xn = np.concatenate([x, rng.uniform(-0.05, 0.05, N_PARAMS[kind])])
                c, xo = prob.optimize(new, xn, cfg)
                cands.append((c, KINDS[kind], pair, new, xo))
        cands.sort(key=lambda t: (t[0], t[1], t[2]))
        beam = [(c, circ, x) for c, _, _, circ, x in cands[: cfg.beam_width]]
        n_ent += 1
        history.append(beam[0][0])
        log.debug("round %d cost %.3e", n_ent, beam[0][0])
    cost, circ, x = beam[0]
    exhausted = cost >= cfg.eps_C
    if exhausted:
        log.warning("site %d: compilation budget exhausted at cost %.3e", target.site, cost)
    return _sequence(circ, x, nq, max(0.0, cost), exhausted, history)


def sequence_cost(seq: GateSequence, target: Isometry, delta: float = 1e-10,
                  support: str = "nonzero") -> float:
    return compilation_cost(seq.unitary(), target, delta, support)
