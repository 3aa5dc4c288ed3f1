"""Measurement protocols on sequentially prepared MPS circuits.

Register layout per protocol is fixed by the builders below; every builder
returns a GateProgram whose record keys are documented in its docstring.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .compiler import (
    CompilerConfig, GateSequence, compile_isometry, complete_unitary, isometry_from_tensor,
    register_size,
)
from .mps import (
    LEFT, RIGHT, ModelParams, MpsState, canonicalize, onsite_term, overlap, spin_matrices,
    transfer,
)
from .sim import (
    Estimate, GateProgram, Measure, PostSelect, Reset, ShotTable, Unitary, mean_stderr, run_shots,
)

log = logging.getLogger(__name__)

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def pauli_string_matrix(letters: str) -> np.ndarray:
    return reduce(np.kron, [PAULIS[c] for c in letters], np.eye(1, dtype=complex))


def controlled(u: np.ndarray) -> np.ndarray:
    n = u.shape[0]
    out = np.eye(2 * n, dtype=complex)
    out[n:, n:] = u
    return out


# -- Pauli decompositions ----------------------------------------------------------

@dataclass
class PauliTerm:
    coefficient: complex
    factors: str


@dataclass
class PauliDecomposition:
    terms: list

    def matrix(self) -> np.ndarray:
        return sum(t.coefficient * pauli_string_matrix(t.factors) for t in self.terms)


def pauli_decompose(op: np.ndarray, tol: float = 1e-14) -> PauliDecomposition:
    """Expansion of a 2^n x 2^n matrix over Pauli strings (first letter = first qubit)."""
    op = np.asarray(op, complex)
    n = int(round(np.log2(op.shape[0])))
    if 2 ** n != op.shape[0]:
        raise ValueError("dimension must be a power of two")
    terms = []
    for letters in itertools.product("IXYZ", repeat=n):
        s = "".join(letters)
        c = np.trace(pauli_string_matrix(s) @ op) / 2 ** n
        if abs(c) > tol:
            c = complex(c)
            if abs(c.imag) < tol:
                c = complex(c.real, 0.0)
            terms.append(PauliTerm(c, s))
    return PauliDecomposition(terms)


def pauli_decompose_spin(alpha: str, S: float) -> PauliDecomposition:
    """S^alpha as a linear combination of Pauli strings on the log2(2S+1) site qubits."""
    if S not in (0.5, 1.5):
        raise ValueError(f"unsupported spin {S}; only 1/2 and 3/2 map onto whole qubits here")
    return pauli_decompose(spin_matrices(S)[alpha])


# -- prepared states ---------------------------------------------------------------

@dataclass
class SiteCircuit:
    """One site's embedding unitary on [physical qubits, bond qubits]."""
    unitary: np.ndarray
    sequence: GateSequence | None = None
    cost: float = 0.0

    def ops(self, qubits: list[int], adjoint: bool = False, label: str = "",
            fuse: bool = True) -> list[Unitary]:
        """Unitary ops on the given global qubits; fuse=True merges a compiled
        sequence into its (identical) product matrix."""
        if self.sequence is None or fuse:
            u = self.unitary.conj().T if adjoint else self.unitary
            return [Unitary(u, tuple(qubits), label)]
        gates = reversed(self.sequence.gates) if adjoint else self.sequence.gates
        out = []
        for g in gates:
            m = g.matrix()
            out.append(Unitary(m.conj().T if adjoint else m, tuple(qubits[q] for q in g.qubits), g.kind))
        return out

    def gate_counts(self) -> dict:
        if self.sequence is None:
            return {"dense": 1}
        return self.sequence.gate_counts()


@dataclass
class PreparedState:
    L: int
    d: int
    chi: int
    left: list | None
    right: list | None
    source: str = ""
    real: bool = False
    _replays: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_phys(self) -> int:
        return int(round(np.log2(self.d)))

    @property
    def n_bond(self) -> int:
        return int(round(np.log2(self.chi)))

    def sites(self, side: str) -> list:
        s = self.left if side == LEFT else self.right
        if s is None:
            raise ValueError(f"no {side} embeddings for state {self.source!r}")
        return s

    def costs(self, side: str) -> list[float]:
        return [c.cost for c in self.sites(side)]

    def max_cost(self) -> float:
        return max(c.cost for side in (self.left, self.right) if side for c in side)

    @classmethod
    def exact(cls, state: MpsState, chi: int | None = None, source: str = "",
              sides=(LEFT, RIGHT)) -> "PreparedState":
        chi = chi or register_size(state.chi)
        out = {}
        for side in (LEFT, RIGHT):
            if side not in sides:
                out[side] = None
                continue
            ts = canonicalize(state, side).tensors
            out[side] = [SiteCircuit(complete_unitary(isometry_from_tensor(t, side, chi, j).matrix))
                         for j, t in enumerate(ts)]
        real = all(not np.iscomplexobj(t) or not np.any(t.imag) for t in state.tensors)
        return cls(state.L, state.d, chi, out[LEFT], out[RIGHT], source, real)

    @classmethod
    def compiled(cls, state: MpsState, cfg: CompilerConfig | None = None, chi: int | None = None,
                 source: str = "", sides=(LEFT, RIGHT)) -> "PreparedState":
        cfg = cfg or CompilerConfig()
        chi = chi or register_size(state.chi)
        out = {}
        for side in (LEFT, RIGHT):
            if side not in sides:
                out[side] = None
                continue
            ts = canonicalize(state, side).tensors
            sites = []
            for j, t in enumerate(ts):
                seq = compile_isometry(isometry_from_tensor(t, side, chi, j), cfg)
                sites.append(SiteCircuit(seq.unitary(), seq, seq.achieved_cost))
            out[side] = sites
        real = all(not np.any(np.imag(t)) for t in state.tensors)
        return cls(state.L, state.d, chi, out[LEFT], out[RIGHT], source, real)

    def replay(self, side: str = LEFT) -> MpsState:
        """Unnormalized MPS actually produced by the circuits after bond post-selection."""
        if side in self._replays:
            return self._replays[side]
        chi, d = self.chi, self.d
        ts = []
        for j, sc in enumerate(self.sites(side)):
            u = sc.unitary.reshape(d, chi, d, chi)[:, :, 0, :]      # (i, out bond, in bond)
            if side == LEFT:
                t = u.transpose(1, 0, 2)                              # A[a, i, b] = U[i a, 0 b]
            else:
                t = u.transpose(2, 0, 1)                              # A[a, i, b] = U[i b, 0 a]
            if j == 0:
                t = t[:1]
            if j == self.L - 1:
                t = t[:, :, :1]
            ts.append(t)
        self._replays[side] = MpsState(ts)
        return self._replays[side]

    def to_dict(self) -> dict:
        def enc(sites):
            if sites is None:
                return None
            out = []
            for sc in sites:
                if sc.sequence is not None:
                    out.append({"sequence": json.loads(sc.sequence.to_json())})
                else:
                    m = sc.unitary.reshape(-1)
                    out.append({"unitary": np.stack([m.real, m.imag], 1).reshape(-1).tolist()})
            return out
        return {"L": self.L, "d": self.d, "chi": self.chi, "source": self.source, "real": self.real,
                "left": enc(self.left), "right": enc(self.right)}

    @classmethod
    def from_dict(cls, obj: dict) -> "PreparedState":
        n = obj["d"] * obj["chi"]

        def dec(sites):
            if sites is None:
                return None
            out = []
            for s in sites:
                if "sequence" in s:
                    seq = GateSequence.from_json(json.dumps(s["sequence"]))
                    out.append(SiteCircuit(seq.unitary(), seq, seq.achieved_cost))
                else:
                    v = np.asarray(s["unitary"], float)
                    out.append(SiteCircuit((v[0::2] + 1j * v[1::2]).reshape(n, n)))
            return out
        return cls(obj["L"], obj["d"], obj["chi"], dec(obj["left"]), dec(obj["right"]),
                   obj.get("source", ""), obj.get("real", False))


def _qubits(start: int, n: int) -> list[int]:
    return list(range(start, start + n))


def _measure_register(qs: list[int], prefix: str, postselect: bool = True) -> list:
    ops = []
    for k, q in enumerate(qs):
        ops.append(Measure(q, "Z", f"{prefix}{k}"))
        if postselect:
            ops.append(PostSelect(f"{prefix}{k}", 0))
    return ops


def program_gate_counts(prog: GateProgram) -> dict:
    out = {"1q": 0, "2q": 0, "multi": 0, "measure": 0, "reset": 0}
    for op in prog.ops:
        if isinstance(op, Unitary):
            n = len(op.qubits)
            out["1q" if n == 1 else "2q" if n == 2 else "multi"] += 1
        elif isinstance(op, Measure):
            out["measure"] += 1
        elif isinstance(op, Reset):
            out["reset"] += 1
    return out


# -- sequential preparation and static observables ------------------------------------

def sequential_prep_program(s: PreparedState, basis_plan) -> GateProgram:
    """Prepare s site by site (L-1 down to 0), measuring each site's qubits in its basis.

    basis_plan[j] is a string with one basis letter per physical qubit of site j.
    Record keys: "s{j}q{k}" for physical qubits, "bond{k}" for the final bond register
    (post-selected on 0).
    """
    if len(basis_plan) != s.L:
        raise ValueError("basis plan must have one entry per site")
    phys = _qubits(0, s.n_phys)
    bond = _qubits(s.n_phys, s.n_bond)
    ops = []
    for j in range(s.L - 1, -1, -1):
        letters = basis_plan[j]
        if len(letters) != s.n_phys:
            raise ValueError(f"site {j}: need {s.n_phys} basis letters")
        ops += s.sites(LEFT)[j].ops(phys + bond, label=f"UL{j}")
        for k, q in enumerate(phys):
            ops.append(Measure(q, letters[k], f"s{j}q{k}"))
            ops.append(Reset(q))
    ops += _measure_register(bond, "bond")
    roles = ["phys"] * s.n_phys + ["bond"] * s.n_bond
    return GateProgram(s.n_phys + s.n_bond, ops, roles)


def spin_half_plans(L: int) -> dict[str, list[str]]:
    return {a: [a] * L for a in "XYZ"}


def spin_three_half_plans(L: int) -> dict[str, list[str]]:
    """Nine basis plans covering every Pauli product in the nearest-neighbour spin-3/2 energy.

    S^x needs the per-site bases XX and YY; S^y needs XY and YX; S^z needs ZZ.
    For each family the uniform and the two alternating assignments cover all
    basis pairs on every bond of an even ring.
    """
    if L % 2 and L > 2:
        raise ValueError("alternating plans need an even number of sites")
    plans = {}
    for a, b in (("XX", "YY"), ("XY", "YX")):
        plans[a] = [a] * L
        plans[b] = [b] * L
        plans[f"{a}/{b}"] = [a if j % 2 == 0 else b for j in range(L)]
        plans[f"{b}/{a}"] = [b if j % 2 == 0 else a for j in range(L)]
    plans["ZZ"] = ["ZZ"] * L
    return plans


@dataclass
class ObservableTerm:
    """coefficient * product of Pauli letters on (site, qubit) positions."""
    coefficient: float
    factors: dict


def _site_terms(op: np.ndarray, site: int) -> list[tuple[complex, dict]]:
    out = []
    for t in pauli_decompose(op).terms:
        out.append((t.coefficient, {(site, k): c for k, c in enumerate(t.factors) if c != "I"}))
    return out


def hamiltonian_terms(p: ModelParams) -> tuple[float, list[ObservableTerm]]:
    """Constant offset and Pauli-product terms of the ring Hamiltonian."""
    sm = spin_matrices(p.S)
    const = 0.0
    acc: dict = {}

    def add(c, f):
        key = tuple(sorted(f.items()))
        acc[key] = acc.get(key, 0.0) + c

    for i, j in p.bonds():
        for a in "xyz":
            for ci, fi in _site_terms(sm[a], i):
                for cj, fj in _site_terms(sm[a], j):
                    add(p.J * ci * cj, {**fi, **fj})
    loc = onsite_term(p)
    for j in range(p.L):
        for c, f in _site_terms(loc, j):
            if f:
                add(c, f)
            else:
                const += c.real
    terms = []
    for key, c in acc.items():
        if abs(c) < 1e-15:
            continue
        if abs(c.imag) > 1e-12:
            raise ValueError("non-Hermitian term")
        terms.append(ObservableTerm(float(c.real), dict(key)))
    return const, terms


def _measurable(term: ObservableTerm, plan) -> bool:
    return all(plan[s][k] == c for (s, k), c in term.factors.items())


def assign_terms(terms: list[ObservableTerm], plans: dict) -> dict[str, list[ObservableTerm]]:
    """Give every term to the first plan able to measure it."""
    out = {name: [] for name in plans}
    for t in terms:
        for name, plan in plans.items():
            if _measurable(t, plan):
                out[name].append(t)
                break
        else:
            raise ValueError(f"no plan measures term {t.factors}")
    return out


def per_shot_values(table: ShotTable, terms: list[ObservableTerm]) -> np.ndarray:
    cols = table.columns()
    n = table.n_accepted
    vals = np.zeros(n)
    for t in terms:
        v = np.full(n, t.coefficient)
        for (s, k) in t.factors:
            v = v * (1 - 2 * cols[f"s{s}q{k}"].astype(float))
        vals += v
    return vals


def estimate_observable(tables: dict, plans: dict, const: float, terms: list) -> Estimate:
    missing = [k for k in plans if k not in tables]
    if missing:
        raise KeyError(f"missing basis tables: {missing}")
    parts = assign_terms(terms, plans)
    mean, var, n = const, 0.0, 0
    for name, ts in parts.items():
        if not ts:
            continue
        e = mean_stderr(per_shot_values(tables[name], ts))
        mean += e.mean
        var += e.stderr ** 2
        n += e.n
    return Estimate(mean, float(np.sqrt(var)), n)


def estimate_energy_spin_half(tables: dict, p: ModelParams) -> Estimate:
    if p.S != 0.5:
        raise ValueError("spin-1/2 estimator needs S=1/2")
    const, terms = hamiltonian_terms(p)
    return estimate_observable(tables, spin_half_plans(p.L), const, terms)


def estimate_energy_spin_three_half(tables: dict, p: ModelParams) -> Estimate:
    if p.S != 1.5:
        raise ValueError("spin-3/2 estimator needs S=3/2")
    const, terms = hamiltonian_terms(p)
    return estimate_observable(tables, spin_three_half_plans(p.L), const, terms)


def energy_plans(p: ModelParams) -> dict:
    return spin_half_plans(p.L) if p.S == 0.5 else spin_three_half_plans(p.L)


def measure_energy(s: PreparedState, p: ModelParams, n_shots: int, seed: int = 0) -> tuple[Estimate, dict]:
    """Run every basis plan of the energy estimator and combine."""
    plans = energy_plans(p)
    tables = {}
    for k, (name, plan) in enumerate(plans.items()):
        tables[name] = run_shots(sequential_prep_program(s, plan), n_shots, seed=seed + k)
    est = (estimate_energy_spin_half if p.S == 0.5 else estimate_energy_spin_three_half)(tables, p)
    return est, tables


def exact_observable(state: MpsState, const: float, terms: list[ObservableTerm], n_phys: int) -> float:
    """Classical value of a Pauli-product observable on a (possibly unnormalized) MPS."""
    from .mps import expect_product, norm
    nrm = norm(state) ** 2
    total = const
    for t in terms:
        by_site: dict = {}
        for (s, k), c in t.factors.items():
            by_site.setdefault(s, ["I"] * n_phys)[k] = c
        ops = {s: pauli_string_matrix("".join(v)) for s, v in by_site.items()}
        total += t.coefficient * expect_product(state, ops).real / nrm
    return float(total)


# -- adjoint overlap ------------------------------------------------------------------

def adjoint_overlap_program(a: PreparedState, b: PreparedState) -> GateProgram:
    """Prepare a with left unitaries while un-preparing b with right unitaries.

    Record keys "s{j}q{k}" (physical), "bonda{k}", "bondb{k}"; all post-selected on 0.
    """
    if (a.L, a.d) != (b.L, b.d):
        raise ValueError("states differ in length or local dimension")
    phys = _qubits(0, a.n_phys)
    ba = _qubits(a.n_phys, a.n_bond)
    bb = _qubits(a.n_phys + a.n_bond, b.n_bond)
    ops = []
    for j in range(a.L - 1, -1, -1):
        ops += a.sites(LEFT)[j].ops(phys + ba, label=f"UL{j}")
        ops += b.sites(RIGHT)[j].ops(phys + bb, adjoint=True, label=f"UR{j}+")
        for k, q in enumerate(phys):
            ops += [Measure(q, "Z", f"s{j}q{k}"), Reset(q), PostSelect(f"s{j}q{k}", 0)]
    ops += _measure_register(ba, "bonda") + _measure_register(bb, "bondb")
    roles = ["phys"] * a.n_phys + ["bond_a"] * a.n_bond + ["bond_b"] * b.n_bond
    return GateProgram(a.n_phys + a.n_bond + b.n_bond, ops, roles)


def binomial_estimate(k: int, n: int) -> tuple[float, float]:
    """Success fraction and its standard error; the error is floored at one count so
    that an all-fail or all-pass sample does not report zero uncertainty."""
    f = k / n
    q = min(max(f, 1 / n), 1 - 1 / n) if n > 1 else f
    return f, float(np.sqrt(q * (1 - q) / n))


def adjoint_overlap(a: PreparedState, b: PreparedState, n_shots: int, seed: int = 0) -> dict:
    """|<b|a>|^2 as the fraction of all-zero shots."""
    prog = adjoint_overlap_program(a, b)
    tab = run_shots(prog, n_shots, seed, prune=True)
    f, se = binomial_estimate(tab.n_accepted, tab.n_requested)
    return _result(f, se, tab, prog)


def _result(value, stderr, tab: ShotTable | None, prog: GateProgram | None, **extra) -> dict:
    out = {"value": float(np.real(value)), "stderr": float(stderr)}
    if tab is not None:
        out["acceptance_rate"] = tab.acceptance_rate
        out["n_shots"] = tab.n_requested
    if prog is not None:
        out["qubits_used"] = prog.n_qubits
        out["gate_counts"] = program_gate_counts(prog)
    out.update(extra)
    return out


# -- W_k register and the Fourier method ----------------------------------------------

def wk_tensors(L: int, k: int, side: str = LEFT) -> list[np.ndarray]:
    """Bond-dimension-2 MPS of (1/sqrt L) sum_j exp(2 pi i j k / L) |0..1_j..0>."""
    if not 0 <= k < L:
        raise ValueError("k out of range")
    th = 2 * np.pi * k / L
    ts = []
    for j in range(L):
        t = np.zeros((2, 2, 2), complex)
        ph = np.exp(1j * th * j)
        if side == LEFT:
            # right bond 1: excitation at or left of j
            t[0, 0, 0] = 1
            t[1, 0, 1] = np.sqrt(j / (j + 1))
            t[0, 1, 1] = ph / np.sqrt(j + 1)
        else:
            # left bond 1: excitation at or right of j
            t[0, 0, 0] = 1
            t[1, 0, 1] = np.sqrt((L - 1 - j) / (L - j))
            t[1, 1, 0] = ph / np.sqrt(L - j)
        ts.append(t)
    if L == 1:
        return [np.array([[[0], [1]]], complex)]
    if side == LEFT:
        ts[0] = ts[0][:1]
        ts[-1] = ts[-1][:, :, 1:]
    else:
        ts[0] = ts[0][1:]
        ts[-1] = ts[-1][:, :, :1]
    return ts


def wk_state(L: int, k: int) -> np.ndarray:
    v = np.zeros(2 ** L, complex)
    for j in range(L):
        v[1 << (L - 1 - j)] = np.exp(2j * np.pi * j * k / L) / np.sqrt(L)
    return v


def wk_embeddings(L: int, k: int) -> PreparedState:
    out = {}
    for side in (LEFT, RIGHT):
        out[side] = [SiteCircuit(complete_unitary(isometry_from_tensor(t, side, 2, j).matrix))
                     for j, t in enumerate(wk_tensors(L, k, side))]
    return PreparedState(L, 2, 2, out[LEFT], out[RIGHT], f"W_{k}", k == 0 or 2 * k == L)


def fourier_program(psi0: PreparedState, psip: PreparedState, alpha: str, k: int) -> GateProgram:
    """Fourier-MPO circuit for |<psi_p| S~^alpha_k |psi_0>|^2 (spin-1/2).

    Qubits: [phys, bond0..., bondp..., w_phys, w_bond_k, w_bond_0].
    Records: "s{j}q0" and "w{j}" per site, then bond registers; all post-selected on 0.
    """
    if psi0.d != 2 or psip.d != 2:
        raise ValueError("Fourier method implemented for spin-1/2")
    L = psi0.L
    phys = [0]
    b0 = _qubits(1, psi0.n_bond)
    bp = _qubits(1 + psi0.n_bond, psip.n_bond)
    base = 1 + psi0.n_bond + psip.n_bond
    wphys, wbk, wb0 = base, base + 1, base + 2
    wk = wk_embeddings(L, k)
    w0 = wk_embeddings(L, 0)
    cs = controlled(PAULIS[alpha.upper()])
    ops = []
    for j in range(L - 1, -1, -1):
        ops += psi0.sites(LEFT)[j].ops(phys + b0, label=f"UL{j}")
        ops += wk.sites(LEFT)[j].ops([wphys, wbk], label=f"WkL{j}")
        ops.append(Unitary(cs, (wphys, phys[0]), f"c{alpha}{j}"))
        ops += w0.sites(RIGHT)[j].ops([wphys, wb0], adjoint=True, label=f"W0R{j}+")
        ops += [Measure(wphys, "Z", f"w{j}"), Reset(wphys), PostSelect(f"w{j}", 0)]
        ops += psip.sites(RIGHT)[j].ops(phys + bp, adjoint=True, label=f"UR{j}+")
        ops += [Measure(phys[0], "Z", f"s{j}q0"), Reset(phys[0]), PostSelect(f"s{j}q0", 0)]
    ops += (_measure_register(b0, "bond0") + _measure_register(bp, "bondp")
            + _measure_register([wbk], "wbk") + _measure_register([wb0], "wb0"))
    roles = (["phys"] + ["bond_0"] * psi0.n_bond + ["bond_p"] * psip.n_bond
             + ["w_phys", "w_bond_k", "w_bond_0"])
    return GateProgram(base + 3, ops, roles)


def fourier_element(psi0: PreparedState, psip: PreparedState, alpha: str, k: int,
                    n_shots: int, seed: int = 0) -> dict:
    """|<psi_p|S~^alpha_k|psi_0>|^2 / L, with S~_k = sum_j exp(2 pi i j k / L) S_j.

    The all-zero probability is (2/L)^2 |<psi_p|S~_k|psi_0>|^2 (factor 1/2 from
    sigma = 2S, 1/L from the W register).  Dividing by L puts the values on the
    scale whose 1/L-normalized inverse transform gives O_{0j}.
    """
    prog = fourier_program(psi0, psip, alpha, k)
    tab = run_shots(prog, n_shots, seed, prune=True)
    frac, se = binomial_estimate(tab.n_accepted, tab.n_requested)
    L = psi0.L
    scale = L ** 2 / 4 / L
    return _result(frac * scale, se * scale, tab, prog, k=k)


def fourier_element_exact(psi0: PreparedState, psip: PreparedState, alpha: str, k: int) -> float:
    """Infinite-shot limit of fourier_element from the replayed circuit states."""
    a = psi0.replay(LEFT)
    b = psip.replay(RIGHT)
    amp = _fourier_amplitude(a, b, alpha, k)
    return float(abs(amp) ** 2 / psi0.L)


def _fourier_amplitude(a: MpsState, b: MpsState, alpha: str, k: int) -> complex:
    sm = spin_matrices(0.5)[alpha.lower()]
    L = a.L
    tot = 0j
    for j in range(L):
        tot += np.exp(2j * np.pi * j * k / L) * _sandwich(b, a, {j: sm})
    return tot


def _sandwich(bra: MpsState, ket: MpsState, ops: dict) -> complex:
    """<bra| prod_j ops[j] |ket> without normalization."""
    env = np.ones((1, 1), complex)
    for j, (x, y) in enumerate(zip(bra.tensors, ket.tensors)):
        if j in ops:
            y = np.einsum("st,atb->asb", ops[j], y)
        env = transfer(env, x, y)
    return complex(env[0, 0])


def reconstruct_dipole_fft(elements: dict, j: int, L: int | None = None) -> complex:
    """(1/L) sum_k exp(-2 pi i j k / L) elements[k]."""
    L = L if L is not None else len(elements)
    missing = [k for k in range(L) if k not in elements]
    if missing:
        raise KeyError(f"missing k values {missing}")
    ks = np.arange(L)
    v = np.array([elements[k] for k in ks], complex)
    return complex(np.sum(np.exp(-2j * np.pi * j * ks / L) * v) / L)


# -- generalized SWAP test ------------------------------------------------------------

def swap_test_program(psi0: PreparedState, psip: PreparedState, g1: tuple, g2: tuple,
                      part: str = "Re") -> GateProgram:
    """Hadamard test of V = G2_A SWAP_AB G1_A on |psi0>_A |psip>_B.

    g1, g2 are (site, unitary on that site's physical qubits) and act on register A.
    Qubits: [ancilla, A phys, A bond, B phys, B bond].  Records "anc" and the bond
    registers "bonda{k}", "bondb{k}" (post-selected on 0).  The ancilla reads
    Re M in the X basis and Im M in the Y basis, M = <psi0|G2|psip><psip|G1|psi0>.
    """
    if part not in ("Re", "Im"):
        raise ValueError("part must be 'Re' or 'Im'")
    if (psi0.L, psi0.d) != (psip.L, psip.d):
        raise ValueError("states differ in length or local dimension")
    nd = psi0.n_phys
    anc = 0
    pa = _qubits(1, nd)
    ba = _qubits(1 + nd, psi0.n_bond)
    pb = _qubits(1 + nd + psi0.n_bond, nd)
    bb = _qubits(1 + 2 * nd + psi0.n_bond, psip.n_bond)
    cswap = controlled(np.eye(4)[[0, 2, 1, 3]])
    ops = [Unitary(HADAMARD, (anc,), "H")]
    for j in range(psi0.L - 1, -1, -1):
        ops += psi0.sites(LEFT)[j].ops(pa + ba, label=f"A{j}")
        ops += psip.sites(LEFT)[j].ops(pb + bb, label=f"B{j}")
        if g1[0] == j:
            ops.append(Unitary(controlled(g1[1]), (anc, *pa), "cG1"))
        for qa, qb in zip(pa, pb):
            ops.append(Unitary(cswap, (anc, qa, qb), "cswap"))
        if g2[0] == j:
            ops.append(Unitary(controlled(g2[1]), (anc, *pa), "cG2"))
        for q in pa + pb:
            ops.append(Reset(q))
    ops += _measure_register(ba, "bonda") + _measure_register(bb, "bondb")
    ops.append(Measure(anc, "X" if part == "Re" else "Y", "anc"))
    roles = ["ancilla"] + ["phys_a"] * nd + ["bond_a"] * psi0.n_bond + ["phys_b"] * nd + ["bond_b"] * psip.n_bond
    return GateProgram(len(roles), ops, roles)


def _apply_site(state: MpsState, j: int, op: np.ndarray) -> MpsState:
    ts = list(state.tensors)
    ts[j] = np.einsum("st,atb->asb", op, ts[j])
    return MpsState(ts)


def swap_exact_marginals(psi0: PreparedState, psip: PreparedState, g1: tuple, g2: tuple):
    """(acceptance probability, M) of the SWAP-test circuit from the replayed states."""
    a = psi0.replay(LEFT)
    b = psip.replay(LEFT)
    na = overlap(a, a).real
    nb = overlap(b, b).real
    m = _sandwich(a, _apply_site(b, g2[0], g2[1]), {}) * _sandwich(b, _apply_site(a, g1[0], g1[1]), {})
    return na * nb, m / (na * nb)


def swap_test_element(psi0: PreparedState, psip: PreparedState, g1: tuple, g2: tuple,
                      part: str = "Re", n_shots: int = 5000, seed: int = 0,
                      mode: str = "trajectory") -> dict:
    """2 P(ancilla=0 | accepted) - 1 for the Re or Im part of M.

    mode="trajectory" simulates the full circuit shot by shot.  mode="marginal"
    computes the exact outcome distribution (reject, accept-0, accept-1) from
    the circuit's replayed states and samples it multinomially; this is the
    same distribution without materializing the 2 log2(chi) + 2 log2(d) + 1 qubit state.
    """
    nq = 1 + 2 * psi0.n_phys + psi0.n_bond + psip.n_bond
    if mode == "trajectory":
        prog = swap_test_program(psi0, psip, g1, g2, part)
        tab = run_shots(prog, n_shots, seed)
        if tab.n_accepted == 0:
            raise ValueError("no accepted shots")
        bit = tab.column("anc").astype(float)
        e = mean_stderr(1 - 2 * bit)
        return _result(e.mean, e.stderr, tab, prog, part=part, mode=mode)
    if mode != "marginal":
        raise ValueError(f"unknown mode {mode!r}")
    acc, m = swap_exact_marginals(psi0, psip, g1, g2)
    x = m.real if part == "Re" else m.imag
    probs = np.array([1 - acc, acc * (1 + x) / 2, acc * (1 - x) / 2]).clip(0)
    probs /= probs.sum()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    _, n0, n1 = rng.multinomial(n_shots, probs)
    n = n0 + n1
    if n == 0:
        raise ValueError("no accepted shots")
    v = (n0 - n1) / n
    se = np.sqrt(max(1 - v * v, 0.0) / (n - 1)) if n > 1 else 0.0
    return {"value": float(v), "stderr": float(se), "acceptance_rate": n / n_shots,
            "n_shots": n_shots, "qubits_used": nq, "part": part, "mode": mode}


def _y_parity(letters: str) -> int:
    return letters.count("Y") % 2


def dipole_element_general(psi0: PreparedState, psip: PreparedState, i: int, j: int,
                           alpha: str, beta: str, n_shots: int, seed: int = 0,
                           mode: str = "trajectory", skip_zero_parts: bool | None = None) -> dict:
    """O^{alpha beta}_{ij;p} = <0|S^a_i|p><p|S^b_j|0> recombined from SWAP tests over Pauli terms.

    With real states, each Pauli pair gives a purely real or purely imaginary M
    (odd total Y count means imaginary); the vanishing part is then not run.
    """
    S = (psi0.d - 1) / 2
    da = pauli_decompose_spin(alpha, S)
    db = pauli_decompose_spin(beta, S)
    if skip_zero_parts is None:
        skip_zero_parts = psi0.real and psip.real
    re = im = 0.0
    var_re = var_im = 0.0
    circuits = []
    ss = np.random.SeedSequence(seed)
    children = iter(ss.spawn(2 * len(da.terms) * len(db.terms)))
    for ta in da.terms:
        for tb in db.terms:
            c = ta.coefficient * np.conj(tb.coefficient)
            g1 = (j, pauli_string_matrix(tb.factors))
            g2 = (i, pauli_string_matrix(ta.factors))
            odd = (_y_parity(ta.factors) + _y_parity(tb.factors)) % 2
            vals = {}
            for part in ("Re", "Im"):
                child = next(children)
                if skip_zero_parts and (part == "Im") != bool(odd):
                    vals[part] = (0.0, 0.0)
                    continue
                r = swap_test_element(psi0, psip, g1, g2, part, n_shots,
                                      int(child.generate_state(1)[0]), mode)
                vals[part] = (r["value"], r["stderr"])
                circuits.append(r)
            mre, sre = vals["Re"]
            mim, sim_ = vals["Im"]
            z = c * complex(mre, mim)
            re += z.real
            im += z.imag
            var_re += (c.real * sre) ** 2 + (c.imag * sim_) ** 2
            var_im += (c.imag * sre) ** 2 + (c.real * sim_) ** 2
    return {"value": complex(re, im), "stderr_re": float(np.sqrt(var_re)),
            "stderr_im": float(np.sqrt(var_im)), "n_circuits": len(circuits)}


def hermiticity_gap(o_ab_ij: complex, o_ba_ji: complex) -> float:
    """|O^{ab}_{ij} - conj(O^{ba}_{ji})|; zero for exact data."""
    return abs(o_ab_ij - np.conj(o_ba_ji))


# -- JSON job interface ------------------------------------------------------------------

@dataclass
class ProtocolJob:
    protocol: str
    states: list
    n_shots: int
    seed: int = 0
    operator: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text: str) -> "ProtocolJob":
        o = json.loads(text)
        return cls(o["protocol"], list(o["states"]), int(o["n_shots"]), int(o.get("seed", 0)),
                   dict(o.get("operator", {})))


def run_job(job: ProtocolJob, registry: dict) -> dict:
    """Dispatch a job against prepared states looked up by id in registry."""
    st = [registry[s] for s in job.states]
    op = job.operator
    if job.protocol == "adjoint_overlap":
        return adjoint_overlap(st[0], st[1], job.n_shots, job.seed)
    if job.protocol == "fourier":
        return fourier_element(st[0], st[1], op.get("alpha", "x"), int(op["k"]), job.n_shots, job.seed)
    if job.protocol == "swap":
        g1 = (int(op["j"]), pauli_string_matrix(op.get("g1", "I" * st[0].n_phys)))
        g2 = (int(op["i"]), pauli_string_matrix(op.get("g2", "I" * st[0].n_phys)))
        return swap_test_element(st[0], st[1], g1, g2, op.get("part", "Re"), job.n_shots,
                                 job.seed, op.get("mode", "trajectory"))
    if job.protocol == "dipole":
        r = dipole_element_general(st[0], st[1], int(op["i"]), int(op["j"]), op["alpha"], op["beta"],
                                   job.n_shots, job.seed, op.get("mode", "trajectory"))
        return {"value": [r["value"].real, r["value"].imag],
                "stderr": [r["stderr_re"], r["stderr_im"]], "n_circuits": r["n_circuits"]}
    raise ValueError(f"unknown protocol {job.protocol!r}")
