"""Shot-based statevector simulation with mid-circuit measurement, reset and post-selection.

Qubits that are known to be in |0> are kept out of the statevector; a unitary
acting on such a qubit only uses the matching input columns.  A reset removes
the qubit again, so live memory follows the number of simultaneously active
qubits rather than the register width.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

SHOT_BLOCK = 1024
MAX_BLOCK_AMPLITUDES = 1 << 18

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_DAG = np.diag([1, -1j])
BASIS_ROTATION = {
    "Z": None,
    "X": HADAMARD,
    "Y": HADAMARD @ S_DAG,
}


@dataclass
class Unitary:
    matrix: np.ndarray
    qubits: tuple
    label: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.qubits = tuple(int(q) for q in self.qubits)
        n = 2 ** len(self.qubits)
        if self.matrix.shape != (n, n):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {len(self.qubits)} qubits")


@dataclass
class Measure:
    qubit: int
    basis: str
    key: str

    def __post_init__(self):
        if self.basis not in BASIS_ROTATION:
            raise ValueError(f"unknown basis {self.basis!r}")


@dataclass
class Reset:
    qubit: int


@dataclass
class PostSelect:
    key: str
    outcome: int = 0


Op = Union[Unitary, Measure, Reset, PostSelect]


@dataclass
class GateProgram:
    n_qubits: int
    ops: list = field(default_factory=list)
    roles: list | None = None

    def validate(self, unitary_tol: float = 1e-10) -> None:
        keys = set()
        for op in self.ops:
            if isinstance(op, Unitary):
                for q in op.qubits:
                    if not 0 <= q < self.n_qubits:
                        raise ValueError(f"qubit {q} out of range")
                if len(set(op.qubits)) != len(op.qubits):
                    raise ValueError("repeated qubit in a unitary")
                m = op.matrix
                err = np.abs(m.conj().T @ m - np.eye(m.shape[0])).max()
                if err > unitary_tol:
                    raise ValueError(f"non-unitary matrix {op.label!r} (residual {err:.2e})")
            elif isinstance(op, Measure):
                if op.key in keys:
                    raise ValueError(f"duplicate record key {op.key!r}")
                keys.add(op.key)
            elif isinstance(op, PostSelect):
                if op.key not in keys:
                    raise ValueError(f"post-selection on unknown key {op.key!r}")
            elif isinstance(op, Reset):
                pass
            else:
                raise TypeError(f"unknown op {op!r}")

    @property
    def record_keys(self) -> list[str]:
        return [op.key for op in self.ops if isinstance(op, Measure)]

    def n_random_events(self) -> int:
        return sum(isinstance(op, (Measure, Reset)) for op in self.ops)

    def to_json(self) -> str:
        out = []
        for op in self.ops:
            if isinstance(op, Unitary):
                m = op.matrix.reshape(-1)
                out.append({"name": "unitary", "qubits": list(op.qubits), "params": [],
                            "label": op.label,
                            "matrix": np.stack([m.real, m.imag], 1).reshape(-1).tolist()})
            elif isinstance(op, Measure):
                out.append({"name": "measure", "qubits": [op.qubit], "params": [],
                            "basis": op.basis, "key": op.key})
            elif isinstance(op, Reset):
                out.append({"name": "reset", "qubits": [op.qubit], "params": []})
            else:
                out.append({"name": "postselect", "qubits": [], "params": [],
                            "key": op.key, "outcome": op.outcome})
        return json.dumps({"n_qubits": self.n_qubits, "roles": self.roles, "ops": out})

    @classmethod
    def from_json(cls, text: str) -> "GateProgram":
        obj = json.loads(text)
        ops = []
        for o in obj["ops"]:
            name = o["name"]
            if name == "unitary":
                v = np.asarray(o["matrix"], float)
                n = 2 ** len(o["qubits"])
                ops.append(Unitary((v[0::2] + 1j * v[1::2]).reshape(n, n), o["qubits"], o.get("label", "")))
            elif name == "measure":
                ops.append(Measure(o["qubits"][0], o["basis"], o["key"]))
            elif name == "reset":
                ops.append(Reset(o["qubits"][0]))
            elif name == "postselect":
                ops.append(PostSelect(o["key"], o.get("outcome", 0)))
            else:
                raise ValueError(f"unknown op name {name!r}")
        return cls(obj["n_qubits"], ops, obj.get("roles"))


@dataclass
class ShotTable:
    keys: list
    bits: np.ndarray          # (n_shots, n_keys) uint8
    accepted: np.ndarray      # (n_shots,) bool
    seed: int | None = None

    @property
    def n_requested(self) -> int:
        return self.bits.shape[0]

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / max(1, self.n_requested)

    def column(self, key: str, accepted_only: bool = True) -> np.ndarray:
        c = self.bits[:, self.keys.index(key)]
        return c[self.accepted] if accepted_only else c

    def columns(self, accepted_only: bool = True) -> dict:
        b = self.bits[self.accepted] if accepted_only else self.bits
        return {k: b[:, i] for i, k in enumerate(self.keys)}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot", *self.keys, "accepted"])
        for i in range(self.n_requested):
            w.writerow([i, *self.bits[i].tolist(), int(self.accepted[i])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "ShotTable":
        rows = list(csv.reader(io.StringIO(text)))
        keys = rows[0][1:-1]
        data = np.array([[int(x) for x in r[1:]] for r in rows[1:]], dtype=np.int64)
        if data.size == 0:
            data = np.zeros((0, len(keys) + 1), np.int64)
        return cls(keys, data[:, :-1].astype(np.uint8), data[:, -1].astype(bool))


class _Batch:
    """Statevectors of a batch of shots over the currently active qubits."""

    def __init__(self, n: int):
        self.psi = np.ones((n,), dtype=complex)
        self.active: list[int] = []

    def _to_back(self, qs: list[int]):
        axes = [1 + self.active.index(q) for q in qs]
        rest = [a for a in range(1, self.psi.ndim) if a not in axes]
        perm = [0] + rest + axes
        psi = self.psi.transpose(perm) if perm != list(range(self.psi.ndim)) else self.psi
        rest_q = [self.active[a - 1] for a in rest]
        return psi, rest_q

    def apply(self, mat: np.ndarray, qubits: tuple):
        k = len(qubits)
        act = [q for q in qubits if q in self.active]
        g = mat.reshape((2,) * (2 * k))
        idx = tuple([slice(None)] * k + [slice(None) if q in self.active else 0 for q in qubits])
        g = g[idx].reshape(2 ** k, 2 ** len(act))
        psi, rest_q = self._to_back(act)
        n = psi.shape[0]
        lead = psi.shape[: 1 + len(rest_q)]
        out = psi.reshape(-1, 2 ** len(act)) @ g.T
        self.psi = out.reshape(lead + (2,) * k)
        self.active = rest_q + list(qubits)

    def probabilities_one(self, q: int) -> np.ndarray:
        if q not in self.active:
            return np.zeros(self.psi.shape[0]), np.sum(np.abs(self.psi.reshape(self.psi.shape[0], -1)) ** 2, axis=1)
        a = 1 + self.active.index(q)
        w = np.abs(self.psi) ** 2
        tot = w.reshape(w.shape[0], -1).sum(axis=1)
        p1 = np.take(w, 1, axis=a).reshape(w.shape[0], -1).sum(axis=1)
        return p1, tot

    def sample(self, q: int, u: np.ndarray, drop: bool) -> np.ndarray:
        p1, tot = self.probabilities_one(q)
        if np.any(tot <= 0):
            raise FloatingPointError("measurement on a zero-norm branch")
        out = (u < p1 / tot).astype(np.uint8)
        if q not in self.active:
            return out
        a = 1 + self.active.index(q)
        n = self.psi.shape[0]
        moved = np.moveaxis(self.psi, a, -1).reshape(n, -1, 2)
        kept = moved[np.arange(n), :, out]  # (n, rest)
        norm = np.sqrt(np.sum(np.abs(kept) ** 2, axis=1))
        kept = kept / norm[:, None]
        rest_shape = tuple(np.delete(np.array(self.psi.shape), [0, a]))
        if drop:
            self.psi = kept.reshape((n,) + rest_shape)
            self.active.remove(q)
        else:
            new = np.zeros_like(moved)
            new[np.arange(n), :, out] = kept
            self.psi = np.moveaxis(new.reshape((n,) + rest_shape + (2,)), -1, a)
        return out


def _run_block(program: GateProgram, u: np.ndarray, key_index: dict, prune: bool):
    n = u.shape[1]
    batch = _Batch(n)
    bits = np.zeros((n, len(key_index)), np.uint8)
    accepted = np.ones(n, bool)
    alive = np.arange(n)
    ops = program.ops
    ev = 0
    i = 0
    while i < len(ops):
        op = ops[i]
        if isinstance(op, Unitary):
            batch.apply(op.matrix, op.qubits)
        elif isinstance(op, Measure):
            rot = BASIS_ROTATION[op.basis]
            if rot is not None:
                batch.apply(rot, (op.qubit,))
            # a reset right after the measurement is deterministic: collapse and drop at once
            fused = i + 1 < len(ops) and isinstance(ops[i + 1], Reset) and ops[i + 1].qubit == op.qubit
            bits[alive, key_index[op.key]] = batch.sample(op.qubit, u[ev, alive], drop=fused)
            ev += 1
            if fused:
                ev += 1
                i += 1
        elif isinstance(op, Reset):
            batch.sample(op.qubit, u[ev, alive], drop=True)
            ev += 1
        elif isinstance(op, PostSelect):
            ok = bits[alive, key_index[op.key]] == op.outcome
            accepted[alive[~ok]] = False
            if prune and not ok.all():
                batch.psi = batch.psi[ok]
                alive = alive[ok]
                if alive.size == 0:
                    break
        i += 1
    return bits, accepted


def block_uniforms(seed: int, block: int, n_events: int, n: int = SHOT_BLOCK) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    return rng.random((n_events, SHOT_BLOCK))[:, :n]


def run_shots(program: GateProgram, n_shots: int, seed: int = 0, validate: bool = True,
              prune: bool = False) -> ShotTable:
    """Sample n_shots trajectories.

    With prune=True a shot stops being simulated once a post-selection rejects
    it; its later record bits are reported as 0.  Accepted shots are unaffected
    because every shot consumes its own fixed uniforms.

    Shots are grouped in blocks of SHOT_BLOCK; block b draws its uniforms from
    an independent stream spawned from (seed, b), so results do not depend on
    how blocks are scheduled.
    """
    if validate:
        program.validate()
    keys = program.record_keys
    key_index = {k: i for i, k in enumerate(keys)}
    n_ev = program.n_random_events()
    bits = np.zeros((n_shots, len(keys)), np.uint8)
    accepted = np.zeros(n_shots, bool)
    chunk = max(1, min(SHOT_BLOCK, MAX_BLOCK_AMPLITUDES >> program.n_qubits))
    for b, start in enumerate(range(0, n_shots, SHOT_BLOCK)):
        stop = min(n_shots, start + SHOT_BLOCK)
        u = block_uniforms(seed, b, n_ev, stop - start)
        for c0 in range(0, stop - start, chunk):
            c1 = min(stop - start, c0 + chunk)
            bb, aa = _run_block(program, u[:, c0:c1], key_index, prune)
            bits[start + c0:start + c1] = bb
            accepted[start + c0:start + c1] = aa
    return ShotTable(keys, bits, accepted, seed)


def exact_state(program: GateProgram, strict: bool = False) -> np.ndarray:
    """Dense statevector after the unitary prefix (up to the first measurement or reset).

    Qubit 0 is the most significant bit of the returned index.
    """
    v = np.zeros(2 ** program.n_qubits, complex)
    v[0] = 1
    t = v.reshape((2,) * program.n_qubits)
    for op in program.ops:
        if not isinstance(op, Unitary):
            if strict:
                raise ValueError("program prefix contains a measurement or reset")
            break
        k = len(op.qubits)
        t = np.moveaxis(t, list(op.qubits), list(range(k)))
        s = t.shape
        t = (op.matrix @ t.reshape(2 ** k, -1)).reshape(s)
        t = np.moveaxis(t, list(range(k)), list(op.qubits))
    return t.reshape(-1)


def exact_distribution(program: GateProgram, max_branches: int = 1 << 16) -> dict:
    """Exact probabilities of (record bits tuple, accepted) by branch enumeration."""
    keys = program.record_keys
    key_index = {k: i for i, k in enumerate(keys)}
    branches = [(np.ones(1, complex).reshape(()), [], 1.0, (), True)]
    # each branch: (tensor over active qubits, active list, prob, bits, accepted)
    for op in program.ops:
        nxt = []
        for psi, act, p, bits, acc in branches:
            b = _Batch(1)
            b.psi = psi[None]
            b.active = list(act)
            if isinstance(op, Unitary):
                b.apply(op.matrix, op.qubits)
                nxt.append((b.psi[0], b.active, p, bits, acc))
            elif isinstance(op, PostSelect):
                ok = bits[key_index[op.key]] == op.outcome
                nxt.append((psi, act, p, bits, acc and ok))
            else:
                q = op.qubit
                if isinstance(op, Measure) and BASIS_ROTATION[op.basis] is not None:
                    b.apply(BASIS_ROTATION[op.basis], (q,))
                p1, tot = b.probabilities_one(q)
                pr = [1 - p1[0] / tot[0], p1[0] / tot[0]]
                for outcome in (0, 1):
                    if pr[outcome] < 1e-15:
                        continue
                    c = _Batch(1)
                    c.psi = b.psi.copy()
                    c.active = list(b.active)
                    u = np.array([pr[1] * 0.5]) if outcome else np.array([min(1.0, pr[1] + pr[0] * 0.5)])
                    c.sample(q, u, drop=isinstance(op, Reset))
                    nb = bits + (outcome,) if isinstance(op, Measure) else bits
                    nxt.append((c.psi[0], c.active, p * pr[outcome], nb, acc))
        branches = nxt
        if len(branches) > max_branches:
            raise ValueError("too many measurement branches for exact enumeration")
    out: dict = {}
    for _, _, p, bits, acc in branches:
        out[(bits, acc)] = out.get((bits, acc), 0.0) + p
    return out


@dataclass
class Estimate:
    mean: float
    stderr: float
    n: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def estimate(table: ShotTable, estimator: Callable[[dict], np.ndarray]) -> Estimate:
    """Sample mean and standard error of a per-shot estimator over accepted shots."""
    if table.n_accepted == 0:
        raise ValueError("no accepted shots")
    vals = np.broadcast_to(np.asarray(estimator(table.columns()), float), (table.n_accepted,))
    n = vals.size
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se, n)


def mean_stderr(vals: np.ndarray) -> Estimate:
    vals = np.asarray(vals, float)
    n = vals.size
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(vals.mean()), se, n)
