import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2, unitary_group

from qtnspec.sim import (
    GateProgram, Measure, PostSelect, Reset, ShotTable, Unitary, estimate, exact_distribution,
    exact_state, run_shots,
)

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
CX = np.eye(4)[[0, 1, 3, 2]]


def bell_program(basis="Z"):
    return GateProgram(2, [Unitary(H, (0,)), Unitary(CX, (0, 1)),
                           Measure(0, basis, "a"), Measure(1, basis, "b")])


def test_bell_correlations():
    t = run_shots(bell_program(), 4000, seed=1)
    assert np.all(t.column("a") == t.column("b"))
    assert 0.45 < t.column("a").mean() < 0.55
    tx = run_shots(bell_program("X"), 2000, seed=1)
    assert np.all(tx.column("a") == tx.column("b"))
    ty = run_shots(bell_program("Y"), 2000, seed=1)
    assert np.all(ty.column("a") != ty.column("b"))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_born_rule_frequencies(seed):
    u = unitary_group.rvs(8, random_state=seed)
    prog = GateProgram(3, [Unitary(u, (0, 1, 2)), Measure(0, "Z", "x"), Measure(1, "X", "y"),
                           Reset(1), Measure(2, "Y", "z")])
    exact = exact_distribution(prog)
    n = 6000
    t = run_shots(prog, n, seed=seed)
    idx = t.bits @ np.array([4, 2, 1])
    counts = np.bincount(idx, minlength=8)
    p = np.zeros(8)
    for (bits, _), pr in exact.items():
        p[bits[0] * 4 + bits[1] * 2 + bits[2]] += pr
    assert p.sum() == pytest.approx(1.0)
    m = p > 1e-9
    stat = np.sum((counts[m] - n * p[m]) ** 2 / (n * p[m]))
    assert stat < chi2.ppf(1 - 1e-4, m.sum() - 1)


def test_prefix_determinism_and_seed_dependence():
    prog = GateProgram(1, [Unitary(H, (0,)), Measure(0, "Z", "m")])
    a = run_shots(prog, 3000, seed=7)
    b = run_shots(prog, 1500, seed=7)
    assert np.array_equal(a.bits[:1500], b.bits)
    c = run_shots(prog, 3000, seed=8)
    assert not np.array_equal(a.bits, c.bits)


def test_postselection_and_prune_agree_on_accepted():
    u = unitary_group.rvs(4, random_state=3)
    prog = GateProgram(2, [Unitary(u, (0, 1)), Measure(1, "Z", "anc"), PostSelect("anc", 0),
                           Measure(0, "X", "out")])
    full = run_shots(prog, 3000, seed=2)
    pruned = run_shots(prog, 3000, seed=2, prune=True)
    assert np.array_equal(full.accepted, pruned.accepted)
    assert np.array_equal(full.bits[full.accepted], pruned.bits[pruned.accepted])
    p0 = sum(np.abs(u[:, 0].reshape(2, 2)[:, 0]) ** 2)
    assert full.acceptance_rate == pytest.approx(p0, abs=4 * np.sqrt(p0 * (1 - p0) / 3000))
    assert np.all(full.column("anc") == 0)


def test_lazy_activation_matches_dense_prefix():
    rng = np.random.default_rng(0)
    ops = [Unitary(unitary_group.rvs(4, random_state=k), tuple(rng.choice(4, 2, replace=False)))
           for k in range(6)]
    prog = GateProgram(4, ops)
    psi = exact_state(prog)
    dense = np.zeros(16, complex)
    dense[0] = 1
    for op in ops:
        t = dense.reshape((2,) * 4)
        t = np.moveaxis(t, list(op.qubits), [0, 1])
        t = (op.matrix @ t.reshape(4, -1)).reshape((2,) * 4)
        dense = np.moveaxis(t, [0, 1], list(op.qubits)).reshape(-1)
    assert np.allclose(psi, dense)
    dist = exact_distribution(GateProgram(4, ops + [Measure(q, "Z", f"q{q}") for q in range(4)]))
    for (bits, _), p in dist.items():
        assert p == pytest.approx(abs(dense[int("".join(map(str, bits)), 2)]) ** 2, abs=1e-12)


def test_validation_errors():
    with pytest.raises(ValueError):
        GateProgram(1, [Unitary(np.ones((2, 2)), (0,))]).validate()
    with pytest.raises(ValueError):
        GateProgram(1, [Unitary(H, (3,))]).validate()
    with pytest.raises(ValueError):
        GateProgram(1, [PostSelect("nope")]).validate()
    with pytest.raises(ValueError):
        GateProgram(1, [Measure(0, "Z", "k"), Measure(0, "Z", "k")]).validate()
    with pytest.raises(ValueError):
        Measure(0, "W", "k")


def test_json_and_csv_roundtrip():
    prog = bell_program("Y")
    back = GateProgram.from_json(prog.to_json())
    assert back.to_json() == prog.to_json()
    t = run_shots(prog, 50, seed=4)
    t2 = ShotTable.from_csv(t.to_csv())
    assert np.array_equal(t.bits, t2.bits) and np.array_equal(t.accepted, t2.accepted)


def test_estimate_stderr():
    t = run_shots(GateProgram(1, [Unitary(H, (0,)), Measure(0, "Z", "m")]), 10000, seed=0)
    e = estimate(t, lambda c: 1 - 2.0 * c["m"])
    assert abs(e.mean) < 4 * e.stderr
    assert e.stderr == pytest.approx(0.01, rel=0.02)
