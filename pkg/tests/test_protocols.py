import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtnspec.ed import build_hamiltonian, dipole_table, exact_dipole_elements, low_eigenpairs, spin_operator
from qtnspec.mps import LEFT, RIGHT, ModelParams, from_dense, product_mps, spin_matrices, to_dense
from qtnspec.protocols import (
    PreparedState, adjoint_overlap, adjoint_overlap_program, binomial_estimate,
    dipole_element_general, exact_observable, fourier_element, fourier_element_exact,
    fourier_program, hamiltonian_terms, hermiticity_gap, measure_energy, pauli_decompose,
    pauli_decompose_spin, reconstruct_dipole_fft, sequential_prep_program, spin_three_half_plans,
    swap_exact_marginals, swap_test_element, swap_test_program, wk_embeddings, wk_state,
    assign_terms,
)
from qtnspec.sim import exact_distribution, run_shots


@pytest.fixture(scope="module")
def ring4():
    p = ModelParams(L=4)
    spec = low_eigenpairs(build_hamiltonian(p), 6, p)
    states = [PreparedState.exact(from_dense(spec.vectors[:, k], 4, 2), source=str(k))
              for k in range(6)]
    return p, spec, states


def test_spin_three_half_pauli_coefficients():
    sx = pauli_decompose_spin("x", 1.5)
    coeffs = {t.factors: t.coefficient for t in sx.terms}
    assert coeffs == pytest.approx({"IX": np.sqrt(3) / 2, "XX": 0.5, "YY": 0.5})
    for a in "xyz":
        assert np.allclose(pauli_decompose_spin(a, 1.5).matrix(), spin_matrices(1.5)[a])
        assert np.allclose(pauli_decompose_spin(a, 0.5).matrix(), spin_matrices(0.5)[a])
    with pytest.raises(ValueError):
        pauli_decompose(np.eye(3))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_pauli_decompose_roundtrip(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(pauli_decompose(m).matrix(), m)


def test_spin_three_half_plans_cover_every_term():
    p = ModelParams(L=8, S=1.5, J=1.46, D=-0.038)
    const, terms = hamiltonian_terms(p)
    parts = assign_terms(terms, spin_three_half_plans(8))
    assert sum(len(v) for v in parts.values()) == len(terms)
    psi = product_mps(8, 4, [1, 2, 0, 3, 1, 1, 2, 0])
    h = build_hamiltonian(p)
    v = to_dense(psi)
    assert exact_observable(psi, const, terms, 2) == pytest.approx(np.vdot(v, h @ v).real)


def test_product_state_energy_is_exact():
    p = ModelParams(L=4)
    s = PreparedState.exact(product_mps(4, 2, [0, 1, 0, 1]))
    est, tabs = measure_energy(s, p, 2000, seed=0)
    # Neel state: <H> = -L/4 from zz; xx and yy average to zero
    assert abs(est.mean + 1.0) < 5 * est.stderr + 1e-9
    assert np.all(tabs["Z"].column("s0q0") == 0)


def test_singlet_energy():
    p = ModelParams(L=2)
    spec = low_eigenpairs(build_hamiltonian(p), 1, p)
    s = PreparedState.exact(from_dense(spec.vectors[:, 0], 2, 2))
    est, _ = measure_energy(s, p, 4000, seed=3)
    assert est.mean == pytest.approx(-0.75, abs=1e-12)
    assert est.stderr < 1e-12


def test_energy_estimate_unbiased(ring4):
    p, spec, states = ring4
    est, _ = measure_energy(states[0], p, 20000, seed=5)
    assert abs(est.mean - spec.energies[0]) < 4 * est.stderr


def test_prep_program_qubit_count(ring4):
    _, _, states = ring4
    prog = sequential_prep_program(states[0], ["Z"] * 4)
    assert prog.n_qubits == 1 + 2
    cr = PreparedState.exact(product_mps(4, 4, [0] * 4), chi=8)
    assert sequential_prep_program(cr, ["ZZ"] * 4).n_qubits == 2 + 3


def test_prep_samples_exact_distribution(ring4):
    _, spec, states = ring4
    prog = sequential_prep_program(states[1], ["Z"] * 4)
    dist = exact_distribution(prog)
    v = spec.vectors[:, 1]
    for (bits, acc), pr in dist.items():
        assert acc
        site_bits = {3 - n: bits[n] for n in range(4)}
        idx = int("".join(str(site_bits[j]) for j in range(4)), 2)
        assert pr == pytest.approx(abs(v[idx]) ** 2, abs=1e-12)


def test_adjoint_overlap(ring4):
    _, _, states = ring4
    same = adjoint_overlap(states[0], states[0], 2000, seed=1)
    assert same["value"] == pytest.approx(1.0)
    assert same["stderr"] > 0
    orth = adjoint_overlap(states[0], states[1], 2000, seed=1)
    assert orth["value"] == 0.0 and orth["stderr"] > 0
    a, b = states[0], states[1]
    assert adjoint_overlap_program(a, b).n_qubits == 1 + a.n_bond + b.n_bond


def test_adjoint_overlap_partial():
    rng = np.random.default_rng(4)
    a = rng.normal(size=8); a /= np.linalg.norm(a)
    b = rng.normal(size=8); b /= np.linalg.norm(b)
    sa = PreparedState.exact(from_dense(a, 3, 2))
    sb = PreparedState.exact(from_dense(b, 3, 2))
    r = adjoint_overlap(sa, sb, 20000, seed=2)
    assert abs(r["value"] - np.dot(a, b) ** 2) < 4 * r["stderr"]


def test_binomial_floor():
    assert binomial_estimate(0, 100) == (0.0, pytest.approx(np.sqrt(0.01 * 0.99 / 100)))
    f, se = binomial_estimate(30, 100)
    assert f == 0.3 and se == pytest.approx(np.sqrt(0.21 / 100))


@pytest.mark.parametrize("L,k", [(3, 0), (4, 1), (5, 2), (6, 5)])
def test_wk_state(L, k):
    w = wk_embeddings(L, k)
    for side in (LEFT, RIGHT):
        v = to_dense(w.replay(side))
        assert abs(np.vdot(wk_state(L, k), v)) == pytest.approx(1.0, abs=1e-12)


def test_fourier_parseval_and_inverse(ring4):
    p, spec, states = ring4
    L = 4
    table = dipole_table(p, spec.vectors[:, 0], spec.vectors[:, 1])
    for q in (1, 2, 3):
        table = dipole_table(p, spec.vectors[:, 0], spec.vectors[:, q])
        el = {k: fourier_element_exact(states[0], states[q], "x", k) for k in range(L)}
        # Parseval: sum_k |<p|S~_k|0>|^2 = L sum_j |<p|S_j|0>|^2, and each element carries 1/L
        amp2 = sum(abs(np.vdot(spec.vectors[:, q], spin_operator(p, j, "x") @ spec.vectors[:, 0])) ** 2
                   for j in range(L))
        assert sum(el.values()) == pytest.approx(amp2, abs=1e-10)
        # translation-invariant states: inverse FFT gives O_{0j}
        for j in range(L):
            assert reconstruct_dipole_fft(el, j) == pytest.approx(table[0, 0, 0, j], abs=1e-10)


def test_fourier_sampled(ring4):
    _, _, states = ring4
    for k in (0, 2):
        ex = fourier_element_exact(states[0], states[1], "x", k)
        r = fourier_element(states[0], states[1], "x", k, 4000, seed=k)
        assert abs(r["value"] - ex) < 4 * r["stderr"]
    a, b = states[0], states[1]
    assert fourier_program(a, b, "x", 1).n_qubits == 1 + a.n_bond + b.n_bond + 3


def test_reconstruct_fft_delta_and_missing():
    L = 6
    assert reconstruct_dipole_fft({k: 1.0 for k in range(L)}, 0) == pytest.approx(1.0)
    assert reconstruct_dipole_fft({k: 1.0 for k in range(L)}, 2) == pytest.approx(0.0)
    with pytest.raises(KeyError):
        reconstruct_dipole_fft({0: 1.0}, 0, L)


def test_swap_identity_gives_one(ring4):
    _, _, states = ring4
    eye = (0, np.eye(2))
    acc, m = swap_exact_marginals(states[0], states[0], eye, eye)
    assert acc == pytest.approx(1.0) and m == pytest.approx(1.0)
    r = swap_test_element(states[0], states[0], eye, eye, "Re", 500, seed=0)
    assert r["value"] == pytest.approx(1.0)
    a, b = states[0], states[1]
    assert swap_test_program(a, b, eye, eye).n_qubits == 1 + 2 * 1 + a.n_bond + b.n_bond


def test_swap_trajectory_matches_marginal(ring4):
    _, _, states = ring4
    z = np.diag([1.0, -1.0])
    x = np.array([[0, 1], [1, 0.0]])
    acc, m = swap_exact_marginals(states[0], states[1], (1, x), (0, z))
    for part, target in (("Re", m.real), ("Im", m.imag)):
        r = swap_test_element(states[0], states[1], (1, x), (0, z), part, 3000, seed=4)
        assert abs(r["value"] - target) < 4 * r["stderr"] + 1e-9


def test_swap_imaginary_sign():
    rng = np.random.default_rng(7)
    a = rng.normal(size=4) + 1j * rng.normal(size=4); a /= np.linalg.norm(a)
    b = rng.normal(size=4) + 1j * rng.normal(size=4); b /= np.linalg.norm(b)
    sa = PreparedState.exact(from_dense(a, 2, 2))
    sb = PreparedState.exact(from_dense(b, 2, 2))
    y = np.array([[0, -1j], [1j, 0]])
    g1 = (1, y)
    g2 = (0, np.diag([1.0, -1.0]))
    m = np.vdot(a, np.kron(np.diag([1, -1]), np.eye(2)) @ b) * np.vdot(b, np.kron(np.eye(2), y) @ a)
    _, mm = swap_exact_marginals(sa, sb, g1, g2)
    assert mm == pytest.approx(m)
    r = swap_test_element(sa, sb, g1, g2, "Im", 20000, seed=9)
    assert abs(r["value"] - m.imag) < 4 * r["stderr"]


def test_dipole_general_matches_oracle(ring4):
    p, spec, states = ring4
    for (i, j, a, b) in [(0, 1, "x", "x"), (0, 2, "x", "y"), (1, 1, "z", "z")]:
        ref = exact_dipole_elements(spec, 1, i, j, a, b)
        r = dipole_element_general(states[0], states[1], i, j, a, b, 20000, seed=1, mode="marginal")
        assert abs(r["value"].real - ref.real) < 4 * r["stderr_re"] + 1e-9
        assert abs(r["value"].imag - ref.imag) < 4 * r["stderr_im"] + 1e-9
    assert hermiticity_gap(ref, np.conj(ref)) == pytest.approx(0.0)


def test_postselection_soundness_on_compiled_states(ring4):
    # the accepted-shot distribution equals the normalized replayed state
    _, _, states = ring4
    rng = np.random.default_rng(0)
    v = rng.normal(size=16); v /= np.linalg.norm(v)
    s = PreparedState.exact(from_dense(v, 4, 2, chi_max=2))
    rep = to_dense(s.replay(LEFT))
    dist = exact_distribution(sequential_prep_program(s, ["Z"] * 4))
    acc = sum(pr for (_, a), pr in dist.items() if a)
    assert acc == pytest.approx(np.vdot(rep, rep).real)
