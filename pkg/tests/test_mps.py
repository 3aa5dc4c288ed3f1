import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtnspec.mps import (
    LEFT, MIXED, RIGHT, ModelParams, MpsState, TargetUnreachable, apply_mpo, canonicalize, compress,
    dense_spin_op, expect_product, expectation_mpo, fidelity_loss, fourier_spin_mpo, from_dense,
    heisenberg_mpo, identity_mpo, isometry_residual, local_sum_mpo, mpo_add, mpo_from_json,
    mpo_product, mpo_to_json, mps_from_json, mps_to_json, norm, overlap, product_mps, random_mps,
    spin_matrices, to_dense,
)
from qtnspec.ed import build_hamiltonian

spins = st.sampled_from([0.5, 1.5])


def dense_heisenberg(p):
    s = spin_matrices(p.S)
    dim = p.d ** p.L
    h = np.zeros((dim, dim), complex)
    for i, j in p.bonds():
        for a in "xyz":
            h += p.J * dense_spin_op(p.L, p.S, {i: s[a]}) @ dense_spin_op(p.L, p.S, {j: s[a]})
    for j in range(p.L):
        h += dense_spin_op(p.L, p.S, {j: p.D * s["z"] @ s["z"]})
        for b, a in zip(p.B, "xyz"):
            h += dense_spin_op(p.L, p.S, {j: p.mu_B * p.g * b * s[a]})
    return h


@pytest.mark.parametrize("S", [0.5, 1.0, 1.5, 2.0])
def test_spin_algebra(S):
    s = spin_matrices(S)
    comm = s["x"] @ s["y"] - s["y"] @ s["x"]
    assert np.allclose(comm, 1j * s["z"])
    casimir = sum(s[a] @ s[a] for a in "xyz")
    assert np.allclose(casimir, S * (S + 1) * np.eye(int(2 * S + 1)))
    assert s["z"][0, 0] == S


@settings(max_examples=25, deadline=None)
@given(L=st.integers(2, 6), chi=st.integers(1, 6), seed=st.integers(0, 2 ** 16),
       form=st.sampled_from([LEFT, RIGHT, MIXED]))
def test_canonical_residuals(L, chi, seed, form):
    s = random_mps(L, 2, chi, rng=np.random.default_rng(seed), real=False)
    center = seed % L
    c = canonicalize(s, form, center)
    for j, t in enumerate(c.tensors):
        if form == LEFT or (form == MIXED and j < center):
            assert isometry_residual(t, LEFT) < 1e-12
        if form == RIGHT or (form == MIXED and j > center):
            assert isometry_residual(t, RIGHT) < 1e-12
    assert norm(c) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_loss(c, s) < 1e-12


@settings(max_examples=20, deadline=None)
@given(L=st.integers(2, 4), S=spins, J=st.floats(-2, 2), D=st.floats(-1, 1),
       B=st.tuples(*[st.floats(-3, 3)] * 3), periodic=st.booleans())
def test_mpo_matches_kronecker(L, S, J, D, B, periodic):
    p = ModelParams(L=L, S=S, J=J, D=D, g=2.0, B=B, periodic=periodic)
    assert np.allclose(heisenberg_mpo(p).to_dense(), dense_heisenberg(p), atol=1e-12)


def test_ring_bond_dimension():
    assert heisenberg_mpo(ModelParams(L=6)).chi == 8
    assert heisenberg_mpo(ModelParams(L=6, periodic=False)).chi == 5
    assert heisenberg_mpo(ModelParams(L=2)).chi == 5


def test_mpo_matches_sparse_hamiltonian():
    p = ModelParams(L=5, S=1.5, J=1.46, D=-0.038, g=1.98, B=(0.3, 0.0, 1.0))
    assert np.allclose(heisenberg_mpo(p).to_dense(), build_hamiltonian(p).toarray(), atol=1e-12)


def test_mpo_arithmetic(rng):
    L = 3
    a = heisenberg_mpo(ModelParams(L=L))
    b = fourier_spin_mpo(L, 0.5, "x", 1)
    assert np.allclose(mpo_product(a, b).to_dense(), a.to_dense() @ b.to_dense())
    assert np.allclose(mpo_add(a, b, 0.5).to_dense(), a.to_dense() + 0.5 * b.to_dense())
    assert np.allclose(identity_mpo(L, 2).to_dense(), np.eye(8))


def test_product_state_and_dense_roundtrip(rng):
    s = product_mps(3, 2, [0, 1, 1])
    v = to_dense(s)
    assert v[0b011] == 1 and np.count_nonzero(v) == 1
    vec = rng.normal(size=2 ** 6) + 1j * rng.normal(size=2 ** 6)
    vec /= np.linalg.norm(vec)
    m = from_dense(vec, 6, 2)
    assert abs(np.vdot(to_dense(m), vec)) == pytest.approx(1.0, abs=1e-12)


def test_expectations_match_dense(rng):
    p = ModelParams(L=4, J=0.7, B=(0.1, 0.0, 0.4))
    s = canonicalize(random_mps(4, 2, 4, rng=rng, real=False), LEFT)
    v = to_dense(s)
    h = dense_heisenberg(p)
    assert expectation_mpo(s, heisenberg_mpo(p)) == pytest.approx(np.vdot(v, h @ v), abs=1e-12)
    sx = spin_matrices(0.5)["x"]
    ops = {0: sx, 2: sx}
    assert expect_product(s, ops) == pytest.approx(np.vdot(v, dense_spin_op(4, 0.5, ops) @ v), abs=1e-12)
    o = random_mps(4, 2, 3, rng=rng, real=False)
    assert overlap(o, s) == pytest.approx(np.vdot(to_dense(o), v), abs=1e-12)


def test_apply_mpo_and_compress(rng):
    s = canonicalize(random_mps(5, 2, 4, rng=rng), LEFT)
    op = local_sum_mpo([spin_matrices(0.5)["z"]] * 5)
    out, nrm = apply_mpo(op, s, 16)
    exact = op.to_dense() @ to_dense(s)
    assert np.allclose(nrm * to_dense(out), exact, atol=1e-10)
    c = compress(s, 4)
    assert fidelity_loss(c, s) < 1e-12
    with pytest.raises(TargetUnreachable):
        compress(s, 1, tol=1e-12)
    with pytest.raises(ValueError):
        compress(s, 0)


def test_invalid_tensors():
    with pytest.raises(ValueError):
        MpsState([np.zeros((2, 2, 1))])
    with pytest.raises(ValueError):
        MpsState([np.zeros((1, 2, 2)), np.zeros((3, 2, 1))])
    with pytest.raises(ValueError):
        canonicalize(MpsState([np.zeros((1, 2, 1))]), LEFT)


def test_json_roundtrip_bit_exact(rng):
    s = random_mps(4, 4, 5, rng=rng, real=False)
    back = mps_from_json(mps_to_json(s, note="x"))
    for a, b in zip(s.tensors, back.tensors):
        assert np.array_equal(a, b)
    op = heisenberg_mpo(ModelParams(L=3, S=1.5, D=-0.1))
    back = mpo_from_json(mpo_to_json(op))
    for a, b in zip(op.tensors, back.tensors):
        assert np.array_equal(a, b)
