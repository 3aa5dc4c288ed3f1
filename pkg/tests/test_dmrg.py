import numpy as np
import pytest

from qtnspec.dmrg import SolverConfig, energy_variance, solve, total_sz
from qtnspec.ed import build_hamiltonian, low_eigenpairs
from qtnspec.mps import ModelParams, heisenberg_mpo, overlap, to_dense


def test_small_ring_matches_oracle():
    p = ModelParams(L=6, J=1.0)
    res = solve(heisenberg_mpo(p), SolverConfig(chi_max=8, n_states=5, variance_tol=1e-10), S=0.5)
    spec = low_eigenpairs(build_hamiltonian(p), 5, p)
    assert np.allclose(res.energies, spec.energies, atol=1e-8)
    assert res.all_converged
    for a in range(5):
        for b in range(a):
            assert abs(overlap(res.states[a], res.states[b])) < 1e-5


def test_ground_state_spin_three_half_open_chain():
    p = ModelParams(L=4, S=1.5, J=1.46, D=-0.038, periodic=False)
    res = solve(heisenberg_mpo(p), SolverConfig(chi_max=16, n_states=1))
    spec = low_eigenpairs(build_hamiltonian(p), 1, p)
    assert res.energies[0] == pytest.approx(spec.energies[0], abs=1e-9)
    assert abs(np.vdot(spec.vectors[:, 0], to_dense(res.states[0]))) == pytest.approx(1.0, abs=1e-8)


def test_degenerate_states_ordered_by_sz():
    p = ModelParams(L=6)
    res = solve(heisenberg_mpo(p), SolverConfig(chi_max=8, n_states=4, variance_tol=1e-10), S=0.5)
    mz = [total_sz(s, 0.5) for s in res.states[1:4]]
    assert mz[0] >= mz[1] >= mz[2]


def test_field_breaks_degeneracy_in_complex_hamiltonian():
    p = ModelParams(L=4, B=(0.0, 2.0, 1.0))
    h = heisenberg_mpo(p)
    assert not h.is_real()
    res = solve(h, SolverConfig(chi_max=4, n_states=2, variance_tol=1e-10))
    spec = low_eigenpairs(build_hamiltonian(p), 2, p)
    assert np.allclose(res.energies, spec.energies, atol=1e-8)
    assert energy_variance(res.states[0], h) < 1e-8


def test_truncated_run_reports_non_convergence(caplog):
    p = ModelParams(L=8)
    res = solve(heisenberg_mpo(p), SolverConfig(chi_max=2, n_states=1, max_sweeps=3))
    assert not res.converged[0]
    assert res.variances[0] > 1e-8
    assert "no convergence" in caplog.text
    meta = res.metadata()
    assert meta["converged"] == [False] and meta["config"]["chi_max"] == 2


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(variance_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(chi_max=0)
    assert SolverConfig.for_coupling(1.46).penalty_weight == pytest.approx(146.0)
