"""Low-lying levels of the L=8 spin-1/2 Heisenberg ring: DMRG against exact diagonalization.

Run: python3 demos/01_ring_levels.py
"""
import numpy as np

from qtnspec.dmrg import SolverConfig, solve, total_sz
from qtnspec.ed import build_hamiltonian, low_eigenpairs
from qtnspec.mps import ModelParams, heisenberg_mpo

p = ModelParams(L=8, S=0.5, J=1.0)
h = heisenberg_mpo(p)

# Exact levels first, then the penalized DMRG at two bond dimensions.
exact = low_eigenpairs(build_hamiltonian(p), 10, p)
for chi in (8, 16):
    res = solve(h, SolverConfig.for_coupling(p.J, chi_max=chi, n_states=10), S=p.S)
    print(f"chi = {chi}")
    print("  p   E_dmrg      E_exact     error     <Sz>   variance")
    for k, (e, ex) in enumerate(zip(res.energies, exact.energies)):
        print(f"  {k}  {e:10.6f}  {ex:10.6f}  {abs(e - ex):.1e}  {total_sz(res.states[k], p.S):+.2f}"
              f"  {res.variances[k]:.1e}")

# Levels 1-3 form the lowest triplet above the singlet ground state.
print("triplet gap:", exact.energies[1] - exact.energies[0])
print("degenerate members:", np.round(exact.energies[1:4] - exact.energies[1], 12))
