"""Dipole transition elements O^xx_{0d;p} from the W_k Fourier circuits and from SWAP tests.

Uses exact unitary embeddings so the only error is shot noise.
Run: python3 demos/03_transition_elements.py
"""
import numpy as np

from qtnspec.ed import build_hamiltonian, exact_dipole_elements, low_eigenpairs
from qtnspec.mps import ModelParams, from_dense
from qtnspec.protocols import (
    PreparedState, dipole_element_general, fourier_element, reconstruct_dipole_fft,
)

p = ModelParams(L=8)
spec = low_eigenpairs(build_hamiltonian(p), 4, p)
states = [PreparedState.exact(from_dense(spec.vectors[:, k], p.L, 2)) for k in (0, 3)]
psi0, psi3 = states

shots = 5000
res = {k: fourier_element(psi0, psi3, "x", k, shots, seed=k) for k in range(p.L)}
fourier = [reconstruct_dipole_fft({k: r["value"] for k, r in res.items()}, d).real for d in range(p.L)]

print(" d   oracle     fourier    swap")
for d in range(p.L):
    swap = dipole_element_general(psi0, psi3, 0, d, "x", "x", shots, seed=100 + d)
    exact = exact_dipole_elements(spec, 3, 0, d, "x", "x").real
    print(f" {d}  {exact:+.4f}   {fourier[d]:+.4f}   {swap['value'].real:+.4f} +- {swap['stderr_re']:.4f}")
