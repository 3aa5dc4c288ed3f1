"""Neutron-scattering intensity of the Cr8 ring from exact eigenstates.

Writes cr8_intensity.svg and prints the integrated line weights.
Run: python3 demos/04_cr8_intensity.py   (about a minute)
"""
import numpy as np

from qtnspec.ed import build_hamiltonian, low_eigenpairs, transition_set
from qtnspec.mps import ModelParams
from qtnspec.plots import intensity_map
from qtnspec.spectral import CR3, Geometry, intensity, q_vectors

p = ModelParams(L=8, S=1.5, J=1.46, D=-0.038, g=1.98)
spec = low_eigenpairs(build_hamiltonian(p), 4, p)
print("gaps (meV):", np.round(spec.energies[1:] - spec.energies[0], 4))

geo = Geometry.ring(p.L)
q = q_vectors(np.linspace(0.1, 2.5, 49))
omega = np.linspace(0.4, 1.2, 321)
grid = intensity(transition_set(spec, [1, 2, 3]), geo, q, omega,
                 params=CR3)

for a in range(0, 49, 8):
    print(f"|Q| = {grid.q_mag[a]:.2f}  weights", np.round(grid.weights[a], 4))
intensity_map(grid, "cr8_intensity.svg")
print("wrote cr8_intensity.svg")
