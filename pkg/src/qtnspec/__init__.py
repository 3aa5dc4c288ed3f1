"""Quantum tensor-network circuits for spin-ring spectroscopy: MPS/DMRG, circuit compilation,
shot simulation, measurement protocols and neutron-scattering spectra."""

__version__ = "0.1.0"
