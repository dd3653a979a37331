"""Simulation and analysis of disordered Floquet kicked-Ising circuits.

Modules
-------
lattice      qubit graphs, layer colourings, distances, initial patterns
circuit      Floquet cycle construction and dense unitaries
statevec     statevector evolution, Pauli expectations, sampling, noise
heisenberg   sparse Pauli-sum conjugation, B matrix, LIOM imprecision
spectral     quasienergies, gap ratios, eigenstate entanglement
diagnostics  imbalance, one-particle density matrix, contrast, bootstrap
lioms        local integrals of motion and noise analysis
runner       configs, ensembles, figure data and the command line
"""

__version__ = "0.1.0"
