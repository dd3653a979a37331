"""Shared fixtures and dense-matrix oracles."""

import numpy as np
import pytest

from floqmbl.circuit import build_cycle, sample_disorder
from floqmbl.lattice import build_chain

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def embed(op, sites, n):
    """Dense embedding of a 1- or 2-site operator, little-endian, by brute force."""
    dim = 1 << n
    k = len(sites)
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        sub_in = sum(((col >> s) & 1) << j for j, s in enumerate(sites))
        for sub_out in range(1 << k):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            row = col
            for j, s in enumerate(sites):
                row = (row & ~(1 << s)) | (((sub_out >> j) & 1) << s)
            out[row, col] += amp
    return out


def dense_pauli(label):
    """Matrix of a dense label; character ``i`` acts on site ``i``."""
    out = np.ones((1, 1), dtype=complex)
    for ch in reversed(label):
        out = np.kron(out, _PAULI[ch])
    return out


def pauli_decompose(mat, n):
    """``{dense_label: real coefficient}`` of a Hermitian matrix, by traces."""
    from itertools import product
    out = {}
    for letters in product("IXYZ", repeat=n):
        lab = "".join(letters)
        c = np.trace(dense_pauli(lab) @ mat) / (1 << n)
        if abs(c) > 1e-13:
            out[lab] = c
    return out


def random_state(n, rng):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain_cycle():
    def make(n, theta_over_pi=0.1, seed=0):
        lat = build_chain(n)
        return build_cycle(lat, theta_over_pi * np.pi, sample_disorder(lat, seed))
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
