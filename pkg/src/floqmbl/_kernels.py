"""Array kernels shared by the dense-matrix and statevector code.

Arrays carry the basis index on axis 0 (little-endian: site ``q`` is bit
``q`` of the index); any trailing axes are batch axes.
"""

from __future__ import annotations

import numpy as np


def bit_columns(n: int) -> np.ndarray:
    """``(2**n, n)`` uint8 table of basis-state bits."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def apply_1q(arr: np.ndarray, q: int, g: np.ndarray, n: int) -> np.ndarray:
    """Apply the 2x2 matrix ``g`` to site ``q`` of ``arr`` in place."""
    dim = 1 << n
    rest = arr.size // dim
    view = arr.reshape(dim >> (q + 1), 2, (1 << q) * rest)
    a = view[:, 0].copy()
    b = view[:, 1]
    g00, g01, g10, g11 = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    view[:, 0] = g00 * a + g01 * b
    b *= g11
    b += g10 * a
    return arr


def apply_pauli_1q(arr: np.ndarray, q: int, code: int, n: int) -> np.ndarray:
    """Apply X (1), Y (3) or Z (2) to site ``q`` of ``arr`` in place.

    Codes follow the (x, z) bit pair: ``code = x | (z << 1)``.
    """
    if code == 0:
        return arr
    dim = 1 << n
    rest = arr.size // dim
    view = arr.reshape(dim >> (q + 1), 2, (1 << q) * rest)
    if code == 2:
        view[:, 1] *= -1
        return arr
    a = view[:, 0].copy()
    view[:, 0] = view[:, 1]
    view[:, 1] = a
    if code == 3:
        # Y = i X Z: |0> -> i|1>, |1> -> -i|0>
        view[:, 0] *= -1j
        view[:, 1] *= 1j
    return arr


def cz_diagonal(n: int, edges) -> np.ndarray:
    """Diagonal of the product of CZ gates on ``edges`` (entries +-1)."""
    idx = np.arange(1 << n, dtype=np.int64)
    parity = np.zeros(1 << n, dtype=np.int64)
    for a, b in edges:
        parity ^= (idx >> a) & (idx >> b) & 1
    return 1.0 - 2.0 * parity


def phase_angles(n: int, phases, sites=None) -> np.ndarray:
    """Total phase ``sum_q phi_q b_q`` for every basis state."""
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n)
    sites = range(n) if sites is None else sites
    for q in sites:
        out += phases[q] * ((idx >> q) & 1)
    return out
