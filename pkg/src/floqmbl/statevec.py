"""Dense statevector engine for the Floquet circuits.

Amplitudes are indexed little-endian: site ``q`` is bit ``q`` of the basis
index. Array-level helpers accept a trailing batch axis so many states can
be evolved together.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .circuit import FloquetCycle, cycle_unitary, u_gate
from .errors import CapacityError, DomainError
from .lattice import SitePattern
from .rng import make_rng

STATE_CAP = 24
DENSITY_CAP = 7

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
_SDG = np.diag([1.0, -1.0j])
# rotation applied before Z readout, per basis letter
_BASIS_ROT = {"Z": None, "X": _H, "Y": _H @ _SDG}


@dataclass
class StateVector:
    """Dense pure state of ``n_sites`` qubits."""

    amplitudes: np.ndarray
    n_sites: int

    def __post_init__(self):
        if self.amplitudes.shape[0] != 1 << self.n_sites:
            raise ValueError("amplitude length must be 2**n_sites")

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_sites)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class NoiseSpec:
    """Single-site depolarizing probability applied after every cycle."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"noise probability must lie in [0, 1], got {self.p}")


def init_state(pattern: SitePattern) -> StateVector:
    """Computational basis state of ``pattern``."""
    n = len(pattern)
    if n > STATE_CAP:
        raise CapacityError(f"statevector limited to n <= {STATE_CAP}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[pattern.index] = 1.0
    return StateVector(amps, n)


def basis_states(patterns) -> np.ndarray:
    """Batch ``(2**n, len(patterns))`` of computational basis states."""
    patterns = list(patterns)
    n = len(patterns[0])
    out = np.zeros((1 << n, len(patterns)), dtype=complex)
    for j, pat in enumerate(patterns):
        out[pat.index, j] = 1.0
    return out


@lru_cache(maxsize=16)
def _cycle_plan(cycle: FloquetCycle):
    n = cycle.n
    phase = np.exp(1j * K.phase_angles(n, cycle.phases))
    plan = []
    for edges, touched in cycle.layer_blocks():
        plan.append((K.cz_diagonal(n, edges), touched))
    return plan, phase, u_gate(cycle.theta)


def _bcast(d: np.ndarray, arr: np.ndarray) -> np.ndarray:
    return d if arr.ndim == 1 else d.reshape((-1,) + (1,) * (arr.ndim - 1))


def apply_cycle_array(arr: np.ndarray, cycle: FloquetCycle) -> np.ndarray:
    """Evolve amplitude array(s) by one cycle; returns a new array."""
    plan, phase, ug = _cycle_plan(cycle)
    out = np.array(arr, dtype=complex, copy=True)
    for cz, touched in plan:
        out *= _bcast(cz, out)
        for q in touched:
            K.apply_1q(out, q, ug, cycle.n)
        out *= _bcast(phase, out)
    return out


def apply_cycle(state: StateVector, cycle: FloquetCycle) -> StateVector:
    """One Floquet cycle applied gate by gate."""
    if state.n_sites != cycle.n:
        raise ValueError(f"state has {state.n_sites} sites, cycle has {cycle.n}")
    return StateVector(apply_cycle_array(state.amplitudes, cycle), state.n_sites)


def evolve(state: StateVector, cycle: FloquetCycle, depth: int,
           noise: NoiseSpec | None = None, rng=None) -> list[StateVector]:
    """States after ``d = 0..depth`` cycles, with optional trajectory noise."""
    out = [state.copy()]
    cur = state
    gen = make_rng(rng if rng is not None else 0) if noise is not None else None
    for _ in range(depth):
        cur = apply_cycle(cur, cycle)
        if noise is not None and noise.p > 0:
            cur = apply_noise_trajectory(cur, noise, gen)
        out.append(cur)
    return out


def pauli_phase_and_flip(x: int, z: int, idx: np.ndarray):
    """For ``P|b> = c_b |b ^ x>``, return ``c_b`` for every ``b`` in ``idx``."""
    zb = np.bitwise_count(idx & np.int64(z)) & 1
    base = 1j ** (int(x & z).bit_count() % 4)
    return base * (1 - 2 * zb.astype(float))


def apply_pauli(arr: np.ndarray, x: int, z: int) -> np.ndarray:
    """``P`` applied to amplitude array(s); returns a new array."""
    idx = np.arange(arr.shape[0], dtype=np.int64)
    c = pauli_phase_and_flip(x, z, idx)
    out = np.empty_like(arr, dtype=complex)
    out[idx ^ x] = _bcast(c, arr) * arr
    return out


def expect_pauli(state: StateVector, pauli) -> float:
    """Real expectation ``<psi|P|psi>``."""
    x, z = int(pauli.x_mask), int(pauli.z_mask)
    amps = state.amplitudes
    idx = np.arange(amps.shape[0], dtype=np.int64)
    c = pauli_phase_and_flip(x, z, idx)
    return float(np.real(np.vdot(amps[idx ^ x], c * amps)))


def walsh_hadamard(v: np.ndarray, n: int) -> np.ndarray:
    """``out[z] = sum_b v[b] (-1)^{popcount(z & b)}`` along axis 0."""
    out = np.array(v, copy=True)
    rest = out.size >> n
    for q in range(n):
        view = out.reshape((1 << n) >> (q + 1), 2, (1 << q) * rest)
        a = view[:, 0].copy()
        view[:, 0] += view[:, 1]
        view[:, 1] = a - view[:, 1]
    return out


def pauli_expectations(amps: np.ndarray, n: int, x_masks, z_masks, weights=None) -> np.ndarray:
    """Expectations of many Pauli strings at once.

    ``amps`` is one state ``(2**n,)`` or a batch ``(2**n, B)``. For a batch
    the result is ``sum_j weights[j] <psi_j|P|psi_j>`` (uniform weights
    ``1/B`` by default). Strings are grouped by X mask and each group is
    resolved with one Walsh-Hadamard transform.
    """
    x_masks = np.asarray(x_masks, dtype=np.int64)
    z_masks = np.asarray(z_masks, dtype=np.int64)
    if amps.ndim == 1:
        amps = amps[:, None]
        weights = np.ones(1) if weights is None else np.asarray(weights)
    elif weights is None:
        weights = np.full(amps.shape[1], 1.0 / amps.shape[1])
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.empty(len(x_masks))
    for x in np.unique(x_masks):
        sel = np.flatnonzero(x_masks == x)
        v = (np.conj(amps[idx ^ x]) * amps) @ weights
        w = walsh_hadamard(v, n)
        zs = z_masks[sel]
        ph = 1j ** (np.bitwise_count(zs & x) % 4)
        out[sel] = np.real(ph * w[zs])
    return out


def z_expectations(amps: np.ndarray, n: int) -> np.ndarray:
    """``<Z_i>`` for every site; batch input gives shape ``(n, B)``."""
    prob = np.abs(amps) ** 2
    bits = K.bit_columns(n).astype(float)
    return (1.0 - 2.0 * bits).T @ prob


def rotate_to_basis(arr: np.ndarray, basis: str, n: int) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    for q, letter in enumerate(basis):
        if letter not in _BASIS_ROT:
            raise ValueError(f"basis letters must be X, Y or Z, got {letter!r}")
        rot = _BASIS_ROT[letter]
        if rot is not None:
            K.apply_1q(out, q, rot, n)
    return out


def basis_probabilities(state: StateVector, basis: str) -> np.ndarray:
    """Outcome distribution for per-site readout in ``basis`` (e.g. ``"XXYZ"``)."""
    if len(basis) != state.n_sites:
        raise ValueError("basis string length must equal the number of sites")
    rot = rotate_to_basis(state.amplitudes, basis, state.n_sites)
    p = np.abs(rot) ** 2
    return p / p.sum()


def bitstring(index: int, n: int) -> str:
    """Outcome label; character ``i`` is the bit of site ``i``."""
    return "".join(str((index >> i) & 1) for i in range(n))


def sample_counts(state: StateVector, basis: str, shots: int, rng_seed) -> dict:
    """Sample ``shots`` readouts in ``basis``; returns ``{bitstring: count}``.

    X readout rotates with a Hadamard, Y readout with ``H S^dagger``.
    Outcome 0 is the +1 eigenvalue.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p = basis_probabilities(state, basis)
    counts = make_rng(rng_seed).multinomial(shots, p)
    nz = np.flatnonzero(counts)
    return {bitstring(int(i), state.n_sites): int(counts[i]) for i in nz}


def counts_expectation(counts: dict, sites) -> tuple[float, int]:
    """Mean of ``prod_i (-1)^{bit_i}`` over ``sites`` and the shot total."""
    total = 0
    acc = 0
    for bits, c in counts.items():
        parity = sum(int(bits[s]) for s in sites) & 1
        acc += c * (1 - 2 * parity)
        total += c
    return acc / total, total


def apply_noise_trajectory(state: StateVector, noise: NoiseSpec, rng) -> StateVector:
    """One unraveling of the depolarizing channel.

    Each site independently gets nothing with probability ``1-p`` and X, Y or Z
    with probability ``p/3`` each.
    """
    if noise.p == 0:
        return state.copy()
    gen = make_rng(rng)
    n = state.n_sites
    hit = gen.random(n) < noise.p
    which = gen.integers(0, 3, size=n)
    out = state.amplitudes.copy()
    for q in np.flatnonzero(hit):
        K.apply_pauli_1q(out, int(q), (1, 3, 2)[which[q]], n)
    return StateVector(out, n)


def _site_pauli(code: int, q: int, n: int) -> np.ndarray:
    single = {1: np.array([[0, 1], [1, 0]], dtype=complex),
              2: np.diag([1.0, -1.0]).astype(complex),
              3: np.array([[0, -1j], [1j, 0]])}[code]
    out = np.ones((1, 1), dtype=complex)
    for s in reversed(range(n)):
        out = np.kron(out, single if s == q else np.eye(2))
    return out


def density_evolve(rho: np.ndarray, cycle: FloquetCycle, depth: int,
                   noise: NoiseSpec | None = None) -> list[np.ndarray]:
    """Exact density-matrix evolution with the depolarizing channel (test oracle)."""
    n = cycle.n
    if n > DENSITY_CAP:
        raise CapacityError(f"density-matrix mode limited to n <= {DENSITY_CAP}")
    u = cycle_unitary(cycle)
    paulis = [[_site_pauli(c, q, n) for c in (1, 3, 2)] for q in range(n)]
    out = [rho]
    for _ in range(depth):
        rho = u @ rho @ u.conj().T
        if noise is not None and noise.p > 0:
            for q in range(n):
                rho = (1 - noise.p) * rho + noise.p / 3 * sum(s @ rho @ s for s in paulis[q])
        out.append(rho)
    return out


def apply_noise_batch(arr: np.ndarray, n: int, p: float, rng) -> np.ndarray:
    """Independent depolarizing unravelings for every column of a batch, in place."""
    if p == 0:
        return arr
    gen = make_rng(rng)
    batch = arr.shape[1]
    hit = gen.random((n, batch)) < p
    which = gen.integers(0, 3, size=(n, batch))
    for q in range(n):
        for k, code in enumerate((1, 3, 2)):
            cols = np.flatnonzero(hit[q] & (which[q] == k))
            if len(cols):
                sub = np.ascontiguousarray(arr[:, cols])
                K.apply_pauli_1q(sub, q, code, n)
                arr[:, cols] = sub
    return arr
