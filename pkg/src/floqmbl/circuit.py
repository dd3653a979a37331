"""Floquet cycle of the disordered kicked-Ising circuit.

One layer ``k`` applies CZ on every edge of ``C_k``, then ``U(theta)`` on every
site touched by ``C_k``, then the disorder phase ``P(phi_i)`` on every site.
A cycle is the ordered product of all nonempty layers; a layer without edges
(the second layer of a two-site chain) is skipped entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import CapacityError, DomainError
from .lattice import Lattice
from .rng import make_rng

DENSE_CAP = 14

CZ = np.diag([1.0, 1.0, 1.0, -1.0])


def u_gate(theta: float) -> np.ndarray:
    """``[[c, s], [s, -c]]`` with ``c = cos(theta/2)`` and ``s = sin(theta/2)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, s], [s, -c]])


def p_gate(phi: float) -> np.ndarray:
    """``diag(1, exp(i phi))``."""
    return np.array([[1.0, 0.0], [0.0, np.exp(1j * phi)]])


@dataclass(frozen=True)
class Gate:
    """Primitive gate: ``kind`` is ``"cz"``, ``"u"`` or ``"p"``."""

    kind: str
    sites: tuple
    angle: float = 0.0

    def matrix(self) -> np.ndarray:
        if self.kind == "cz":
            return CZ
        if self.kind == "u":
            return u_gate(self.angle)
        return p_gate(self.angle)

    def __str__(self) -> str:
        where = ",".join(str(s) for s in self.sites)
        if self.kind == "cz":
            return f"CZ {where}"
        return f"{self.kind.upper()}({self.angle:.12g}) {where}"


@dataclass(frozen=True)
class DisorderRealization:
    """Per-site phases ``phi_i`` in ``[-pi, pi]`` and the seed that drew them."""

    phases: tuple
    seed: int

    def __len__(self) -> int:
        return len(self.phases)


@dataclass(frozen=True)
class FloquetCycle:
    """Immutable gate sequence of one Floquet period.

    Attributes
    ----------
    theta : float
        Coupling angle in radians, ``0 <= theta <= pi/2``.
    disorder : DisorderRealization
    lattice : Lattice
    gates : tuple of Gate
        Time-ordered primitive gates.
    """

    theta: float
    disorder: DisorderRealization
    lattice: Lattice
    gates: tuple

    @property
    def n(self) -> int:
        return self.lattice.n_sites

    @property
    def phases(self) -> np.ndarray:
        return np.asarray(self.disorder.phases, dtype=float)

    def layer_blocks(self):
        """Per layer: (edges, sites receiving ``U``)."""
        out = []
        for layer in self.lattice.layers:
            if not layer:
                continue
            touched = sorted({s for e in layer for s in e})
            out.append((tuple(layer), tuple(touched)))
        return out

    def two_qubit_gate_count(self, depth: int = 1) -> int:
        return sum(g.kind == "cz" for g in self.gates) * depth

    def gate_log(self) -> str:
        """Plain-text listing, one gate per line."""
        return "\n".join(str(g) for g in self.gates)

    def to_json(self) -> str:
        return json.dumps({
            "theta_over_pi": self.theta / np.pi,
            "seed": self.disorder.seed,
            "phases": list(self.disorder.phases),
            "lattice": json.loads(self.lattice.to_json()),
        })


def sample_disorder(lattice: Lattice, seed: int) -> DisorderRealization:
    """Draw i.i.d. uniform phases on ``[-pi, pi]`` from a Philox stream."""
    phases = make_rng(seed).uniform(-np.pi, np.pi, size=lattice.n_sites)
    return DisorderRealization(tuple(float(p) for p in phases), int(seed))


def fixed_disorder(phases, seed: int = 0) -> DisorderRealization:
    """Wrap explicit phases, checking their range."""
    phases = tuple(float(p) for p in phases)
    if any(abs(p) > np.pi + 1e-12 for p in phases):
        raise DomainError("phases must lie in [-pi, pi]")
    return DisorderRealization(phases, int(seed))


def build_cycle(lattice: Lattice, theta: float, disorder: DisorderRealization) -> FloquetCycle:
    """Assemble the gate list of one cycle.

    Raises
    ------
    DomainError
        If ``theta`` is outside ``[0, pi/2]`` or the disorder has the wrong length.
    """
    if not (-1e-12 <= theta <= np.pi / 2 + 1e-12):
        raise DomainError(f"theta must lie in [0, pi/2], got {theta}")
    if len(disorder) != lattice.n_sites:
        raise DomainError("disorder length does not match the lattice")
    theta = float(min(max(theta, 0.0), np.pi / 2))
    gates = []
    for layer in lattice.layers:
        if not layer:
            continue
        for a, b in sorted(layer):
            gates.append(Gate("cz", (a, b)))
        for s in sorted({s for e in layer for s in e}):
            gates.append(Gate("u", (s,), theta))
        for s in range(lattice.n_sites):
            gates.append(Gate("p", (s,), disorder.phases[s]))
    return FloquetCycle(theta, disorder, lattice, tuple(gates))


def cycle_unitary(cycle: FloquetCycle, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense ``2**n x 2**n`` Floquet unitary, little-endian basis.

    Layer diagonals are applied as row scalings and the ``U`` gates through an
    in-place single-site kernel, so real arithmetic is kept as long as possible.
    """
    n = cycle.n
    if n > cap:
        raise CapacityError(f"dense unitary needs n <= {cap}, got {n}")
    phase = np.exp(1j * K.phase_angles(n, cycle.phases))
    ug = u_gate(cycle.theta)
    mat = None
    pending = None
    for edges, touched in cycle.layer_blocks():
        d = K.cz_diagonal(n, edges)
        if pending is not None:
            d = d * pending
        if mat is None:
            # first layer: real Kronecker product times the CZ signs
            mat = np.ones((1, 1))
            for q in reversed(range(n)):
                mat = np.kron(mat, ug if q in touched else np.eye(2))
            mat *= d[None, :]
        else:
            mat = d[:, None] * mat
            for q in touched:
                K.apply_1q(mat, q, ug, n)
        pending = phase
    if mat is None:
        mat = np.eye(1 << n)
    return np.ascontiguousarray(pending[:, None] * mat) if pending is not None else mat.astype(complex)
