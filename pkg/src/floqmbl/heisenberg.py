"""Sparse Pauli-sum algebra and conjugation through Floquet cycles.

A Hermitian Pauli string is stored as two bit masks ``(x, z)``; on site ``q``
the pair ``(x_q, z_q)`` selects I (0,0), X (1,0), Z (0,1) or Y (1,1), with
``Y = i X Z``. A :class:`PauliSum` keeps masks and real coefficients in numpy
arrays, sorted canonically by ``(z, x)`` with duplicates merged. Masks are
``uint64`` up to 64 sites and Python integers (object arrays) beyond.

Directions
----------
``"inverse"`` applies ``O -> U_F O U_F^dagger`` (gates in time order) and
``"forward"`` applies the Heisenberg map ``O -> U_F^dagger O U_F``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .circuit import FloquetCycle, p_gate, u_gate
from .errors import InputError
from .lattice import Lattice, distances_from

MAX_SITES = 4096
WORD_SITES = 64
ZERO_TOL = 1e-15

_LETTERS = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
_BITS = {v: k for k, v in _LETTERS.items()}
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}
# order used by 3x3 transfer matrices
_XYZ = ("X", "Y", "Z")
_XYZ_BITS = np.array([[1, 0], [1, 1], [0, 1]], dtype=np.uint64)
_SPARSE_RE = re.compile(r"([XYZ])(\d+)")


@dataclass(frozen=True)
class PauliString:
    """Hermitian Pauli string on ``n`` sites.

    Examples
    --------
    >>> PauliString.from_label("XIZY").label
    'X0·Z2·Y3'
    """

    x_mask: int
    z_mask: int
    n: int

    def __post_init__(self):
        if not 0 < self.n <= MAX_SITES:
            raise InputError(f"n must be in 1..{MAX_SITES}")
        lim = 1 << self.n
        if not (0 <= self.x_mask < lim and 0 <= self.z_mask < lim):
            raise InputError("mask wider than n sites")

    @classmethod
    def single(cls, letter: str, site: int, n: int) -> "PauliString":
        xb, zb = _BITS[letter]
        return cls(xb << site, zb << site, n)

    @classmethod
    def from_label(cls, label: str, n: int | None = None) -> "PauliString":
        """Parse ``"XIZY"`` (character ``i`` is site ``i``) or ``"X0·Z2·Y3"``."""
        label = label.strip()
        if label and set(label) <= set("IXYZ") and (n is None or len(label) == n):
            x = z = 0
            for i, ch in enumerate(label):
                xb, zb = _BITS[ch]
                x |= xb << i
                z |= zb << i
            return cls(x, z, len(label) if n is None else n)
        if n is None:
            raise InputError("sparse labels need an explicit n")
        x = z = 0
        if label not in ("", "I"):
            parts = re.split(r"[·*\s]+", label)
            for part in parts:
                m = _SPARSE_RE.fullmatch(part)
                if not m:
                    raise InputError(f"cannot parse Pauli label {label!r}")
                site = int(m.group(2))
                if site >= n or ((x | z) >> site) & 1:
                    raise InputError(f"bad or repeated site in {label!r}")
                xb, zb = _BITS[m.group(1)]
                x |= xb << site
                z |= zb << site
        return cls(x, z, n)

    def letter(self, site: int) -> str:
        return _LETTERS[((self.x_mask >> site) & 1, (self.z_mask >> site) & 1)]

    @property
    def support(self) -> tuple:
        m = self.x_mask | self.z_mask
        return tuple(i for i in range(self.n) if (m >> i) & 1)

    @property
    def weight(self) -> int:
        return (self.x_mask | self.z_mask).bit_count()

    @property
    def dense_label(self) -> str:
        return "".join(self.letter(i) for i in range(self.n))

    @property
    def label(self) -> str:
        sites = self.support
        return "·".join(f"{self.letter(i)}{i}" for i in sites) if sites else "I"

    def __str__(self) -> str:
        return self.label


def mask_dtype(n: int):
    """Array dtype holding ``n``-bit masks."""
    return np.uint64 if n <= WORD_SITES else object


def mask_scalar(value: int, n: int):
    """A mask scalar compatible with :func:`mask_dtype`."""
    return np.uint64(value) if n <= WORD_SITES else int(value)


def as_masks(values, n: int) -> np.ndarray:
    if n <= WORD_SITES:
        return np.asarray(values, dtype=np.uint64).ravel()
    out = np.empty(len(values), dtype=object)
    out[:] = [int(v) for v in values]
    return out


def popcount(masks: np.ndarray) -> np.ndarray:
    """Set bits per mask."""
    if masks.dtype != object:
        return np.bitwise_count(masks).astype(int)
    return np.array([int(v).bit_count() for v in masks], dtype=int)


def site_bits(masks: np.ndarray, site: int, n: int) -> np.ndarray:
    """Boolean array: is bit ``site`` set in each mask."""
    return (masks & mask_scalar(1 << site, n)) != 0


def pauli_matrix(ps: PauliString) -> np.ndarray:
    """Dense matrix of a string (little-endian), for small-``n`` checks."""
    out = np.ones((1, 1), dtype=complex)
    for i in reversed(range(ps.n)):
        out = np.kron(out, _PAULI[ps.letter(i)])
    return out


def _merge(x, z, c, n):
    """Sort by (z, x), sum duplicates and drop numerical zeros."""
    if len(c) == 0:
        return x, z, c
    if n <= 32:
        key = (z << np.uint64(n)) | x
        order = np.argsort(key, kind="stable")
        ks = key[order]
        new = np.empty(len(ks), dtype=bool)
        new[0] = True
        np.not_equal(ks[1:], ks[:-1], out=new[1:])
    else:
        order = np.lexsort((x, z))
        xs, zs = x[order], z[order]
        new = np.empty(len(xs), dtype=bool)
        new[0] = True
        new[1:] = (xs[1:] != xs[:-1]) | (zs[1:] != zs[:-1])
    starts = np.flatnonzero(new)
    sums = np.add.reduceat(c[order], starts)
    keep = np.abs(sums) > ZERO_TOL
    pick = order[starts[keep]]
    return x[pick], z[pick], sums[keep]


class PauliSum:
    """Real linear combination of Hermitian Pauli strings.

    Parameters
    ----------
    n : int
        Number of sites (at most ``MAX_SITES``; masks are uint64 up to 64 sites).
    x, z : array_like of int
        Masks per term.
    coeffs : array_like of float
        Real coefficients.
    discarded_weight : float
        Root-sum-square of coefficients dropped by truncation so far.
    """

    __slots__ = ("n", "x", "z", "coeffs", "discarded_weight")

    def __init__(self, n, x, z, coeffs, discarded_weight=0.0, _canonical=False):
        if not 0 < n <= MAX_SITES:
            raise InputError(f"n must be in 1..{MAX_SITES}")
        x = as_masks(x, n)
        z = as_masks(z, n)
        c = np.asarray(coeffs)
        if np.iscomplexobj(c):
            if np.max(np.abs(c.imag), initial=0.0) > 1e-12:
                raise InputError("Pauli-sum coefficients must be real")
            c = c.real
        c = np.asarray(c, dtype=float).ravel()
        if not (len(x) == len(z) == len(c)):
            raise InputError("mask and coefficient arrays differ in length")
        if not _canonical:
            x, z, c = _merge(x, z, c, n)
        self.n = int(n)
        self.x, self.z, self.coeffs = x, z, c
        self.discarded_weight = float(discarded_weight)

    # construction -----------------------------------------------------
    @classmethod
    def from_terms(cls, n: int, terms) -> "PauliSum":
        """From ``{PauliString or label: coeff}`` or an iterable of pairs."""
        items = terms.items() if isinstance(terms, dict) else terms
        xs, zs, cs = [], [], []
        for ps, c in items:
            if isinstance(ps, str):
                ps = PauliString.from_label(ps, n)
            xs.append(ps.x_mask)
            zs.append(ps.z_mask)
            cs.append(c)
        return cls(n, xs, zs, cs)

    @classmethod
    def single(cls, ps: PauliString, coeff: float = 1.0) -> "PauliSum":
        return cls(ps.n, [ps.x_mask], [ps.z_mask], [coeff])

    @classmethod
    def from_json(cls, text: str) -> "PauliSum":
        doc = json.loads(text)
        n = int(doc["n"])
        return cls.from_terms(n, [(PauliString.from_label(t["pauli_label"], n), t["coefficient"])
                                  for t in doc["terms"]])

    # inspection -------------------------------------------------------
    def __len__(self) -> int:
        return len(self.coeffs)

    def __iter__(self):
        for x, z, c in zip(self.x, self.z, self.coeffs):
            yield PauliString(int(x), int(z), self.n), float(c)

    def __repr__(self) -> str:
        head = ", ".join(f"{c:+.4g}*{p.label}" for p, c in list(self)[:4])
        more = "" if len(self) <= 4 else f", ... ({len(self)} terms)"
        return f"PauliSum({head}{more})"

    def norm(self) -> float:
        """l2 norm of the coefficients, ``||O||_F / sqrt(2**n)``."""
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    def weights(self) -> np.ndarray:
        """Support size of every term."""
        return popcount(self.x | self.z)

    def coefficient(self, ps: PauliString) -> float:
        hit = np.flatnonzero((self.x == mask_scalar(ps.x_mask, self.n))
                             & (self.z == mask_scalar(ps.z_mask, self.n)))
        return float(self.coeffs[hit[0]]) if len(hit) else 0.0

    def lookup(self, x, z) -> np.ndarray:
        """Coefficients for arrays of masks (0 where absent)."""
        x = as_masks(x, self.n)
        z = as_masks(z, self.n)
        if len(self) == 0:
            return np.zeros(len(x))
        if self.n <= 32:
            nn = np.uint64(self.n)
            mine = (self.z << nn) | self.x
            theirs = (z << nn) | x
            pos = np.searchsorted(mine, theirs)
            pos = np.minimum(pos, len(mine) - 1)
            found = mine[pos] == theirs
            return np.where(found, self.coeffs[pos], 0.0)
        table = {(int(a), int(b)): c for a, b, c in zip(self.x, self.z, self.coeffs)}
        return np.array([table.get((int(a), int(b)), 0.0) for a, b in zip(x, z)])

    def to_dict(self) -> dict:
        return {p: c for p, c in self}

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "terms": [{"pauli_label": p.label, "coefficient": c}
                                                  for p, c in self]})

    def to_dense(self) -> np.ndarray:
        if self.n > 12:
            raise InputError("dense conversion limited to n <= 12")
        out = np.zeros((1 << self.n, 1 << self.n), dtype=complex)
        for p, c in self:
            out += c * pauli_matrix(p)
        return out

    # algebra ----------------------------------------------------------
    def _check(self, other):
        if other.n != self.n:
            raise InputError("operators act on different numbers of sites")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(self.n, np.concatenate([self.x, other.x]), np.concatenate([self.z, other.z]),
                        np.concatenate([self.coeffs, other.coeffs]),
                        np.hypot(self.discarded_weight, other.discarded_weight))

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + other * -1.0

    def __mul__(self, s: float) -> "PauliSum":
        return PauliSum(self.n, self.x, self.z, self.coeffs * float(s),
                        abs(float(s)) * self.discarded_weight, _canonical=s != 0)

    __rmul__ = __mul__

    def dot(self, other: "PauliSum") -> float:
        """Normalized Hilbert-Schmidt inner product ``2^-n Tr(A B)``."""
        self._check(other)
        return float(np.dot(self.coeffs, other.lookup(self.x, self.z)))

    def normalized(self) -> "PauliSum":
        nrm = self.norm()
        if nrm == 0:
            raise InputError("cannot normalize the zero operator")
        return self * (1.0 / nrm)


def identity_free_check(op: PauliSum) -> bool:
    return not np.any((op.x == 0) & (op.z == 0))


# ---------------------------------------------------------------------------
# gate transfer matrices


def transfer_matrix_1q(g: np.ndarray) -> np.ndarray:
    """3x3 real map of ``sigma_j -> g sigma_j g^dagger`` on (X, Y, Z).

    ``R[k, j] = Tr(sigma_k g sigma_j g^dagger) / 2``. Raises if the map is not
    real, which would signal a non-Hermitian-preserving bookkeeping error.
    """
    r = np.empty((3, 3), dtype=complex)
    gd = g.conj().T
    for j, sj in enumerate(_XYZ):
        img = g @ _PAULI[sj] @ gd
        for k, sk in enumerate(_XYZ):
            r[k, j] = np.trace(_PAULI[sk] @ img) / 2
    if np.max(np.abs(r.imag)) > 1e-12:
        raise AssertionError("single-site transfer matrix is not real")
    return r.real


def transfer_matrix_2q(g: np.ndarray) -> np.ndarray:
    """16x16 real transfer matrix on two-site Paulis (index ``4*b + a``; I,X,Y,Z)."""
    letters = ("I", "X", "Y", "Z")
    basis = [np.kron(_PAULI[lb], _PAULI[la]) for lb in letters for la in letters]
    gd = g.conj().T
    r = np.empty((16, 16), dtype=complex)
    for j, pj in enumerate(basis):
        img = g @ pj @ gd
        for k, pk in enumerate(basis):
            r[k, j] = np.trace(pk @ img) / 4
    if np.max(np.abs(r.imag)) > 1e-12:
        raise AssertionError("two-site transfer matrix is not real")
    return r.real


def _apply_1q(x, z, c, q, rmat, n):
    """Apply a 3x3 transfer matrix on site ``q`` and merge."""
    bit = mask_scalar(1 << q, n)
    xb = (x & bit) != 0
    zb = (z & bit) != 0
    act = xb | zb
    if not act.any():
        return x, z, c
    # column index: X=0, Y=1, Z=2
    j = np.where(xb & zb, 1, np.where(xb, 0, 2))[act]
    xa, za, ca = x[act] & ~bit, z[act] & ~bit, c[act]
    xs, zs, cs = [x[~act]], [z[~act]], [c[~act]]
    for k in range(3):
        coef = ca * rmat[k, j]
        nz = coef != 0.0
        if not nz.any():
            continue
        kx = mask_scalar(int(_XYZ_BITS[k, 0]) << q, n)
        kz = mask_scalar(int(_XYZ_BITS[k, 1]) << q, n)
        xs.append(xa[nz] | kx)
        zs.append(za[nz] | kz)
        cs.append(coef[nz])
    return _merge(np.concatenate(xs), np.concatenate(zs), np.concatenate(cs), n)


def _apply_cz(x, z, c, a, b):
    """CZ conjugation: ``X_a -> X_a Z_b`` and the mirror; a bijection with signs."""
    if x.dtype == object:
        ua, ub, one = a, b, 1
    else:
        ua, ub, one = np.uint64(a), np.uint64(b), np.uint64(1)
    xa = (x >> ua) & one
    xb = (x >> ub) & one
    za = (z >> ua) & one
    zb = (z >> ub) & one
    flip = (xa & xb & (za ^ zb)).astype(bool)
    z = z ^ (xa << ub) ^ (xb << ua)
    c = np.where(flip, -c, c)
    return x, z, c


@lru_cache(maxsize=64)
def _layer_maps(theta: float, phases: tuple, direction: str):
    """Fused per-site transfer matrices for touched and untouched sites."""
    ug = u_gate(theta)
    out_touched, out_idle = [], []
    for phi in phases:
        pg = p_gate(phi)
        if direction == "inverse":
            # O -> P U O U^+ P^+
            touched = transfer_matrix_1q(pg @ ug)
            idle = transfer_matrix_1q(pg)
        else:
            # O -> U^+ P^+ O P U
            touched = transfer_matrix_1q((pg @ ug).conj().T)
            idle = transfer_matrix_1q(pg.conj().T)
        out_touched.append(touched)
        out_idle.append(idle)
    return out_touched, out_idle


@dataclass(frozen=True)
class TruncationPolicy:
    """Term filter used during approximate evolution.

    Attributes
    ----------
    max_support : int or None
        Drop strings acting on more sites.
    floor : float
        Drop terms with ``|a| < floor``.
    max_distance : int or None
        Drop strings reaching further than this from ``center``.
    center : int or None
        Reference site for ``max_distance``.
    """

    max_support: int | None = None
    floor: float = 0.0
    max_distance: int | None = None
    center: int | None = None

    def __post_init__(self):
        if self.max_support is not None and self.max_support < 1:
            raise InputError("max_support must be positive")
        if self.floor < 0:
            raise InputError("floor must be non-negative")
        if self.max_distance is not None and (self.max_distance < 0 or self.center is None):
            raise InputError("a distance cap needs a non-negative radius and a center")


DEFAULT_POLICY = TruncationPolicy(max_support=8, floor=1e-6)


def truncate(op: PauliSum, policy: TruncationPolicy, lattice: Lattice | None = None) -> PauliSum:
    """Remove terms violating ``policy``; the dropped l2 weight is accumulated.

    Distances use ``lattice`` coordinates, or ``|i - center|`` without one.
    """
    keep = np.ones(len(op), dtype=bool)
    if policy.floor > 0:
        keep &= np.abs(op.coeffs) >= policy.floor
    if policy.max_support is not None:
        keep &= op.weights() <= policy.max_support
    if policy.max_distance is not None:
        if lattice is not None:
            dist = distances_from(lattice, policy.center)
        else:
            dist = np.abs(np.arange(op.n) - policy.center)
        far = 0
        for s in np.flatnonzero(dist > policy.max_distance):
            far |= 1 << int(s)
        far = mask_scalar(far, op.n)
        keep &= ((op.x | op.z) & far) == 0
    if keep.all():
        return op
    lost = op.coeffs[~keep]
    discarded = float(np.sqrt(op.discarded_weight ** 2 + np.dot(lost, lost)))
    return PauliSum(op.n, op.x[keep], op.z[keep], op.coeffs[keep], discarded, _canonical=True)


def conjugate_by_cycle(op: PauliSum, cycle: FloquetCycle, direction: str = "inverse",
                       policy: TruncationPolicy | None = None,
                       lattice: Lattice | None = None) -> PauliSum:
    """Conjugate ``op`` through one Floquet cycle, gate by gate.

    Parameters
    ----------
    op : PauliSum
    cycle : FloquetCycle
    direction : {"inverse", "forward"}
        ``"inverse"`` gives ``U O U^dagger``, ``"forward"`` gives ``U^dagger O U``.
    policy : TruncationPolicy, optional
        Applied after every layer; dropped weight is accumulated.
    """
    if direction not in ("inverse", "forward"):
        raise InputError("direction must be 'inverse' or 'forward'")
    if op.n != cycle.n:
        raise InputError("operator and cycle sizes differ")
    n = op.n
    touched_maps, idle_maps = _layer_maps(cycle.theta, tuple(cycle.disorder.phases), direction)
    blocks = cycle.layer_blocks()
    if direction == "forward":
        blocks = blocks[::-1]
    x, z, c = op.x.copy(), op.z.copy(), op.coeffs.copy()
    discarded = op.discarded_weight
    lattice = lattice or cycle.lattice
    for edges, touched in blocks:
        touched = set(touched)
        if direction == "inverse":
            for a, b in edges:
                x, z, c = _apply_cz(x, z, c, a, b)
        for q in range(n):
            rmat = touched_maps[q] if q in touched else idle_maps[q]
            x, z, c = _apply_1q(x, z, c, q, rmat, n)
        if direction == "forward":
            for a, b in edges:
                x, z, c = _apply_cz(x, z, c, a, b)
        if policy is not None:
            out = truncate(PauliSum(n, x, z, c, discarded, _canonical=direction == "inverse"),
                           policy, lattice)
            x, z, c, discarded = out.x, out.z, out.coeffs, out.discarded_weight
    return PauliSum(n, x, z, c, discarded)


def conjugate_power(op: PauliSum, cycle: FloquetCycle, depth: int, direction: str = "inverse",
                    policy: TruncationPolicy | None = None) -> list[PauliSum]:
    """``[op, E(op), ..., E^depth(op)]`` for the chosen direction."""
    out = [op]
    for _ in range(depth):
        out.append(conjugate_by_cycle(out[-1], cycle, direction, policy))
    return out


def b_matrix(cycle: FloquetCycle, strings) -> np.ndarray:
    """Symmetrized single-cycle correlation matrix over the strings ``Q``.

    The raw matrix ``(delta - 2^-n Tr(U^+ P_mu U P_nu)) / 2`` need not be
    symmetric, but only its symmetric part enters ``a^T B a``, so that part is
    returned. Entries come from sparse forward conjugation of each ``P_mu``.
    """
    strings = list(strings)
    if not strings:
        raise InputError("Q must be nonempty")
    keys = {(p.x_mask, p.z_mask) for p in strings}
    if len(keys) != len(strings):
        raise InputError("Q contains duplicate strings")
    n = cycle.n
    xq = as_masks([p.x_mask for p in strings], n)
    zq = as_masks([p.z_mask for p in strings], n)
    g = np.empty((len(strings), len(strings)))
    for i, p in enumerate(strings):
        img = conjugate_by_cycle(PauliSum.single(p), cycle, "forward")
        g[i] = img.lookup(xq, zq)
    raw = 0.5 * (np.eye(len(strings)) - g)
    return 0.5 * (raw + raw.T)


def imprecision(op: PauliSum, cycle: FloquetCycle) -> float:
    """``||[U_F, L]||_F / (2 ||L||_F)`` from one exact forward conjugation."""
    nrm = op.norm()
    if nrm == 0 or len(op) == 0:
        raise InputError("imprecision of the zero operator is undefined")
    img = conjugate_by_cycle(PauliSum(op.n, op.x, op.z, op.coeffs, _canonical=True), cycle, "forward")
    diff = img - PauliSum(op.n, op.x, op.z, op.coeffs, _canonical=True)
    return float(min(1.0, diff.norm() / (2.0 * nrm)))
