"""Local integrals of motion: guesses, time-averaged extraction and analysis.

The extracted operator is the time average of inverse-time conjugations,
``L^(D) = (D+1)^-1 sum_{d=0..D} U^d L0 U^-d``. It is computed either exactly
with sparse Pauli algebra, or from simulated measurements of the scheme's
periodic initial states evolved under the circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .circuit import FloquetCycle
from .errors import CoverageError, DomainError, FidelityError, InputError, OverfittingError
from .heisenberg import (PauliString, PauliSum, TruncationPolicy, b_matrix, conjugate_by_cycle,
                         imprecision, site_bits)
from .lattice import CHAIN, Lattice, SitePattern, cdw_pattern, distances_from, graph_distances
from .rng import make_rng
from .statevec import (apply_cycle_array, apply_noise_batch, basis_states, pauli_expectations,
                       rotate_to_basis, walsh_hadamard)

FIDELITY_LIMIT = 0.5
# heavy-hex qubits per unit area in the doubled brick-wall coordinates
HEAVY_HEX_DENSITY = 5.0 / 8.0


@dataclass
class Liom:
    """An approximate local integral of motion and its diagnostics.

    Attributes
    ----------
    operator : PauliSum
    center : int
        Site of the initial guess.
    depth_used : int
        Largest cycle count ``D`` in the average.
    guess_id : str
    imprecision : float
        ``||[U_F, L]||_F / (2 ||L||_F)``.
    localization_length : float
        Weighted distance of the normalized operator from ``center``.
    discarded_weight : float
        l2 weight lost to truncation, relative to the guess.
    lambda_d : float
        Minimum normalized autocorrelation of the guess over ``d <= D``.
    extra : dict
        Method-specific fields (standard errors, circuit counts, ...).
    """

    operator: PauliSum
    center: int
    depth_used: int
    guess_id: str
    imprecision: float
    localization_length: float = 0.0
    discarded_weight: float = 0.0
    lambda_d: float = 1.0
    extra: dict = field(default_factory=dict)

    def averaging_bound(self) -> float:
        """``1 / (sqrt(lambda_D) D)``; infinite when ``lambda_D <= 0``."""
        if self.lambda_d <= 0 or self.depth_used < 1:
            return math.inf
        return 1.0 / (math.sqrt(self.lambda_d) * self.depth_used)

    def to_dict(self, scheme: "MeasurementScheme | None" = None) -> dict:
        return {
            "center": self.center,
            "D": self.depth_used,
            "guess": self.guess_id,
            "scheme": None if scheme is None else [scheme.p, scheme.k, scheme.l],
            "coefficients": [{"pauli_label": p.label, "coefficient": c} for p, c in self.operator],
            "epsilon": self.imprecision,
            "lambda": self.localization_length,
            "discarded_weight": self.discarded_weight,
        }


# ---------------------------------------------------------------------------
# initial guesses


def guess_simple(site: int, n: int) -> PauliSum:
    """The single-term guess ``Z_site``."""
    if not 0 <= site < n:
        raise IndexError(f"site {site} outside 0..{n - 1}")
    return PauliSum.single(PauliString.single("Z", site, n))


def local_strings(n: int, sites, max_support: int | None = None, diagonal_only: bool = False):
    """All non-identity strings supported inside ``sites``."""
    sites = list(sites)
    letters = "Z" if diagonal_only else "XYZ"
    out = []
    kmax = len(sites) if max_support is None else max_support
    for k in range(1, kmax + 1):
        for sub in combinations(sites, k):
            for lets in product(letters, repeat=k):
                x = z = 0
                for s, ch in zip(sub, lets):
                    if ch in "XY":
                        x |= 1 << s
                    if ch in "YZ":
                        z |= 1 << s
                out.append(PauliString(x, z, n))
    return out


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def guess_theoretical(cycle: FloquetCycle, strings, return_eigenvalue: bool = False):
    """Minimal eigenvector of the single-cycle B block over ``strings``.

    The resulting operator has imprecision ``sqrt(b0)``, the smallest value
    reachable inside the span of ``strings``.
    """
    strings = list(strings)
    b = b_matrix(cycle, strings)
    w, v = np.linalg.eigh(b)
    vec = _fix_sign(v[:, 0])
    op = PauliSum(cycle.n, [p.x_mask for p in strings], [p.z_mask for p in strings], vec)
    if return_eigenvalue:
        return op, float(max(w[0], 0.0))
    return op


def guess_experimental(f, strings, depth: int | None = None, return_variance: bool = False):
    """Combination of ``strings`` whose time series varies least.

    Parameters
    ----------
    f : array_like, shape (|Q|, |Psi|, D)
        Expectations ``f[mu, k, d]`` for initial state ``k`` after ``d`` cycles.
    strings : list of PauliString
    depth : int, optional
        Number of time points to use (default: all).

    Raises
    ------
    OverfittingError
        When ``D * |Psi| < |Q|``.
    """
    strings = list(strings)
    f = np.asarray(f, dtype=float)
    if depth is not None:
        f = f[:, :, :depth]
    nq, npsi, nd = f.shape
    if nq != len(strings):
        raise InputError("table rows must match the strings")
    if nd * npsi < nq:
        raise OverfittingError(f"{nd} depths x {npsi} states < {nq} strings")
    mean = f.mean(axis=2)
    centered = f - mean[:, :, None]
    a = np.einsum("ikd,jkd->ij", centered, centered) / nd
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    vec = _fix_sign(v[:, 0])
    n = strings[0].n
    op = PauliSum(n, [p.x_mask for p in strings], [p.z_mask for p in strings], vec)
    if return_variance:
        return op, float(max(w[0], 0.0))
    return op


def expectation_table(cycle: FloquetCycle, strings, patterns, depth: int) -> np.ndarray:
    """Exact ``f[mu, k, d] = <psi_k| U^-d P_mu U^d |psi_k>`` for ``d < depth``.

    ``patterns`` is a list of SitePattern or a ``(2**n, K)`` array of states.
    """
    strings = list(strings)
    xq = [p.x_mask for p in strings]
    zq = [p.z_mask for p in strings]
    if isinstance(patterns, np.ndarray):
        batch = np.array(patterns, dtype=complex)
    else:
        batch = basis_states(list(patterns))
    out = np.empty((len(strings), batch.shape[1], depth))
    for d in range(depth):
        for k in range(batch.shape[1]):
            out[:, k, d] = pauli_expectations(batch[:, k], cycle.n, xq, zq)
        batch = apply_cycle_array(batch, cycle)
    return out


def random_product_states(n: int, count: int, seed: int = 0) -> np.ndarray:
    """``(2**n, count)`` batch of Haar-random single-site product states."""
    gen = make_rng(seed)
    out = np.empty((1 << n, count), dtype=complex)
    for k in range(count):
        psi = np.ones(1, dtype=complex)
        for _ in range(n):
            v = gen.normal(size=2) + 1j * gen.normal(size=2)
            psi = np.kron(v / np.linalg.norm(v), psi)
        out[:, k] = psi
    return out


# ---------------------------------------------------------------------------
# exact extraction


def autocorrelation(evolved) -> np.ndarray:
    """Normalized overlaps ``<L0, L_d> / <L0, L0>`` for a list ``[L0, L1, ...]``."""
    l0 = evolved[0]
    nrm = l0.dot(l0)
    return np.array([l0.dot(op) / nrm for op in evolved])


def damp(op: PauliSum, p: float) -> PauliSum:
    """Depolarizing channel in operator language: each term times ``(1 - 4p/3)^support``."""
    if p == 0:
        return op
    f = 1.0 - 4.0 * p / 3.0
    return PauliSum(op.n, op.x, op.z, op.coeffs * f ** op.weights(), op.discarded_weight)


def extract_exact(cycle: FloquetCycle, l0: PauliSum, depth: int,
                  policy: TruncationPolicy | None = None, noise_p: float = 0.0,
                  center: int | None = None, guess_id: str = "simple",
                  lattice: Lattice | None = None) -> Liom:
    """Time-averaged LIOM from sparse inverse-time conjugation.

    Parameters
    ----------
    cycle : FloquetCycle
    l0 : PauliSum
        Initial guess.
    depth : int
        ``D``; the average runs over ``d = 0..D``.
    policy : TruncationPolicy, optional
        Applied after every layer.
    noise_p : float
        Depolarizing probability folded in after every cycle (exact channel).

    Raises
    ------
    FidelityError
        If truncation discards more than half of the guess's l2 weight.
    """
    if depth < 1:
        raise DomainError("depth must be at least 1")
    lattice = lattice or cycle.lattice
    if center is None:
        center = _guess_center(l0)
    nrm0 = l0.norm()
    evolved = [l0]
    total = l0
    lost = 0.0
    cur = l0
    for _ in range(depth):
        cur = conjugate_by_cycle(cur, cycle, "inverse", policy, lattice)
        cur = damp(cur, noise_p)
        lost += cur.discarded_weight
        evolved.append(cur)
        total = total + PauliSum(cur.n, cur.x, cur.z, cur.coeffs, _canonical=True)
    discarded = lost / ((depth + 1) * nrm0)
    if discarded > FIDELITY_LIMIT:
        raise FidelityError(f"truncation discarded {discarded:.3f} of the guess weight")
    op = total * (1.0 / (depth + 1))
    op.discarded_weight = discarded
    lam = float(np.min(autocorrelation(evolved)))
    liom = Liom(op, center, depth, guess_id, imprecision(op, cycle), 0.0, discarded, lam)
    liom.localization_length = localization_length(liom, lattice)
    return liom


def _guess_center(op: PauliSum) -> int:
    # site carrying the largest weight; strings with even support use the lower midpoint
    best = int(np.argmax(np.abs(op.coeffs)))
    ps = PauliString(int(op.x[best]), int(op.z[best]), op.n)
    sup = ps.support
    return sup[(len(sup) - 1) // 2]


# ---------------------------------------------------------------------------
# measurement schemes


@dataclass(frozen=True)
class MeasurementScheme:
    """The (p, k, l) design: ``3^p`` readout bases, support ``<= k``, ``2^l`` states."""

    p: int
    k: int
    l: int

    def __post_init__(self):
        if not 1 <= self.p <= self.k:
            raise DomainError("scheme needs 1 <= p <= k")
        if self.l < 1:
            raise DomainError("scheme needs l >= 1")

    def circuit_count(self, n_depths: int) -> int:
        """Circuits for ``n_depths`` depth instances: ``n_depths * 2^l * 3^p``."""
        return n_depths * (2 ** self.l) * (3 ** self.p)

    @classmethod
    def full(cls, n: int) -> "MeasurementScheme":
        return cls(n, n, n)


def periodic_initial_states(l: int, n: int) -> list[SitePattern]:
    """All ``2^l`` words of length ``l`` repeated along ``n`` sites."""
    if not 1 <= l <= n:
        raise DomainError("period must satisfy 1 <= l <= n")
    out = []
    for word in product((0, 1), repeat=l):
        out.append(SitePattern(tuple(word[i % l] for i in range(n))))
    return out


@dataclass(frozen=True)
class ColoringScheme:
    """Per-site colours for initial states and readout bases, with conflict scores."""

    state_colors: tuple
    basis_colors: tuple
    state_conflicts: int
    basis_conflicts: int


def _conflicts(colors, close_pairs) -> int:
    c = np.asarray(colors)
    return int(np.sum(c[close_pairs[:, 0]] == c[close_pairs[:, 1]])) if len(close_pairs) else 0


def _close_pairs(lattice: Lattice, radius: int) -> np.ndarray:
    """Site pairs at graph distance ``1..radius``."""
    pairs = []
    for a in range(lattice.n_sites):
        dist = graph_distances(lattice, a)
        for b in np.flatnonzero((dist > 0) & (dist <= radius)):
            if b > a:
                pairs.append((a, int(b)))
    return np.array(pairs, dtype=int).reshape(-1, 2)


def _ball_pairs(lattice: Lattice, radius: int) -> np.ndarray:
    """Site pairs that share some qubit's radius-``radius`` neighbourhood."""
    pairs = set()
    for v in range(lattice.n_sites):
        ball = np.flatnonzero(graph_distances(lattice, v) <= radius).tolist()
        pairs.update(combinations(sorted(ball), 2))
    return np.array(sorted(pairs), dtype=int).reshape(-1, 2)


def _min_conflict_coloring(n: int, n_colors: int, pairs: np.ndarray, seed: int,
                           sweeps: int = 200, restarts: int = 8):
    if n_colors >= n:
        return tuple(range(n)), 0
    nbrs = [[] for _ in range(n)]
    for a, b in pairs:
        nbrs[a].append(b)
        nbrs[b].append(a)
    gen = make_rng(seed)
    best, best_score = None, None
    for _ in range(restarts):
        col = gen.integers(0, n_colors, size=n)
        for _ in range(sweeps):
            changed = False
            for v in gen.permutation(n):
                cost = np.bincount(col[nbrs[v]], minlength=n_colors) if nbrs[v] else np.zeros(n_colors)
                options = np.flatnonzero(cost == cost.min())
                if cost[col[v]] > cost.min():
                    col[v] = options[gen.integers(len(options))]
                    changed = True
            if not changed:
                break
        score = _conflicts(col, pairs)
        if best_score is None or score < best_score:
            best, best_score = col.copy(), score
        if best_score == 0:
            break
    return tuple(int(c) for c in best), int(best_score)


def coloring_scheme_2d(lattice: Lattice, l: int, r: int, p: int, k: int, seed: int = 0) -> ColoringScheme:
    """Colourings for the 2D version of the (p, k, l) scheme.

    Initial states use ``l`` colours and avoid repeating a colour inside any
    qubit's radius-``r`` neighbourhood. Readout bases use ``p`` colours and
    avoid repeats along paths of ``k`` sites (distance ``k - 1``). Two basis
    colours give the bipartite colouring. Scores count conflicting pairs.
    """
    if l < 1 or p < 1:
        raise DomainError("colour counts must be positive")
    n = lattice.n_sites
    states, s_score = _min_conflict_coloring(n, l, _ball_pairs(lattice, r), seed)
    if p == 2:
        basis = cdw_pattern(lattice).bits
        b_score = _conflicts(basis, _close_pairs(lattice, 1))
    else:
        basis, b_score = _min_conflict_coloring(n, p, _close_pairs(lattice, max(k - 1, 1)), seed + 1)
    return ColoringScheme(tuple(states), tuple(basis), s_score, b_score)


@dataclass(frozen=True)
class SchemeLayout:
    """A scheme realized on a lattice: site colours, states, strings, bases."""

    scheme: MeasurementScheme
    state_colors: tuple
    basis_colors: tuple

    @classmethod
    def for_lattice(cls, scheme: MeasurementScheme, lattice: Lattice, seed: int = 0,
                    radius: int | None = None) -> "SchemeLayout":
        n = lattice.n_sites
        if lattice.kind == CHAIN:
            return cls(scheme, tuple(i % scheme.l for i in range(n)),
                       tuple(i % scheme.p for i in range(n)))
        r = radius if radius is not None else max(1, scheme.k // 2)
        col = coloring_scheme_2d(lattice, scheme.l, r, scheme.p, scheme.k, seed)
        return cls(scheme, col.state_colors, col.basis_colors)

    def initial_states(self) -> list[SitePattern]:
        out = []
        for word in product((0, 1), repeat=self.scheme.l):
            out.append(SitePattern(tuple(word[c] for c in self.state_colors)))
        return out

    def bases(self) -> list[str]:
        out = []
        for letters in product("XYZ", repeat=self.scheme.p):
            out.append("".join(letters[c] for c in self.basis_colors))
        return out


def _connected_sets(lattice: Lattice, size: int):
    """All connected site sets of exactly ``size`` sites."""
    n = lattice.n_sites
    size = min(size, n)
    adj = [set() for _ in range(n)]
    for a, b in lattice.edges:
        adj[a].add(b)
        adj[b].add(a)
    found = set()

    def grow(current, frontier, root):
        if len(current) == size:
            found.add(frozenset(current))
            return
        for v in sorted(frontier):
            if v < root or v in current:
                continue
            new_frontier = (frontier | adj[v]) - current - {v}
            grow(current | {v}, {w for w in new_frontier if w > root}, root)

    for root in range(n):
        grow({root}, {w for w in adj[root] if w > root}, root)
    return sorted(tuple(sorted(s)) for s in found)


def measurable_strings(layout: SchemeLayout, lattice: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Masks of every string the scheme can estimate.

    A string qualifies when its support fits in a connected set of at most
    ``k`` sites and sites sharing a basis colour carry the same letter.
    """
    n = lattice.n_sites
    colors = np.asarray(layout.basis_colors)
    keys = []
    for sites in _connected_sets(lattice, layout.scheme.k):
        s = len(sites)
        codes = np.indices((4,) * s).reshape(s, -1).T  # 0=I,1=X,2=Y,3=Z
        ok = np.ones(len(codes), dtype=bool)
        for a, b in combinations(range(s), 2):
            if colors[sites[a]] == colors[sites[b]]:
                ca, cb = codes[:, a], codes[:, b]
                ok &= (ca == 0) | (cb == 0) | (ca == cb)
        codes = codes[ok]
        x = np.zeros(len(codes), dtype=np.uint64)
        z = np.zeros(len(codes), dtype=np.uint64)
        for j, site in enumerate(sites):
            bit = np.uint64(1 << site)
            x |= np.where((codes[:, j] == 1) | (codes[:, j] == 2), bit, np.uint64(0))
            z |= np.where((codes[:, j] == 2) | (codes[:, j] == 3), bit, np.uint64(0))
        keep = (x | z) != 0
        keys.append(np.stack([z[keep], x[keep]], axis=1))
    allk = np.unique(np.concatenate(keys), axis=0)
    return allk[:, 1].copy(), allk[:, 0].copy()


def _diag_values(l0: PauliSum, patterns) -> np.ndarray:
    """Eigenvalue of a diagonal ``l0`` on each computational pattern."""
    if np.any(l0.x != 0):
        raise InputError("sampled extraction needs a diagonal (Z-type) guess")
    idx = np.array([p.index for p in patterns], dtype=np.uint64)
    out = np.zeros(len(patterns))
    for z, c in zip(l0.z, l0.coeffs):
        par = np.bitwise_count(idx & z) & 1
        out += c * (1.0 - 2.0 * par)
    return out


def _letter_requirements(x, z, layout: SchemeLayout, n: int) -> np.ndarray:
    """Per string and basis colour: required letter (1=X, 2=Y, 3=Z) or 0."""
    p = layout.scheme.p
    req = np.zeros((len(x), p), dtype=np.int8)
    for site in range(n):
        xb = ((x >> np.uint64(site)) & np.uint64(1)).astype(np.int8)
        zb = ((z >> np.uint64(site)) & np.uint64(1)).astype(np.int8)
        code = np.where(xb & zb, 2, np.where(xb, 1, np.where(zb, 3, 0))).astype(np.int8)
        col = layout.basis_colors[site]
        req[:, col] = np.where(code > 0, code, req[:, col])
    return req


def extract_sampled(cycle: FloquetCycle, l0: PauliSum, scheme: MeasurementScheme, depth: int,
                    shots: int | None = None, noise_p: float = 0.0, trajectories: int = 1,
                    seed: int = 0, strings=None, layout: SchemeLayout | None = None,
                    center: int | None = None, keep_series: bool = False) -> Liom:
    """LIOM coefficients from simulated measurements of the (p, k, l) scheme.

    For each depth ``d = 0..D``, initial state ``alpha`` and readout basis, the
    statevector engine provides outcome statistics. The estimate is
    ``a_mu = (D+1)^-1 sum_d |S|^-1 sum_alpha p_alpha <psi_alpha(d)|P_mu|psi_alpha(d)>``,
    where ``p_alpha`` is the eigenvalue of ``l0`` on the initial bitstring.

    Parameters
    ----------
    shots : int or None
        Shots per circuit; ``None`` uses exact expectations.
    noise_p : float
        Depolarizing probability per site and cycle, sampled as trajectories.
    trajectories : int
        Noise trajectories per initial state (shots are split among them).
    strings : sequence of PauliString, optional
        Restrict to these strings; each must be measurable.
    keep_series : bool
        Store the per-depth estimates ``W_d`` in ``extra["series"]``.

    Raises
    ------
    CoverageError
        If a requested string cannot be measured under the scheme.
    """
    if depth < 0:
        raise DomainError("depth must be non-negative")
    n = cycle.n
    lattice = cycle.lattice
    layout = layout or SchemeLayout.for_lattice(scheme, lattice, seed)
    xq, zq = measurable_strings(layout, lattice)
    if strings is not None:
        want = {(p.x_mask, p.z_mask) for p in strings}
        have = set(zip(xq.tolist(), zq.tolist()))
        missing = sorted(want - have)
        if missing:
            labels = [PauliString(x, z, n).label for x, z in missing[:10]]
            raise CoverageError("scheme cannot measure: " + ", ".join(labels))
        xq = np.array([w[0] for w in sorted(want, key=lambda t: (t[1], t[0]))], dtype=np.uint64)
        zq = np.array([w[1] for w in sorted(want, key=lambda t: (t[1], t[0]))], dtype=np.uint64)
    patterns = layout.initial_states()
    weights = _diag_values(l0, patterns) / len(patterns)
    gen = make_rng(seed)
    n_traj = trajectories if noise_p > 0 else 1
    sums = np.zeros(len(xq))
    var = np.zeros(len(xq))
    series = []
    bases = layout.bases()
    if shots is not None:
        req = _letter_requirements(xq, zq, layout, n)
        supp = (xq | zq).astype(np.int64)
        basis_codes = [np.array(["_XYZ".index(ch) for ch in letters], dtype=np.int8)
                       for letters in product("XYZ", repeat=scheme.p)]
        compat = [np.all((req == 0) | (req == bc[None, :]), axis=1) for bc in basis_codes]
        if not np.all(np.any(np.array(compat), axis=0)):
            raise CoverageError("some strings fit no readout basis")
        per_traj = max(1, shots // n_traj)
    batches = [basis_states(patterns) for _ in range(n_traj)]
    for d in range(depth + 1):
        w_d = np.zeros(len(xq))
        v_d = np.zeros(len(xq))
        if shots is None:
            for b in batches:
                w_d += pauli_expectations(b, n, xq, zq, weights) / n_traj
        else:
            acc = np.zeros((len(xq), len(patterns)))
            tot = np.zeros((len(xq), len(patterns)))
            for basis, ok in zip(bases, compat):
                sel = np.flatnonzero(ok)
                if not len(sel):
                    continue
                for b in batches:
                    rot = rotate_to_basis(b, basis, n)
                    prob = np.abs(rot) ** 2
                    prob /= prob.sum(axis=0, keepdims=True)
                    counts = np.stack([gen.multinomial(per_traj, prob[:, a])
                                       for a in range(len(patterns))], axis=1).astype(float)
                    parity = walsh_hadamard(counts, n)
                    acc[sel] += parity[supp[sel]]
                    tot[sel] += per_traj
            est = acc / tot
            w_d = est @ weights
            v_d = ((1.0 - est ** 2) / tot) @ (weights ** 2)
        sums += w_d
        var += v_d
        if keep_series:
            series.append(w_d)
        if d < depth:
            batches = [apply_cycle_array(b, cycle) for b in batches]
            if noise_p > 0:
                batches = [apply_noise_batch(b, n, noise_p, gen) for b in batches]
    coeffs = sums / (depth + 1)
    stderr = np.sqrt(var) / (depth + 1)
    op = PauliSum(n, xq, zq, coeffs)
    center = _guess_center(l0) if center is None else center
    eps = imprecision(op, cycle) if len(op) else 1.0
    liom = Liom(op, center, depth, "simple", eps)
    liom.localization_length = localization_length(liom, lattice) if len(op) else 0.0
    liom.extra = {
        "strings_x": xq, "strings_z": zq, "coefficients": coeffs, "stderr": stderr,
        "circuits": scheme.circuit_count(depth + 1), "scheme": scheme,
    }
    if keep_series:
        liom.extra["series"] = np.array(series)
    return liom


# ---------------------------------------------------------------------------
# profiles and lengths


@dataclass(frozen=True)
class WeightProfile:
    """``W_k(i)`` per locality ``k`` and the total ``W(i)`` per site.

    ``offsets[i]`` is ``i - center`` on a chain and the Manhattan distance to
    the centre otherwise.
    """

    center: int
    offsets: np.ndarray
    by_locality: dict
    total: np.ndarray

    def rows(self):
        """``(offset, k, weight)`` triples, sorted."""
        out = []
        for k in sorted(self.by_locality):
            for off, w in zip(self.offsets, self.by_locality[k]):
                out.append((int(off), int(k), float(w)))
        return sorted(out)


def weight_profile(liom, center: int | None = None, lattice: Lattice | None = None) -> WeightProfile:
    """``W_k(i) = sqrt(sum_mu a_mu^2 / k)`` over strings of support ``k`` containing ``i``."""
    op = liom.operator if isinstance(liom, Liom) else liom
    if center is None:
        center = liom.center if isinstance(liom, Liom) else _guess_center(op)
    if len(op) == 0:
        raise InputError("empty operator")
    n = op.n
    w = op.weights()
    sq = op.coeffs ** 2
    supp = op.x | op.z
    by_k = {}
    for k in np.unique(w):
        sel = w == k
        row = np.zeros(n)
        for i in range(n):
            hit = site_bits(supp[sel], i, n)
            row[i] = sq[sel][hit].sum() / k
        by_k[int(k)] = np.sqrt(row)
    total = np.sqrt(sum(v ** 2 for v in by_k.values()))
    if lattice is None or lattice.kind == CHAIN:
        offsets = np.arange(n) - center
    else:
        offsets = distances_from(lattice, center)
    return WeightProfile(center, offsets, by_k, total)


def localization_length(liom, lattice: Lattice | None = None, normalize: bool = True) -> float:
    """``lambda = sum_x W(x) d(x, x0)`` with Manhattan distances.

    With ``normalize`` the operator is first scaled to unit l2 norm, so the
    result does not depend on the overall amplitude of the LIOM.
    """
    op = liom.operator if isinstance(liom, Liom) else liom
    center = liom.center if isinstance(liom, Liom) else _guess_center(op)
    if normalize:
        op = op.normalized()
    prof = weight_profile(op, center, lattice)
    if lattice is None:
        dist = np.abs(np.arange(op.n) - center)
    else:
        dist = distances_from(lattice, center)
    return float(np.dot(prof.total, dist))


def relative_error(lam_exp: float, lam_sim: float) -> float:
    """``|lambda_exp - lambda_sim| / lambda_sim``."""
    if lam_sim == 0:
        raise DomainError("reference length is zero")
    return abs(lam_exp - lam_sim) / lam_sim


# ---------------------------------------------------------------------------
# noise analysis


def form_factor(lattice: Lattice, xi0: float, c: float = 1.0, center: int | None = None,
                metric: str = "auto") -> float:
    """``K = c sum_r exp(-Delta_r / xi0)`` around ``center``.

    ``metric="lattice"`` uses Manhattan distances in lattice coordinates.
    ``metric="area"`` uses Euclidean distances rescaled to one site per unit
    area, the natural measure for a 2D continuum limit. ``"auto"`` picks
    ``lattice`` for chains and ``area`` otherwise.
    """
    if xi0 <= 0:
        raise DomainError("xi0 must be positive")
    if center is None:
        from .lattice import center_site
        center = center_site(lattice)
    if metric == "auto":
        metric = "lattice" if lattice.kind == CHAIN else "area"
    if metric == "lattice":
        dist = distances_from(lattice, center).astype(float)
    elif metric == "area":
        rel = (lattice.coords - lattice.coords[center]).astype(float)
        dist = np.sqrt((rel ** 2).sum(axis=1)) * math.sqrt(HEAVY_HEX_DENSITY)
    else:
        raise DomainError(f"unknown metric {metric!r}")
    return float(c * np.exp(-dist / xi0).sum())


def optimal_depth(p: float, k_factor: float, alpha: float = 1.0, lambda0: float = 1.0):
    """Closed-form noise-limited depth and error.

    ``D_opt = ((1+alpha) p K)^(-1/(alpha+2))`` and
    ``eps_min = (alpha+2)/(alpha+1) lambda0^(-1/2) ((1+alpha) p K)^(1/(alpha+2))``.
    Returns ``(inf, 0.0)`` when ``p == 0``.
    """
    if p < 0 or k_factor <= 0 or alpha <= 0 or not 0 < lambda0 <= 1:
        raise DomainError("need p >= 0, K > 0, alpha > 0 and 0 < lambda0 <= 1")
    if p == 0:
        return math.inf, 0.0
    base = (1.0 + alpha) * p * k_factor
    d_opt = base ** (-1.0 / (alpha + 2.0))
    eps = (alpha + 2.0) / (alpha + 1.0) / math.sqrt(lambda0) * base ** (1.0 / (alpha + 2.0))
    return d_opt, eps


@dataclass(frozen=True)
class NoiseSweep:
    """``eps[i, j]`` is the imprecision at noise ``p_grid[i]`` and depth ``d_grid[j]``."""

    p_grid: np.ndarray
    d_grid: np.ndarray
    eps: np.ndarray

    def argmin_depth(self, i: int) -> int:
        return int(self.d_grid[int(np.argmin(self.eps[i]))])


def noise_sweep(cycle: FloquetCycle, l0: PauliSum, scheme: MeasurementScheme, p_grid, d_grid,
                trajectories: int = 10, shots: int | None = None, seed: int = 0) -> NoiseSweep:
    """Imprecision of sampled LIOMs over a noise and depth grid.

    One run to ``max(d_grid)`` per noise level gives every depth through
    running averages of the per-depth estimates.
    """
    p_grid = np.asarray(list(p_grid), dtype=float)
    d_grid = np.asarray(sorted(d_grid), dtype=int)
    if not len(p_grid) or not len(d_grid):
        raise DomainError("grids must be nonempty")
    eps = np.empty((len(p_grid), len(d_grid)))
    for i, p in enumerate(p_grid):
        liom = extract_sampled(cycle, l0, scheme, int(d_grid.max()), shots=shots, noise_p=p,
                               trajectories=trajectories, seed=seed + i, keep_series=True)
        series = liom.extra["series"]
        xq, zq = liom.extra["strings_x"], liom.extra["strings_z"]
        running = np.cumsum(series, axis=0) / np.arange(1, len(series) + 1)[:, None]
        for j, d in enumerate(d_grid):
            op = PauliSum(cycle.n, xq, zq, running[d])
            eps[i, j] = imprecision(op, cycle) if len(op) else 1.0
    return NoiseSweep(p_grid, d_grid, eps)
