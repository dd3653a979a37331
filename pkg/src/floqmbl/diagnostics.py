"""Trajectory observables: spin imbalance, one-particle density matrix, contrast.

Hardcore bosons live on the sites with ``|1>`` as the occupied state, so the
site occupation is ``n_i = (1 - Z_i) / 2`` and ``a_i = |0><1| = (X_i + i Y_i) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import CoverageError, DomainError, PatternError
from .lattice import SitePattern
from .rng import make_rng
from .statevec import StateVector, pauli_expectations, z_expectations

DEFAULT_BINS = 21


# ---------------------------------------------------------------------------
# imbalance


@dataclass(frozen=True)
class ImbalanceCurve:
    """Imbalance ``I_d`` for ``d = 0..D`` with optional error bars."""

    values: np.ndarray
    pattern: SitePattern
    theta: float = float("nan")
    seed: int | None = None
    errors: np.ndarray | None = field(default=None, repr=False)


def imbalance(traj, pattern: SitePattern, theta: float = float("nan"), seed=None) -> ImbalanceCurve:
    """Spin imbalance between the sites initialised to 1 and to 0.

    Parameters
    ----------
    traj : sequence of StateVector or array_like
        States per cycle, or ``<Z_i>`` values with shape ``(D+1, n)``.
    pattern : SitePattern
        Initial pattern defining the two site sets.
    """
    zeros, ones = pattern.sets()
    if len(zeros) == 0 or len(ones) == 0:
        raise PatternError("imbalance needs both 0 and 1 sites in the pattern")
    traj = list(traj)
    if traj and isinstance(traj[0], StateVector):
        zexp = np.array([z_expectations(s.amplitudes, s.n_sites) for s in traj])
    else:
        zexp = np.asarray(traj, dtype=float)
    n1 = 0.5 - 0.5 * zexp[:, ones].mean(axis=1)
    n0 = 0.5 - 0.5 * zexp[:, zeros].mean(axis=1)
    return ImbalanceCurve((n1 - n0) / (n1 + n0), pattern, theta, seed)


def fit_exponential(values, pin_first: bool = False) -> tuple[float, float]:
    """Least-squares fit ``log v_d = log A - gamma d``; returns ``(A, gamma)``.

    With ``pin_first`` the amplitude is fixed to ``v_0`` and only the decay
    rate is fitted.
    """
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        raise DomainError("exponential fit needs strictly positive values")
    d = np.arange(len(v))
    if len(v) == 1:
        return float(v[0]), 0.0
    if pin_first:
        y = np.log(v / v[0])
        return float(v[0]), float(-np.dot(d, y) / np.dot(d, d))
    slope, intercept = np.polyfit(d, np.log(v), 1)
    return float(np.exp(intercept)), float(-slope)


def renormalize_imbalance(curve: ImbalanceCurve, reference: ImbalanceCurve) -> ImbalanceCurve:
    """Divide by the exponential decay of the ``theta = 0`` reference curve.

    The model keeps the reference's ``d = 0`` value and fits only the decay
    rate, so a noiseless reference leaves the curve unchanged.
    """
    ref = np.asarray(reference.values, dtype=float)
    if len(ref) != len(curve.values):
        raise DomainError("reference and curve lengths differ")
    if np.any(ref == 0):
        raise DomainError("reference curve contains zeros")
    amp, gamma = fit_exponential(ref, pin_first=True)
    model = amp * np.exp(-gamma * np.arange(len(ref)))
    errs = None if curve.errors is None else curve.errors / model
    return ImbalanceCurve(curve.values / model, curve.pattern, curve.theta, curve.seed, errs)


# ---------------------------------------------------------------------------
# one-particle density matrix


@dataclass(frozen=True)
class Opdm:
    """Hermitian OPDM and its occupations sorted ascending."""

    matrix: np.ndarray
    occupations: np.ndarray
    errors: np.ndarray | None = field(default=None, repr=False)
    occupation_errors: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_matrix(cls, mat, errors=None, occupation_errors=None) -> "Opdm":
        mat = 0.5 * (mat + mat.conj().T)
        return cls(mat, np.linalg.eigvalsh(mat), errors, occupation_errors)


def _assemble(n, sx, sy, sz, xx, xy, yx, yy) -> np.ndarray:
    """Build rho from single-site and pair expectations (pair arrays n x n)."""
    ax = sx + 1j * sy  # 2 <a_i>
    rho = 0.25 * ((xx - np.outer(sx, sx)) + 1j * (xy - np.outer(sx, sy))
                  - 1j * (yx - np.outer(sy, sx)) + (yy - np.outer(sy, sy)))
    diag = 0.5 * (1.0 - sz) - 0.25 * np.abs(ax) ** 2
    rho[np.diag_indices(n)] = diag
    return rho


def opdm_exact(state: StateVector) -> Opdm:
    """``rho_ij = <a_i^+ a_j> - <a_i^+><a_j>`` from exact expectations."""
    n = state.n_sites
    xs, zs, tags = [], [], []
    for i in range(n):
        for letter, (xb, zb) in (("X", (1, 0)), ("Y", (1, 1)), ("Z", (0, 1))):
            xs.append(xb << i)
            zs.append(zb << i)
            tags.append((letter, i))
    for i, j in combinations(range(n), 2):
        for li, (xi, zi) in (("X", (1, 0)), ("Y", (1, 1))):
            for lj, (xj, zj) in (("X", (1, 0)), ("Y", (1, 1))):
                xs.append((xi << i) | (xj << j))
                zs.append((zi << i) | (zj << j))
                tags.append((li + lj, i, j))
    vals = pauli_expectations(state.amplitudes, n, xs, zs)
    single = {"X": np.zeros(n), "Y": np.zeros(n), "Z": np.zeros(n)}
    pair = {k: np.zeros((n, n)) for k in ("XX", "XY", "YX", "YY")}
    for tag, v in zip(tags, vals):
        if len(tag) == 2:
            single[tag[0]][tag[1]] = v
        else:
            k, i, j = tag
            pair[k][i, j] = v
            pair[k[::-1]][j, i] = v
    rho = _assemble(n, single["X"], single["Y"], single["Z"],
                    pair["XX"], pair["XY"], pair["YX"], pair["YY"])
    return Opdm.from_matrix(rho)


def _pool(measured: dict, n: int):
    """Sum shot counts of every needed correlator over all compatible bases.

    Returns ``(acc, tot)`` dictionaries keyed by correlator tag.
    """
    acc, tot = {}, {}
    for basis, counts in measured.items():
        if len(basis) != n:
            raise CoverageError(f"basis {basis!r} has wrong length")
        bits = np.array([[int(ch) for ch in key] for key in counts], dtype=np.int8)
        weights = np.array(list(counts.values()), dtype=np.int64)
        signs = 1 - 2 * bits
        shots = int(weights.sum())
        for i in range(n):
            tag = (basis[i], i)
            acc[tag] = acc.get(tag, 0) + int(weights @ signs[:, i])
            tot[tag] = tot.get(tag, 0) + shots
        xy_sites = [i for i in range(n) if basis[i] in "XY"]
        for i, j in combinations(xy_sites, 2):
            tag = (basis[i] + basis[j], i, j)
            acc[tag] = acc.get(tag, 0) + int(weights @ (signs[:, i] * signs[:, j]))
            tot[tag] = tot.get(tag, 0) + shots
    return acc, tot


def _required(n):
    req = [(l, i) for i in range(n) for l in "XYZ"]
    req += [(a + b, i, j) for i, j in combinations(range(n), 2) for a in "XY" for b in "XY"]
    return req


def _label(tag):
    if len(tag) == 2:
        return f"{tag[0]}{tag[1]}"
    return f"{tag[0][0]}{tag[1]}{tag[0][1]}{tag[2]}"


def _rho_from_means(n, mean):
    sx = np.array([mean[("X", i)] for i in range(n)])
    sy = np.array([mean[("Y", i)] for i in range(n)])
    sz = np.array([mean[("Z", i)] for i in range(n)])
    pair = {k: np.zeros((n, n)) for k in ("XX", "XY", "YX", "YY")}
    for i, j in combinations(range(n), 2):
        for k in ("XX", "XY", "YX", "YY"):
            v = mean[(k, i, j)]
            pair[k][i, j] = v
            pair[k[::-1]][j, i] = v
    return _assemble(n, sx, sy, sz, pair["XX"], pair["XY"], pair["YX"], pair["YY"])


def opdm_from_counts(measured: dict, n: int | None = None, resamples: int = 200,
                     seed: int = 0) -> Opdm:
    """OPDM from readout counts in several bases.

    Parameters
    ----------
    measured : dict
        ``{basis: {bitstring: count}}`` with basis strings such as ``"XYXY"``
        (character ``i`` is site ``i``). Every pair needs all four X/Y
        combinations and every site needs X, Y and Z readouts.
    resamples : int
        Parametric bootstrap replicates for error bars (0 disables).

    Raises
    ------
    CoverageError
        Lists every correlator no basis provides.
    """
    if not measured:
        raise CoverageError("no measurements supplied")
    n = n or len(next(iter(measured)))
    acc, tot = _pool(measured, n)
    missing = [t for t in _required(n) if tot.get(t, 0) == 0]
    if missing:
        raise CoverageError("uncovered correlators: " + ", ".join(_label(t) for t in missing))
    mean = {t: acc[t] / tot[t] for t in _required(n)}
    rho = _rho_from_means(n, mean)
    errs = occ_errs = None
    if resamples:
        gen = make_rng(seed)
        tags = _required(n)
        p_plus = np.array([(1 + mean[t]) / 2 for t in tags]).clip(0, 1)
        shots = np.array([tot[t] for t in tags])
        draws = gen.binomial(shots[None, :], p_plus[None, :], size=(resamples, len(tags)))
        boots = []
        occs = []
        for r in range(resamples):
            m = dict(zip(tags, 2 * draws[r] / shots - 1))
            b = _rho_from_means(n, m)
            b = 0.5 * (b + b.conj().T)
            boots.append(b)
            occs.append(np.linalg.eigvalsh(b))
        boots = np.array(boots)
        errs = boots.real.std(axis=0, ddof=1) + 1j * boots.imag.std(axis=0, ddof=1)
        occ_errs = np.array(occs).std(axis=0, ddof=1)
    return Opdm.from_matrix(rho, errs, occ_errs)


def opdm_basis_set(n: int, seed: int = 0, candidates: int = 64) -> list[str]:
    """Greedy cover of all pair correlators with X/Y readout bases.

    Each step draws ``candidates`` random X/Y strings and keeps the one that
    covers the most still-missing ``(pair, letters)`` items. A final all-Z
    basis supplies the occupations.
    """
    gen = make_rng(seed)
    need = {(i, j, a, b) for i, j in combinations(range(n), 2) for a in "XY" for b in "XY"}
    chosen = []
    while need:
        best, best_hit = None, -1
        for _ in range(candidates):
            cand = "".join(gen.choice(["X", "Y"], size=n))
            hit = sum((i, j, cand[i], cand[j]) in need for i, j in combinations(range(n), 2))
            if hit > best_hit:
                best, best_hit = cand, hit
        chosen.append(best)
        need -= {(i, j, best[i], best[j]) for i, j in combinations(range(n), 2)}
    if n == 1:
        chosen = ["X", "Y"]
    return chosen + ["Z" * n]


def discontinuity(opdm: Opdm, n0: int) -> float:
    """``nu_{N0+1} - nu_{N0}`` on the ascending occupations (1-based indices)."""
    nu = np.sort(np.asarray(opdm.occupations if isinstance(opdm, Opdm) else opdm))
    if not 1 <= n0 < len(nu):
        raise IndexError(f"N0 must satisfy 1 <= N0 < {len(nu)}, got {n0}")
    return float(nu[n0] - nu[n0 - 1])


def occupation_histogram(occupations, bins: int = DEFAULT_BINS) -> np.ndarray:
    occ = np.clip(np.asarray(occupations, dtype=float).ravel(), 0.0, 1.0)
    hist, _ = np.histogram(occ, bins=bins, range=(0.0, 1.0), density=True)
    return hist


def gap_contrast(occupations, bins: int = DEFAULT_BINS, min_samples: int = 100) -> float:
    """``C = 1 - rho_c / rho_p`` from the pooled occupation histogram.

    ``rho_c`` is the density of the central bin (mean of the two central bins
    for an even count) and ``rho_p`` the largest bin density.
    """
    occ = np.asarray(occupations, dtype=float).ravel()
    if len(occ) < min_samples:
        raise DomainError(f"need at least {min_samples} pooled occupations, got {len(occ)}")
    hist = occupation_histogram(occ, bins)
    mid = bins // 2
    rho_c = hist[mid] if bins % 2 else 0.5 * (hist[mid - 1] + hist[mid])
    rho_p = hist.max()
    if rho_p == 0:
        raise DomainError("empty histogram")
    return float(np.clip(1.0 - rho_c / rho_p, 0.0, 1.0))


def bootstrap(samples, resamples: int = 1000, statistic=None, seed: int = 0):
    """Nonparametric bootstrap over the first axis of ``samples``.

    Returns ``(estimate, stderr)``; both follow the shape of ``statistic``'s
    output (default: mean over axis 0).
    """
    data = np.asarray(samples, dtype=float)
    if data.shape[0] < 2:
        raise DomainError("bootstrap needs at least 2 samples")
    if resamples < 100:
        raise DomainError("use at least 100 resamples")
    stat = statistic or (lambda a: np.mean(a, axis=0))
    gen = make_rng(seed)
    idx = gen.integers(0, data.shape[0], size=(resamples, data.shape[0]))
    reps = np.array([stat(data[i]) for i in idx])
    return stat(data), reps.std(axis=0, ddof=1)
