"""Exact diagonalization diagnostics of the Floquet unitary.

Even open chains have a cheap path: each gate obeys ``conj(g) = g^{-1}``,
and a diagonal phase frame ``T`` makes ``M = T^{-1} U_F T`` complex
symmetric. Its real and imaginary parts ``A``, ``B`` then commute, and the
quasienergies follow from the real symmetric-definite pencil
``B v = tan(lambda/2) (1 + A) v``. That costs about a tenth of a complex
``eig``. Any other lattice falls back to the general eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels as K
from .circuit import FloquetCycle, cycle_unitary
from .errors import CapacityError, DomainError
from .lattice import CHAIN

SPECTRUM_CAP = 14
EIGENSTATE_CAP = 12

# kappa = tan(lambda/2) above this means a level sits too close to the pole
_KAPPA_MAX = 1e6
_SYM_TOL = 1e-10


@dataclass(frozen=True)
class FloquetSpectrum:
    """Quasienergies in ``[-pi, pi)`` sorted ascending, plus optional eigenvectors.

    ``eigenstates[:, a]`` belongs to ``quasienergies[a]``.
    """

    quasienergies: np.ndarray
    eigenstates: np.ndarray | None = field(default=None, repr=False)
    n_sites: int = 0
    method: str = "general"

    def __len__(self) -> int:
        return len(self.quasienergies)


def wrap_phase(x):
    """Map angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(x) + np.pi, 2 * np.pi) - np.pi


def symmetric_frame(cycle: FloquetCycle) -> np.ndarray | None:
    """Diagonal of ``T`` such that ``T^{-1} U_F T`` is symmetric, or ``None``.

    Only even open chains qualify. There the first layer touches every site and
    the second every site except the two ends. Splitting the first layer's
    diagonal symmetrically and half of each end-site phase gives the frame.
    """
    lat = cycle.lattice
    n = cycle.n
    if lat.kind != CHAIN or n % 2 or n < 4:
        return None
    phi = cycle.phases
    total = K.phase_angles(n, phi)
    ends = K.phase_angles(n, phi, [0, n - 1])
    c1 = K.cz_diagonal(n, lat.layers[0])
    return np.exp(0.5j * (total - np.angle(c1) + ends))


def _symmetric_eig(m: np.ndarray, vectors: bool):
    """Eigen-decomposition of a unitary complex-symmetric matrix.

    Returns phases and real orthogonal eigenvectors of ``m``. The matrix is
    rotated by a global phase until no level sits near the pole at ``pi``.
    """
    a_re = np.ascontiguousarray(m.real)
    b_im = np.ascontiguousarray(m.imag)
    for beta in (0.7853981633974483, 2.0943951023931953, 0.31, 1.3, 2.7, 0.0):
        cb, sb = np.cos(beta), np.sin(beta)
        # exp(-i beta) (A + iB) = (cb A + sb B) + i (cb B - sb A)
        a = cb * a_re + sb * b_im
        b = cb * b_im - sb * a_re
        a[np.diag_indices_from(a)] += 1.0
        try:
            if vectors:
                kappa, vecs = sla.eigh(b, a, driver="gvd", overwrite_a=True, overwrite_b=True)
            else:
                kappa = sla.eigh(b, a, eigvals_only=True, driver="gvd",
                                 overwrite_a=True, overwrite_b=True)
                vecs = None
        except np.linalg.LinAlgError:
            continue
        if np.max(np.abs(kappa)) > _KAPPA_MAX:
            continue
        lam = wrap_phase(2.0 * np.arctan(kappa) + beta)
        if vecs is not None:
            # generalized eigenvectors are (1+A)-orthonormal; rescale to unit length
            vecs /= np.linalg.norm(vecs, axis=0)
        return lam, vecs
    raise np.linalg.LinAlgError("no phase rotation gave a well-conditioned pencil")


def diagonalize_unitary(u: np.ndarray, frame: np.ndarray | None = None,
                        eigenstates: bool = False):
    """Phases (and vectors) of a dense unitary, using ``frame`` when valid."""
    method = "general"
    if frame is not None:
        m = frame.conj()[:, None] * u * frame[None, :]
        if np.max(np.abs(m - m.T)) < _SYM_TOL:
            try:
                lam, vecs = _symmetric_eig(m, eigenstates)
                method = "symmetric"
                if vecs is not None:
                    vecs = frame[:, None] * vecs
            except np.linalg.LinAlgError:
                method = "general"
        del m
    if method == "general":
        if eigenstates:
            w, vecs = np.linalg.eig(u)
            vecs = _orthonormalize_degenerate(np.angle(w), vecs)
        else:
            w = np.linalg.eigvals(u)
            vecs = None
        lam = wrap_phase(np.angle(w))
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    if vecs is not None:
        vecs = vecs[:, order]
    return lam, vecs, method


def _orthonormalize_degenerate(lam, vecs, tol=1e-9):
    # general eig may return a skewed basis inside degenerate subspaces
    order = np.argsort(lam)
    groups, start = [], 0
    for i in range(1, len(order) + 1):
        if i == len(order) or abs(lam[order[i]] - lam[order[i - 1]]) > tol:
            groups.append(order[start:i])
            start = i
    for g in groups:
        if len(g) > 1:
            q, _ = np.linalg.qr(vecs[:, g])
            vecs[:, g] = q
    return vecs


def diagonalize_cycle(cycle: FloquetCycle, eigenstates: bool = False,
                      cap: int | None = None) -> FloquetSpectrum:
    """Full eigen-decomposition of one Floquet cycle.

    Parameters
    ----------
    cycle : FloquetCycle
    eigenstates : bool
        Also return eigenvectors (roughly doubles memory and time).
    cap : int, optional
        Largest allowed ``n``; defaults to 14 without and 12 with eigenvectors.
    """
    if cap is None:
        cap = EIGENSTATE_CAP if eigenstates else SPECTRUM_CAP
    if cycle.n > cap:
        raise CapacityError(f"diagonalization limited to n <= {cap}, got {cycle.n}")
    u = cycle_unitary(cycle, cap=max(cap, cycle.n))
    lam, vecs, method = diagonalize_unitary(u, symmetric_frame(cycle), eigenstates)
    return FloquetSpectrum(lam, vecs, cycle.n, method)


@dataclass(frozen=True)
class GapRatios:
    """Adjacent gap ratios; ``flagged`` marks double-zero gaps (set to 1)."""

    ratios: np.ndarray
    flagged: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.ratios[~self.flagged]


def circular_gaps(quasienergies) -> np.ndarray:
    """Consecutive gaps of sorted phases, closing with the wrap-around gap."""
    lam = np.sort(np.asarray(quasienergies, dtype=float))
    return np.diff(np.append(lam, lam[0] + 2 * np.pi))


def adjacent_gap_ratios(spectrum, zero_tol: float = 0.0) -> GapRatios:
    """``r_a = min(g_a, g_{a+1}) / max(g_a, g_{a+1})`` on the circle.

    Parameters
    ----------
    spectrum : FloquetSpectrum or array_like
        Quasienergies.
    zero_tol : float
        Gaps at or below this count as zero.
    """
    lam = spectrum.quasienergies if isinstance(spectrum, FloquetSpectrum) else spectrum
    lam = np.asarray(lam, dtype=float)
    if len(lam) < 3:
        raise DomainError("need at least three levels for gap ratios")
    g = circular_gaps(lam)
    g = np.where(g <= zero_tol, 0.0, g)
    g2 = np.roll(g, -1)
    hi = np.maximum(g, g2)
    lo = np.minimum(g, g2)
    flagged = hi == 0.0
    r = np.where(flagged, 1.0, lo / np.where(flagged, 1.0, hi))
    return GapRatios(r, flagged)


def mean_gap_ratio(ensemble) -> float:
    """Pooled mean of unflagged gap ratios over an ensemble of spectra."""
    ensemble = list(ensemble)
    if not ensemble:
        raise DomainError("empty ensemble")
    pooled = np.concatenate([adjacent_gap_ratios(s).valid for s in ensemble])
    return float(pooled.mean())


def poisson_r_density(r):
    """Gap-ratio density for uncorrelated levels, ``2 / (1 + r)**2`` on [0, 1]."""
    r = np.asarray(r, dtype=float)
    return 2.0 / (1.0 + r) ** 2


def goe_r_density(r):
    """Wigner-like surmise for the orthogonal ensemble, folded onto [0, 1]."""
    r = np.asarray(r, dtype=float)
    zb = 8.0 / 27.0
    return 2.0 * (r + r * r) / (zb * (1.0 + r + r * r) ** 2.5)


def page_value(n: int) -> float:
    """Per-qubit mean half-cut entropy of random states, ``1/2 - 1/(2 n ln 2)``."""
    return 0.5 - 1.0 / (2.0 * n * np.log(2.0))


@dataclass(frozen=True)
class EntropyStats:
    mean_per_qubit: float
    variance: float
    entropies: np.ndarray


def half_cut_entropies(states: np.ndarray, n: int, n_left: int | None = None) -> np.ndarray:
    """Base-2 entanglement entropy of each column of ``states``.

    The cut separates sites ``0..n_left-1`` from the rest (default ``n // 2``).
    """
    n_left = n // 2 if n_left is None else n_left
    if not 0 < n_left < n:
        raise DomainError("cut must leave both halves nonempty")
    n_states = states.shape[1]
    out = np.empty(n_states)
    chunk = max(1, (1 << 22) >> n)
    for s in range(0, n_states, chunk):
        block = states[:, s:s + chunk]
        # little-endian: high bits are the right block, low bits the left block
        psi = block.T.reshape(-1, 1 << (n - n_left), 1 << n_left)
        sv = np.linalg.svd(psi, compute_uv=False)
        p = sv ** 2
        p /= p.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=1)
        out[s:s + chunk] = ent
    return out


def eigenstate_entropies(spectrum: FloquetSpectrum, n_left: int | None = None) -> EntropyStats:
    """Mean entropy per qubit and variance of the eigenstate entropies.

    The variance is taken over the total entropies ``S_a`` themselves.
    """
    if spectrum.eigenstates is None:
        raise CapacityError("spectrum was computed without eigenstates")
    n = spectrum.n_sites
    s = half_cut_entropies(spectrum.eigenstates, n, n_left)
    return EntropyStats(float(s.mean() / n), float(s.var()), s)
