"""Acceptance criteria, checked at their stated tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) before
asserting. Disorder ensembles run through the runner and are cached under
``tests/.acceptance_cache`` keyed by the config digest and a hash of the
package code (comments and docstrings excluded), so a code change forces a
recompute. Delete the directory to
rerun from scratch; a cold run takes several hours on one core.
"""

import ast
import functools
import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

import floqmbl
from conftest import ACCEPTANCE_LINES
from floqmbl.circuit import build_cycle, sample_disorder
from floqmbl.diagnostics import discontinuity, opdm_basis_set, opdm_exact, opdm_from_counts
from floqmbl.heisenberg import PauliString, PauliSum, TruncationPolicy, conjugate_by_cycle
from floqmbl.lattice import build_chain, cdw_pattern, heavy_hex_sheet
from floqmbl.lioms import (MeasurementScheme, extract_exact, extract_sampled, form_factor,
                           guess_simple, noise_sweep, optimal_depth)
from floqmbl.runner import ResultBundle, parse_config, run_ensemble
from floqmbl.spectral import page_value
from floqmbl.statevec import (NoiseSpec, StateVector, apply_cycle, density_evolve, evolve,
                              expect_pauli, init_state, sample_counts, z_expectations)

pytestmark = pytest.mark.acceptance

CACHE = Path(__file__).parent / ".acceptance_cache"
GRID = (0.05, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2, 0.22, 0.25, 0.3)
SWEEP_12 = (0.05, 0.12, 0.14, 0.16, 0.18, 0.2)


def record(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (isinstance(body, list) and body and isinstance(body[0], ast.Expr)
                and isinstance(body[0].value, ast.Constant) and isinstance(body[0].value.value, str)):
            node.body = body[1:] or [ast.Pass()]
    return tree


@functools.lru_cache(maxsize=1)
def source_hash():
    """Hash of the package code, blind to comments and docstrings."""
    h = hashlib.sha256()
    for path in sorted(Path(floqmbl.__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(ast.dump(_strip_docstrings(ast.parse(path.read_text()))).encode())
    return h.hexdigest()


def ensemble(**doc):
    """Run (or reload) a runner ensemble for a config document."""
    cfg = parse_config(doc)
    key = hashlib.sha256((cfg.digest() + source_hash()).encode()).hexdigest()[:20]
    path = CACHE / f"{cfg.task}-{key}"
    if (path / "bundle.json").exists():
        return ResultBundle.load(path)
    return run_ensemble(cfg, jobs=1, out=path)


def chain_cycle(n, theta_over_pi, seed):
    lat = build_chain(n)
    return build_cycle(lat, theta_over_pi * np.pi, sample_disorder(lat, seed))


@functools.lru_cache(maxsize=None)
def spectral_table(n):
    """``{theta: (r_mean, entropy_mean, entropy_var)}`` for one chain length."""
    if n == 12:
        parts = [ensemble(task="entropy", n=12, theta_over_pi=[0.1, 0.3], disorders=200),
                 ensemble(task="entropy", n=12, theta_over_pi=list(SWEEP_12), disorders=30)]
    else:
        parts = [ensemble(task="entropy", n=n, theta_over_pi=list(GRID),
                          disorders=200 if n == 8 else 100)]
    out = {}
    for b in parts:
        for t, _, _, r, _, em, ev in b.tables["spectral"][1]:
            out[t] = (r, em, ev)
    return out


def crossing(small, large):
    """First theta where ``r_large - r_small`` turns from negative to positive."""
    thetas = sorted(set(small) & set(large))
    diff = [large[t][0] - small[t][0] for t in thetas]
    for (t0, d0), (t1, d1) in zip(zip(thetas, diff), zip(thetas[1:], diff[1:])):
        if d0 < 0 <= d1:
            return t0 + (t1 - t0) * (-d0) / (d1 - d0)
    return math.nan


class TestAcceptance:
    def test_01_level_statistics(self):
        tab = spectral_table(12)
        r1, r3 = tab[0.1][0], tab[0.3][0]
        ok = 0.37 <= r1 <= 0.42 and 0.51 <= r3 <= 0.55
        record(1, "level statistics n=12, 200 disorders", ok,
               f"r(0.1pi)={r1:.4f} in [0.37,0.42], r(0.3pi)={r3:.4f} in [0.51,0.55]")
        assert ok

    def test_02_crossover(self):
        tabs = {n: spectral_table(n) for n in (8, 10, 12)}
        cross = {(a, b): crossing(tabs[a], tabs[b]) for a, b in ((8, 10), (8, 12), (10, 12))}
        ok = all(0.13 <= c <= 0.19 for c in cross.values())
        detail = ", ".join(f"n={a}/{b}: {c:.3f}" for (a, b), c in cross.items())
        record(2, "r-bar crossings in theta/pi [0.13,0.19]", ok, detail)
        assert ok

    def test_03_entanglement(self):
        tabs = {n: spectral_table(n) for n in (8, 10, 12)}
        s12 = tabs[12][0.3][1]
        page = page_value(12)
        page_ok = abs(s12 - page) <= 0.1 * page
        var = {t: v[2] for t, v in tabs[12].items()}
        t_peak = max(var, key=var.get)
        peak_ok = 0.12 <= t_peak <= 0.20
        low = [tabs[n][0.05][1] for n in (8, 10, 12)]
        high = [tabs[n][0.3][1] for n in (8, 10, 12)]
        trend_ok = low[0] > low[1] > low[2] and high[0] < high[1] < high[2]
        ok = page_ok and peak_ok and trend_ok
        record(3, "entanglement n=12", ok,
               f"S(0.3pi)={s12:.4f} vs Page {page:.4f}; var peak at {t_peak}; "
               f"S(0.05pi) n=8,10,12 = {', '.join(f'{x:.4f}' for x in low)}; "
               f"S(0.3pi) = {', '.join(f'{x:.4f}' for x in high)}")
        assert ok

    def test_04_imbalance(self):
        b = ensemble(task="imbalance", n=12, theta_over_pi=[0.0, 0.05, 0.3], depth=10,
                     disorders=40)
        curve = {}
        for t, d, i, _ in b.tables["imbalance"][1]:
            curve.setdefault(t, []).append(i)
        free = max(abs(v - 1.0) for v in curve[0.0])
        first_below = next((d for d, v in enumerate(curve[0.3]) if v < 0.1), None)
        above = all(curve[0.05][d] > curve[0.3][d] for d in range(2, 11))
        ok = free <= 1e-12 and first_below is not None and above
        record(4, "imbalance n=12, 40 disorders", ok,
               f"max|I-1| at theta=0: {free:.1e}; I(0.3pi) at d=10: {curve[0.3][10]:.3f} "
               f"(below 0.1 first at d={first_below}); 0.05pi above 0.3pi for d>=2: {above}")
        assert ok

    def test_05_opdm(self):
        n = 10
        cdw = opdm_exact(init_state(cdw_pattern(build_chain(n))))
        n0 = n // 2
        init_ok = (np.allclose(cdw.occupations, [0] * n0 + [1] * (n - n0), atol=1e-12)
                   and discontinuity(cdw, n0) == pytest.approx(1.0, abs=1e-12))

        b = ensemble(task="opdm", n=n, theta_over_pi=[0.05, 0.2], depth=9, disorders=100)
        delta = {r[0]: r[2] for r in b.tables["discontinuity"][1]}
        contrast = {r[0]: r[2] for r in b.tables["contrast"][1]}
        order_ok = delta[0.05] > delta[0.2] and contrast[0.05] > contrast[0.2]

        cyc = chain_cycle(n, 0.1, 7)
        state = evolve(init_state(cdw_pattern(cyc.lattice)), cyc, 9)[-1]
        measured = {bs: sample_counts(state, bs, 100_000, k)
                    for k, bs in enumerate(opdm_basis_set(n, seed=7))}
        est = opdm_from_counts(measured, n, resamples=300, seed=7)
        sigma = math.sqrt(np.sum(est.errors.real ** 2 + est.errors.imag ** 2))
        dev = float(np.linalg.norm(est.matrix - opdm_exact(state).matrix))
        counts_ok = dev <= 3 * sigma
        ok = init_ok and order_ok and counts_ok
        record(5, "OPDM n=10", ok,
               f"CDW spectrum {{0,1}}, delta=1: {init_ok}; delta {delta[0.05]:.3f} vs "
               f"{delta[0.2]:.3f}; C {contrast[0.05]:.3f} vs {contrast[0.2]:.3f}; "
               f"counts |dev|_F={dev:.2e} <= 3 sigma={3 * sigma:.2e}: {counts_ok}")
        assert ok

    def test_06_liom_extraction(self):
        n, depth = 10, 9
        policy = TruncationPolicy(max_support=8, floor=1e-6)
        eps, bound_ok, wz = [], True, []
        for seed in range(5):
            cyc = chain_cycle(n, 0.1, seed)
            for site in range(2, n - 2):
                liom = extract_exact(cyc, guess_simple(site, n), depth, policy, center=site)
                eps.append(liom.imprecision)
                bound_ok &= liom.imprecision <= liom.averaging_bound()
                op = liom.operator
                wz.append(op.coefficient(PauliString.single("Z", site, n)) ** 2 / op.norm() ** 2)
        theta0_ok = True
        for site in range(n):
            g = guess_simple(site, n)
            liom = extract_exact(chain_cycle(n, 0.0, 3), g, depth, policy, center=site)
            theta0_ok &= (liom.imprecision == 0.0
                          and dict((p.label, c) for p, c in liom.operator)
                          == dict((p.label, c) for p, c in g))
        eps_ok = max(eps) < 0.2185
        wz_mean = float(np.mean(wz))
        ok = eps_ok and bound_ok and theta0_ok and wz_mean > 0.5
        record(6, "LIOM extraction n=10, D=9, 5 disorders x 6 bulk sites", ok,
               f"max eps={max(eps):.4f} < 0.2185; averaging bound held: {bound_ok}; "
               f"theta=0 exact: {theta0_ok}; mean central-Z weight={wz_mean:.3f} > 0.5")
        assert ok

    def test_07_estimator_equivalence(self):
        worst = 0.0
        for n, t, depth in ((4, 0.2, 5), (6, 0.1, 5), (8, 0.15, 4), (8, 0.3, 3)):
            cyc = chain_cycle(n, t, n + 1)
            l0 = guess_simple(n // 2, n)
            exact = {p.label: c for p, c in extract_exact(cyc, l0, depth).operator}
            samp = {p.label: c for p, c in
                    extract_sampled(cyc, l0, MeasurementScheme.full(n), depth).operator}
            worst = max(worst, max(abs(exact.get(k, 0.0) - samp.get(k, 0.0))
                                   for k in set(exact) | set(samp)))
        exact_ok = worst < 1e-9

        n, scheme = 6, MeasurementScheme(2, 3, 4)
        cyc = chain_cycle(n, 0.1, 2)
        l0 = guess_simple(3, n)
        ref = extract_sampled(cyc, l0, scheme, 4)
        shot = extract_sampled(cyc, l0, scheme, 4, shots=2000, seed=11)
        ref_c = dict(zip(zip(ref.extra["strings_x"], ref.extra["strings_z"]),
                         ref.extra["coefficients"]))
        z = []
        for x, zz, c, e in zip(shot.extra["strings_x"], shot.extra["strings_z"],
                               shot.extra["coefficients"], shot.extra["stderr"]):
            if e > 0:
                z.append((c - ref_c[(x, zz)]) / e)
        z = np.array(z)
        frac = float(np.mean(np.abs(z) <= 3))
        rms = float(np.sqrt(np.mean(z ** 2)))
        shots_ok = frac >= 0.99 and 0.7 <= rms <= 1.3
        ok = exact_ok and shots_ok
        record(7, "sampled vs exact extraction", ok,
               f"max coefficient gap {worst:.1e} < 1e-9; shots: {frac:.3f} of {len(z)} "
               f"|z|<=3, rms z={rms:.2f}")
        assert ok

    def test_08_noise_model(self):
        n, p, depth, ntraj = 4, 0.02, 5, 10_000
        cyc = chain_cycle(n, 0.2, 4)
        pat = cdw_pattern(cyc.lattice)
        psi = init_state(pat).amplitudes
        rhos = density_evolve(np.outer(psi, psi.conj()), cyc, depth, NoiseSpec(p))
        exact = np.array([[np.real(np.sum(np.diag(r) * (1 - 2 * ((np.arange(1 << n) >> q) & 1))))
                           for q in range(n)] for r in rhos])
        gen = np.random.default_rng(21)
        samples = np.array([[z_expectations(s.amplitudes, n) for s in
                             evolve(init_state(pat), cyc, depth, NoiseSpec(p), gen)]
                            for _ in range(ntraj)])
        mean = samples.mean(axis=0)
        err = samples.std(axis=0, ddof=1) / math.sqrt(ntraj)
        traj_ok = bool(np.all(np.abs(mean - exact) <= 3 * err + 1e-12))

        # disorder-averaged eps'(D) of sampled LIOMs on an 8-site chain
        n, site, d_grid = 8, 4, list(range(1, 25))
        curves, xis = [], []
        for seed in range(8):
            cyc = chain_cycle(n, 0.1, seed)
            l0 = guess_simple(site, n)
            sw = noise_sweep(cyc, l0, MeasurementScheme(2, 4, 6), [0.005], d_grid,
                             trajectories=10, seed=seed)
            curves.append(sw.eps[0])
            xis.append(extract_exact(cyc, l0, 9, center=site).localization_length)
        curve = np.mean(curves, axis=0)
        j = int(np.argmin(curve))
        d_min = d_grid[j]
        interior = 0 < j < len(d_grid) - 1
        k_factor = form_factor(build_chain(401), float(np.mean(xis)), center=200)
        d_opt, _ = optimal_depth(0.005, k_factor, alpha=1.0)
        near = d_opt / 2 <= d_min <= 2 * d_opt
        ok = traj_ok and interior and near
        record(8, "noise model", ok,
               f"trajectories vs density n=4 within 3 sigma: {traj_ok}; eps'(D) at p=0.005 "
               f"argmin D={d_min} (interior: {interior}) vs D_opt={d_opt:.2f} (K={k_factor:.2f})")
        assert ok

    def test_09_form_factor(self):
        xi = 8.0
        k1 = form_factor(build_chain(2001), xi, center=1000)
        k2 = form_factor(heavy_hex_sheet(60, 60), xi)
        r1, r2 = k1 / (2 * xi), k2 / (2 * np.pi * xi ** 2)
        ok = abs(r1 - 1) <= 0.15 and abs(r2 - 1) <= 0.15
        record(9, "form factor at xi0=8", ok, f"K/2xi0={r1:.4f}, K/2pi xi0^2={r2:.4f}")
        assert ok

    def test_10_cross_picture(self):
        gen = np.random.default_rng(2024)
        worst_exp, worst_norm = 0.0, 0.0
        for _ in range(100):
            n = int(gen.integers(2, 9))
            d = int(gen.integers(0, 6))
            cyc = chain_cycle(n, float(gen.uniform(0, 0.5)), int(gen.integers(0, 2 ** 32)))
            k = int(gen.integers(1, 6))
            op = PauliSum(n, gen.integers(0, 1 << n, k), gen.integers(0, 1 << n, k),
                          gen.normal(size=k))
            psi = gen.normal(size=1 << n) + 1j * gen.normal(size=1 << n)
            psi /= np.linalg.norm(psi)
            state, heis = StateVector(psi, n), op
            for _ in range(d):
                state = apply_cycle(state, cyc)
                heis = conjugate_by_cycle(heis, cyc, "forward")
            schr = sum(c * expect_pauli(state, p) for p, c in op)
            hval = sum(c * expect_pauli(StateVector(psi, n), p) for p, c in heis)
            worst_exp = max(worst_exp, abs(schr - hval))
            worst_norm = max(worst_norm, abs(heis.norm() - op.norm()))
        ok = worst_exp <= 1e-9 and worst_norm <= 1e-12
        record(10, "Heisenberg vs Schrodinger, 100 instances", ok,
               f"max expectation gap {worst_exp:.1e} <= 1e-9; max norm drift "
               f"{worst_norm:.1e} <= 1e-12")
        assert ok
