"""Statevector engine: evolution, expectations, sampling and noise."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_pauli, random_state
from floqmbl.circuit import build_cycle, cycle_unitary, sample_disorder
from floqmbl.errors import CapacityError, DomainError
from floqmbl.heisenberg import PauliString, PauliSum, conjugate_by_cycle
from floqmbl.lattice import SitePattern, build_chain, cdw_pattern
from floqmbl.statevec import (DENSITY_CAP, NoiseSpec, StateVector, apply_cycle, apply_noise_batch,
                              apply_noise_trajectory, apply_pauli, basis_probabilities, basis_states,
                              bitstring, counts_expectation, density_evolve, evolve, expect_pauli,
                              init_state, pauli_expectations, sample_counts, walsh_hadamard,
                              z_expectations)


def cycle(n, theta_over_pi=0.2, seed=0):
    lat = build_chain(n)
    return build_cycle(lat, theta_over_pi * np.pi, sample_disorder(lat, seed))


class TestInitState:
    def test_all_zero(self):
        s = init_state(SitePattern.from_string("00"))
        assert s.amplitudes[0] == 1 and s.norm() == 1.0

    def test_little_endian(self):
        s = init_state(SitePattern.from_string("10"))
        assert s.amplitudes[1] == 1

    def test_z_signs(self):
        pat = SitePattern.from_string("01101")
        z = z_expectations(init_state(pat).amplitudes, 5)
        assert z.tolist() == [1, -1, -1, 1, -1]

    def test_batch(self):
        pats = [SitePattern.from_string(s) for s in ("000", "101")]
        b = basis_states(pats)
        assert b.shape == (8, 2) and b[0, 0] == 1 and b[5, 1] == 1

    def test_shape_check(self):
        with pytest.raises(ValueError):
            StateVector(np.zeros(6, dtype=complex), 3)


class TestApplyCycle:
    @pytest.mark.parametrize("n", [4, 7, 10])
    def test_matches_dense(self, n, rng):
        cyc = cycle(n, 0.17, n)
        psi = random_state(n, rng)
        out = apply_cycle(StateVector(psi, n), cyc).amplitudes
        assert np.abs(out - cycle_unitary(cyc) @ psi).max() < 1e-10

    def test_theta0_cdw_static(self):
        cyc = cycle(8, 0.0, 3)
        traj = evolve(init_state(cdw_pattern(cyc.lattice)), cyc, 6)
        z0 = z_expectations(traj[0].amplitudes, 8)
        for s in traj:
            assert np.allclose(z_expectations(s.amplitudes, 8), z0, atol=1e-12)

    def test_norm_100_cycles(self, rng):
        cyc = cycle(9, 0.3, 1)
        s = StateVector(random_state(9, rng), 9)
        for _ in range(100):
            s = apply_cycle(s, cyc)
        assert abs(s.norm() - 1) < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_cycle(init_state(SitePattern.from_string("000")), cycle(4))


class TestExpectPauli:
    def test_basis_values(self):
        s = init_state(SitePattern.from_string("00000"))
        assert expect_pauli(s, PauliString.single("Z", 3, 5)) == 1.0
        assert expect_pauli(s, PauliString.single("X", 3, 5)) == 0.0

    @pytest.mark.parametrize("label", ["XIZY", "YYXZ", "ZZZZ", "IXIY"])
    def test_dense_quadratic_form(self, label, rng):
        psi = random_state(4, rng)
        ref = np.vdot(psi, dense_pauli(label) @ psi).real
        got = expect_pauli(StateVector(psi, 4), PauliString.from_label(label))
        assert abs(got - ref) < 1e-12
        assert abs(got) <= 1 + 1e-10

    def test_apply_pauli_matches_dense(self, rng):
        psi = random_state(3, rng)
        p = PauliString.from_label("YXZ")
        assert np.allclose(apply_pauli(psi, p.x_mask, p.z_mask), dense_pauli("YXZ") @ psi)

    def test_batched_expectations(self, rng):
        n = 5
        labels = ["XIZYI", "ZZIII", "IYYXZ", "XXXXX", "IIIIZ"]
        ps = [PauliString.from_label(l) for l in labels]
        batch = np.stack([random_state(n, rng) for _ in range(3)], axis=1)
        w = np.array([0.2, -0.5, 1.3])
        got = pauli_expectations(batch, n, [p.x_mask for p in ps], [p.z_mask for p in ps], w)
        ref = [sum(wk * expect_pauli(StateVector(batch[:, k], n), p) for k, wk in enumerate(w))
               for p in ps]
        assert np.allclose(got, ref, atol=1e-12)

    def test_walsh_hadamard(self, rng):
        v = rng.normal(size=8)
        h = np.array([[(-1) ** bin(a & b).count("1") for b in range(8)] for a in range(8)])
        assert np.allclose(walsh_hadamard(v, 3), h @ v)


class TestSampling:
    def test_zero_state(self):
        counts = sample_counts(init_state(SitePattern.from_string("0000")), "ZZZZ", 1000, 1)
        assert counts == {"0000": 1000}

    def test_plus_in_x(self):
        plus = StateVector(np.array([1, 1]) / np.sqrt(2) + 0j, 1)
        assert sample_counts(plus, "X", 500, 2) == {"0": 500}

    def test_plus_i_in_y(self):
        plus_i = StateVector(np.array([1, 1j]) / np.sqrt(2), 1)
        assert sample_counts(plus_i, "Y", 500, 2) == {"0": 500}

    def test_reproducible(self, rng):
        s = StateVector(random_state(4, rng), 4)
        assert sample_counts(s, "XYZX", 300, 7) == sample_counts(s, "XYZX", 300, 7)

    def test_bitstring_order(self):
        assert bitstring(1, 3) == "100"

    def test_z_estimator_within_3_sigma(self, rng):
        s = apply_cycle(init_state(SitePattern.from_string("010110")), cycle(6, 0.3, 2))
        counts = sample_counts(s, "ZZZZZZ", 100_000, 11)
        for i in range(6):
            est, m = counts_expectation(counts, [i])
            exact = expect_pauli(s, PauliString.single("Z", i, 6))
            sigma = np.sqrt((1 - exact ** 2) / m)
            assert abs(est - exact) <= 3 * sigma + 1e-12

    def test_ks_marginal(self, rng):
        s = StateVector(random_state(5, rng), 5)
        shots = 100_000
        counts = sample_counts(s, "XYZZX", shots, 3)
        p = basis_probabilities(s, "XYZZX")
        emp = np.zeros(32)
        for b, c in counts.items():
            emp[int(b[::-1], 2)] = c
        d = np.abs(np.cumsum(emp) / shots - np.cumsum(p)).max()
        crit = np.sqrt(-0.5 * np.log(1e-3 / 2)) / np.sqrt(shots)
        assert d < crit

    def test_shots_positive(self):
        with pytest.raises(ValueError):
            sample_counts(init_state(SitePattern.from_string("0")), "Z", 0, 0)


class TestNoise:
    def test_spec_range(self):
        with pytest.raises(DomainError):
            NoiseSpec(1.2)

    def test_p0_identity(self, rng):
        s = StateVector(random_state(3, rng), 3)
        out = apply_noise_trajectory(s, NoiseSpec(0.0), 1)
        assert np.array_equal(out.amplitudes, s.amplitudes)

    def test_p1_average_z(self):
        s = init_state(SitePattern.from_string("0"))
        gen = np.random.default_rng(8)
        vals = [z_expectations(apply_noise_trajectory(s, NoiseSpec(1.0), gen).amplitudes, 1)[0]
                for _ in range(10_000)]
        mean, err = np.mean(vals), np.std(vals) / 100
        assert abs(mean + 1 / 3) <= 3 * err

    def test_batch_matches_channel(self):
        # each column is one unraveling: after one p=1 step on |0>, <Z> averages to -1/3
        arr = basis_states([SitePattern.from_string("00")] * 20_000)
        apply_noise_batch(arr, 2, 1.0, 4)
        z = z_expectations(arr, 2)
        assert abs(z.mean() + 1 / 3) < 3 * z.std() / np.sqrt(z.size)

    def test_trajectories_vs_density(self):
        n, p, depth, ntraj = 3, 0.05, 3, 4000
        cyc = cycle(n, 0.25, 5)
        pat = SitePattern.from_string("010")
        psi = init_state(pat).amplitudes
        rho = density_evolve(np.outer(psi, psi.conj()), cyc, depth, NoiseSpec(p))[-1]
        zs = [np.real(np.trace(rho @ dense_pauli(lab)))
              for lab in ("ZII", "IZI", "IIZ")]
        gen = np.random.default_rng(0)
        samples = np.array([z_expectations(evolve(init_state(pat), cyc, depth, NoiseSpec(p), gen)[-1]
                                           .amplitudes, n) for _ in range(ntraj)])
        mean, err = samples.mean(axis=0), samples.std(axis=0) / np.sqrt(ntraj)
        assert np.all(np.abs(mean - zs) <= 3 * err + 1e-12)

    def test_density_cap(self):
        lat = build_chain(DENSITY_CAP + 1)
        cyc = build_cycle(lat, 0.1, sample_disorder(lat, 0))
        with pytest.raises(CapacityError):
            density_evolve(np.eye(2), cyc, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 5), st.integers(0, 10**6), st.data())
def test_heisenberg_schrodinger_duality(n, depth, seed, data):
    gen = np.random.default_rng(seed)
    cyc = cycle(n, gen.uniform(0, 0.5), seed)
    letters = data.draw(st.text("IXYZ", min_size=n, max_size=n))
    ps = PauliString.from_label(letters)
    psi = random_state(n, gen)
    s = StateVector(psi, n)
    op = PauliSum.single(ps)
    for _ in range(depth):
        s = apply_cycle(s, cyc)
        op = conjugate_by_cycle(op, cyc, "forward")
    heis = sum(c * expect_pauli(StateVector(psi, n), p) for p, c in op)
    assert abs(expect_pauli(s, ps) - heis) < 1e-9
