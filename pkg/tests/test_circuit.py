"""Gate conventions, cycle construction and the dense Floquet unitary."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import embed
from floqmbl.circuit import (CZ, DENSE_CAP, build_cycle, cycle_unitary, fixed_disorder, p_gate,
                             sample_disorder, u_gate)
from floqmbl.errors import CapacityError, DomainError
from floqmbl.lattice import (HEAVY_HEX, Lattice, build_chain, build_heavy_hex, check_layers,
                             heavy_hex_sheet)

Z = np.diag([1.0, -1.0])


def gate_by_gate(cycle):
    """Oracle: multiply embedded primitive gates in time order."""
    n = cycle.n
    u = np.eye(1 << n, dtype=complex)
    for g in cycle.gates:
        u = embed(g.matrix(), g.sites, n) @ u
    return u


class TestGates:
    def test_u_matrix(self):
        t = 0.3
        c, s = np.cos(t / 2), np.sin(t / 2)
        assert np.allclose(u_gate(t), [[c, s], [s, -c]])

    def test_u_zero_is_z(self):
        assert np.array_equal(u_gate(0.0), Z)

    def test_p_matrix(self):
        assert np.allclose(p_gate(0.7), np.diag([1, np.exp(0.7j)]))

    def test_cz(self):
        assert np.array_equal(CZ, np.diag([1, 1, 1, -1]))


class TestSampleDisorder:
    def test_deterministic(self):
        lat = build_chain(8)
        assert sample_disorder(lat, 42) == sample_disorder(lat, 42)
        assert sample_disorder(lat, 42) != sample_disorder(lat, 43)

    def test_range_and_mean(self):
        lat = build_chain(10_000)
        phases = np.array(sample_disorder(lat, 5).phases)
        assert phases.min() >= -np.pi and phases.max() <= np.pi
        assert abs(phases.mean()) < 0.05

    def test_fixed_disorder_range(self):
        with pytest.raises(DomainError):
            fixed_disorder([0.0, 4.0])


class TestBuildCycle:
    def test_gate_order_per_layer(self):
        lat = build_chain(4)
        cyc = build_cycle(lat, 0.2, fixed_disorder([0.1, 0.2, 0.3, 0.4]))
        kinds = "".join(g.kind[0] for g in cyc.gates)
        assert kinds == "cc" + "uuuu" + "pppp" + "c" + "uu" + "pppp"
        assert [g.sites for g in cyc.gates[:2]] == [(0, 1), (2, 3)]
        assert [g.sites for g in cyc.gates[10:13]] == [(1, 2), (1,), (2,)]

    def test_theta_range(self):
        lat = build_chain(4)
        dis = sample_disorder(lat, 0)
        with pytest.raises(DomainError):
            build_cycle(lat, 0.51 * np.pi, dis)
        with pytest.raises(DomainError):
            build_cycle(lat, -0.1, dis)
        build_cycle(lat, np.pi / 2, dis)

    def test_disorder_length(self):
        with pytest.raises(DomainError):
            build_cycle(build_chain(4), 0.1, sample_disorder(build_chain(5), 0))

    def test_deterministic(self):
        lat = build_heavy_hex(1)
        a = build_cycle(lat, 0.3, sample_disorder(lat, 9))
        b = build_cycle(lat, 0.3, sample_disorder(lat, 9))
        assert a.gates == b.gates and a.gate_log() == b.gate_log()

    def test_chain_gate_count_104(self):
        lat = build_chain(104)
        cyc = build_cycle(lat, 0.1 * np.pi, sample_disorder(lat, 0))
        assert cyc.two_qubit_gate_count(19) == 1957

    def test_heavy_hex_count_formula(self):
        lat = build_heavy_hex(10)
        cyc = build_cycle(lat, 0.1 * np.pi, sample_disorder(lat, 0))
        assert cyc.two_qubit_gate_count(19) == len(lat.edges) * 19

    def test_heavy_hex_139_edges(self):
        # a 139-edge heavy-hex subgraph, keeping the sheet's valid colouring
        sheet = heavy_hex_sheet(8, 6)
        keep = set(sheet.edges[:139])
        layers = tuple(tuple(e for e in layer if e in keep) for layer in sheet.layers)
        lat = Lattice(sheet.n_sites, tuple(sorted(keep)), layers, sheet.coords, HEAVY_HEX)
        check_layers(lat)
        cyc = build_cycle(lat, 0.1 * np.pi, sample_disorder(lat, 0))
        assert cyc.two_qubit_gate_count(19) == 2641

    def test_two_qubit_depth(self):
        for lat, depth in [(build_chain(9), 2), (build_heavy_hex(6), 3)]:
            cyc = build_cycle(lat, 0.1, sample_disorder(lat, 0))
            assert len(cyc.layer_blocks()) == depth

    def test_json_and_log(self):
        lat = build_chain(3)
        cyc = build_cycle(lat, 0.1 * np.pi, sample_disorder(lat, 4))
        doc = json.loads(cyc.to_json())
        assert doc["theta_over_pi"] == pytest.approx(0.1)
        assert doc["seed"] == 4
        assert cyc.gate_log().splitlines()[0] == "CZ 0,1"


class TestCycleUnitary:
    def test_n2_theta0(self):
        lat = build_chain(2)
        u = cycle_unitary(build_cycle(lat, 0.0, fixed_disorder([0.0, 0.0])))
        zz_cz = np.kron(Z, Z) @ CZ
        assert np.allclose(u, zz_cz, atol=1e-15)
        assert np.allclose(np.diag(u), [1, -1, -1, -1])

    def test_n2_operator_order(self):
        lat = build_chain(2)
        phi = (0.4, -1.1)
        t = 0.37
        u = cycle_unitary(build_cycle(lat, t, fixed_disorder(phi)))
        # little-endian: site 0 is the right Kronecker factor
        expect = np.kron(p_gate(phi[1]), p_gate(phi[0])) @ np.kron(u_gate(t), u_gate(t)) @ CZ
        assert np.allclose(u, expect, atol=1e-14)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_matches_gate_by_gate(self, n):
        lat = build_chain(n)
        cyc = build_cycle(lat, 0.23 * np.pi, sample_disorder(lat, n))
        assert np.abs(cycle_unitary(cyc) - gate_by_gate(cyc)).max() < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 8), st.floats(0, np.pi / 2), st.integers(0, 2**32))
    def test_unitarity(self, n, theta, seed):
        lat = build_chain(n)
        u = cycle_unitary(build_cycle(lat, theta, sample_disorder(lat, seed)))
        assert np.abs(u.conj().T @ u - np.eye(1 << n)).max() < 1e-10

    @pytest.mark.parametrize("n", [3, 6])
    def test_theta0_commutes_with_z(self, n):
        lat = build_chain(n)
        u = cycle_unitary(build_cycle(lat, 0.0, sample_disorder(lat, 1)))
        assert np.abs(u - np.diag(np.diag(u))).max() == 0
        for q in range(n):
            zq = embed(Z, (q,), n)
            assert np.linalg.norm(u @ zq - zq @ u) < 1e-12

    def test_capacity(self):
        lat = build_chain(DENSE_CAP + 1)
        with pytest.raises(CapacityError):
            cycle_unitary(build_cycle(lat, 0.1, sample_disorder(lat, 0)))
