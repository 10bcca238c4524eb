"""Hamiltonian family builders: term structure, algebra, serialization."""

import itertools

import numpy as np
import pytest

from qbmlab.linalg import gibbs_state, kron
from qbmlab.operators import (
    HamiltonianModel,
    assemble_hamiltonian,
    build_classical_bm,
    build_complete_pauli_set,
    build_fermionic_model,
    build_mean_field,
    build_model,
    build_transverse_ising_complete,
    complete_graph_edges,
    jordan_wigner_annihilator,
    load_model,
    model_descriptor,
    pauli_matrix,
    save_model,
)

ALL_FAMILIES = ("classical_bm", "ti_complete", "pauli_complete", "mean_field", "fermionic")


def _build(family, n_visible, n_hidden=0):
    if family == "classical_bm":
        return build_model(family, n_visible, n_hidden, edges=complete_graph_edges(n_visible + n_hidden))
    return build_model(family, n_visible, n_hidden)


class TestPauliMatrix:
    def test_identity(self):
        assert np.allclose(pauli_matrix("I"), np.eye(2))

    def test_zz_diagonal(self):
        assert np.allclose(pauli_matrix("ZZ"), np.diag([1, -1, -1, 1]))

    def test_squares_to_identity(self):
        m = pauli_matrix("XY")
        assert np.allclose(m @ m, np.eye(4))

    def test_qubit_zero_leftmost(self):
        assert np.allclose(pauli_matrix("XI"), kron(pauli_matrix("X"), np.eye(2)))

    def test_rejects_bad_letter(self):
        with pytest.raises(ValueError):
            pauli_matrix("XQ")


class TestClassicalBm:
    def test_single_number_operator(self):
        m = build_classical_bm(1)
        assert len(m.terms) == 1
        assert np.allclose(m.terms[0].matrix, np.diag([0.0, 1.0]))

    def test_edge_coupling_matrix(self):
        m = build_classical_bm(2, edges=((0, 1),))
        coupling = m.terms[-1].matrix
        assert np.allclose(coupling, np.diag([0.0, 0.0, 0.0, 1.0]))

    def test_zero_theta_zero_hamiltonian(self):
        m = build_classical_bm(2, edges=((0, 1),))
        assert np.allclose(assemble_hamiltonian(m, np.zeros(3)), np.zeros((4, 4)))

    def test_frozen_two_site_assembly(self):
        # b = (1, 1), w = 1 over basis 00,01,10,11
        m = build_classical_bm(2, edges=((0, 1),))
        h = assemble_hamiltonian(m, np.array([1.0, 1.0, 1.0]))
        assert np.allclose(h, np.diag([0.0, 1.0, 1.0, 3.0]))

    def test_all_terms_classical(self):
        m = build_classical_bm(3, edges=complete_graph_edges(3))
        assert all(not t.is_quantum for t in m.terms)

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError):
            build_classical_bm(2, edges=((0, 1), (1, 0)))

    def test_self_edge_rejected(self):
        with pytest.raises(ValueError):
            build_classical_bm(2, edges=((1, 1),))


class TestTransverseIsing:
    def test_term_count_and_order_n2(self):
        m = build_transverse_ising_complete(2)
        labels = [t.label for t in m.terms]
        assert len(labels) == 5
        # all Z, then all X, then ZZ pairs
        assert [l[0] for l in labels] == ["Z", "Z", "X", "X", "Z"]

    def test_term_count_n5(self):
        assert len(build_transverse_ising_complete(5).terms) == 20

    def test_x_term_is_quantum(self):
        m = build_transverse_ising_complete(2)
        x_terms = [t for t in m.terms if t.label.startswith("X")]
        assert len(x_terms) == 2
        for t in x_terms:
            assert t.is_quantum
            assert np.allclose(np.diag(t.matrix), 0.0)

    def test_zz_lexicographic(self):
        m = build_transverse_ising_complete(3)
        zz = [t.label for t in m.terms[6:]]
        assert zz == sorted(zz)


class TestCompletePauliSet:
    def test_one_qubit(self):
        labels = [t.label for t in build_complete_pauli_set(1).terms]
        assert labels == ["X", "Y", "Z"]

    def test_two_qubit_count(self):
        m = build_complete_pauli_set(2)
        assert len(m.terms) == 15
        assert len({t.label for t in m.terms}) == 15

    def test_cap_enforced(self):
        with pytest.raises(ValueError):
            build_complete_pauli_set(7)


class TestMeanField:
    def test_one_qubit_matches_complete_set(self):
        mf = build_mean_field(1)
        cp = build_complete_pauli_set(1)
        for a, b in zip(mf.terms, cp.terms):
            assert np.allclose(a.matrix, b.matrix)

    def test_term_count(self):
        assert len(build_mean_field(4).terms) == 12

    def test_zero_theta_maximally_mixed(self):
        m = build_mean_field(2)
        rho, _ = gibbs_state(assemble_hamiltonian(m, np.zeros(6)))
        assert np.allclose(rho, np.eye(4) / 4)

    def test_gibbs_factorizes_100_draws(self, rng):
        m = build_mean_field(2)
        for _ in range(100):
            theta = rng.normal(size=6)
            rho, _ = gibbs_state(assemble_hamiltonian(m, theta))
            h0 = theta[0] * pauli_matrix("X") + theta[1] * pauli_matrix("Y") + theta[2] * pauli_matrix("Z")
            h1 = theta[3] * pauli_matrix("X") + theta[4] * pauli_matrix("Y") + theta[5] * pauli_matrix("Z")
            prod = kron(gibbs_state(h0)[0], gibbs_state(h1)[0])
            assert np.linalg.norm(rho - prod) < 1e-10


class TestJordanWigner:
    def test_single_mode_ladder(self):
        a = jordan_wigner_annihilator(0, 1)
        ket0, ket1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert np.allclose(a @ ket1, ket0)
        assert np.allclose(a @ ket0, 0.0)
        assert np.allclose(a.conj().T @ ket0, ket1)

    def test_cross_mode_anticommutator_vanishes(self):
        a0 = jordan_wigner_annihilator(0, 2)
        a1 = jordan_wigner_annihilator(1, 2)
        anti = a0 @ a1.conj().T + a1.conj().T @ a0
        assert np.allclose(anti, 0.0, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_canonical_anticommutation(self, n):
        ops = [jordan_wigner_annihilator(p, n) for p in range(n)]
        eye = np.eye(2**n)
        for p, q in itertools.product(range(n), repeat=2):
            aa = ops[p] @ ops[q] + ops[q] @ ops[p]
            assert np.allclose(aa, 0.0, atol=1e-12)
            ad = ops[p] @ ops[q].conj().T + ops[q].conj().T @ ops[p]
            assert np.allclose(ad, (1.0 if p == q else 0.0) * eye, atol=1e-12)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            jordan_wigner_annihilator(2, 2)


class TestFermionicModel:
    def test_one_mode_term_count(self):
        m = build_fermionic_model(2)
        assert sum(1 for t in m.terms if t.label.startswith("a")) == 2

    def test_diagonal_reduction_matches_classical_bm(self):
        # zeroing every off-diagonal term leaves the number-operator sub-family
        m = build_fermionic_model(3)
        classical = build_classical_bm(3, edges=complete_graph_edges(3))
        by_label = {t.label: i for i, t in enumerate(m.terms)}
        theta = np.zeros(len(m.terms))
        diag_labels = [t.label for t in m.terms if not t.is_quantum]
        assert len(diag_labels) == len(classical.terms)
        coeffs = np.arange(1.0, len(diag_labels) + 1)
        for label, c in zip(diag_labels, coeffs):
            theta[by_label[label]] = c
        h_f = assemble_hamiltonian(m, theta)
        h_c = assemble_hamiltonian(classical, coeffs)
        assert np.allclose(h_f, np.diag(np.diag(h_f)))
        assert np.allclose(h_f, h_c, atol=1e-12)

    def test_interaction_terms_hermitian_traceless(self):
        m = build_fermionic_model(4)
        quads = [t for t in m.terms if t.label.startswith("int(")]
        assert quads
        for t in quads:
            assert np.allclose(t.matrix, t.matrix.conj().T, atol=1e-12)
            if t.is_quantum:
                assert abs(np.trace(t.matrix)) < 1e-12

    def test_one_mode_and_hopping_unit_norm(self):
        m = build_fermionic_model(3)
        for t in m.terms:
            if t.label.startswith("a") or t.label.startswith("hop("):
                assert abs(np.linalg.norm(t.matrix, 2) - 1.0) < 1e-12

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            build_fermionic_model(1)


class TestEveryBuilder:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_terms_hermitian_and_flagged(self, family):
        m = _build(family, 2, 1 if family in ("classical_bm", "fermionic") else 0)
        for t in m.terms:
            assert np.allclose(t.matrix, t.matrix.conj().T, atol=1e-12)
            off = t.matrix - np.diag(np.diag(t.matrix))
            assert t.is_quantum == bool(np.max(np.abs(off)) > 1e-12)

    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_assemble_unit_vector_and_linearity(self, family, rng):
        m = _build(family, 2)
        k = len(m.terms) // 2
        e_k = np.zeros(len(m.terms))
        e_k[k] = 1.0
        assert np.allclose(assemble_hamiltonian(m, e_k), m.terms[k].matrix)
        t1 = rng.normal(size=len(m.terms))
        t2 = rng.normal(size=len(m.terms))
        lhs = assemble_hamiltonian(m, t1) + assemble_hamiltonian(m, t2)
        assert np.allclose(lhs, assemble_hamiltonian(m, t1 + t2), atol=1e-12)

    def test_theta_length_checked(self):
        m = build_mean_field(2)
        with pytest.raises(ValueError):
            assemble_hamiltonian(m, np.zeros(5))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            build_model("heisenberg", 2)


class TestSerialization:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_round_trip(self, family, rng, tmp_path):
        m = _build(family, 2, 1 if family == "fermionic" else 0)
        theta = rng.normal(size=len(m.terms))
        path = tmp_path / "model.json"
        save_model(path, m, theta)
        loaded, theta2 = load_model(path)
        assert loaded.family == m.family
        assert loaded.n_visible == m.n_visible
        assert loaded.n_hidden == m.n_hidden
        assert np.allclose(theta2, theta)
        for a, b in zip(loaded.terms, m.terms):
            assert a.label == b.label
            assert np.allclose(a.matrix, b.matrix)

    def test_descriptor_fields(self):
        m = build_classical_bm(2, edges=((0, 1),))
        d = model_descriptor(m, np.array([0.5, -0.25, 1.0]))
        assert d["family"] == "classical_bm"
        assert d["n_visible"] == 2
        assert d["edges"] == [[0, 1]]
        assert d["labels"] == [t.label for t in m.terms]
        assert d["theta"] == [0.5, -0.25, 1.0]

    def test_model_immutable(self):
        m = build_mean_field(1)
        with pytest.raises(Exception):
            m.n_visible = 3
        assert isinstance(m, HamiltonianModel)
