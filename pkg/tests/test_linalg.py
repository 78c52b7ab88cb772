import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiport_lab.linalg import (
    StateVector,
    Unitary,
    dft_matrix,
    distance_up_to_global_phase,
    entanglement_entropy,
    fidelity,
    haar_random_unitaries,
    haar_random_unitary,
    is_unitary,
    matrix_from_json,
    matrix_to_json,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def ghz3():
    amps = np.zeros(9, dtype=complex)
    amps[[0, 4, 8]] = 1 / math.sqrt(3)
    return StateVector((3, 3), amps)


def random_state(dims, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dims[0] * dims[1]) + 1j * rng.standard_normal(dims[0] * dims[1])
    return StateVector.from_unnormalized(dims, v)


class TestIsUnitary:
    def test_identity(self):
        assert is_unitary(np.eye(3), 1e-12)

    def test_all_ones(self):
        assert not is_unitary(np.ones((3, 3)), 1e-6)

    def test_dft_by_direct_multiplication(self):
        f = dft_matrix(3).matrix
        assert np.max(np.abs(f.conj().T @ f - np.eye(3))) <= 1e-12
        assert is_unitary(f, 1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            is_unitary(np.ones((2, 3)), 1e-6)

    def test_tolerance_must_be_positive(self):
        with pytest.raises(ValueError):
            is_unitary(np.eye(2), 0.0)

    def test_unitary_type_rejects_bad_matrix(self):
        with pytest.raises(ValueError, match="not unitary"):
            Unitary(np.ones((2, 2)))


class TestHaar:
    def test_u1_unimodular(self):
        u = haar_random_unitary(1, 123).matrix
        assert u.shape == (1, 1)
        assert abs(abs(u[0, 0]) - 1) < 1e-12

    def test_deterministic(self):
        a = haar_random_unitary(3, 7).matrix
        b = haar_random_unitary(3, 7).matrix
        assert np.array_equal(a, b)

    def test_marginal_mean(self):
        # E|U_ij|^2 = 1/n under Haar; check every entry against 3 standard errors
        n, count = 3, 100_000
        us = haar_random_unitaries(n, count, np.random.default_rng(11))
        p = np.abs(us) ** 2
        mean = p.mean(axis=0)
        se = p.std(axis=0, ddof=1) / math.sqrt(count)
        assert np.all(np.abs(mean - 1 / n) <= 3 * se), (mean, se)

    def test_phase_correction_makes_first_entry_phase_uniform(self):
        # without the diag(R) correction, arg(U_00) is biased towards 0
        us = haar_random_unitaries(2, 50_000, np.random.default_rng(3))
        ang = np.angle(us[:, 0, 0])
        assert abs(np.mean(np.cos(ang))) < 4 / math.sqrt(50_000)

    @given(seeds, seeds)
    @settings(max_examples=25, deadline=None)
    def test_products_and_adjoints_stay_unitary(self, s1, s2):
        a = haar_random_unitary(5, s1)
        b = haar_random_unitary(5, s2)
        assert is_unitary((a @ b).matrix, 1e-10)
        assert is_unitary(a.dagger.matrix, 1e-10)


class TestDft:
    def test_two_mode_is_balanced_splitter(self):
        np.testing.assert_allclose(
            dft_matrix(2).matrix, np.array([[1, 1], [1, -1]]) / math.sqrt(2), atol=1e-15
        )

    def test_entry_1_2(self):
        expected = cmath.exp(4j * math.pi / 3) / math.sqrt(3)
        assert abs(dft_matrix(3).matrix[1, 2] - expected) < 1e-15

    def test_first_row_and_column(self):
        f = dft_matrix(5).matrix
        np.testing.assert_allclose(f[0], 1 / math.sqrt(5), atol=1e-15)
        np.testing.assert_allclose(f[:, 0], 1 / math.sqrt(5), atol=1e-15)


class TestFidelity:
    def test_self(self):
        psi = ghz3()
        assert fidelity(psi, psi) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert fidelity(StateVector.basis((3, 3), 0, 0), StateVector.basis((3, 3), 1, 1)) == 0.0

    def test_partial_overlap(self):
        assert fidelity(StateVector.basis((3, 3), 0, 0), ghz3()) == pytest.approx(1 / 3, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(StateVector.basis((2, 2), 0, 0), StateVector.basis((3, 3), 0, 0))

    @given(seeds, seeds, st.floats(0, 2 * math.pi))
    @settings(max_examples=40, deadline=None)
    def test_symmetric_bounded_phase_invariant(self, s1, s2, phase):
        a = random_state((3, 3), s1)
        b = random_state((3, 3), s2)
        f = fidelity(a, b)
        assert 0.0 <= f <= 1.0
        assert f == pytest.approx(fidelity(b, a), abs=1e-14)
        rotated = StateVector((3, 3), np.exp(1j * phase) * b.amplitudes)
        assert f == pytest.approx(fidelity(a, rotated), abs=1e-14)


class TestEntropy:
    def test_product(self):
        assert entanglement_entropy(StateVector.basis((3, 3), 0, 0)) == 0.0

    def test_bell(self):
        psi = StateVector((2, 2), np.array([1, 0, 0, 1]) / math.sqrt(2))
        assert entanglement_entropy(psi) == pytest.approx(1.0, abs=1e-12)

    def test_qutrit_maximal(self):
        # three Schmidt weights of 1/3: -3 * (1/3) log2(1/3)
        assert entanglement_entropy(ghz3()) == pytest.approx(-3 * (1 / 3) * math.log2(1 / 3), abs=1e-12)

    def test_unequal_dims(self):
        amps = np.zeros(6, dtype=complex)
        amps[0] = amps[4] = 1 / math.sqrt(2)  # |00> + |11> in 2 x 3
        assert entanglement_entropy(StateVector((2, 3), amps)) == pytest.approx(1.0, abs=1e-12)

    @given(seeds, seeds, seeds)
    @settings(max_examples=30, deadline=None)
    def test_local_unitary_invariance(self, s_state, s_a, s_b):
        psi = random_state((3, 4), s_state)
        moved = psi.transformed(haar_random_unitary(3, s_a), haar_random_unitary(4, s_b))
        assert entanglement_entropy(moved) == pytest.approx(entanglement_entropy(psi), abs=1e-9)


class TestGlobalPhaseDistance:
    def test_zero_for_same(self):
        u = haar_random_unitary(4, 1).matrix
        assert distance_up_to_global_phase(u, u) <= 1e-15

    def test_quotients_global_phase(self):
        u = haar_random_unitary(4, 2).matrix
        assert distance_up_to_global_phase(u, cmath.exp(1j * math.pi / 5) * u) <= 1e-12

    def test_identity_vs_z(self):
        # brute-force min over unimodular c of max|I - c Z|; the trace fallback
        # can only do as well or worse, and the true minimum is sqrt(2)
        z = np.diag([1.0, -1.0])
        cs = np.exp(1j * np.linspace(0, 2 * math.pi, 20001))
        brute = min(np.max(np.abs(np.eye(2) - c * z)) for c in cs)
        d = distance_up_to_global_phase(np.eye(2), z)
        assert brute == pytest.approx(math.sqrt(2), abs=1e-6)
        assert d >= brute - 1e-12
        assert d >= 1

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance_up_to_global_phase(np.eye(2), np.eye(3))


def test_matrix_json_round_trip():
    u = haar_random_unitary(3, 5)
    doc = matrix_to_json(u.matrix)
    assert doc["n"] == 3
    assert len(doc["entries"]) == 3 and len(doc["entries"][0][0]) == 2
    assert np.array_equal(matrix_from_json(doc), u.matrix)
    assert np.array_equal(Unitary.from_json(u.to_json()).matrix, u.matrix)


def test_state_vector_validation():
    with pytest.raises(ValueError):
        StateVector((2, 2), np.array([1, 1, 0, 0]))
    with pytest.raises(ValueError):
        StateVector((2, 2), np.array([1, 0, 0]))
