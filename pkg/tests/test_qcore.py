"""State/channel invariants, metric properties, and contraction physics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmulab import qcore


def plus_state():
    return qcore.PureState(1, np.array([1, 1], dtype=np.complex128) / np.sqrt(2))


def bell_state():
    v = np.zeros(4, dtype=np.complex128)
    v[0] = v[3] = 1 / np.sqrt(2)
    return qcore.PureState(2, v)


class TestInvariants:
    def test_pure_state_requires_normalization(self):
        with pytest.raises(ValueError):
            qcore.PureState(1, np.array([1.0, 1.0]))

    def test_density_matrix_requires_unit_trace(self):
        with pytest.raises(ValueError):
            qcore.DensityMatrix(1, np.eye(2))

    def test_density_matrix_rejects_negative_eigenvalue(self):
        m = np.diag([1.5, -0.5])
        with pytest.raises(ValueError):
            qcore.DensityMatrix(1, m)

    def test_kraus_must_be_trace_preserving(self):
        with pytest.raises(ValueError):
            qcore.KrausChannel(1, (0.5 * qcore.I2,))

    def test_observable_needs_exactly_one_form(self):
        with pytest.raises(ValueError):
            qcore.Observable(1, matrix=np.eye(2), pauli_terms=((1.0, "Z"),))
        with pytest.raises(ValueError):
            qcore.Observable(1)

    def test_max_register_size(self):
        with pytest.raises(ValueError):
            qcore.basis_state(qcore.MAX_QUBITS + 1)


class TestChannels:
    def test_full_depolarizing_gives_maximally_mixed(self):
        rho = qcore.to_density(qcore.basis_state(1))
        out = qcore.apply_channel(rho, qcore.make_channel("depolarizing", 1.0), (0,))
        np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=1e-12)

    def test_full_dephasing_kills_coherence(self):
        rho = qcore.to_density(plus_state())
        out = qcore.apply_channel(rho, qcore.make_channel("dephasing", 1.0), (0,))
        np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=1e-12)

    def test_amplitude_damping_decays_excited_state(self):
        rho = qcore.to_density(qcore.basis_state(1, 1))
        out = qcore.apply_channel(rho, qcore.make_channel("amplitude_damping", 0.3), (0,))
        assert abs(out.matrix[1, 1].real - 0.7) < 1e-12

    def test_compose_channels_matches_sequential_application(self):
        a = qcore.make_channel("depolarizing", 0.2)
        b = qcore.make_channel("amplitude_damping", 0.4)
        rho = qcore.random_state(1, 5)
        seq = qcore.apply_channel(qcore.apply_channel(rho, a, (0,)), b, (0,))
        comp = qcore.apply_channel(rho, qcore.compose_channels(a, b), (0,))
        np.testing.assert_allclose(seq.matrix, comp.matrix, atol=1e-10)

    def test_random_channel_is_cptp(self):
        ch = qcore.random_channel(2, 9)
        total = sum(k.conj().T @ k for k in ch.kraus_ops)
        np.testing.assert_allclose(total, np.eye(4), atol=1e-9)

    def test_channel_param_out_of_range(self):
        with pytest.raises(ValueError):
            qcore.make_channel("depolarizing", 1.5)


class TestPartialTrace:
    def test_bell_marginal_is_maximally_mixed(self):
        rho = qcore.to_density(bell_state())
        for q in (0, 1):
            red = qcore.partial_trace(rho, (q,))
            np.testing.assert_allclose(red.matrix, np.eye(2) / 2, atol=1e-12)

    def test_product_state_marginal(self):
        a = qcore.basis_state(1, 1)
        b = plus_state()
        joint = np.kron(np.outer(a.amplitudes, a.amplitudes.conj()),
                        np.outer(b.amplitudes, b.amplitudes.conj()))
        rho = qcore.DensityMatrix(2, joint)
        np.testing.assert_allclose(
            qcore.partial_trace(rho, (1,)).matrix,
            np.outer(b.amplitudes, b.amplitudes.conj()), atol=1e-12)


class TestMetrics:
    def test_trace_distance_extremes(self):
        zero = qcore.to_density(qcore.basis_state(1, 0))
        one = qcore.to_density(qcore.basis_state(1, 1))
        assert abs(qcore.trace_distance(zero, one) - 1.0) < 1e-12
        assert qcore.trace_distance(zero, zero) < 1e-12

    def test_fidelity_matches_pure_overlap(self):
        zero = qcore.to_density(qcore.basis_state(1, 0))
        plus = qcore.to_density(plus_state())
        assert abs(qcore.fidelity(zero, plus) - 0.5) < 1e-12

    def test_fidelity_symmetry_and_range(self):
        a = qcore.random_state(2, 1)
        b = qcore.random_state(2, 2)
        f_ab, f_ba = qcore.fidelity(a, b), qcore.fidelity(b, a)
        assert abs(f_ab - f_ba) < 1e-7  # symmetric up to eigendecomposition error
        assert 0.0 <= f_ab <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(qcore.DimensionMismatchError):
            qcore.trace_distance(qcore.random_state(1, 0), qcore.random_state(2, 0))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_fubini_bures_ordering(self, seed):
        # 1 - sqrt(F) <= D_tr <= sqrt(1 - F) with the squared-overlap convention.
        a = qcore.random_state(2, seed)
        b = qcore.random_state(2, seed + 100_000)
        f = qcore.fidelity(a, b)
        d = qcore.trace_distance(a, b)
        assert 1.0 - np.sqrt(f) <= d + 1e-9
        assert d <= np.sqrt(1.0 - f) + 1e-9


class TestExpectation:
    def test_pauli_z_on_basis_states(self):
        z = qcore.pauli_z(0, 1)
        assert qcore.expectation(qcore.basis_state(1, 0), z) == pytest.approx(1.0)
        assert qcore.expectation(qcore.basis_state(1, 1), z) == pytest.approx(-1.0)

    def test_density_and_pure_agree(self):
        psi = qcore.random_pure_state(2, np.random.default_rng(3))
        obs = qcore.pauli_z(1, 2)
        assert qcore.expectation(psi, obs) == pytest.approx(
            qcore.expectation(qcore.to_density(psi), obs), abs=1e-10)

    def test_observable_diagonal_cache(self):
        z = qcore.pauli_z(0, 2)
        np.testing.assert_allclose(z.diagonal(), [1, 1, -1, -1])
        assert z.diagonal() is z.diagonal()  # cached
        x_obs = qcore.Observable(1, pauli_terms=((1.0, "X"),))
        assert x_obs.diagonal() is None


class TestContraction:
    """Trace distance / fidelity monotonicity under physical maps."""

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_random_channel_contracts(self, seed):
        rho = qcore.random_state(2, seed)
        sigma = qcore.random_state(2, seed + 7)
        ch = qcore.random_channel(2, seed + 13)
        d0 = qcore.trace_distance(rho, sigma)
        d1 = qcore.trace_distance(qcore.apply_channel(rho, ch, (0, 1)),
                                  qcore.apply_channel(sigma, ch, (0, 1)))
        assert d1 <= d0 + 1e-9
        f0 = qcore.fidelity(rho, sigma)
        f1 = qcore.fidelity(qcore.apply_channel(rho, ch, (0, 1)),
                            qcore.apply_channel(sigma, ch, (0, 1)))
        assert f1 >= f0 - 1e-9

    def test_unitary_preserves_distance(self):
        rho = qcore.random_state(1, 3)
        sigma = qcore.random_state(1, 4)
        u = qcore.make_channel("depolarizing", 0.0).kraus_ops[0]  # identity
        h = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
        d0 = qcore.trace_distance(rho, sigma)
        d1 = qcore.trace_distance(qcore.apply_unitary(rho, h, (0,)),
                                  qcore.apply_unitary(sigma, h, (0,)))
        assert abs(d0 - d1) < 1e-10
        assert u.shape == (2, 2)
