"""Parity between the compiled gate kernel and the numpy fallback."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmulab import backend, pqc


def random_state(rng, n):
    z = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return z / np.linalg.norm(z)


def test_backend_reports_its_choice():
    assert backend.BACKEND_NAME in ("compiled", "python")
    assert backend.BACKEND_NAME == ("compiled" if backend.HAVE_COMPILED else "python")


@pytest.mark.skipif(not backend.HAVE_COMPILED, reason="compiled kernel unavailable")
@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=6),
    target=st.integers(min_value=0, max_value=5),
    angle=st.floats(min_value=-3.1, max_value=3.1),
    kind=st.sampled_from(["RX", "RY", "RZ"]),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_single_qubit_parity(n, target, angle, kind, seed):
    target = target % n
    vec = random_state(np.random.default_rng(seed), n)
    mat = pqc.rotation_matrix(kind, angle)
    a = backend.apply_matrix_py(vec, mat, (target,), n)
    b = backend.apply_matrix_compiled(vec, mat, (target,), n)
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


@pytest.mark.skipif(not backend.HAVE_COMPILED, reason="compiled kernel unavailable")
@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=6),
    pair=st.tuples(st.integers(min_value=0, max_value=5), st.integers(min_value=0, max_value=5)),
    seed=st.integers(min_value=0, max_value=2**31),
    cz=st.booleans(),
)
def test_two_qubit_parity(n, pair, seed, cz):
    a, b = pair[0] % n, pair[1] % n
    if a == b:
        b = (a + 1) % n
    vec = random_state(np.random.default_rng(seed), n)
    mat = pqc.CZ_MAT if cz else pqc.CNOT_MAT
    x = backend.apply_matrix_py(vec, mat, (a, b), n)
    y = backend.apply_matrix_compiled(vec, mat, (a, b), n)
    np.testing.assert_allclose(x, y, atol=1e-12, rtol=0)


def test_qubit_zero_is_most_significant():
    # X on qubit 0 of |00> must produce |10> = index 2.
    vec = np.zeros(4, dtype=np.complex128)
    vec[0] = 1.0
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    out = backend.apply_matrix(vec, x, (0,), 2)
    assert abs(out[2] - 1.0) < 1e-12


def test_cnot_convention():
    # CNOT with control qubit 0: |10> -> |11>.
    vec = np.zeros(4, dtype=np.complex128)
    vec[2] = 1.0
    out = backend.apply_matrix(vec, pqc.CNOT_MAT, (0, 1), 2)
    assert abs(out[3] - 1.0) < 1e-12
