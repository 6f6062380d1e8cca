"""Pure-numpy gate kernel: apply a k-qubit matrix to a 2^n state vector.

Qubit 0 is the most significant index bit.  Density matrices are handled
by the callers by viewing them as vectors on 2n qubits.
"""

import numpy as np


def apply_matrix(vec, mat, targets, n_qubits):
    """Apply `mat` (2^k x 2^k) to qubits `targets` of a length-2^n vector."""
    k = len(targets)
    psi = vec.reshape((2,) * n_qubits)
    op = np.asarray(mat, dtype=np.complex128).reshape((2,) * (2 * k))
    psi = np.tensordot(op, psi, axes=(tuple(range(k, 2 * k)), tuple(targets)))
    psi = np.moveaxis(psi, tuple(range(k)), tuple(targets))
    return np.ascontiguousarray(psi, dtype=np.complex128).reshape(-1)
