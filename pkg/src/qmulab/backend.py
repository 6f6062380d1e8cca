"""Gate-application backend selection.

At import we pick the compiled Cython kernel when the extension built,
otherwise the numpy fallback.  Both are importable directly so the bench
command can time them against each other.
"""

import numpy as np

from qmulab import _gatekernel_py

try:  # pragma: no cover - depends on build environment
    from qmulab import _gatekernel

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover
    _gatekernel = None
    HAVE_COMPILED = False

BACKEND_NAME = "compiled" if HAVE_COMPILED else "python"


def apply_matrix_py(vec, mat, targets, n_qubits):
    """Numpy reference path (always available)."""
    return _gatekernel_py.apply_matrix(vec, mat, targets, n_qubits)


def apply_matrix_compiled(vec, mat, targets, n_qubits):
    """Compiled path; >2-qubit gates delegate to the numpy path."""
    vec = np.ascontiguousarray(vec, dtype=np.complex128)
    mat = np.ascontiguousarray(mat, dtype=np.complex128)
    if len(targets) == 1:
        return _gatekernel.apply_matrix_1q(vec, mat, targets[0], n_qubits)
    if len(targets) == 2:
        return _gatekernel.apply_matrix_2q(vec, mat, targets[0], targets[1], n_qubits)
    return _gatekernel_py.apply_matrix(vec, mat, targets, n_qubits)


if HAVE_COMPILED:
    apply_matrix = apply_matrix_compiled
else:
    apply_matrix = apply_matrix_py
