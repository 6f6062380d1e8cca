# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gate kernel: tight loops for 1- and 2-qubit matrix application.

Semantics match `_gatekernel_py.apply_matrix` exactly; qubit 0 is the most
significant index bit.  Gates on >2 qubits fall back to the numpy path in
`backend`.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def apply_matrix_1q(cnp.complex128_t[::1] vec, cnp.complex128_t[:, ::1] mat,
                    int target, int n_qubits):
    cdef Py_ssize_t dim = 1 << n_qubits
    cdef Py_ssize_t bit = 1 << (n_qubits - 1 - target)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(dim, dtype=np.complex128)
    cdef cnp.complex128_t[::1] o = out
    cdef cnp.complex128_t m00 = mat[0, 0], m01 = mat[0, 1]
    cdef cnp.complex128_t m10 = mat[1, 0], m11 = mat[1, 1]
    cdef Py_ssize_t i, i1
    cdef cnp.complex128_t a0, a1
    for i in range(dim):
        if i & bit:
            continue
        i1 = i | bit
        a0 = vec[i]
        a1 = vec[i1]
        o[i] = m00 * a0 + m01 * a1
        o[i1] = m10 * a0 + m11 * a1
    return out


def apply_matrix_2q(cnp.complex128_t[::1] vec, cnp.complex128_t[:, ::1] mat,
                    int t0, int t1, int n_qubits):
    # t0 indexes the high bit of the gate's 2-bit row index.
    cdef Py_ssize_t dim = 1 << n_qubits
    cdef Py_ssize_t b0 = 1 << (n_qubits - 1 - t0)
    cdef Py_ssize_t b1 = 1 << (n_qubits - 1 - t1)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(dim, dtype=np.complex128)
    cdef cnp.complex128_t[::1] o = out
    cdef Py_ssize_t i, i00, i01, i10, i11, r, c
    cdef cnp.complex128_t a00, a01, a10, a11
    for i in range(dim):
        if (i & b0) or (i & b1):
            continue
        i00 = i
        i01 = i | b1
        i10 = i | b0
        i11 = i | b0 | b1
        a00 = vec[i00]
        a01 = vec[i01]
        a10 = vec[i10]
        a11 = vec[i11]
        o[i00] = mat[0, 0] * a00 + mat[0, 1] * a01 + mat[0, 2] * a10 + mat[0, 3] * a11
        o[i01] = mat[1, 0] * a00 + mat[1, 1] * a01 + mat[1, 2] * a10 + mat[1, 3] * a11
        o[i10] = mat[2, 0] * a00 + mat[2, 1] * a01 + mat[2, 2] * a10 + mat[2, 3] * a11
        o[i11] = mat[3, 0] * a00 + mat[3, 1] * a01 + mat[3, 2] * a10 + mat[3, 3] * a11
    return out
