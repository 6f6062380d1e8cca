"""Complex linear algebra for quantum states, channels, and distance metrics.

States live on a register of up to 10 qubits, stored densely.  Qubit 0 is
the most significant index bit, so |10> on two qubits has amplitude index 2.
All functions are pure; RNG state is passed in by the caller.
"""

from dataclasses import dataclass, field

import numpy as np

from qmulab import backend

ATOL = 1e-9
MAX_QUBITS = 10

# Single-qubit constants used throughout.
I2 = np.eye(2, dtype=np.complex128)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class DimensionMismatchError(ValueError):
    """Operands act on registers of different sizes."""


@dataclass(frozen=True)
class PureState:
    """Normalized state vector on `n_qubits` qubits."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError("amplitude vector length must be 2**n_qubits")
        if abs(np.linalg.norm(amps) - 1.0) > ATOL:
            raise ValueError("state vector is not normalized")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self):
        return 2**self.n_qubits


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, PSD matrix on `n_qubits` qubits."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        d = 2**self.n_qubits
        if m.shape != (d, d):
            raise ValueError("matrix must be 2**n x 2**n")
        if not np.allclose(m, m.conj().T, atol=ATOL, rtol=0):
            raise ValueError("matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL or abs(np.trace(m).imag) > ATOL:
            raise ValueError("matrix trace is not 1")
        if np.linalg.eigvalsh(m).min() < -ATOL:
            raise ValueError("matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return 2**self.n_qubits


@dataclass(frozen=True)
class KrausChannel:
    """CPTP map given by its Kraus operators on `n_qubits` qubits."""

    n_qubits: int
    kraus_ops: tuple = field(default=())

    def __post_init__(self):
        d = 2**self.n_qubits
        ops = tuple(np.ascontiguousarray(k, dtype=np.complex128) for k in self.kraus_ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (d, d):
                raise ValueError("Kraus operator has wrong dimension")
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, np.eye(d), atol=ATOL, rtol=0):
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus_ops", ops)


@dataclass(frozen=True)
class Observable:
    """Hermitian readout: a dense matrix or a weighted Pauli-string sum."""

    n_qubits: int
    matrix: np.ndarray = None
    pauli_terms: tuple = None  # ((coeff, "ZIX"), ...)

    def __post_init__(self):
        if (self.matrix is None) == (self.pauli_terms is None):
            raise ValueError("give exactly one of matrix / pauli_terms")
        if self.pauli_terms is not None:
            terms = tuple((float(c), str(s)) for c, s in self.pauli_terms)
            for _, s in terms:
                if len(s) != self.n_qubits or any(ch not in PAULI for ch in s):
                    raise ValueError(f"bad Pauli string {s!r}")
            object.__setattr__(self, "pauli_terms", terms)
        else:
            m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
            if m.shape != (2**self.n_qubits,) * 2:
                raise ValueError("observable matrix has wrong dimension")
            if not np.allclose(m, m.conj().T, atol=ATOL, rtol=0):
                raise ValueError("observable is not Hermitian")
            object.__setattr__(self, "matrix", m)

    def dense(self):
        """Dense matrix form of the observable."""
        if self.matrix is not None:
            return self.matrix
        d = 2**self.n_qubits
        out = np.zeros((d, d), dtype=np.complex128)
        for coeff, s in self.pauli_terms:
            term = np.array([[1.0]], dtype=np.complex128)
            for ch in s:
                term = np.kron(term, PAULI[ch])
            out += coeff * term
        return out

    def diagonal(self):
        """Real diagonal when the readout is Z-basis diagonal, else None."""
        cached = self.__dict__.get("_diag", False)
        if cached is not False:
            return cached
        diag = self._compute_diagonal()
        object.__setattr__(self, "_diag", diag)
        return diag

    def _compute_diagonal(self):
        if self.pauli_terms is None:
            m = self.matrix
            if np.array_equal(m, np.diag(np.diagonal(m))):
                return np.diagonal(m).real.copy()
            return None
        d = 2**self.n_qubits
        diag = np.zeros(d)
        for coeff, s in self.pauli_terms:
            if any(ch in ("X", "Y") for ch in s):
                return None
            term = np.ones(1)
            for ch in s:
                term = np.kron(term, np.array([1.0, -1.0]) if ch == "Z" else np.ones(2))
            diag += coeff * term
        return diag

    def spectral_radius(self):
        return float(np.abs(np.linalg.eigvalsh(self.dense())).max())


def pauli_z(qubit, n_qubits):
    """Z readout on a single qubit, identity elsewhere."""
    s = ["I"] * n_qubits
    s[qubit] = "Z"
    return Observable(n_qubits=n_qubits, pauli_terms=((1.0, "".join(s)),))


def basis_state(n_qubits, index=0):
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[index] = 1.0
    return PureState(n_qubits, amps)


def to_density(psi):
    """|psi><psi| as a DensityMatrix."""
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    return DensityMatrix(psi.n_qubits, rho)


def _check_targets(targets, n_qubits, arity=None):
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError("target qubits must be distinct")
    if any(not 0 <= t < n_qubits for t in targets):
        raise ValueError("target qubit out of range")
    if arity is not None and len(targets) != arity:
        raise ValueError(f"expected {arity} target qubits, got {len(targets)}")
    return targets


def _apply_matrix_vec(vec, mat, targets, n_qubits):
    return backend.apply_matrix(vec, mat, targets, n_qubits)


def _apply_matrix_dm(rho, mat, targets, n_qubits):
    """mat rho mat^dagger via two vectorized applications (rho as 2n-qubit vec)."""
    d = 2**n_qubits
    v = rho.reshape(-1)
    v = backend.apply_matrix(v, mat, targets, 2 * n_qubits)
    v = backend.apply_matrix(v, mat.conj(), tuple(t + n_qubits for t in targets), 2 * n_qubits)
    return v.reshape(d, d)


def apply_unitary(state, U, targets):
    """Apply U on `targets`, embedded in the identity on the rest."""
    U = np.ascontiguousarray(U, dtype=np.complex128)
    g = U.shape[0]
    if U.shape != (g, g) or not np.allclose(U.conj().T @ U, np.eye(g), atol=ATOL, rtol=0):
        raise ValueError("matrix is not unitary")
    k = int(np.log2(g))
    if 2**k != g:
        raise ValueError("unitary dimension must be a power of 2")
    targets = _check_targets(targets, state.n_qubits, arity=k)
    if isinstance(state, PureState):
        return PureState(state.n_qubits, _apply_matrix_vec(state.amplitudes, U, targets, state.n_qubits))
    return DensityMatrix(state.n_qubits, _apply_matrix_dm(state.matrix, U, targets, state.n_qubits))


def apply_channel(rho, channel, targets):
    """rho' = sum_i K_i rho K_i^dagger on the `targets` subsystem."""
    targets = _check_targets(targets, rho.n_qubits, arity=channel.n_qubits)
    out = np.zeros_like(rho.matrix)
    for K in channel.kraus_ops:
        out += _apply_matrix_dm(rho.matrix, K, targets, rho.n_qubits)
    return DensityMatrix(rho.n_qubits, out)


def compose_channels(first, second):
    """Kraus set of `second after first` on the same register."""
    if first.n_qubits != second.n_qubits:
        raise DimensionMismatchError("channel arities differ")
    ops = tuple(B @ A for B in second.kraus_ops for A in first.kraus_ops)
    return KrausChannel(first.n_qubits, ops)


def make_channel(kind, param):
    """Standard single-qubit channels parameterized by a probability/rate."""
    p = float(param)
    if not 0.0 <= p <= 1.0:
        raise ValueError("channel parameter must be in [0, 1]")
    if kind == "depolarizing":
        if p == 0.0:
            return KrausChannel(1, (I2,))
        ops = (
            np.sqrt(1 - 3 * p / 4) * I2,
            np.sqrt(p / 4) * PAULI["X"],
            np.sqrt(p / 4) * PAULI["Y"],
            np.sqrt(p / 4) * PAULI["Z"],
        )
    elif kind == "dephasing":
        if p == 0.0:
            return KrausChannel(1, (I2,))
        ops = (np.sqrt(1 - p / 2) * I2, np.sqrt(p / 2) * PAULI["Z"])
    elif kind == "amplitude_damping":
        ops = (
            np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=np.complex128),
            np.array([[0, np.sqrt(p)], [0, 0]], dtype=np.complex128),
        )
    else:
        raise ValueError(f"unknown channel kind {kind!r}")
    return KrausChannel(1, ops)


def partial_trace(rho, keep):
    """Reduced state on the `keep` qubits (in ascending original order)."""
    keep = _check_targets(keep, rho.n_qubits)
    if not keep:
        raise ValueError("keep set must be non-empty")
    keep = tuple(sorted(keep))
    n = rho.n_qubits
    traced = [q for q in range(n) if q not in keep]
    t = rho.matrix.reshape((2,) * (2 * n))
    # Contract row/column axes of each traced qubit.
    for q in sorted(traced, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + (t.ndim // 2))
    dk = 2 ** len(keep)
    return DensityMatrix(len(keep), t.reshape(dk, dk))


def _check_same_dim(rho, sigma):
    if rho.n_qubits != sigma.n_qubits:
        raise DimensionMismatchError("states act on different registers")


def trace_distance(rho, sigma):
    """D_tr = half the sum of |eigenvalues| of rho - sigma."""
    _check_same_dim(rho, sigma)
    eigs = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(0.5 * np.abs(eigs).sum())


def _psd_sqrt(m):
    eigs, vecs = np.linalg.eigh(m)
    eigs = np.clip(eigs, 0.0, None)  # floor small negative drift
    return (vecs * np.sqrt(eigs)) @ vecs.conj().T


def fidelity(rho, sigma):
    """Squared Uhlmann fidelity; equals |<psi|phi>|^2 for pure states."""
    _check_same_dim(rho, sigma)
    s = _psd_sqrt(rho.matrix)
    inner = s @ sigma.matrix @ s
    eigs = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    f = float(np.sqrt(eigs).sum() ** 2)
    return min(f, 1.0)


def expectation(state, obs):
    """<O> = Tr(rho O); imaginary residue beyond tolerance is an error."""
    if state.n_qubits != obs.n_qubits:
        raise DimensionMismatchError("observable acts on a different register")
    if isinstance(state, PureState):
        psi = state.amplitudes
        if obs.pauli_terms is not None:
            val = 0.0 + 0.0j
            for coeff, s in obs.pauli_terms:
                v = psi
                for q, ch in enumerate(s):
                    if ch != "I":
                        v = _apply_matrix_vec(v, PAULI[ch], (q,), state.n_qubits)
                val += coeff * np.vdot(psi, v)
        else:
            val = np.vdot(psi, obs.matrix @ psi)
    else:
        val = np.trace(state.matrix @ obs.dense())
    if abs(val.imag) > 1e-8:
        raise ValueError("expectation value has a non-negligible imaginary part")
    return float(val.real)


def random_pure_state(n_qubits, rng):
    z = rng.standard_normal(2**n_qubits) + 1j * rng.standard_normal(2**n_qubits)
    return PureState(n_qubits, z / np.linalg.norm(z))


def random_state(n_qubits, seed):
    """Seeded random state: mixture of two Haar-random pure states."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    rng = np.random.default_rng(seed)
    a = random_pure_state(n_qubits, rng)
    b = random_pure_state(n_qubits, rng)
    w = rng.uniform()
    rho = w * to_density(a).matrix + (1 - w) * to_density(b).matrix
    return DensityMatrix(n_qubits, rho)


def random_channel(n_qubits, seed, n_kraus=None):
    """Seeded random CPTP channel from a Haar-random isometry dilation."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    rng = np.random.default_rng(seed)
    d = 2**n_qubits
    k = n_kraus or 4
    z = rng.standard_normal((d * k, d)) + 1j * rng.standard_normal((d * k, d))
    q, r = np.linalg.qr(z)
    # Fix the phase so the isometry is deterministic per seed.
    q = q * (np.diagonal(r) / np.abs(np.diagonal(r))).conj()
    ops = tuple(q[i * d:(i + 1) * d, :] for i in range(k))
    return KrausChannel(n_qubits, ops)
