"""Exact circuit gradients, quantum Fisher information, and natural updates.

Gradients use the rotation-gate shift identity
    d<O>/dtheta_k = (<O>_{theta_k + pi/2} - <O>_{theta_k - pi/2}) / 2
chained through the loss derivative.  Fisher matrices are computed from
exact derivative states obtained by inserting the gate generator (-i G / 2)
at the gate position, following the real-part convention whose single-RY
diagonal value is 1/4.
"""

from dataclasses import dataclass

import numpy as np

from qmulab import pqc


@dataclass(frozen=True)
class GradVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("gradient has non-finite entries")
        object.__setattr__(self, "values", v)

    def norm(self):
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class QFIM:
    matrix: np.ndarray
    damping: float = 0.0

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("QFIM must be square")
        if not np.allclose(m, m.T, atol=1e-8, rtol=0):
            raise ValueError("QFIM must be symmetric")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def diagonal(self):
        return np.diag(self.matrix).copy()


def _loss_and_derivative(loss, f, y):
    """Per-sample loss value and d loss / d prediction."""
    if loss.kind == "mse":
        return (f - y) ** 2, 2.0 * (f - y)
    if loss.kind == "logistic":
        # prediction mapped to a probability via (1 + f) / 2, labels in {-1,+1}
        margin = np.clip((1.0 + y * f) / 2.0, 1e-12, None)
        return -np.log(margin), -y / (2.0 * margin)
    raise ValueError(f"unknown loss kind {loss.kind!r}")


def batch_loss(t, theta, batch, loss):
    xs, ys = batch
    theta = np.asarray(theta.values if isinstance(theta, pqc.ParamVector) else theta)
    preds = pqc.predict_batch(t, theta, np.asarray(xs, dtype=np.float64))
    total = sum(_loss_and_derivative(loss, f, y)[0] for f, y in zip(preds, ys))
    return total / len(xs)


def _batch_expectation_gradient(t, theta, xs):
    """(expectations, d expectation / d theta) for a feature stack via the shift rule.

    The shift rule only changes gates at or after the shifted gate, so the
    forward pass is shared as a prefix and each shift reruns the suffix.
    """
    n = t.n_qubits
    gates = t.gates
    _, prefix, mats = pqc._run_pure_batch(t, theta, xs, keep_prefix=True)
    f = pqc._batch_expectations(prefix[-1], t.readout)
    grad = np.zeros((len(xs), t.n_params))
    for i, g in enumerate(gates):
        b = g.binding
        if not isinstance(b, pqc.Trainable):
            continue
        base = float(theta[b.index])
        vals = []
        for shift in (np.pi / 2, -np.pi / 2):
            v = pqc._apply_batched(
                prefix[i], pqc.rotation_matrix(g.kind, base + shift), g.targets, n)
            for j in range(i + 1, len(gates)):
                v = pqc._apply_batched(v, mats[j], gates[j].targets, n)
            vals.append(pqc._batch_expectations(v, t.readout))
        grad[:, b.index] += 0.5 * (vals[0] - vals[1])
    return f, grad


def parameter_shift_gradient(t, theta, batch, loss):
    """Batch-mean gradient of the loss via the shift rule."""
    xs, ys = batch
    if len(xs) == 0:
        raise ValueError("batch must be non-empty")
    theta = np.asarray(theta.values if isinstance(theta, pqc.ParamVector) else theta, dtype=np.float64)
    if theta.shape != (t.n_params,):
        raise ValueError(f"expected {t.n_params} parameters")
    grad = np.zeros(t.n_params)
    if t.noiseless:
        fs, dfs = _batch_expectation_gradient(t, theta, np.asarray(xs, dtype=np.float64))
        for f, df, y in zip(fs, dfs, ys):
            _, dldf = _loss_and_derivative(loss, f, y)
            grad += dldf * df
    else:
        for x, y in zip(xs, ys):
            f = pqc.predict(t, theta, x)
            _, dldf = _loss_and_derivative(loss, f, y)
            for k in range(t.n_params):
                shifted = theta.copy()
                shifted[k] = theta[k] + np.pi / 2
                plus = pqc.predict(t, shifted, x)
                shifted[k] = theta[k] - np.pi / 2
                minus = pqc.predict(t, shifted, x)
                grad[k] += dldf * 0.5 * (plus - minus)
    return GradVector(grad / len(xs))


def finite_diff_gradient(t, theta, batch, loss, h=1e-5):
    """Central-difference oracle for the same batch-mean loss."""
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.asarray(theta.values if isinstance(theta, pqc.ParamVector) else theta, dtype=np.float64)
    grad = np.zeros(t.n_params)
    for k in range(t.n_params):
        up = theta.copy()
        up[k] += h
        down = theta.copy()
        down[k] -= h
        grad[k] = (batch_loss(t, up, batch, loss) - batch_loss(t, down, batch, loss)) / (2 * h)
    return GradVector(grad)


def _derivative_state(t, theta, x, k):
    """Exact |d psi / d theta_k> by generator insertion, summed over occurrences."""
    out = None
    for i, g in enumerate(t.gates):
        if isinstance(g.binding, pqc.Trainable) and g.binding.index == k:
            gen = -0.5j * pqc.GENERATOR[g.kind]
            vec = pqc._run_pure(t, theta, x, insert={i: gen})
            out = vec if out is None else out + vec
    if out is None:
        raise ValueError(f"parameter {k} does not appear in the template")
    return out


def qfim(t, theta, x, mode="full", block_size=None):
    """Fisher information matrix of the output state at (theta, x)."""
    if not t.noiseless:
        raise ValueError("QFIM requires a noiseless template")
    theta, x = pqc._check_inputs(t, theta, x)
    psi = pqc._run_pure(t, theta, x)
    p = t.n_params
    if mode == "diagonal":
        diag = np.empty(p)
        for k in range(p):
            dk = _derivative_state(t, theta, x, k)
            diag[k] = (np.vdot(dk, dk) - abs(np.vdot(dk, psi)) ** 2).real
        return QFIM(np.diag(diag))
    derivs = [_derivative_state(t, theta, x, k) for k in range(p)]
    overlaps = np.array([np.vdot(psi, d) for d in derivs])
    F = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            val = (np.vdot(derivs[i], derivs[j]) - overlaps[i].conj() * overlaps[j]).real
            F[i, j] = F[j, i] = val
    if mode == "full":
        return QFIM(F)
    if mode == "block":
        if not block_size or block_size < 1:
            raise ValueError("block mode needs a positive block_size")
        mask = np.zeros_like(F, dtype=bool)
        for start in range(0, p, block_size):
            stop = min(start + block_size, p)
            mask[start:stop, start:stop] = True
        return QFIM(np.where(mask, F, 0.0))
    raise ValueError(f"unknown QFIM mode {mode!r}")


def _batch_derivative_states(t, theta, xs):
    """Output states and exact parameter-derivative states for a feature stack."""
    n = t.n_qubits
    _, prefix, mats = pqc._run_pure_batch(t, theta, xs, keep_prefix=True)
    psi = prefix[-1]
    derivs = np.zeros((t.n_params,) + psi.shape, dtype=np.complex128)
    for i, g in enumerate(t.gates):
        if not isinstance(g.binding, pqc.Trainable):
            continue
        gen = -0.5j * pqc.GENERATOR[g.kind]
        v = pqc._apply_batched(prefix[i + 1], gen, g.targets, n)
        for j in range(i + 1, len(t.gates)):
            v = pqc._apply_batched(v, mats[j], t.gates[j].targets, n)
        derivs[g.binding.index] += v
    return psi, derivs


def batch_qfim(t, theta, xs, mode="full", block_size=None):
    """Per-sample QFIM averaged over a batch of feature vectors."""
    xs = np.asarray(xs, dtype=np.float64)
    if len(xs) == 0:
        raise ValueError("batch must be non-empty")
    if not t.noiseless:
        raise ValueError("QFIM requires a noiseless template")
    theta = np.asarray(theta.values if isinstance(theta, pqc.ParamVector) else theta, dtype=np.float64)
    psi, derivs = _batch_derivative_states(t, theta, xs)
    overlaps = np.einsum("bd,pbd->pb", psi.conj(), derivs)
    if mode == "diagonal":
        diag = (np.einsum("pbd,pbd->pb", derivs.conj(), derivs).real
                - np.abs(overlaps) ** 2).mean(axis=1)
        return QFIM(np.diag(diag))
    gram = np.einsum("pbd,qbd->pqb", derivs.conj(), derivs)
    F = (gram - overlaps.conj()[:, None, :] * overlaps[None, :, :]).real.mean(axis=2)
    F = 0.5 * (F + F.T)
    if mode == "full":
        return QFIM(F)
    if mode == "block":
        if not block_size or block_size < 1:
            raise ValueError("block mode needs a positive block_size")
        p = t.n_params
        mask = np.zeros_like(F, dtype=bool)
        for start in range(0, p, block_size):
            stop = min(start + block_size, p)
            mask[start:stop, start:stop] = True
        return QFIM(np.where(mask, F, 0.0))
    raise ValueError(f"unknown QFIM mode {mode!r}")


def damped_inverse(F, lam):
    """(F + lam I)^{-1}; requires lam > 0 when F is singular."""
    if lam < 0:
        raise ValueError("damping must be non-negative")
    M = F.matrix + lam * np.eye(F.dim)
    if lam == 0 and abs(np.linalg.det(M)) < 1e-10:
        raise ValueError("singular QFIM requires positive damping")
    inv = np.linalg.inv(M)
    return 0.5 * (inv + inv.T)


def natural_step(theta, g, F, eta, lam):
    """theta - eta (F + lam I)^{-1} g."""
    theta = np.asarray(theta.values if isinstance(theta, pqc.ParamVector) else theta, dtype=np.float64)
    gv = g.values if isinstance(g, GradVector) else np.asarray(g, dtype=np.float64)
    if theta.shape != gv.shape or F.dim != len(theta):
        raise ValueError("shape mismatch between theta, gradient, and QFIM")
    step = damped_inverse(F, lam) @ gv
    return pqc.ParamVector(theta - eta * step)


def identity_qfim(p):
    return QFIM(np.eye(p))
