"""Fidelity kernels, kernel ridge regression, and exact decremental deletion.

The feature map is a noiseless encoding circuit with fixed, seeded
parameters; kernel values are squared statevector overlaps.  Deletion uses
the block-inverse (Sherman-Morrison-Woodbury) identity on the stored
regularized inverse, so removing samples never refactorizes the full
system.
"""

from dataclasses import dataclass

import numpy as np

from qmulab import learn, pqc

GRAM_ATOL = 1e-9
PSD_TOL = -1e-8


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if not np.allclose(m, m.T, atol=GRAM_ATOL, rtol=0):
            raise ValueError("Gram matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=GRAM_ATOL, rtol=0):
            raise ValueError("fidelity kernel must have unit diagonal")
        if np.linalg.eigvalsh(m).min() < PSD_TOL:
            raise ValueError("Gram matrix is not PSD within tolerance")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass
class KernelRidgeModel:
    alpha: np.ndarray
    lam: float
    samples: np.ndarray
    labels: np.ndarray
    template: pqc.CircuitTemplate
    theta_fixed: pqc.ParamVector
    inverse: np.ndarray  # (K + lam I)^{-1}, kept for decremental updates
    gram: np.ndarray

    def residual(self):
        return float(np.max(np.abs((self.gram + self.lam * np.eye(len(self.alpha))) @ self.alpha - self.labels)))


def fixed_feature_map(t, seed):
    """Fixed encoding parameters defining the feature map."""
    if not t.noiseless:
        raise ValueError("kernel feature maps require a noiseless template")
    return learn.init_params(t.n_params, seed)


def feature_state(t, theta_fixed, x):
    theta, x = pqc._check_inputs(t, theta_fixed, x)
    return pqc._run_pure(t, theta, x)


def kernel_value(t, theta_fixed, x, x2):
    """|<phi(x)|phi(x2)>|^2 for the fixed feature map."""
    a = feature_state(t, theta_fixed, x)
    b = feature_state(t, theta_fixed, x2)
    return float(min(abs(np.vdot(a, b)) ** 2, 1.0))


def gram(t, theta_fixed, samples):
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    states = [feature_state(t, theta_fixed, x) for x in samples]
    n = len(states)
    K = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            K[i, j] = K[j, i] = abs(np.vdot(states[i], states[j])) ** 2
    return GramMatrix(matrix=K, samples=samples)


def kernel_vector(model, x):
    """Kernel values of x against the model's training samples."""
    phi = feature_state(model.template, model.theta_fixed, x)
    vals = np.empty(len(model.samples))
    for i, s in enumerate(model.samples):
        vals[i] = abs(np.vdot(phi, feature_state(model.template, model.theta_fixed, s))) ** 2
    return vals


def krr_fit(gram_matrix, labels, lam, template, theta_fixed):
    """Solve (K + lam I) alpha = y and keep the inverse for deletions."""
    if lam <= 0:
        raise ValueError("ridge regularizer must be positive")
    labels = np.asarray(labels, dtype=np.float64)
    K = gram_matrix.matrix
    M = K + lam * np.eye(gram_matrix.n)
    inverse = np.linalg.inv(M)
    alpha = inverse @ labels
    model = KernelRidgeModel(
        alpha=alpha,
        lam=lam,
        samples=gram_matrix.samples,
        labels=labels,
        template=template,
        theta_fixed=theta_fixed,
        inverse=inverse,
        gram=K,
    )
    if model.residual() > 1e-7:
        raise ValueError("ridge solve failed the residual contract")
    return model


def krr_predict(model, x):
    return float(kernel_vector(model, x) @ model.alpha)


def delete_samples_smw(model, indices):
    """Exact decremental deletion via the block-inverse downdate.

    With W = (K + lam I)^{-1} partitioned over kept (k) and deleted (d)
    samples, (K_kk + lam I)^{-1} = W_kk - W_kd W_dd^{-1} W_dk.
    """
    indices = sorted(set(int(i) for i in indices))
    n = len(model.alpha)
    if any(not 0 <= i < n for i in indices):
        raise ValueError("deletion index out of range")
    if len(indices) == n:
        raise ValueError("cannot delete every sample")
    if not indices:
        return model
    keep = [i for i in range(n) if i not in indices]
    W = model.inverse
    W_kk = W[np.ix_(keep, keep)]
    W_kd = W[np.ix_(keep, indices)]
    W_dd = W[np.ix_(indices, indices)]
    inverse = W_kk - W_kd @ np.linalg.solve(W_dd, W_kd.T)
    inverse = 0.5 * (inverse + inverse.T)
    labels = model.labels[keep]
    return KernelRidgeModel(
        alpha=inverse @ labels,
        lam=model.lam,
        samples=model.samples[keep],
        labels=labels,
        template=model.template,
        theta_fixed=model.theta_fixed,
        inverse=inverse,
        gram=model.gram[np.ix_(keep, keep)],
    )


def deviation_bound(model, indices, x):
    """Cauchy-Schwarz bound on the prediction change from deleting `indices`.

    Compares the deleted model f'(x) = k_s(x)^T alpha' against the original
    coefficients restricted to the retained samples, f_s(x) = k_s(x)^T alpha_s.
    Guarantees |f'(x) - f_s(x)| <= ||k_s(x)||_2 ||alpha' - alpha_s||_2.
    """
    indices = sorted(set(int(i) for i in indices))
    if not indices:
        return 0.0
    keep = [i for i in range(len(model.alpha)) if i not in indices]
    deleted = delete_samples_smw(model, indices)
    k_s = kernel_vector(deleted, x)
    return float(np.linalg.norm(k_s) * np.linalg.norm(deleted.alpha - model.alpha[keep]))


def restricted_deviation(model, indices, x):
    """The actual |f'(x) - f_s(x)| that deviation_bound dominates."""
    indices = sorted(set(int(i) for i in indices))
    if not indices:
        return 0.0
    keep = [i for i in range(len(model.alpha)) if i not in indices]
    deleted = delete_samples_smw(model, indices)
    k_s = kernel_vector(deleted, x)
    return float(abs(k_s @ deleted.alpha - k_s @ model.alpha[keep]))


def alignment(K1, K2):
    """Frobenius alignment in [0, 1] for PSD Gram matrices."""
    A = K1.matrix if isinstance(K1, GramMatrix) else np.asarray(K1)
    B = K2.matrix if isinstance(K2, GramMatrix) else np.asarray(K2)
    if A.shape != B.shape:
        raise ValueError("Gram matrices have different shapes")
    denom = np.linalg.norm(A) * np.linalg.norm(B)
    if denom == 0:
        raise ValueError("zero Gram matrix")
    return float(np.sum(A * B) / denom)


def mmd(K, set_a, set_b):
    """Kernel maximum mean discrepancy between two index sets, floored at 0."""
    A = np.asarray(sorted(set_a), dtype=int)
    B = np.asarray(sorted(set_b), dtype=int)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("both index sets must be non-empty")
    M = K.matrix if isinstance(K, GramMatrix) else np.asarray(K)
    sq = M[np.ix_(A, A)].mean() + M[np.ix_(B, B)].mean() - 2 * M[np.ix_(A, B)].mean()
    return float(np.sqrt(max(sq, 0.0)))


def export_gram_csv(gram_matrix, path):
    np.savetxt(path, gram_matrix.matrix, delimiter=",", fmt="%.12g")
