"""Forgetting mechanisms: geometry-weighted influence steps, Fisher-ranked
reset with partial retraining, and client-level channel forgetting.

The influence mechanism (qmu_i) walks mini-batches of the forget set with a
clipped, Fisher-preconditioned step under an F-weighted trust region, then
fine-tunes on the retained set with the configured optimizer.
"""

from dataclasses import dataclass, field

import numpy as np

from qmulab import geo, learn, pqc, qcore


@dataclass(frozen=True)
class QmuIConfig:
    eta: float = 0.1
    clip_norm: float = 1.0
    trust_radius: float = 1.0
    damping: float = 1e-3
    qfim_mode: str = "diagonal"
    batch_size: int = 8
    max_iters: int = 25
    # Fine-tuning works best with the same optimizer settings used for the
    # original training run, so trajectories track the counterfactual's.
    fine_tune: learn.TrainConfig = field(default_factory=learn.TrainConfig)

    def __post_init__(self):
        if min(self.eta, self.clip_norm, self.trust_radius, self.damping) <= 0:
            raise ValueError("eta, clip_norm, trust_radius, and damping must be positive")


@dataclass
class UnlearnTrace:
    mechanism: str
    thetas: list = field(default_factory=list)
    distances: list = field(default_factory=list)  # filled by the audit

    def record(self, theta):
        self.thetas.append(pqc.ParamVector(np.array(theta.values, copy=True)))


def clip_gradient(g, c):
    v = g.values if isinstance(g, geo.GradVector) else np.asarray(g, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm <= c:
        return geo.GradVector(v.copy())
    return geo.GradVector(v * (c / norm))


def qmu_i(model, data, cfg):
    """Influence unlearning over D_r followed by fine-tuning on D_s."""
    forget_idx = data.forget_indices()
    if len(forget_idx) == 0:
        raise ValueError("forget set is empty")
    t = model.template
    theta = np.array(model.theta.values, copy=True)
    trace = UnlearnTrace(mechanism="qmu_i")
    trace.record(pqc.ParamVector(theta))
    xs, ys = data.rows(forget_idx)
    bs = min(cfg.batch_size, len(forget_idx))
    iters = 0
    while iters < cfg.max_iters:
        for start in range(0, len(forget_idx), bs):
            if iters >= cfg.max_iters:
                break
            bx, by = xs[start:start + bs], ys[start:start + bs]
            g = geo.parameter_shift_gradient(t, theta, (bx, by), cfg.fine_tune.loss)
            g = clip_gradient(g, cfg.clip_norm)
            F = geo.batch_qfim(t, theta, bx, mode=cfg.qfim_mode)
            M = F.matrix + cfg.damping * np.eye(F.dim)
            delta = np.linalg.solve(M, g.values)
            radius_sq = float(delta @ M @ delta)
            if radius_sq > cfg.trust_radius**2:
                delta = delta * (cfg.trust_radius / np.sqrt(radius_sq))
            theta = theta - cfg.eta * delta
            trace.record(pqc.ParamVector(theta))
            iters += 1
    retained = data.retained_train_indices()
    stepped = learn.replace_theta(model, pqc.ParamVector(theta))
    tuned = learn.fine_tune(stepped, *data.rows(retained), cfg.fine_tune)
    trace.record(tuned.theta)
    return tuned, trace


def influence_delta(model, data, sample_indices, lam, loss=None, qfim_mode="full"):
    """One-shot removal estimate: -(F + lam I)^{-1} grad L_S(theta)."""
    sample_indices = np.asarray(sample_indices)
    if len(sample_indices) == 0:
        raise ValueError("sample set is empty")
    t = model.template
    xs, ys = data.rows(sample_indices)
    loss = loss or learn.LossSpec()
    g = geo.parameter_shift_gradient(t, model.theta, (xs, ys), loss)
    F = geo.batch_qfim(t, model.theta, xs, mode=qfim_mode)
    return pqc.ParamVector(-geo.damped_inverse(F, lam) @ g.values)


def fisher_step(model, data, sample_indices, eta, lam, loss=None):
    """Coordinate-wise diagonal-Fisher step on the loss over S."""
    sample_indices = np.asarray(sample_indices)
    if len(sample_indices) == 0:
        raise ValueError("sample set is empty")
    t = model.template
    xs, ys = data.rows(sample_indices)
    loss = loss or learn.LossSpec()
    g = geo.parameter_shift_gradient(t, model.theta, (xs, ys), loss)
    F = geo.batch_qfim(t, model.theta, xs, mode="diagonal")
    return geo.natural_step(model.theta, g, F, eta, lam)


def fisher_ranked_selection(F, fraction):
    """Indices of the ceil(fraction * p) largest diagonal entries of F.

    Ties break toward the lower index.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    diag = F.diagonal()
    count = int(np.ceil(fraction * len(diag)))
    # Stable sort on (-value, index) implements the tie rule.
    order = sorted(range(len(diag)), key=lambda i: (-diag[i], i))
    return sorted(order[:count])


def reset_partial(model, data, selection, p0_seed, fine_tune_cfg=None):
    """Redraw selected coordinates and fine-tune only those on D_s."""
    selection = sorted(set(int(i) for i in selection))
    if not selection:
        raise ValueError("selection is empty")
    if max(selection) >= model.template.n_params or min(selection) < 0:
        raise ValueError("selection index out of range")
    theta = np.array(model.theta.values, copy=True)
    rng = np.random.default_rng(p0_seed)
    theta[selection] = rng.uniform(-np.pi, np.pi, size=len(selection))
    trace = UnlearnTrace(mechanism="reset_partial")
    trace.record(model.theta)
    reset_model = learn.replace_theta(model, pqc.ParamVector(theta))
    trace.record(reset_model.theta)
    if fine_tune_cfg is None:
        return reset_model, trace
    mask = np.zeros(model.template.n_params, dtype=bool)
    mask[selection] = True
    retained = data.retained_train_indices()
    tuned = learn.fine_tune(reset_model, *data.rows(retained), fine_tune_cfg, coord_mask=mask)
    trace.record(tuned.theta)
    return tuned, trace


def client_forget(rho, client_block):
    """Trace out the client qubits and replace them with the maximally mixed state."""
    block = tuple(sorted(set(int(q) for q in client_block)))
    if any(not 0 <= q < rho.n_qubits for q in block):
        raise ValueError("client block out of range")
    rest = tuple(q for q in range(rho.n_qubits) if q not in block)
    if not rest:
        raise ValueError("client block covers the whole register; nothing is retained")
    marginal = qcore.partial_trace(rho, rest)
    mixed = np.eye(2 ** len(block), dtype=np.complex128) / 2 ** len(block)
    # Rebuild with original qubit ordering: tensor (mixed block) x (rest marginal),
    # then permute qubits back into place.
    joint = np.kron(mixed, marginal.matrix)
    n = rho.n_qubits
    current_order = list(block) + list(rest)
    perm = [current_order.index(q) for q in range(n)]
    tensor = joint.reshape((2,) * (2 * n))
    tensor = np.transpose(tensor, axes=perm + [p + n for p in perm])
    return qcore.DensityMatrix(n, tensor.reshape(2**n, 2**n))
