"""Deterministic federated simulation with masked aggregation and DP rounds.

Secure aggregation is simulated: zero-sum masks are drawn from a per-round
seed, so the aggregator only ever sees masked messages while the sum equals
the plain sum exactly.  Star and ring topologies differ only in how the
masks are generated, never in the aggregate.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from qmulab import geo, learn, pqc, privacy, qcore, unlearn


@dataclass
class ClientSpec:
    client_id: int
    indices: np.ndarray  # rows of the shared Dataset
    clip_norm: float = 1.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)


@dataclass
class MaskSet:
    masks: dict  # client_id -> vector

    def __post_init__(self):
        total = sum(self.masks.values())
        if np.max(np.abs(total)) > 1e-9:
            raise ValueError("masks must sum to zero")


@dataclass
class RoundRecord:
    round_no: int
    masked_digest: str
    aggregate: np.ndarray
    sigma: float
    epsilon: float


@dataclass
class FedState:
    template: pqc.CircuitTemplate
    theta: pqc.ParamVector
    data: learn.Dataset
    clients: list
    server_lr: float
    topology: str
    master_seed: int
    loss: learn.LossSpec = field(default_factory=learn.LossSpec)
    ledger: privacy.PrivacyLedger = field(default_factory=privacy.PrivacyLedger)
    history: list = field(default_factory=list)
    contributions: dict = field(default_factory=dict)  # client_id -> summed g_i
    removed: set = field(default_factory=set)
    round_no: int = 0

    def active_clients(self):
        return [c for c in self.clients if c.client_id not in self.removed]


def shard_clients(data, n_clients, seed, clip_norm=1.0):
    """Disjoint, seed-deterministic partition of the train split."""
    idx = data.train_indices()
    if n_clients < 1 or n_clients > len(idx):
        raise ValueError("invalid client count for this dataset")
    rng = np.random.default_rng([int(seed), 77])
    order = rng.permutation(idx)
    shards = np.array_split(order, n_clients)
    return [ClientSpec(client_id=i, indices=np.sort(s), clip_norm=clip_norm)
            for i, s in enumerate(shards)]


def local_update(template, theta, data, client, loss):
    """Clipped mean parameter-shift gradient over the client's shard."""
    if len(client.indices) == 0:
        raise ValueError("client shard is empty")
    xs, ys = data.rows(client.indices)
    g = geo.parameter_shift_gradient(template, theta, (xs, ys), loss)
    return privacy.clip(g, client.clip_norm)


def make_masks(client_ids, n_params, seed, topology="star"):
    """Zero-sum additive masks from a trusted round seed."""
    client_ids = list(client_ids)
    rng = np.random.default_rng(seed)
    if topology == "star":
        masks = {}
        total = np.zeros(n_params)
        for cid in client_ids[:-1]:
            m = rng.standard_normal(n_params)
            masks[cid] = m
            total += m
        masks[client_ids[-1]] = -total
    elif topology == "ring":
        shares = {cid: rng.standard_normal(n_params) for cid in client_ids}
        masks = {}
        for i, cid in enumerate(client_ids):
            nxt = client_ids[(i + 1) % len(client_ids)]
            masks[cid] = shares[cid] - shares[nxt]
    else:
        raise ValueError(f"unknown topology {topology!r}")
    return MaskSet(masks=masks)


def secure_aggregate(updates, masks):
    """Sum of masked messages; equals the plain sum since masks cancel."""
    if set(updates) != set(masks.masks):
        raise ValueError("mask / update client sets differ")
    messages = {cid: updates[cid].values + masks.masks[cid] for cid in updates}
    total = sum(messages.values())
    return geo.GradVector(total), messages


def _digest_messages(messages):
    h = hashlib.sha256()
    for cid in sorted(messages):
        h.update(str(cid).encode())
        h.update(np.ascontiguousarray(messages[cid]).tobytes())
    return h.hexdigest()


def fed_round(state, dp):
    """One round: local updates, masked aggregation, noise, server step."""
    clients = state.active_clients()
    if len(clients) < 2:
        raise ValueError("federated round needs at least two clients")
    updates = {}
    for c in clients:  # consumed in client-id order
        g = local_update(state.template, state.theta, state.data, c, state.loss)
        updates[c.client_id] = g
        prev = state.contributions.get(c.client_id, np.zeros(len(state.theta)))
        state.contributions[c.client_id] = prev + g.values
    masks = make_masks(
        sorted(updates), state.template.n_params,
        seed=[int(state.master_seed), 101, int(state.round_no)], topology=state.topology,
    )
    aggregate, messages = secure_aggregate(updates, masks)
    sigma, flagged = dp.noise_sigma()
    if flagged:
        state.ledger.warnings.append(
            f"round {state.round_no}: sigma calibrated with epsilon >= 1 (outside proof regime)"
        )
    noise_rng = np.random.default_rng([int(state.master_seed), 202, int(state.round_no)])
    noisy = privacy.add_noise(aggregate, sigma, noise_rng)
    m = len(clients)
    state.theta = pqc.ParamVector(state.theta.values - state.server_lr * noisy.values / m)
    state.ledger.delta = dp.delta
    state.ledger.add_round(sigma, dp.clip_norm)
    record = RoundRecord(
        round_no=state.round_no,
        masked_digest=_digest_messages(messages),
        aggregate=aggregate.values,
        sigma=sigma,
        epsilon=state.ledger.cumulative_epsilon(),
    )
    state.history.append(record)
    state.round_no += 1
    return record


def build_joint_demo_state(state, qubits_per_client=2, max_clients=3):
    """Small entangled register with one block per client, for channel demos."""
    clients = state.active_clients()[:max_clients]
    if not clients:
        raise ValueError("no active clients")
    n = qubits_per_client * len(clients)
    vec = np.zeros(2**n, dtype=np.complex128)
    vec[0] = 1.0
    # One RY per qubit, angle from the client's mean feature vector.
    for b, c in enumerate(clients):
        xs, _ = state.data.rows(c.indices)
        angles = np.resize(xs.mean(axis=0), qubits_per_client)
        for q in range(qubits_per_client):
            mat = pqc.rotation_matrix("RY", float(angles[q]))
            vec = qcore._apply_matrix_vec(vec, mat, (b * qubits_per_client + q,), n)
    # Entangle across block boundaries so the demo state is not a product.
    for q in range(n - 1):
        vec = qcore._apply_matrix_vec(vec, pqc.CNOT_MAT, (q, q + 1), n)
    return qcore.to_density(qcore.PureState(n, vec)), {
        c.client_id: tuple(range(b * qubits_per_client, (b + 1) * qubits_per_client))
        for b, c in enumerate(clients)
    }


def unlearn_client(state, client_id, mode="gradient_subtract", alpha=None,
                   fine_tune_cfg=None):
    """Remove a client: undo its stored contribution or forget its register block."""
    ids = {c.client_id for c in state.clients}
    if client_id not in ids or client_id in state.removed:
        raise ValueError(f"unknown or already removed client {client_id}")
    trace = unlearn.UnlearnTrace(mechanism=f"client_{mode}")
    trace.record(state.theta)
    info = {}
    if mode == "gradient_subtract":
        alpha = state.server_lr if alpha is None else alpha
        m = max(len(state.active_clients()), 1)
        cum = state.contributions.get(client_id, np.zeros(len(state.theta)))
        # The applied contribution per round was -lr * g_i / m; undo it.
        state.theta = pqc.ParamVector(state.theta.values + alpha * cum / m)
        state.removed.add(client_id)
        trace.record(state.theta)
        if fine_tune_cfg is not None:
            remaining = np.concatenate([c.indices for c in state.active_clients()])
            model = learn.TrainedModel(state.template, state.theta, [], fine_tune_cfg.seed)
            tuned = learn.fine_tune(model, *state.data.rows(np.sort(remaining)), fine_tune_cfg)
            state.theta = tuned.theta
            trace.record(state.theta)
    elif mode == "channel":
        rho, blocks = build_joint_demo_state(state)
        if client_id not in blocks:
            raise ValueError("client is outside the joint demo register")
        block = blocks[client_id]
        forgot = unlearn.client_forget(rho, block)
        rest = tuple(q for q in range(rho.n_qubits) if q not in block)
        # Product reference with a maximally mixed client block; it is a fixed
        # point of the local forgetting map, so contraction toward it is exact.
        ref = forgot
        d_before = qcore.trace_distance(rho, ref)
        d_after = qcore.trace_distance(forgot, ref)
        info = {
            "distance_before": d_before,
            "distance_after": d_after,
            "contracted": bool(d_after <= d_before + 1e-9),
            "marginal_preserved": bool(
                qcore.trace_distance(
                    qcore.partial_trace(rho, rest), qcore.partial_trace(forgot, rest)
                ) <= 1e-9
            ),
        }
        state.removed.add(client_id)
        trace.record(state.theta)
    else:
        raise ValueError(f"unknown unlearn mode {mode!r}")
    return trace, info
