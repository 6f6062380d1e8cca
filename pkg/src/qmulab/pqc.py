"""Parameterized circuit templates with data encoding and (optionally noisy) execution.

A template is an ordered gate list over RX/RY/RZ/CNOT/CZ.  Rotation angles
are bound to a fixed value, a trainable parameter slot, or a scaled data
feature.  Noisy templates apply a per-qubit depolarizing channel after each
entangler layer.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from qmulab import backend, qcore

ROTATIONS = ("RX", "RY", "RZ")
TWO_QUBIT = ("CNOT", "CZ")

CNOT_MAT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)
CZ_MAT = np.diag([1, 1, 1, -1]).astype(np.complex128)
GENERATOR = {"RX": qcore.PAULI["X"], "RY": qcore.PAULI["Y"], "RZ": qcore.PAULI["Z"]}


@dataclass(frozen=True)
class Fixed:
    angle: float


@dataclass(frozen=True)
class Trainable:
    index: int


@dataclass(frozen=True)
class DataFeature:
    index: int
    scale: float = 1.0


@dataclass(frozen=True)
class GateSpec:
    kind: str
    targets: tuple
    binding: object = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind in ROTATIONS:
            if len(self.targets) != 1:
                raise ValueError(f"{self.kind} takes exactly one target")
            if self.binding is None:
                raise ValueError("rotation gates need an angle binding")
        elif self.kind in TWO_QUBIT:
            if len(self.targets) != 2 or self.targets[0] == self.targets[1]:
                raise ValueError(f"{self.kind} takes two distinct targets")
            if self.binding is not None:
                raise ValueError(f"{self.kind} takes no binding")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")


@dataclass(frozen=True)
class CircuitTemplate:
    n_qubits: int
    gates: tuple
    n_params: int
    n_features: int
    readout: qcore.Observable
    noise: float = None  # per-layer depolarizing probability
    entangler_breaks: tuple = ()  # gate indices after which layer noise applies

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "entangler_breaks", tuple(self.entangler_breaks))
        seen_params = set()
        for g in self.gates:
            if any(t >= self.n_qubits or t < 0 for t in g.targets):
                raise ValueError("gate target out of range")
            b = g.binding
            if isinstance(b, Trainable):
                if not 0 <= b.index < self.n_params:
                    raise ValueError("trainable index out of range")
                seen_params.add(b.index)
            elif isinstance(b, DataFeature):
                if not 0 <= b.index < self.n_features:
                    raise ValueError("data feature index out of range")
        if seen_params != set(range(self.n_params)):
            raise ValueError("every trainable index must appear at least once")
        if self.noise is not None and not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise probability must be in [0, 1]")

    @property
    def noiseless(self):
        return self.noise is None or self.noise == 0.0

    def without_noise(self):
        return replace(self, noise=None)


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("parameters must be a finite 1-D vector")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def rotation_matrix(kind, angle):
    g = GENERATOR[kind]
    return np.cos(angle / 2) * qcore.I2 - 1j * np.sin(angle / 2) * g


def gate_angle(gate, theta, x):
    b = gate.binding
    if isinstance(b, Fixed):
        return b.angle
    if isinstance(b, Trainable):
        return float(theta[b.index])
    return b.scale * float(x[b.index])


def gate_matrix(gate, theta, x):
    if gate.kind == "CNOT":
        return CNOT_MAT
    if gate.kind == "CZ":
        return CZ_MAT
    return rotation_matrix(gate.kind, gate_angle(gate, theta, x))


def build_layered_ansatz(n_qubits, depth, entangler="linear", reupload=False, n_features=None):
    """Alternating encode / variational / entangler layers.

    n_params = 2 * n_qubits * depth.  With reupload=False the encoding layer
    appears only once at the front.
    """
    if n_qubits < 1 or depth < 1:
        raise ValueError("n_qubits and depth must be >= 1")
    if entangler not in ("linear", "ring"):
        raise ValueError(f"unknown entangler {entangler!r}")
    n_features = n_qubits if n_features is None else int(n_features)
    gates = []
    breaks = []
    p = 0
    for layer in range(depth):
        if layer == 0 or reupload:
            for q in range(n_qubits):
                gates.append(GateSpec("RY", (q,), DataFeature(q % n_features)))
        for q in range(n_qubits):
            gates.append(GateSpec("RY", (q,), Trainable(p)))
            gates.append(GateSpec("RZ", (q,), Trainable(p + 1)))
            p += 2
        if n_qubits >= 2:
            pairs = [(q, q + 1) for q in range(n_qubits - 1)]
            if entangler == "ring" and n_qubits > 2:
                pairs.append((n_qubits - 1, 0))
            for pair in pairs:
                gates.append(GateSpec("CNOT", pair))
            breaks.append(len(gates) - 1)
    return CircuitTemplate(
        n_qubits=n_qubits,
        gates=tuple(gates),
        n_params=p,
        n_features=n_features,
        readout=qcore.pauli_z(0, n_qubits),
        entangler_breaks=tuple(breaks),
    )


def _check_inputs(t, theta, x):
    theta = np.asarray(theta.values if isinstance(theta, ParamVector) else theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if theta.shape != (t.n_params,):
        raise ValueError(f"expected {t.n_params} parameters, got {theta.shape}")
    if x.shape != (t.n_features,):
        raise ValueError(f"expected {t.n_features} features, got {x.shape}")
    return theta, x


def _run_pure(t, theta, x, insert=None):
    """Statevector run; `insert` maps gate index -> extra matrix applied after it."""
    n = t.n_qubits
    vec = np.zeros(2**n, dtype=np.complex128)
    vec[0] = 1.0
    for i, g in enumerate(t.gates):
        vec = backend.apply_matrix(vec, gate_matrix(g, theta, x), g.targets, n)
        if insert and i in insert:
            vec = backend.apply_matrix(vec, insert[i], g.targets, n)
    return vec


def _apply_batched(states, mat, targets, n):
    """Apply a gate to a (batch, 2**n) stack of statevectors.

    `mat` is either a shared (2**k, 2**k) matrix or a per-sample
    (batch, 2, 2) stack for data-dependent single-qubit rotations.
    """
    batch, dim = states.shape
    k = len(targets)
    if k == 1:
        # Index layout: (high bits, target bit, low bits) by stride.
        q = targets[0]
        view = states.reshape(batch, 1 << q, 2, dim >> (q + 1))
        if mat.ndim == 3:
            out = np.einsum("bij,bajc->baic", mat, view)
        else:
            out = np.einsum("ij,bajc->baic", mat, view)
        return out.reshape(batch, dim)
    if k == 2 and targets[1] == targets[0] + 1:
        q = targets[0]
        view = states.reshape(batch, 1 << q, 4, dim >> (q + 2))
        out = np.einsum("ij,bajc->baic", mat, view)
        return out.reshape(batch, dim)
    t = states.reshape((batch,) + (2,) * n)
    axes = [1 + q for q in targets]
    dest = list(range(n - k + 1, n + 1))
    t = np.moveaxis(t, axes, dest)
    t = t.reshape(batch, -1, 2**k)
    if mat.ndim == 3:
        out = np.einsum("bij,bkj->bki", mat, t)
    else:
        out = t @ mat.T
    out = np.moveaxis(out.reshape((batch,) + (2,) * n), dest, axes)
    return out.reshape(batch, 2**n)


def _batched_gate_matrix(g, theta, xs):
    if g.kind == "CNOT":
        return CNOT_MAT
    if g.kind == "CZ":
        return CZ_MAT
    b = g.binding
    if isinstance(b, DataFeature):
        a = b.scale * xs[:, b.index]
        gen = GENERATOR[g.kind]
        return (np.cos(a / 2)[:, None, None] * qcore.I2
                - 1j * np.sin(a / 2)[:, None, None] * gen)
    angle = b.angle if isinstance(b, Fixed) else float(theta[b.index])
    return rotation_matrix(g.kind, angle)


def _run_pure_batch(t, theta, xs, keep_prefix=False):
    """Statevector run for a stack of feature rows; optionally keep all prefixes."""
    xs = np.asarray(xs, dtype=np.float64)
    batch = xs.shape[0]
    n = t.n_qubits
    mats = [_batched_gate_matrix(g, theta, xs) for g in t.gates]
    states = np.zeros((batch, 2**n), dtype=np.complex128)
    states[:, 0] = 1.0
    prefix = [states] if keep_prefix else None
    for g, m in zip(t.gates, mats):
        states = _apply_batched(states, m, g.targets, n)
        if keep_prefix:
            prefix.append(states)
    if keep_prefix:
        return states, prefix, mats
    return states


def _batch_expectations(states, obs):
    diag = obs.diagonal()
    if diag is not None:
        return (states.real**2 + states.imag**2) @ diag
    dense = obs.dense()
    return np.einsum("bi,ij,bj->b", states.conj(), dense, states).real


def predict_batch(t, theta, xs):
    """Readout expectations for a stack of feature rows."""
    theta = np.asarray(theta.values if isinstance(theta, ParamVector) else theta, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != t.n_features:
        raise ValueError(f"expected (batch, {t.n_features}) features, got {xs.shape}")
    if theta.shape != (t.n_params,):
        raise ValueError(f"expected {t.n_params} parameters")
    if t.noiseless:
        return _batch_expectations(_run_pure_batch(t, theta, xs), t.readout)
    return np.array([predict(t, theta, x) for x in xs])


def _run_noisy(t, theta, x):
    n = t.n_qubits
    d = 2**n
    rho = np.zeros((d, d), dtype=np.complex128)
    rho[0, 0] = 1.0
    noise = qcore.make_channel("depolarizing", t.noise)
    breaks = set(t.entangler_breaks)
    for i, g in enumerate(t.gates):
        rho = qcore._apply_matrix_dm(rho, gate_matrix(g, theta, x), g.targets, n)
        if i in breaks:
            for q in range(n):
                acc = np.zeros_like(rho)
                for K in noise.kraus_ops:
                    acc += qcore._apply_matrix_dm(rho, K, (q,), n)
                rho = acc
    return rho


def execute(t, theta, x):
    """Run the template; PureState when noiseless, DensityMatrix otherwise."""
    theta, x = _check_inputs(t, theta, x)
    if t.noiseless:
        return qcore.PureState(t.n_qubits, _run_pure(t, theta, x))
    return qcore.DensityMatrix(t.n_qubits, _run_noisy(t, theta, x))


def predict(t, theta, x):
    """Readout expectation of the executed circuit, in [-lmax, lmax]."""
    theta, x = _check_inputs(t, theta, x)
    if t.noiseless:
        state = qcore.PureState(t.n_qubits, _run_pure(t, theta, x))
    else:
        state = qcore.DensityMatrix(t.n_qubits, _run_noisy(t, theta, x))
    return qcore.expectation(state, t.readout)


def model_state(t, theta, probes):
    """Probe-averaged output state; the rho(theta) of all distance audits."""
    probes = np.asarray(list(probes), dtype=np.float64)
    if len(probes) == 0:
        raise ValueError("probe list must be non-empty")
    if t.noiseless:
        theta = np.asarray(theta.values if isinstance(theta, ParamVector) else theta, dtype=np.float64)
        states = _run_pure_batch(t, theta, probes)
        acc = np.einsum("bi,bj->ij", states, states.conj())
    else:
        d = 2**t.n_qubits
        acc = np.zeros((d, d), dtype=np.complex128)
        for x in probes:
            acc += execute(t, theta, x).matrix
    return qcore.DensityMatrix(t.n_qubits, acc / len(probes))


# --- serialization -----------------------------------------------------------

def _binding_to_dict(b):
    if isinstance(b, Fixed):
        return {"kind": "fixed", "angle": b.angle}
    if isinstance(b, Trainable):
        return {"kind": "trainable", "index": b.index}
    if isinstance(b, DataFeature):
        return {"kind": "data", "index": b.index, "scale": b.scale}
    return None


def _binding_from_dict(d):
    if d is None:
        return None
    if d["kind"] == "fixed":
        return Fixed(d["angle"])
    if d["kind"] == "trainable":
        return Trainable(d["index"])
    if d["kind"] == "data":
        return DataFeature(d["index"], d.get("scale", 1.0))
    raise ValueError(f"unknown binding kind {d['kind']!r}")


def template_to_dict(t):
    return {
        "n_qubits": t.n_qubits,
        "n_params": t.n_params,
        "n_features": t.n_features,
        "noise": t.noise,
        "entangler_breaks": list(t.entangler_breaks),
        "readout": [[c, s] for c, s in t.readout.pauli_terms],
        "gates": [
            {"kind": g.kind, "targets": list(g.targets), "binding": _binding_to_dict(g.binding)}
            for g in t.gates
        ],
    }


def template_from_dict(d):
    return CircuitTemplate(
        n_qubits=d["n_qubits"],
        gates=tuple(
            GateSpec(g["kind"], tuple(g["targets"]), _binding_from_dict(g["binding"]))
            for g in d["gates"]
        ),
        n_params=d["n_params"],
        n_features=d["n_features"],
        readout=qcore.Observable(
            n_qubits=d["n_qubits"], pauli_terms=tuple((c, s) for c, s in d["readout"])
        ),
        noise=d.get("noise"),
        entangler_breaks=tuple(d.get("entangler_breaks", ())),
    )


def save_template(t, path):
    with open(path, "w") as fh:
        json.dump(template_to_dict(t), fh, indent=2, sort_keys=True)


def load_template(path):
    with open(path) as fh:
        return template_from_dict(json.load(fh))
