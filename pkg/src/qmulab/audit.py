"""Certification and evaluation: distances to the retrained counterfactual,
membership-inference risk, forgetting curves, and report assembly.

All distances are computed on the probe-averaged model state, so the
forgetting curve and the before/after audit share a single source of truth.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from qmulab import geo, learn, pqc, qcore

REPORT_REQUIRED_FIELDS = (
    "mechanism",
    "distances",
    "membership",
    "retention",
    "dp_ledger",
    "reproducibility",
)


@dataclass
class ForgettingCurve:
    iterations: list
    distances: list

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.iterations, self.iterations[1:])):
            raise ValueError("iterations must be strictly increasing")

    def flatness(self, k=5):
        """max - min over the final k points; small means equilibrium."""
        tail = self.distances[-k:]
        return float(max(tail) - min(tail))

    def rows(self):
        return list(zip(self.iterations, self.distances))


def probe_set(data, cap=32):
    """Default audit probes: the retained test split, capped and seed-free."""
    idx = data.test_indices()[:cap]
    if len(idx) == 0:
        idx = data.retained_train_indices()[:cap]
    return data.features[idx]


def probe_digest(probes):
    return hashlib.sha256(np.ascontiguousarray(probes, dtype=np.float64).tobytes()).hexdigest()


def model_distance(t, theta_a, theta_b, probes):
    rho_a = pqc.model_state(t, theta_a, probes)
    rho_b = pqc.model_state(t, theta_b, probes)
    return {
        "trace_distance": qcore.trace_distance(rho_a, rho_b),
        "infidelity": 1.0 - qcore.fidelity(rho_a, rho_b),
    }


def distance_audit(t, theta_before, theta_after, theta_ref, probes, eps_cert=0.05):
    """Distances to the counterfactual before/after an unlearning run."""
    probes = np.asarray(probes)
    if probes.ndim != 2 or probes.shape[1] != t.n_features:
        raise ValueError("probe set does not match the template's feature count")
    before = model_distance(t, theta_before, theta_ref, probes)
    after = model_distance(t, theta_after, theta_ref, probes)
    return {
        "before": before,
        "after": after,
        "contracted": bool(after["trace_distance"] < before["trace_distance"]),
        "eps_cert": eps_cert,
        "certified": bool(after["trace_distance"] <= eps_cert),
    }


def param_gap_bound(model, data, sample_indices, lam, loss=None):
    """Heuristic parameter-gap bound ||grad L_S|| / (lambda_min(F) + lambda).

    The Hessian of the literal inequality is replaced by the damped Fisher
    matrix, so this is reported as a heuristic, not a proof.
    """
    sample_indices = np.asarray(sample_indices)
    if len(sample_indices) == 0:
        raise ValueError("sample set is empty")
    xs, ys = data.rows(sample_indices)
    loss = loss or learn.LossSpec()
    g = geo.parameter_shift_gradient(model.template, model.theta, (xs, ys), loss)
    F = geo.batch_qfim(model.template, model.theta, xs, mode="full")
    lam_min = max(float(np.linalg.eigvalsh(F.matrix).min()), 0.0)
    return float(np.linalg.norm(g.values) / (lam_min + lam))


def _per_sample_losses(t, theta, xs, ys, loss):
    preds = pqc.predict_batch(t, theta, xs)
    out = np.empty(len(xs))
    for i, (f, y) in enumerate(zip(preds, ys)):
        out[i], _ = geo._loss_and_derivative(loss, f, y)
    return out


def _auc(member_scores, nonmember_scores):
    # Mann-Whitney AUC of "member" under descending score.
    ranks = np.concatenate([member_scores, nonmember_scores])
    order = np.argsort(ranks, kind="stable")
    rank_values = np.empty(len(ranks))
    rank_values[order] = np.arange(1, len(ranks) + 1)
    # Average ties.
    for v in np.unique(ranks):
        mask = ranks == v
        rank_values[mask] = rank_values[mask].mean()
    n1, n2 = len(member_scores), len(nonmember_scores)
    u = rank_values[:n1].sum() - n1 * (n1 + 1) / 2
    return float(u / (n1 * n2))


def membership_inference(t, theta, data, forget_idx, retained_idx, holdout_idx, loss=None):
    """Loss-threshold attack calibrated on (D_s, holdout), evaluated on (D_r, holdout)."""
    for name, idx in (("forget", forget_idx), ("retained", retained_idx), ("holdout", holdout_idx)):
        if len(idx) == 0:
            raise ValueError(f"{name} set is empty")
    loss = loss or learn.LossSpec()
    l_forget = _per_sample_losses(t, theta, *data.rows(np.asarray(forget_idx)), loss)
    l_ret = _per_sample_losses(t, theta, *data.rows(np.asarray(retained_idx)), loss)
    l_hold = _per_sample_losses(t, theta, *data.rows(np.asarray(holdout_idx)), loss)
    # Members have lower loss; calibrate "loss < threshold => member".
    candidates = np.unique(np.concatenate([l_ret, l_hold, [np.inf]]))
    best_thr, best_adv = float(candidates[0]), -np.inf
    for thr in candidates:
        adv = np.mean(l_ret < thr) - np.mean(l_hold < thr)
        if adv > best_adv:
            best_adv, best_thr = float(adv), float(thr)
    tpr = float(np.mean(l_forget < best_thr))
    fpr = float(np.mean(l_hold < best_thr))
    return {
        "advantage": tpr - fpr,
        "auc": _auc(-l_forget, -l_hold),
        "threshold": best_thr,
    }


def forgetting_curve(trace, t, theta_ref, probes):
    """Trace distance to the counterfactual at every recorded snapshot."""
    if not trace.thetas:
        raise ValueError("trace is empty")
    distances = [
        model_distance(t, snap, theta_ref, probes)["trace_distance"] for snap in trace.thetas
    ]
    trace.distances = distances
    return ForgettingCurve(iterations=list(range(len(distances))), distances=distances)


def retention_metrics(model, data, pre_metrics=None):
    """Accuracy on D_s and D_r, with deltas against pre-unlearning metrics."""
    retained = data.retained_train_indices()
    forget = data.forget_indices()
    out = {"retained_accuracy": learn.evaluate(model, data, retained)["accuracy"]}
    if len(forget):
        out["forget_accuracy"] = learn.evaluate(model, data, forget)["accuracy"]
    if pre_metrics:
        for key in ("retained_accuracy", "forget_accuracy"):
            if key in out and key in pre_metrics:
                out[f"delta_{key}"] = out[key] - pre_metrics[key]
    return out


@dataclass
class UnlearnReport:
    mechanism: str
    distances: dict
    membership: dict
    retention: dict
    dp_ledger: dict
    reproducibility: dict
    param_gap_bound: float = None
    kernel_metrics: dict = None
    forgetting_curve: list = None
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "mechanism": self.mechanism,
            "distances": self.distances,
            "membership": self.membership,
            "retention": self.retention,
            "dp_ledger": self.dp_ledger,
            "reproducibility": self.reproducibility,
            "notes": self.notes,
        }
        if self.param_gap_bound is not None:
            d["param_gap_bound"] = {"value": self.param_gap_bound, "status": "heuristic"}
        if self.kernel_metrics is not None:
            d["kernel_metrics"] = self.kernel_metrics
        if self.forgetting_curve is not None:
            d["forgetting_curve"] = self.forgetting_curve
        return d


class ReportValidationError(ValueError):
    pass


def canonical_payload(report_dict):
    """Key-sorted JSON with timestamps excluded; input to the digest."""
    payload = {k: v for k, v in report_dict.items() if k not in ("timestamp", "digest")}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonify)


def _jsonify(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def report_digest(report_dict):
    return hashlib.sha256(canonical_payload(report_dict).encode()).hexdigest()


def emit_report(report, path):
    """Write the report as canonical JSON with a timestamp-independent digest."""
    d = report.to_dict() if isinstance(report, UnlearnReport) else dict(report)
    missing = [k for k in REPORT_REQUIRED_FIELDS if k not in d or d[k] is None]
    if missing:
        raise ReportValidationError(f"report is missing required fields: {missing}")
    d["digest"] = report_digest(d)
    d["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True, default=_jsonify)
    return d["digest"]


def load_report(path):
    with open(path) as fh:
        return json.load(fh)
