"""Gradient clipping, Gaussian-mechanism calibration, and DP composition.

Accounting follows the Renyi route for the full-participation Gaussian
mechanism: a round with sensitivity C and noise sigma contributes
a * C^2 / (2 sigma^2) at order a.  The reported epsilon at a target delta
is the better of the Renyi conversion and the naive linear sum of per-round
classical epsilons, both of which are valid upper bounds.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from qmulab import geo

RDP_ORDERS = tuple(np.arange(1.25, 64.01, 0.25))


@dataclass(frozen=True)
class DPConfig:
    clip_norm: float = 1.0
    epsilon: float = None
    delta: float = 1e-5
    sigma: float = None

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if (self.epsilon is None) == (self.sigma is None):
            raise ValueError("give exactly one of a target epsilon or an explicit sigma")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("target epsilon must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def noise_sigma(self):
        if self.sigma is not None:
            return self.sigma, False
        return gaussian_sigma(self.clip_norm, self.epsilon, self.delta)


@dataclass
class PrivacyLedger:
    delta: float = 1e-5
    rounds: list = field(default_factory=list)  # (sigma, clip_norm, tag)
    warnings: list = field(default_factory=list)

    def add_round(self, sigma, clip_norm, tag="gaussian"):
        if tag != "gaussian":
            raise ValueError(f"unknown mechanism tag {tag!r}")
        if sigma <= 0 or clip_norm <= 0:
            raise ValueError("sigma and clip norm must be positive")
        self.rounds.append((float(sigma), float(clip_norm), tag))

    def cumulative_epsilon(self):
        return compose(self, len(self.rounds))["epsilon"]

    def to_dict(self):
        acct = compose(self, len(self.rounds))
        return {
            "delta": self.delta,
            "rounds": [{"sigma": s, "clip_norm": c, "mechanism": t} for s, c, t in self.rounds],
            "epsilon": acct["epsilon"],
            "rdp_epsilon": acct["rdp_epsilon"],
            "naive_epsilon": acct["naive_epsilon"],
            "warnings": list(self.warnings),
        }


def clip(g, c):
    """Rescale g onto the L2 ball of radius c; direction preserved."""
    if c <= 0:
        raise ValueError("clip norm must be positive")
    v = g.values if isinstance(g, geo.GradVector) else np.asarray(g, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm <= c:
        return geo.GradVector(v.copy())
    return geo.GradVector(v * (c / norm))


def gaussian_sigma(c, epsilon, delta):
    """Classical Gaussian-mechanism noise scale C sqrt(2 ln(1.25/delta)) / eps.

    Returns (sigma, flagged); flagged is True when epsilon >= 1, outside the
    formula's proof regime.
    """
    if c <= 0 or epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need c > 0, epsilon > 0, delta in (0, 1)")
    flagged = epsilon >= 1.0
    return c * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon, flagged


def add_noise(g, sigma, rng):
    """Per-coordinate Gaussian noise with std sigma; deterministic per rng."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    v = g.values if isinstance(g, geo.GradVector) else np.asarray(g, dtype=np.float64)
    if sigma == 0:
        return geo.GradVector(v.copy())
    return geo.GradVector(v + rng.normal(0.0, sigma, size=v.shape))


def _rdp_to_epsilon(rdp_totals, delta):
    best = math.inf
    for a, r in zip(RDP_ORDERS, rdp_totals):
        best = min(best, r + math.log(1.0 / delta) / (a - 1.0))
    return best


def _naive_epsilon(sigma, c, delta):
    # Inverse of gaussian_sigma at the same delta.
    return c * math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


def compose(ledger, n_rounds):
    """Cumulative (epsilon, delta) over the first n_rounds of the ledger."""
    if n_rounds > len(ledger.rounds):
        raise ValueError("ledger has fewer rounds than requested")
    rounds = ledger.rounds[:n_rounds]
    if not rounds:
        return {"epsilon": 0.0, "rdp_epsilon": 0.0, "naive_epsilon": 0.0, "delta": ledger.delta}
    rdp = np.zeros(len(RDP_ORDERS))
    naive = 0.0
    for sigma, c, tag in rounds:
        if tag != "gaussian":
            raise ValueError(f"unknown mechanism tag {tag!r}")
        rate = c**2 / (2.0 * sigma**2)
        rdp += np.asarray(RDP_ORDERS) * rate
        naive += _naive_epsilon(sigma, c, ledger.delta)
    rdp_eps = _rdp_to_epsilon(rdp, ledger.delta)
    return {
        "epsilon": min(rdp_eps, naive),
        "rdp_epsilon": rdp_eps,
        "naive_epsilon": naive,
        "delta": ledger.delta,
    }
