"""Numerical check of the optimal-discriminator argument on finite supports.

For a fixed generator the discriminator maximizes
``sum_i a_i log D_i + b_i log(1 - D_i)``, which is solved point-wise by
``D_i = a_i / (a_i + b_i)``. At that optimum the value equals
``-log 4 + 2 JSD(a || b)``, minimized (at ``-log 4``) exactly when ``a == b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import LOG_CLAMP
from .exceptions import DimensionError, ParameterError
from .rng import stream

LOG4 = math.log(4.0)
MIN_GRID = 100


@dataclass(frozen=True)
class DiscreteDistribution:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise DimensionError("a distribution needs a non-empty 1-D probability vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError(f"probabilities must be >= 0 and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "probabilities", p)

    @property
    def n(self) -> int:
        return self.probabilities.size

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, sparsity: float = 0.0
               ) -> "DiscreteDistribution":
        """Dirichlet(1) draw with each cell zeroed with probability ``sparsity``."""
        p = rng.dirichlet(np.ones(n))
        if sparsity > 0:
            p = np.where(rng.random(n) < sparsity, 0.0, p)
            if p.sum() == 0:
                p[rng.integers(n)] = 1.0
        return cls(p / p.sum())


def _probs(p) -> np.ndarray:
    return p.probabilities if isinstance(p, DiscreteDistribution) else np.asarray(p, float)


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    a, b = _probs(p), _probs(q)
    if a.shape != b.shape:
        raise DimensionError(f"support sizes differ: {a.size} vs {b.size}")
    return a, b


def optimal_discriminator(p_alpha, p_beta) -> np.ndarray:
    """``a / (a + b)`` per support point; 0.5 where both masses vanish."""
    a, b = _pair(p_alpha, p_beta)
    s = a + b
    return np.divide(a, s, out=np.full_like(s, 0.5), where=s > 0)


def adversarial_value(p_alpha, p_beta, D) -> float:
    a, b = _pair(p_alpha, p_beta)
    D = np.clip(np.asarray(D, dtype=np.float64), LOG_CLAMP, 1.0 - LOG_CLAMP)
    if D.shape != a.shape:
        raise DimensionError(f"discriminator has {D.size} entries, support has {a.size}")
    return float(np.sum(a * np.log(D)) + np.sum(b * np.log1p(-D)))


def _kl(p: np.ndarray, m: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / m[nz])))


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats."""
    a, b = _pair(p, q)
    m = 0.5 * (a + b)
    return 0.5 * _kl(a, m) + 0.5 * _kl(b, m)


def _exact_optimum_value(a: np.ndarray, b: np.ndarray) -> float:
    # value at D* without clamping; zero-mass terms contribute 0
    s = a + b
    va = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0) / np.where(s > 0, s, 1.0)), 0.0)
    vb = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0) / np.where(s > 0, s, 1.0)), 0.0)
    return float(va.sum() + vb.sum())


def grid_maximizer(p_alpha, p_beta, grid_resolution: int) -> np.ndarray:
    """Per-point argmax of ``a log y + b log(1 - y)`` over the interior grid ``j / R``."""
    a, b = _pair(p_alpha, p_beta)
    y = np.arange(1, grid_resolution) / grid_resolution
    scores = a[:, None] * np.log(y)[None, :] + b[:, None] * np.log1p(-y)[None, :]
    return y[np.argmax(scores, axis=1)]


def verify_pair(p_alpha, p_beta, grid_resolution: int = 10_000) -> dict:
    """Grid, closed-form and JSD checks for one pair.

    Grid agreement is required only where the pair puts mass on the point.
    The JSD identity uses the exact value at ``D*``; with zero masses the
    clamped :func:`adversarial_value` differs from it by at most ~``1e-7``.
    """
    if grid_resolution < MIN_GRID:
        raise ParameterError(f"grid_resolution must be >= {MIN_GRID}, got {grid_resolution}")
    a, b = _pair(p_alpha, p_beta)
    d_star = optimal_discriminator(a, b)
    spacing = 1.0 / grid_resolution
    d_grid = grid_maximizer(a, b, grid_resolution)
    massive = (a + b) > 0
    grid_dev = float(np.max(np.abs(d_grid - d_star)[massive])) if massive.any() else 0.0
    value = _exact_optimum_value(a, b)
    identity_dev = abs(value - (-LOG4 + 2.0 * jsd(a, b)))
    grid_values = np.array([adversarial_value(a, b, np.full_like(a, y))
                            for y in (0.1, 0.5, 0.9)])
    return {
        "grid_deviation": grid_dev,
        "grid_ok": grid_dev <= spacing + 1e-12,
        "identity_deviation": identity_dev,
        "identity_ok": identity_dev <= 1e-9,
        "value_at_optimum": value,
        "jsd": jsd(a, b),
        "dominates_constant_discriminators": bool(
            np.all(grid_values <= adversarial_value(a, b, d_star) + 1e-12)),
    }


def verify_optimum(p_alpha=None, p_beta=None, grid_resolution: int = 10_000, trials: int = 1000,
                   max_support: int = 32, seed: int = 0) -> dict:
    """Run the checks on one given pair, or on ``trials`` random pairs plus canonical cases.

    ``matched`` covers check (c): for every random ``a``, value at ``D*`` of
    ``(a, a)`` is ``-log 4`` and no mismatched pair in the run goes lower.
    """
    if grid_resolution < MIN_GRID:
        raise ParameterError(f"grid_resolution must be >= {MIN_GRID}, got {grid_resolution}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if p_alpha is not None and p_beta is not None:
        r = verify_pair(p_alpha, p_beta, grid_resolution)
        r["passed"] = bool(r["grid_ok"] and r["identity_ok"])
        return r

    rng = stream(seed, "oracle")
    worst_grid = worst_identity = worst_matched = 0.0
    min_mismatched = math.inf
    failures = []
    for t in range(trials):
        n = int(rng.integers(2, max_support + 1))
        sparsity = 0.3 if t % 4 == 3 else 0.0
        a = DiscreteDistribution.random(n, rng, sparsity)
        b = DiscreteDistribution.random(n, rng, sparsity)
        r = verify_pair(a, b, grid_resolution)
        worst_grid = max(worst_grid, r["grid_deviation"])
        worst_identity = max(worst_identity, r["identity_deviation"])
        matched = abs(_exact_optimum_value(a.probabilities, a.probabilities) + LOG4)
        worst_matched = max(worst_matched, matched)
        min_mismatched = min(min_mismatched, r["value_at_optimum"])
        if not (r["grid_ok"] and r["identity_ok"] and matched <= 1e-9):
            failures.append(t)

    canonical = {}
    uni = np.full(4, 0.25)
    canonical["uniform_matched"] = verify_pair(uni, uni, grid_resolution)
    canonical["disjoint"] = verify_pair([1.0, 0.0], [0.0, 1.0], grid_resolution)
    canonical["disjoint"]["value_ok"] = abs(canonical["disjoint"]["value_at_optimum"]) <= 1e-9
    canonical_ok = (all(c["grid_ok"] and c["identity_ok"] for c in canonical.values())
                    and canonical["disjoint"]["value_ok"]
                    and abs(canonical["uniform_matched"]["value_at_optimum"] + LOG4) <= 1e-9)
    checks = {
        "a_grid_maximizer": {"passed": worst_grid <= 1.0 / grid_resolution + 1e-12,
                             "worst_deviation": worst_grid, "tolerance": 1.0 / grid_resolution},
        "b_jsd_identity": {"passed": worst_identity <= 1e-9, "worst_deviation": worst_identity,
                           "tolerance": 1e-9},
        "c_matched_minimum": {"passed": worst_matched <= 1e-9 and min_mismatched >= -LOG4 - 1e-9,
                              "worst_deviation": worst_matched, "tolerance": 1e-9,
                              "lowest_value_seen": min_mismatched},
        "canonical_cases": {"passed": canonical_ok,
                            "cases": {k: {kk: v for kk, v in c.items()}
                                      for k, c in canonical.items()}},
    }
    return {
        "trials": trials,
        "grid_resolution": grid_resolution,
        "max_support": max_support,
        "seed": seed,
        "checks": checks,
        "failed_trials": failures,
        "passed": all(c["passed"] for c in checks.values()) and not failures,
    }
