"""VaR, worst-case VaR and best-case VaR over the fitted scenario set.

Sign convention: returns, not losses. ``VaR_alpha = -Q(1 - alpha)`` where
``Q`` is the return quantile, so a positive number is a loss magnitude.
The ambiguity set is the K2 first-layer scenarios of the model; segment
weights decide nothing about which scenario is worst.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import TwoLayerMixture, flatten, norm_cdf
from .series import ReturnSeries

MAX_BISECTIONS = 200
BASES = ("fitted_mixture", "empirical")


class RiskError(ValueError):
    pass


def _check_alpha(alpha):
    if not 0.5 < alpha < 1:
        raise RiskError(f"alpha must lie in (0.5, 1), got {alpha}")


def invert_cdf(cdf, p, lo, hi, max_iter: int = MAX_BISECTIONS):
    """Bisection root of ``cdf(x) = p``, elementwise over array arguments.

    ``[lo, hi]`` is widened until it brackets ``p``; bisection then runs
    until the bracket collapses to adjacent doubles or ``max_iter`` halvings.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)):
        raise RiskError("probability must lie strictly inside (0, 1)")
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), p.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), p.shape).copy()
    width = np.maximum(hi - lo, 1e-300)
    for _ in range(2000):
        low_bad = cdf(lo) > p
        high_bad = cdf(hi) < p
        if not (np.any(low_bad) or np.any(high_bad)):
            break
        lo = np.where(low_bad, lo - width, lo)
        hi = np.where(high_bad, hi + width, hi)
        width = np.where(low_bad | high_bad, 2 * width, width)
    else:
        raise RiskError("could not bracket the quantile")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        open_ = (mid > lo) & (mid < hi)
        if not np.any(open_):
            break
        below = cdf(mid) < p
        lo = np.where(open_ & below, mid, lo)
        hi = np.where(open_ & ~below, mid, hi)
    x = 0.5 * (lo + hi)
    return x if x.ndim else float(x)


def _mixture_arrays(dist):
    w = np.asarray(dist.weights, dtype=np.float64)
    return w, np.asarray(dist.mu, dtype=np.float64), np.asarray(dist.sigma, dtype=np.float64)


def _batch_quantile(weights, mu, sigma, p):
    """Quantiles of B Gaussian mixtures given as (B, K) arrays."""
    live = weights > 0
    big = np.where(live, sigma, 0.0).max(axis=1)
    lo = np.where(live, mu, np.inf).min(axis=1) - 10 * big
    hi = np.where(live, mu, -np.inf).max(axis=1) + 10 * big

    def cdf(x):
        return np.sum(weights * norm_cdf((x[:, None] - mu) / sigma), axis=1)

    return invert_cdf(cdf, np.broadcast_to(p, lo.shape), lo, hi)


def mixture_quantile(dist, p):
    """Quantile of a Gaussian mixture (anything with weights/mu/sigma)."""
    w, mu, sigma = _mixture_arrays(dist)
    out = _batch_quantile(w[None], mu[None], sigma[None], np.float64(p))
    return float(out[0])


def value_at_risk(dist, alpha: float) -> float:
    _check_alpha(alpha)
    return -mixture_quantile(dist, 1.0 - alpha)


@dataclass(frozen=True)
class RiskReport:
    alpha: float
    var: float
    wvar: float
    bvar: float
    worst_scenario: int
    best_scenario: int
    per_scenario_var: tuple[float, ...]
    basis: str = "fitted_mixture"

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "var": self.var,
            "wvar": self.wvar,
            "bvar": self.bvar,
            "per_scenario_var": list(self.per_scenario_var),
            "worst_scenario": self.worst_scenario,
            "best_scenario": self.best_scenario,
            "basis": self.basis,
        }


def scenario_vars(m: TwoLayerMixture, alpha: float) -> np.ndarray:
    _check_alpha(alpha)
    return -_batch_quantile(m.alpha, m.mu, m.sigma, 1.0 - alpha)


def pooled_var(m: TwoLayerMixture, alpha: float) -> float:
    """VaR of the mixture whose scenario weights are the length-weighted average.

    The pooled CDF is a convex combination of scenario CDFs, so its quantile
    lies between the extreme scenario quantiles; the search is confined to
    that bracket and the result clipped to it, keeping ``bvar <= var <= wvar``
    exact in floating point.
    """
    per = scenario_vars(m, alpha)
    q_lo, q_hi = -per.max(), -per.min()
    weights = (m.pooled_weights()[:, None] * m.alpha).reshape(-1)
    mu, sigma = m.mu.reshape(-1), m.sigma.reshape(-1)
    if q_lo == q_hi:
        return float(-q_lo)

    def cdf(x):
        return np.sum(weights * norm_cdf((np.asarray(x)[..., None] - mu) / sigma), axis=-1)

    q = invert_cdf(cdf, np.float64(1.0 - alpha), q_lo, q_hi)
    return float(-np.clip(q, q_lo, q_hi))


def worst_best_var(m: TwoLayerMixture, alpha: float) -> RiskReport:
    """Max/min VaR over the scenarios, with the pooled VaR as ``var``."""
    per = scenario_vars(m, alpha)
    worst, best = int(np.argmax(per)), int(np.argmin(per))
    return RiskReport(float(alpha), pooled_var(m, alpha), float(per[worst]), float(per[best]),
                      worst, best, tuple(float(v) for v in per))


def empirical_var(r, alpha: float) -> float:
    x = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)
    _check_alpha(alpha)
    if len(x) < 20:
        raise RiskError(f"need at least 20 returns for an empirical VaR, got {len(x)}")
    return float(-np.quantile(x, 1.0 - alpha))


def risk_report(m: TwoLayerMixture, alpha: float, basis: str = "fitted_mixture",
                returns=None) -> RiskReport:
    if basis not in BASES:
        raise RiskError(f"basis must be one of {BASES}")
    report = worst_best_var(m, alpha)
    if basis == "empirical":
        if returns is None:
            raise RiskError("the empirical basis needs the return series")
        report = RiskReport(report.alpha, empirical_var(returns, alpha), report.wvar, report.bvar,
                            report.worst_scenario, report.best_scenario, report.per_scenario_var,
                            basis)
    return report


def one_layer_overestimation_check(m: TwoLayerMixture, t: int, alpha: float) -> tuple[float, float]:
    """WVaR over the scenarios vs WVaR over the individual inner Gaussians.

    Inner Gaussians with zero inner weight are left out of the flattened
    set. Neither set depends on the segment weights, so ``t`` only picks
    the flattened view (and is range-checked).
    """
    _check_alpha(alpha)
    flat = flatten(m, t)
    two_layer = float(scenario_vars(m, alpha).max())
    live = m.alpha.reshape(-1) > 0
    mu, sigma = flat.mu[live], flat.sigma[live]
    ones = np.ones((len(mu), 1))
    single = -_batch_quantile(ones, mu[:, None], sigma[:, None], 1.0 - alpha)
    return two_layer, float(single.max())
