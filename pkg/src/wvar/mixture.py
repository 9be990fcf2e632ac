"""Two-layer Gaussian mixture market model.

Each scenario (market factor) ``j`` is itself a Gaussian mixture with
inner weights ``alpha[j]``; segment ``t`` mixes the scenarios with its own
weights ``beta[t]``. The inner Gaussians are shared by all segments.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfc

from .series import ReturnSeries

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SIMPLEX_TOL = 1e-12


class ModelError(ValueError):
    pass


def norm_cdf(z):
    """Standard normal CDF through erfc (keeps the lower tail accurate)."""
    return 0.5 * erfc(-np.asarray(z, dtype=np.float64) / _SQRT2)


def norm_logpdf(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI


def _check_simplex(w, what):
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ModelError(f"{what} must be finite and non-negative")
    total = w.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > _SIMPLEX_TOL):
        raise ModelError(f"{what} must sum to 1 (got {total})")
    return w


def _check_gaussians(mu, sigma):
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != sigma.shape:
        raise ModelError("mu and sigma shapes differ")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise ModelError("mu and sigma must be finite")
    if np.any(sigma <= 0):
        raise ModelError("sigma must be positive")
    return mu, sigma


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianComponent:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError("sigma must be positive")


class _GaussianMixtureMixin:
    """pdf/cdf for anything exposing ``weights``, ``mu`` and ``sigma`` arrays."""

    weights: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)[..., None]
        return np.sum(self.weights * np.exp(norm_logpdf(x, self.mu, self.sigma)), axis=-1)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)[..., None]
        return np.sum(self.weights * norm_cdf((x - self.mu) / self.sigma), axis=-1)

    @property
    def gaussians(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(m), float(s)) for m, s in zip(self.mu, self.sigma)]

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.mu))

    @property
    def variance(self) -> float:
        second = np.dot(self.weights, self.sigma ** 2 + self.mu ** 2)
        return float(second - self.mean ** 2)


@dataclass(frozen=True, eq=False)
class ScenarioComponent(_GaussianMixtureMixin):
    """One market scenario: a K1-component Gaussian mixture."""

    weights: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        w = _check_simplex(self.weights, "inner weights")
        mu, sigma = _check_gaussians(self.mu, self.sigma)
        if w.ndim != 1 or w.shape != mu.shape or len(w) < 1:
            raise ModelError("inner weights, mu, sigma must be equal-length 1-D arrays")
        for name, arr in (("weights", w), ("mu", mu), ("sigma", sigma)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def normal(cls, mu: float, sigma: float) -> "ScenarioComponent":
        return cls(np.ones(1), np.array([mu]), np.array([sigma]))


@dataclass(frozen=True, eq=False)
class FlattenedMixture(_GaussianMixtureMixin):
    """Single-layer view of one segment: weights ``beta[t, j] * alpha[j, i]``."""

    weights: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        w = _check_simplex(self.weights, "flattened weights")
        mu, sigma = _check_gaussians(self.mu, self.sigma)
        for name, arr in (("weights", w), ("mu", mu), ("sigma", sigma)):
            object.__setattr__(self, name, _frozen(arr))


def scenario_pdf(s: ScenarioComponent, x):
    return s.pdf(x)


def scenario_cdf(s: ScenarioComponent, x):
    return s.cdf(x)


@dataclass(frozen=True, eq=False)
class TwoLayerMixture:
    """K2 scenarios of K1 Gaussians each, with per-segment scenario weights.

    Arrays: ``alpha``, ``mu``, ``sigma`` are (K2, K1); ``segment_weights``
    is (N_seg, K2); ``segment_lengths`` is (N_seg,).
    """

    alpha: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    segment_weights: np.ndarray
    segment_lengths: np.ndarray

    def __post_init__(self):
        alpha = _check_simplex(np.atleast_2d(self.alpha), "inner weights")
        mu, sigma = _check_gaussians(np.atleast_2d(self.mu), np.atleast_2d(self.sigma))
        beta = _check_simplex(np.atleast_2d(self.segment_weights), "segment weights")
        lengths = np.asarray(self.segment_lengths, dtype=np.int64).reshape(-1)
        if alpha.shape != mu.shape:
            raise ModelError("alpha, mu, sigma must share shape (K2, K1)")
        if beta.shape[1] != alpha.shape[0]:
            raise ModelError("segment_weights must have K2 columns")
        if len(lengths) != beta.shape[0]:
            raise ModelError("one segment length per segment_weights row")
        if np.any(lengths < 0):
            raise ModelError("segment lengths must be non-negative")
        for name, arr in (("alpha", alpha), ("mu", mu), ("sigma", sigma), ("segment_weights", beta)):
            object.__setattr__(self, name, _frozen(arr))
        lengths.setflags(write=False)
        object.__setattr__(self, "segment_lengths", lengths)

    @property
    def k2(self) -> int:
        return self.alpha.shape[0]

    @property
    def k1(self) -> int:
        return self.alpha.shape[1]

    @property
    def n_segments(self) -> int:
        return self.segment_weights.shape[0]

    @property
    def n_obs(self) -> int:
        return int(self.segment_lengths.sum())

    @property
    def scenarios(self) -> list[ScenarioComponent]:
        return [ScenarioComponent(self.alpha[j], self.mu[j], self.sigma[j]) for j in range(self.k2)]

    @classmethod
    def from_scenarios(cls, scenarios, segment_weights, segment_lengths) -> "TwoLayerMixture":
        k1 = {len(s.weights) for s in scenarios}
        if len(k1) != 1:
            raise ModelError("all scenarios must have the same number of inner components")
        return cls(np.stack([s.weights for s in scenarios]),
                   np.stack([s.mu for s in scenarios]),
                   np.stack([s.sigma for s in scenarios]),
                   segment_weights, segment_lengths)

    def _segment(self, t: int) -> int:
        if not 0 <= t < self.n_segments:
            raise ModelError(f"segment index {t} out of range [0, {self.n_segments})")
        return t

    def pooled_weights(self) -> np.ndarray:
        """Scenario weights averaged over segments, weighted by length."""
        n = self.n_obs
        if n == 0:
            return self.segment_weights.mean(axis=0)
        return (self.segment_lengths / n) @ self.segment_weights

    def canonicalize(self) -> "TwoLayerMixture":
        """Sort inner components by sigma and scenarios by mixture variance.

        Remaining ties fall back to mu, then mean, so the order is a pure
        function of the parameters.
        """
        inner = np.stack([np.lexsort((self.mu[j], self.sigma[j])) for j in range(self.k2)])
        rows = np.arange(self.k2)[:, None]
        alpha, mu, sigma = self.alpha[rows, inner], self.mu[rows, inner], self.sigma[rows, inner]
        means = np.sum(alpha * mu, axis=1)
        variances = np.sum(alpha * (sigma ** 2 + mu ** 2), axis=1) - means ** 2
        order = np.lexsort((means, variances))
        return TwoLayerMixture(alpha[order], mu[order], sigma[order],
                               self.segment_weights[:, order], self.segment_lengths)

    def permuted(self, scenario_order, inner_order=None) -> "TwoLayerMixture":
        scenario_order = np.asarray(scenario_order)
        alpha, mu, sigma = self.alpha, self.mu, self.sigma
        if inner_order is not None:
            inner = np.asarray(inner_order)
            if inner.ndim == 1:
                inner = np.broadcast_to(inner, alpha.shape)
            rows = np.arange(self.k2)[:, None]
            alpha, mu, sigma = alpha[rows, inner], mu[rows, inner], sigma[rows, inner]
        return TwoLayerMixture(alpha[scenario_order], mu[scenario_order], sigma[scenario_order],
                               self.segment_weights[:, scenario_order], self.segment_lengths)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "k2": self.k2,
            "k1": self.k1,
            "scenarios": [
                {"weights": self.alpha[j].tolist(), "mu": self.mu[j].tolist(),
                 "sigma": self.sigma[j].tolist()}
                for j in range(self.k2)
            ],
            "segment_weights": self.segment_weights.tolist(),
            "segment_lengths": [int(v) for v in self.segment_lengths],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TwoLayerMixture":
        try:
            scen = doc["scenarios"]
            model = cls(np.array([s["weights"] for s in scen], dtype=np.float64),
                        np.array([s["mu"] for s in scen], dtype=np.float64),
                        np.array([s["sigma"] for s in scen], dtype=np.float64),
                        np.array(doc["segment_weights"], dtype=np.float64),
                        np.array(doc["segment_lengths"], dtype=np.int64))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"invalid model document: {exc}") from exc
        if model.k2 != doc.get("k2", model.k2) or model.k1 != doc.get("k1", model.k1):
            raise ModelError("k2/k1 do not match the scenario arrays")
        return model

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "TwoLayerMixture":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid model JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "TwoLayerMixture":
        path = Path(path)
        if not path.is_file():
            raise ModelError(f"no such model file: {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))


def segment_pdf(m: TwoLayerMixture, t: int, x):
    t = m._segment(t)
    per_scenario = np.stack([s.pdf(x) for s in m.scenarios], axis=-1)
    return per_scenario @ m.segment_weights[t]


def segment_cdf(m: TwoLayerMixture, t: int, x):
    t = m._segment(t)
    per_scenario = np.stack([s.cdf(x) for s in m.scenarios], axis=-1)
    return per_scenario @ m.segment_weights[t]


def flatten(m: TwoLayerMixture, t: int) -> FlattenedMixture:
    t = m._segment(t)
    weights = (m.segment_weights[t][:, None] * m.alpha).reshape(-1)
    return FlattenedMixture(weights, m.mu.reshape(-1), m.sigma.reshape(-1))


@dataclass(frozen=True)
class LabelTrace:
    """Latent draw labels: segment, scenario and inner component per value."""

    segment: np.ndarray
    scenario: np.ndarray
    component: np.ndarray


def sample(m: TwoLayerMixture, seed: int, per_segment_counts=None, return_labels: bool = False):
    """Draw returns segment by segment from the generative model.

    ``per_segment_counts`` defaults to the model's segment lengths. Returns
    the values, plus a :class:`LabelTrace` when ``return_labels`` is set.
    """
    counts = m.segment_lengths if per_segment_counts is None else per_segment_counts
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    if len(counts) != m.n_segments:
        raise ModelError(f"need {m.n_segments} segment counts, got {len(counts)}")
    if np.any(counts < 0):
        raise ModelError("segment counts must be non-negative")
    rng = np.random.default_rng(seed)
    seg = np.repeat(np.arange(m.n_segments), counts)
    # inverse-CDF draws on the cumulative weights keep this vectorized
    u = rng.random(len(seg))
    cum_beta = np.cumsum(m.segment_weights, axis=1)[seg]
    scen = np.minimum((u[:, None] > cum_beta).sum(axis=1), m.k2 - 1)
    u = rng.random(len(seg))
    cum_alpha = np.cumsum(m.alpha, axis=1)[scen]
    comp = np.minimum((u[:, None] > cum_alpha).sum(axis=1), m.k1 - 1)
    values = m.mu[scen, comp] + m.sigma[scen, comp] * rng.standard_normal(len(seg))
    values = ReturnSeries.from_values(values)
    if return_labels:
        return values, LabelTrace(seg, scen, comp)
    return values
