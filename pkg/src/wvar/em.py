"""EM estimation of the two-layer mixture on a segmented return series.

Scenario weights ``beta`` are free per segment; inner weights ``alpha``
and the Gaussians are shared across segments. The E-step works in log
space; the M-step is the closed-form maximizer of the expected
complete-data log-likelihood under the simplex constraints.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .mixture import TwoLayerMixture, norm_logpdf
from .segmentation import Segmentation
from .series import ReturnSeries

COLLAPSE_MASS = 1e-8


class EMError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    k2: int = 5
    k1: int = 3
    max_iters: int = 500
    rel_tol: float = 1e-8
    restarts: int = 10
    seed: int = 0
    variance_floor_factor: float = 1e-6

    def __post_init__(self):
        if self.k2 < 1 or self.k1 < 1:
            raise EMError(f"k2 and k1 must be >= 1 (got {self.k2}, {self.k1})")
        if self.max_iters < 1:
            raise EMError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise EMError("rel_tol must be positive")
        if self.restarts < 1:
            raise EMError("restarts must be >= 1")
        if not self.variance_floor_factor > 0:
            raise EMError("variance_floor_factor must be positive")


@dataclass(frozen=True)
class Responsibilities:
    """Posterior membership ``values[s, j, i]`` of observation s in pair (j, i)."""

    values: np.ndarray
    segment: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        n = self.values.shape[0]
        return self.values.reshape(n, -1)


@dataclass(frozen=True)
class FitResult:
    model: TwoLayerMixture
    log_likelihood: float
    iterations: int
    converged: bool
    restart_index: int
    trace: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        doc = self.model.to_dict()
        doc.update(log_likelihood=self.log_likelihood, iterations=self.iterations,
                   converged=self.converged)
        return doc


def _prepare(r, seg: Segmentation):
    x = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)
    if seg.series_length != len(x):
        raise EMError(f"segmentation covers {seg.series_length} points, series has {len(x)}")
    return x, seg.labels()


def _variance_floor(x, cfg: FitConfig) -> float:
    var = float(np.var(x))
    if not var > 0:
        raise EMError("degenerate series: zero variance")
    return cfg.variance_floor_factor * var


def _log_joint(x, labels, m: TwoLayerMixture) -> np.ndarray:
    """log(beta[t(s), j] * alpha[j, i] * phi(x_s | mu[j, i], sigma[j, i])), shape (n, K2, K1)."""
    with np.errstate(divide="ignore"):
        log_beta = np.log(m.segment_weights)[labels]
        log_alpha = np.log(m.alpha)
    return (log_beta[:, :, None] + log_alpha[None]
            + norm_logpdf(x[:, None, None], m.mu[None], m.sigma[None]))


def _normalize(log_joint):
    flat = log_joint.reshape(len(log_joint), -1)
    peak = flat.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise EMError("every component has zero weight for some observation")
    log_norm = peak[:, 0] + np.log(np.exp(flat - peak).sum(axis=1))
    resp = np.exp(log_joint - log_norm[:, None, None])
    return resp, log_norm


def _e(x, labels, m):
    resp, log_norm = _normalize(_log_joint(x, labels, m))
    return resp, float(log_norm.sum())


def e_step(r, seg: Segmentation, m: TwoLayerMixture) -> Responsibilities:
    x, labels = _prepare(r, seg)
    resp, _ = _e(x, labels, m)
    return Responsibilities(resp, labels)


def log_likelihood(r, seg: Segmentation, m: TwoLayerMixture) -> float:
    """Observed-data log-likelihood, each point scored by its segment's mixture."""
    x, labels = _prepare(r, seg)
    return _e(x, labels, m)[1]


def m_step(r, seg: Segmentation, resp: Responsibilities, cfg: FitConfig,
           rng: np.random.Generator | None = None) -> TwoLayerMixture:
    x, _ = _prepare(r, seg)
    eta = np.asarray(resp.values if isinstance(resp, Responsibilities) else resp)
    floor = _variance_floor(x, cfg)
    starts = np.concatenate([[0], np.cumsum(seg.lengths)[:-1]])

    per_segment = np.add.reduceat(eta, starts, axis=0)     # nbar[t, j, i]
    mass = per_segment.sum(axis=0)                           # sum_t nbar[t, j, i]
    safe = np.where(mass > 0, mass, 1.0)
    mu = np.einsum("sji,s->ji", eta, x) / safe
    var = np.einsum("sji,sji->ji", eta, (x[:, None, None] - mu[None]) ** 2) / safe
    var = np.maximum(var, floor)

    scenario_mass = mass.sum(axis=1, keepdims=True)
    alpha = np.divide(mass, scenario_mass, out=np.full_like(mass, 1.0 / mass.shape[1]),
                      where=scenario_mass > 0)
    seg_scen = per_segment.sum(axis=2)                       # nbar[t, j, .]
    beta = seg_scen / seg_scen.sum(axis=1, keepdims=True)

    collapsed = mass < COLLAPSE_MASS
    if np.any(collapsed):
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        for j, i in zip(*np.nonzero(collapsed)):
            mu[j, i] = x[rng.integers(len(x))]
            var[j, i] = max(float(np.var(x)), floor)
            alpha[j, i] = max(alpha[j, i], 1.0 / alpha.shape[1])
        dead = collapsed.all(axis=1)
        beta[:, dead] = np.maximum(beta[:, dead], 1.0 / beta.shape[1])

    alpha /= alpha.sum(axis=1, keepdims=True)
    beta /= beta.sum(axis=1, keepdims=True)
    return TwoLayerMixture(alpha, mu, np.sqrt(var), beta, seg.lengths)


def _kmeans_pp_centers(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, (x - x[idx]) ** 2)
    return np.array(centers)


def init_model(r, seg: Segmentation, cfg: FitConfig, restart: int = 0) -> TwoLayerMixture:
    """k-means++ seeding on the pooled returns, one assignment pass.

    Components are dealt into scenarios by a seeded shuffle; alpha and
    beta start uniform.
    """
    x, _ = _prepare(r, seg)
    k = cfg.k2 * cfg.k1
    if len(x) < k:
        raise EMError(f"{len(x)} observations cannot seed {k} components")
    floor = _variance_floor(x, cfg)
    rng = np.random.default_rng(cfg.seed + restart)
    return _init_with_rng(x, seg, cfg, rng, floor)


def _init_with_rng(x, seg, cfg, rng, floor):
    k = cfg.k2 * cfg.k1
    centers = _kmeans_pp_centers(x, k, rng)
    nearest = np.argmin((x[:, None] - centers[None]) ** 2, axis=1)
    global_std = float(np.std(x))
    mu = centers.copy()
    sigma = np.full(k, global_std)
    for c in range(k):
        members = x[nearest == c]
        if len(members):
            mu[c] = members.mean()
        if len(members) >= 2:
            sigma[c] = max(float(members.std()), np.sqrt(floor))
    order = rng.permutation(k).reshape(cfg.k2, cfg.k1)
    alpha = np.full((cfg.k2, cfg.k1), 1.0 / cfg.k1)
    beta = np.full((seg.n_segments, cfg.k2), 1.0 / cfg.k2)
    return TwoLayerMixture(alpha, mu[order], sigma[order], beta, seg.lengths)


def run_em(r, seg: Segmentation, init: TwoLayerMixture, cfg: FitConfig,
           rng: np.random.Generator | None = None, restart_index: int = 0) -> FitResult:
    """One EM run from ``init``; the model is returned as iterated (not canonicalized)."""
    x, labels = _prepare(r, seg)
    if init.n_segments != seg.n_segments:
        raise EMError("initial model and segmentation disagree on the segment count")
    if rng is None:
        rng = np.random.default_rng(cfg.seed + restart_index)
    model = init
    resp, ll = _e(x, labels, model)
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        model = m_step(x, seg, resp, cfg, rng)
        resp, new_ll = _e(x, labels, model)
        trace.append(new_ll)
        done = abs(new_ll - ll) / (abs(ll) + 1.0) < cfg.rel_tol
        ll = new_ll
        if done:
            converged = True
            break
    return FitResult(model, ll, iterations, converged, restart_index, tuple(trace))


def fit(r, seg: Segmentation, cfg: FitConfig = FitConfig()) -> FitResult:
    """Best of ``cfg.restarts`` EM runs by final log-likelihood.

    Restart ``k`` is seeded with ``cfg.seed + k``, so each run can be
    reproduced on its own.
    """
    x, _ = _prepare(r, seg)
    if len(x) < cfg.k2 * cfg.k1:
        raise EMError(f"{len(x)} observations cannot fit {cfg.k2 * cfg.k1} components")
    floor = _variance_floor(x, cfg)
    best = None
    for restart in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + restart)
        init = _init_with_rng(x, seg, cfg, rng, floor)
        result = run_em(x, seg, init, cfg, rng, restart)
        if not np.isfinite(result.log_likelihood):
            continue
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    if best is None:
        raise EMError("no restart produced a finite log-likelihood")
    return FitResult(best.model.canonicalize(), best.log_likelihood, best.iterations,
                     best.converged, best.restart_index, best.trace)


def fit_config_dict(cfg: FitConfig) -> dict:
    return asdict(cfg)
