"""Penalized change-point detection with the Gaussian (RBF) kernel cost.

The segment cost is the within-segment scatter of the points mapped into
the kernel feature space,

    c(a, b) = (b - a) - 1/(b - a) * sum_{s,t in (a, b]} exp(-gamma (r_s - r_t)^2),

and the search minimizes ``sum of costs + penalty * n_breakpoints``
exactly by optimal partitioning with PELT-style pruning.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .series import ReturnSeries

MAX_SERIES_LENGTH = 20000
ORACLE_MAX_LENGTH = 64
DEFAULT_MIN_SEGMENT_LENGTH = 2
DEFAULT_MAX_PAIRS_SAMPLE = 1000


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise SegmentationError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class Segmentation:
    """Breakpoints are exclusive segment ends, ``0 < t_1 < ... < t_K < n``."""

    breakpoints: tuple[int, ...]
    series_length: int

    def __post_init__(self):
        bkps = tuple(int(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bkps)
        edges = (0,) + bkps + (self.series_length,)
        if self.series_length < 1:
            raise SegmentationError("series_length must be positive")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise SegmentationError(f"breakpoints {bkps} not strictly inside (0, {self.series_length})")

    @property
    def bounds(self) -> list[tuple[int, int]]:
        edges = (0,) + self.breakpoints + (self.series_length,)
        return list(zip(edges, edges[1:]))

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.bounds], dtype=np.int64)

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) + 1

    def labels(self) -> np.ndarray:
        """Segment index of every observation."""
        return np.repeat(np.arange(self.n_segments), self.lengths)

    @classmethod
    def single(cls, n: int) -> "Segmentation":
        return cls((), n)

    @classmethod
    def from_lengths(cls, lengths) -> "Segmentation":
        edges = np.cumsum(lengths)
        return cls(tuple(int(e) for e in edges[:-1]), int(edges[-1]))


@dataclass(frozen=True)
class SegmentationResult:
    segmentation: Segmentation
    total_cost: float
    penalized_objective: float
    penalty_weight: float


def _values(r) -> np.ndarray:
    if isinstance(r, ReturnSeries):
        return r.returns
    return np.asarray(r, dtype=np.float64)


def median_heuristic_bandwidth(r, max_pairs_sample: int = DEFAULT_MAX_PAIRS_SAMPLE,
                               seed: int = 0) -> KernelSpec:
    """gamma = 1 / median squared pairwise distance (1.0 when that median is 0).

    Series longer than ``max_pairs_sample`` are subsampled without
    replacement using ``seed``.
    """
    x = _values(r)
    if len(x) < 2:
        raise SegmentationError("need at least 2 points for the median heuristic")
    if len(x) > max_pairs_sample:
        rng = np.random.default_rng(seed)
        x = rng.choice(x, size=max_pairs_sample, replace=False)
    iu = np.triu_indices(len(x), k=1)
    d2 = (x[:, None] - x[None, :])[iu] ** 2
    med = float(np.median(d2))
    return KernelSpec(1.0 / med if med > 0 else 1.0)


def kernel_cost(r, a: int, b: int, kernel: KernelSpec) -> float:
    """Cost of the segment ``r[a:b]`` by the direct double sum."""
    x = _values(r)
    if not 0 <= a < b <= len(x):
        raise SegmentationError(f"empty or out-of-range segment ({a}, {b}]")
    seg = x[a:b]
    gram = np.exp(-kernel.gamma * (seg[:, None] - seg[None, :]) ** 2)
    m = b - a
    return float(m - gram.sum() / m)


def _tie_tol(value: float) -> float:
    return 1e-12 * max(1.0, abs(value))


def _check_inputs(x: np.ndarray, penalty_weight: float, min_segment_length: int):
    if not penalty_weight > 0:
        raise SegmentationError("penalty_weight must be positive")
    if min_segment_length < 1:
        raise SegmentationError("min_segment_length must be >= 1")
    if len(x) < 2 * min_segment_length:
        raise SegmentationError(
            f"series too short: n={len(x)} < 2 * min_segment_length={2 * min_segment_length}")


def _result(x, bkps, penalty_weight, kernel) -> SegmentationResult:
    seg = Segmentation(tuple(bkps), len(x))
    total = math.fsum(kernel_cost(x, a, b, kernel) for a, b in seg.bounds)
    return SegmentationResult(seg, total, total + penalty_weight * len(bkps), penalty_weight)


def detect_changepoints(r, penalty_weight: float, kernel: KernelSpec,
                        min_segment_length: int = DEFAULT_MIN_SEGMENT_LENGTH) -> SegmentationResult:
    """Exact minimizer of the linearly penalized kernel cost.

    Block kernel sums are carried forward per live candidate, so each
    step costs one kernel column against the oldest live candidate: O(n^2)
    time worst case and O(n) memory. Ties go to fewer breakpoints, then
    the lexicographically smallest breakpoint list.
    """
    x = _values(r)
    n = len(x)
    _check_inputs(x, penalty_weight, min_segment_length)
    if n > MAX_SERIES_LENGTH:
        raise SegmentationError(f"series longer than {MAX_SERIES_LENGTH}")
    m = min_segment_length
    beta = float(penalty_weight)
    gamma = kernel.gamma

    # F[t]: best penalized cost of x[:t], with F[0] = -beta so that every
    # segment pays beta and the first payment cancels.
    F = np.full(n + 1, np.inf)
    F[0] = -beta
    count = np.zeros(n + 1, dtype=np.int64)
    prev = np.full(n + 1, -1, dtype=np.int64)

    cand = np.array([0], dtype=np.int64)     # live start points tau
    block = np.zeros(1)                       # sum of kernel over x[tau:t]^2
    expires = np.array([np.iinfo(np.int64).max], dtype=np.int64)

    def path(t):
        out = []
        while t > 0:
            out.append(int(t))
            t = int(prev[t])
        return out[::-1][:-1]

    for t in range(1, n + 1):
        # extend every block (tau, t-1] by the new point x[t-1]
        lo = int(cand[0])
        col = np.exp(-gamma * (x[lo:t - 1] - x[t - 1]) ** 2)
        suffix = np.concatenate([np.cumsum(col[::-1])[::-1], [0.0]])
        block += 2.0 * suffix[cand - lo] + 1.0

        length = t - cand
        cost = length - block / length
        if t >= m:
            ok = (length >= m) & np.isfinite(F[cand])
            if np.any(ok):
                vals = F[cand] + cost + beta
                vals_ok = np.where(ok, vals, np.inf)
                best = float(vals_ok.min())
                tied = np.flatnonzero(vals_ok <= best + _tie_tol(best))
                if len(tied) == 1:
                    k = int(tied[0])
                else:
                    # fewest breakpoints first, then lexicographic path
                    def key(i):
                        tau = int(cand[i])
                        return (int(count[tau]) + (tau > 0), path(tau) + ([tau] if tau > 0 else []))
                    k = min(tied, key=key)
                tau = int(cand[k])
                F[t] = float(vals[k])
                prev[t] = tau
                count[t] = count[tau] + (tau > 0)

                # tau is dominated by t for every end >= t + m once
                # F[tau] + c(tau, t) > F[t]; cost is superadditive under splits.
                dominated = (F[cand] + cost > F[t] + _tie_tol(F[t])) & (expires == np.iinfo(np.int64).max)
                expires = np.where(dominated, t + m, expires)

        keep = expires > t + 1
        cand, block, expires = cand[keep], block[keep], expires[keep]
        if np.isfinite(F[t]) and t <= n - m:
            cand = np.append(cand, t)
            block = np.append(block, 0.0)
            expires = np.append(expires, np.iinfo(np.int64).max)

    bkps = path(n)
    return _result(x, bkps, beta, kernel)


def exhaustive_segmentation_oracle(r, penalty_weight: float, kernel: KernelSpec,
                                   min_segment_length: int = DEFAULT_MIN_SEGMENT_LENGTH
                                   ) -> SegmentationResult:
    """Global minimizer by enumerating breakpoint subsets (test oracle).

    Depth-first enumeration in increasing breakpoint order; a branch is
    abandoned only once its partial objective already exceeds the best
    complete one, which is safe because every cost is non-negative.
    Costs come from :func:`kernel_cost` directly.
    """
    x = _values(r)
    n = len(x)
    _check_inputs(x, penalty_weight, min_segment_length)
    if n > ORACLE_MAX_LENGTH:
        raise SegmentationError(f"series too long for enumeration (n={n} > {ORACLE_MAX_LENGTH})")
    m = min_segment_length
    beta = float(penalty_weight)
    cost = {}
    for a, b in itertools.combinations(range(n + 1), 2):
        if b - a >= m:
            cost[a, b] = kernel_cost(x, a, b, kernel)

    best = [math.inf, 0, []]

    def better(obj, bkps):
        b_obj, b_cnt, b_bkps = best
        tol = _tie_tol(b_obj) if math.isfinite(b_obj) else 0.0
        if obj < b_obj - tol:
            return True
        if obj > b_obj + tol:
            return False
        return (len(bkps), bkps) < (b_cnt, b_bkps)

    def visit(start, partial, bkps):
        final = partial + cost[start, n]
        if better(final, bkps):
            best[:] = [final, len(bkps), list(bkps)]
        for nxt in range(start + m, n - m + 1):
            head = partial + cost[start, nxt] + beta
            if head > best[0] + _tie_tol(best[0]):
                continue
            bkps.append(nxt)
            visit(nxt, head, bkps)
            bkps.pop()

    visit(0, 0.0, [])
    return _result(x, best[2], beta, kernel)
