"""Empirical secrecy-outage estimators, the MGF bound chain, entropy-based
volume and the greedy threshold search.

``Pr(L >= lam)`` (the complement of the outage probability) is written
``sop`` throughout. The "volume" of a random variable is ``exp`` of its
differential entropy; the volume of a deterministic scalar is the scalar.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_samples, check_scalar, check_weights
from .exceptions import DomainError, MGFOverflowError, UndefinedBoundError

HOLDS_ATOL = 1e-9
_EXP_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted sample set of secrecy-rate values."""

    samples: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        s = check_samples(self.samples)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "weights", check_weights(self.weights, s.size))

    @property
    def probs(self):
        if self.weights is None:
            return np.full(self.samples.size, 1.0 / self.samples.size)
        return self.weights

    @property
    def n_effective(self):
        return 1.0 / float(np.sum(self.probs**2))

    def mean(self):
        return float(np.dot(self.probs, self.samples))


def as_distribution(dist, weights=None):
    if isinstance(dist, EmpiricalDistribution):
        return dist
    return EmpiricalDistribution(np.asarray(dist, dtype=float), weights)


@dataclass(frozen=True)
class ThresholdSet:
    thresholds: np.ndarray

    def __post_init__(self):
        t = check_samples(self.thresholds, "thresholds")
        if np.any(np.diff(t) <= 0):
            raise DomainError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    def __len__(self):
        return self.thresholds.size


@dataclass(frozen=True)
class VolumeEstimate:
    entropy: float
    volume: float
    estimator: str
    std_error: float = float("nan")


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    holds: bool
    slack: float

    @classmethod
    def compare(cls, lhs, rhs, tol=HOLDS_ATOL):
        lhs, rhs = float(lhs), float(rhs)
        return cls(lhs, rhs, bool(lhs <= rhs + tol), rhs - lhs)


# -- probabilities and moments ------------------------------------------------

def empirical_sop(dist, lam):
    """Weighted fraction of samples with value ``>= lam``. Vectorised in ``lam``."""
    d = as_distribution(dist)
    lam_arr = np.asarray(lam, dtype=float)
    order = np.argsort(d.samples, kind="stable")
    xs = d.samples[order]
    n = xs.size
    if d.weights is None:
        tail = (n - np.arange(n + 1)) / n  # exact counts
    else:
        # tail mass from position i onwards
        tail = np.concatenate([np.cumsum(d.probs[order][::-1])[::-1], [0.0]])
    idx = np.searchsorted(xs, lam_arr, side="left")
    out = np.clip(tail[idx], 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def traditional_sop(snr_b, snr_e, r_s):
    """Fraction of draws with ``snr_b / snr_e < 2**r_s``."""
    b = np.asarray(snr_b, dtype=float)
    e = np.asarray(snr_e, dtype=float)
    if b.shape != e.shape or b.ndim != 1:
        raise DomainError("snr_b and snr_e must be 1-D and equal length")
    if np.any(b <= 0) or np.any(e <= 0):
        raise DomainError("SNR samples must be positive")
    return float(np.mean(b / e < 2.0 ** float(r_s)))


def mgf(dist, t):
    """Weighted mean of ``exp(t * lam)``."""
    d = as_distribution(dist)
    t = check_scalar(t, "t")
    expo = t * d.samples
    peak = float(np.max(expo))
    if peak > _EXP_MAX:
        raise MGFOverflowError(
            f"exp(t*lam) overflows: t={t}, max t*lam={peak:.1f} > {_EXP_MAX:.1f}"
        )
    return float(np.dot(d.probs, np.exp(expo)))


def mgf_mean_bound(dist, t):
    """``E[L] <= (E[exp(tL)] - 1) / t`` for ``t > 0``.

    The bound follows from ``exp(y) >= 1 + y``; the difference behaves like
    ``t * E[L^2] / 2`` as ``t -> 0``.
    """
    t = check_scalar(t, "t", lower=0.0, lower_open=True)
    d = as_distribution(dist)
    return BoundReport.compare(d.mean(), (mgf(d, t) - 1.0) / t)


def chernoff_relation(dist, t, lam):
    """Compare ``exp(t lam) Pr(L >= lam)`` against ``E[exp(tL)]``.

    The two sides are equal only for distributions concentrated on
    ``[lam, lam]``; the reported slack is the Chernoff gap.
    """
    t = check_scalar(t, "t", lower=0.0, lower_open=True)
    lam = float(lam)
    d = as_distribution(dist)
    rhs = mgf(d, t)
    p = empirical_sop(d, lam)
    if p == 0.0:
        lhs = 0.0
    else:
        if t * lam > _EXP_MAX:
            raise MGFOverflowError(f"exp(t*lam) overflows at t={t}, lam={lam}")
        lhs = math.exp(t * lam) * p
    return BoundReport.compare(lhs, rhs, HOLDS_ATOL + 8 * np.finfo(float).eps * abs(rhs))


# -- entropy volume -----------------------------------------------------------

def _sorted_with_mass(d):
    order = np.argsort(d.samples, kind="stable")
    x = d.samples[order]
    w = d.probs[order]
    return x, w


def _merged_atoms(d):
    x, w = _sorted_with_mass(d)
    vals, first = np.unique(x, return_index=True)
    return vals, np.add.reduceat(w, first)


def _spacing_entropy(d, m=None):
    """m-spacing estimate on the weighted quantile function.

    Equal values are merged first, so duplicating a sample set (or pooling
    identical batches) leaves the estimate unchanged. For distinct,
    unweighted samples the mass window of half-width ``m / N`` reproduces
    the classical index window ``x[i + m] - x[i - m]``.
    """
    x, p = _merged_atoms(d)
    n_eff = 1.0 / float(np.sum(p * p))
    m = math.ceil(math.sqrt(n_eff)) if m is None else m
    delta = m / n_eff
    # an atom heavier than the window collapses a spacing
    if x.size < 2 or p.max() >= delta * (1 + 1e-9):
        return -math.inf, math.nan
    mid = np.cumsum(p) - 0.5 * p
    lo = np.maximum(mid - delta, mid[0])
    hi = np.minimum(mid + delta, mid[-1])
    width = np.interp(hi, mid, x) - np.interp(lo, mid, x)
    mass = hi - lo
    with np.errstate(divide="ignore"):
        terms = np.log(width) - np.log(mass)
    h = float(np.dot(p, terms))
    if not np.isfinite(h):
        return -math.inf, math.nan
    se = math.sqrt(float(np.dot(p, (terms - h) ** 2)) / n_eff)
    return h, se


def weighted_quantile(x, w, q):
    """Quantiles of a weighted sample via the midpoint CDF."""
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    cdf = np.cumsum(ws) - 0.5 * ws
    return np.interp(q, cdf, xs)


def _histogram_entropy(d):
    x, w = d.samples, d.probs
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return -math.inf, math.nan
    q25, q75 = weighted_quantile(x, w, [0.25, 0.75])
    n_eff = d.n_effective
    h = 2.0 * (q75 - q25) * n_eff ** (-1.0 / 3.0)
    if h <= 0:
        h = (hi - lo) / (math.ceil(math.log2(n_eff)) + 1)
    bins = int(min(max(math.ceil((hi - lo) / h), 1), 1_000_000))
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi), weights=w)
    widths = np.diff(edges)
    nz = counts > 0
    p = counts[nz]
    terms = -np.log(p / widths[nz])
    ent = float(np.dot(p, terms))
    # per-sample log-density spread as a rough standard error
    dens = np.log(counts / widths, where=nz, out=np.full(counts.shape, 0.0))
    per_sample = -dens[np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)]
    se = math.sqrt(float(np.dot(w, (per_sample - ent) ** 2)) / n_eff)
    return ent, se


def volume_of(dist, estimator="spacing"):
    """Entropy-based volume ``exp(H)`` of a sample.

    ``spacing`` is the m-spacing estimator with ``m = ceil(sqrt(N))`` and
    boundary-corrected masses; ``histogram`` uses Freedman-Diaconis bins.
    Ties wide enough to collapse an m-spacing (atoms) give ``H = -inf`` and
    volume 0.
    """
    d = as_distribution(dist)
    if estimator == "spacing":
        if d.samples.size < 32:
            raise DomainError("spacing estimator needs at least 32 samples")
        h, se = _spacing_entropy(d)
    elif estimator == "histogram":
        h, se = _histogram_entropy(d)
    else:
        raise DomainError(f"unknown estimator {estimator!r}")
    vol = 0.0 if h == -math.inf else math.exp(h)
    return VolumeEstimate(h, vol, estimator, se)


def _volume_se(v: VolumeEstimate):
    # delta method: sd(exp H) ~ exp(H) sd(H)
    return 0.0 if v.volume == 0 or not np.isfinite(v.std_error) else v.volume * v.std_error


@dataclass(frozen=True)
class MixtureVolumeReport:
    """``pooled_volume >= mean_batch_volume`` up to ``n_se`` standard errors."""

    pooled_volume: float
    mean_batch_volume: float
    std_error: float
    holds: bool

    @property
    def slack(self):
        return self.pooled_volume - self.mean_batch_volume


def vitale_check(batches, estimator="spacing", n_se=3.0):
    """Volume of the equal-weight mixture of ``batches`` versus the mean of
    the per-batch volumes."""
    batches = [check_samples(b, "batch") for b in batches]
    if len(batches) < 2:
        raise DomainError("need at least 2 batches")
    if estimator == "spacing" and min(b.size for b in batches) < 32:
        raise DomainError("batch too small for the spacing estimator")
    k = len(batches)
    weights = np.concatenate([np.full(b.size, 1.0 / (b.size * k)) for b in batches])
    weights /= weights.sum()
    pooled = volume_of(EmpiricalDistribution(np.concatenate(batches), weights), estimator)
    parts = [volume_of(b, estimator) for b in batches]
    mean_part = float(np.mean([p.volume for p in parts]))
    se = math.hypot(_volume_se(pooled), math.sqrt(sum(_volume_se(p) ** 2 for p in parts)) / k)
    holds = mean_part - pooled.volume <= n_se * se + HOLDS_ATOL
    return MixtureVolumeReport(pooled.volume, mean_part, se, bool(holds))


# -- dual objectives ------------------------------------------------------------

def product_objective(dist, thresholds, t):
    """``sum over lam in Delta of exp(t lam) Pr(L >= lam)``."""
    t = check_scalar(t, "t", lower=0.0, lower_open=True)
    lam = check_samples(thresholds, "thresholds")
    if np.max(t * lam) > _EXP_MAX:
        raise MGFOverflowError("exp(t*lam) overflows on the threshold set")
    return float(np.sum(np.exp(t * lam) * empirical_sop(dist, lam)))


def dual_objective(dist, thresholds, t):
    """Product form, integral form and their comparison.

    Returns ``(product_form, sum_form, report)`` where the report puts the
    largest single product term on the left and the sum of the trapezoid
    integrals of ``exp(t lam)`` and ``Pr(L >= lam)`` over the span of
    ``thresholds`` on the right.
    """
    delta = thresholds if isinstance(thresholds, ThresholdSet) else ThresholdSet(thresholds)
    lam = delta.thresholds
    if lam.size < 2:
        raise DomainError("integral form needs at least two thresholds")
    product_form = product_objective(dist, lam, t)
    terms = np.exp(t * lam) * empirical_sop(dist, lam)
    sum_form = float(np.trapezoid(np.exp(t * lam), lam) + np.trapezoid(empirical_sop(dist, lam), lam))
    return product_form, sum_form, BoundReport.compare(np.max(terms), sum_form)


# -- concentration bounds -------------------------------------------------------

def sop_convex_bound(rho, p):
    """``exp(-rho^2) / p``."""
    rho = check_scalar(rho, "rho")
    p = check_scalar(p, "p", lower=0.0, upper=1.0, lower_open=True)
    return math.exp(-rho * rho) / p


def talagrand_bound(dist, rho):
    """``1 - exp(-rho^2) / Pr(L >= 0)`` clamped to ``[0, 1]``."""
    rho = check_scalar(rho, "rho", lower=0.0)
    p = empirical_sop(dist, 0.0)
    if p == 0.0:
        raise UndefinedBoundError("Pr(L >= 0) is zero; bound undefined")
    return float(np.clip(1.0 - math.exp(-rho * rho) / p, 0.0, 1.0))


# -- greedy threshold search -------------------------------------------------------

OBJECTIVES = ("expected-volume", "sop-volume-proxy")


def candidate_grid(dist, grid_size=64):
    """Distinct sample quantiles at ``grid_size`` evenly spaced levels."""
    d = as_distribution(dist)
    levels = np.linspace(0.0, 1.0, grid_size)
    if d.weights is None:
        q = np.quantile(d.samples, levels)
    else:
        q = weighted_quantile(d.samples, d.weights, levels)
    return np.unique(q)


def indicator_volume(p):
    """``exp`` of the Bernoulli entropy (nats) of the event ``L >= lam``."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(p < 1, (1 - p) * np.log1p(-p), 0.0)
    return np.exp(h)


def make_objective(dist, grid, objective, t=1.0):
    """Return a function of sorted grid-index tuples."""
    p = empirical_sop(dist, grid)
    if objective == "expected-volume":
        if np.max(t * grid) > _EXP_MAX:
            raise MGFOverflowError("exp(t*lam) overflows on the candidate grid")
        terms = np.exp(t * grid) * p
        return lambda idx: float(np.sum(terms[list(idx)]))
    if objective == "sop-volume-proxy":
        vols = indicator_volume(p)
        return lambda idx: float(np.sum(vols[list(idx)]))
    raise DomainError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


@dataclass
class SearchResult:
    thresholds: ThresholdSet
    value: float
    n_iter: int
    n_evaluations: int
    history: list = field(default_factory=list)


def _near(v, ref, rtol):
    return v >= ref - rtol * abs(ref)


def _greedy(fun, n_grid, n, max_iter, rtol=1e-12):
    current = tuple(range(n))
    value = fun(current)
    n_eval = 1
    history = [(0, n_eval, value, current)]
    it = 0
    while it < max_iter:
        members = set(current)
        scored = []
        for j in range(n):
            for c in range(n_grid):
                if c in members:
                    continue
                cand = tuple(sorted(current[:j] + (c,) + current[j + 1:]))
                scored.append((fun(cand), cand))
                n_eval += 1
        if not scored:
            break
        top = max(v for v, _ in scored)
        if not top > value + rtol * abs(value):
            break
        # values within rtol of the best count as ties; take the smallest set
        value, current = min(((v, c) for v, c in scored if _near(v, top, rtol)), key=lambda vc: vc[1])
        it += 1
        history.append((it, n_eval, value, current))
    return current, value, it, n_eval, history


def greedy_search(dist, n, objective="sop-volume-proxy", grid_size=64, t=1.0, max_iter=100):
    """Greedy coordinate ascent over a quantile grid.

    Starts from the ``n`` lowest grid points; each iteration applies the
    single-threshold replacement with the largest strict improvement (ties go
    to the lexicographically smallest set).
    """
    n = check_positive_int(n, "n")
    grid = candidate_grid(dist, grid_size)
    if n > grid.size:
        raise DomainError(f"n={n} exceeds the {grid.size} distinct grid points")
    fun = make_objective(dist, grid, objective, t)
    idx, value, it, n_eval, history = _greedy(fun, grid.size, n, max_iter)
    return SearchResult(ThresholdSet(grid[list(idx)]), value, it, n_eval, history)


def greedy_threshold_search(dist, n, objective="sop-volume-proxy", grid_size=64, t=1.0, max_iter=100):
    return greedy_search(dist, n, objective, grid_size, t, max_iter).thresholds


def exhaustive_search(dist, n, objective="sop-volume-proxy", grid_size=64, t=1.0):
    """Brute-force argmax over all ``C(grid, n)`` subsets (first maximiser wins)."""
    grid = candidate_grid(dist, grid_size)
    fun = make_objective(dist, grid, objective, t)
    combos = list(itertools.combinations(range(grid.size), n))
    if not combos:
        raise DomainError(f"n={n} exceeds the {grid.size} distinct grid points")
    vals = np.array([fun(c) for c in combos])
    top = vals.max()
    first = int(np.flatnonzero(vals >= top - 1e-12 * abs(top))[0])
    return ThresholdSet(grid[list(combos[first])]), float(vals[first])


def secrecy_throughput(dist, thresholds):
    """Mean of ``lam * Pr(L >= lam)`` over the threshold set."""
    lam = np.asarray(thresholds.thresholds if isinstance(thresholds, ThresholdSet) else thresholds)
    return float(np.mean(lam * empirical_sop(dist, lam)))


# -- estimator wrappers -----------------------------------------------------------

class EntropyVolumeEstimator(BaseEstimator):
    """Fit-style wrapper around :func:`volume_of`.

    Attributes set by :meth:`fit`: ``entropy_``, ``volume_``, ``std_error_``.
    """

    def __init__(self, estimator="spacing"):
        self.estimator = estimator

    def fit(self, X, y=None, sample_weight=None):
        est = volume_of(EmpiricalDistribution(np.ravel(X), sample_weight), self.estimator)
        self.entropy_ = est.entropy
        self.volume_ = est.volume
        self.std_error_ = est.std_error
        return self


class GreedyThresholdSearch(TransformerMixin, BaseEstimator):
    """Greedy threshold selection; :meth:`transform` maps samples to the
    index of the threshold band they fall in (0 = below the first)."""

    def __init__(self, n_thresholds=3, objective="sop-volume-proxy", grid_size=64, t=1.0, max_iter=100):
        self.n_thresholds = n_thresholds
        self.objective = objective
        self.grid_size = grid_size
        self.t = t
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        dist = EmpiricalDistribution(np.ravel(X), sample_weight)
        res = greedy_search(dist, self.n_thresholds, self.objective, self.grid_size, self.t, self.max_iter)
        self.thresholds_ = res.thresholds.thresholds
        self.objective_value_ = res.value
        self.n_iter_ = res.n_iter
        self.n_evaluations_ = res.n_evaluations
        self.history_ = res.history
        return self

    def transform(self, X):
        check_is_fitted(self, "thresholds_")
        x = np.asarray(X, dtype=float)
        return np.searchsorted(self.thresholds_, x, side="right").reshape(x.shape[0], -1)
