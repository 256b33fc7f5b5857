"""Element-wise parameter projection operator and random-projection experiments.

The soft boundary function is

    f(theta) = (theta - theta_min - eta)(theta - theta_max + eta) / ((theta_max - theta_min - eta) eta)

which is 0 on the inner band edges ``theta_min + eta`` and ``theta_max - eta``,
1 on the hard bounds and negative in between.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_rng, check_positive_int, check_scalar
from .exceptions import DomainError, InvalidDimensionError


@dataclass(frozen=True)
class ProjectionBounds:
    """Box ``[theta_min, theta_max]`` with tolerance ``eta``; scalars or arrays."""

    theta_min: object = -1.0
    theta_max: object = 1.0
    eta: object = 0.1

    def __post_init__(self):
        lo, hi, eta = (np.asarray(v, dtype=float) for v in (self.theta_min, self.theta_max, self.eta))
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(np.isfinite(eta))):
            raise DomainError("bounds must be finite")
        if np.any(lo >= 0) or np.any(hi <= 0):
            raise DomainError("need theta_min < 0 < theta_max")
        if np.any(eta <= 0):
            raise DomainError("eta must be > 0")
        if np.any(eta >= (hi - lo) / 2) or np.any(eta >= hi) or np.any(eta >= -lo):
            raise DomainError("eta must be below (theta_max - theta_min)/2, theta_max and |theta_min|")

    def arrays(self):
        return tuple(np.asarray(v, dtype=float) for v in (self.theta_min, self.theta_max, self.eta))


def _denominator(lo, hi, eta):
    return (hi - lo - eta) * eta


def f_margin(theta, bounds: ProjectionBounds):
    lo, hi, eta = bounds.arrays()
    theta = np.asarray(theta, dtype=float)
    out = (theta - lo - eta) * (theta - hi + eta) / _denominator(lo, hi, eta)
    return float(out) if out.ndim == 0 else out


def f_margin_derivative(theta, bounds: ProjectionBounds):
    lo, hi, eta = bounds.arrays()
    theta = np.asarray(theta, dtype=float)
    out = (2.0 * theta - lo - hi) / _denominator(lo, hi, eta)
    return float(out) if out.ndim == 0 else out


def proj(theta, big_theta, bounds: ProjectionBounds):
    """``Theta (1 - f(theta))`` where ``f > 0`` and ``Theta f'(theta) > 0``, else ``Theta``."""
    theta = np.asarray(theta, dtype=float)
    big = np.asarray(big_theta, dtype=float)
    f = np.asarray(f_margin(theta, bounds))
    outward = big * np.asarray(f_margin_derivative(theta, bounds)) > 0
    out = np.where((f > 0) & outward, big - big * f, big)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProjectedPair:
    theta: np.ndarray
    big_theta: np.ndarray

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.theta, dtype=float))
        b = np.atleast_2d(np.asarray(self.big_theta, dtype=float))
        if t.shape != b.shape:
            raise InvalidDimensionError(f"theta {t.shape} and big_theta {b.shape} differ")
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "big_theta", b)


def proj_matrix(pair: ProjectedPair, bounds: ProjectionBounds):
    for v in bounds.arrays():
        if v.ndim and v.shape != pair.theta.shape:
            raise InvalidDimensionError("matrix bounds must match the parameter shape")
    return np.asarray(proj(pair.theta, pair.big_theta, bounds))


def trace_inequality(theta, theta_star, big_theta, bounds):
    """``tr((theta - theta*)^T (Proj - Theta))``; non-positive for admissible inputs."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    diff = theta - np.atleast_2d(theta_star)
    p = proj_matrix(ProjectedPair(theta, big_theta), bounds)
    return float(np.trace(diff.T @ (p - np.atleast_2d(big_theta))))


class ProjectionOperator(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` records the current estimate ``theta``;
    ``transform`` projects an update direction against it."""

    def __init__(self, theta_min=-1.0, theta_max=1.0, eta=0.1):
        self.theta_min = theta_min
        self.theta_max = theta_max
        self.eta = eta

    def fit(self, X, y=None):
        self.bounds_ = ProjectionBounds(self.theta_min, self.theta_max, self.eta)
        self.theta_ = np.atleast_2d(np.asarray(X, dtype=float))
        self.margin_ = np.asarray(f_margin(self.theta_, self.bounds_))
        return self

    def transform(self, X):
        check_is_fitted(self, "theta_")
        return proj_matrix(ProjectedPair(self.theta_, X), self.bounds_)


# -- random projections --------------------------------------------------------------

@dataclass(frozen=True)
class TailBoundReport:
    tau1: float
    tau2: float
    empirical_freq: float
    analytic_bound: float
    std_error: float
    trials: int
    holds: bool


def jl_bound(k, tau2):
    return float(np.exp(-k * tau2 * tau2 / 4.0))


def _squared_fraction(u, k, trials, rng, method, chunk=20_000):
    """Samples of ``||P u||^2`` for P the orthogonal projector onto a uniform
    random k-dimensional subspace and a unit vector ``u``."""
    n = u.size
    out = np.empty(trials)
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        if method == "rotation":
            # rotation invariance: fixed subspace, uniformly random direction
            g = rng.standard_normal((m, n))
            sq = g * g
            out[start:start + m] = sq[:, :k].sum(axis=1) / sq.sum(axis=1)
        else:
            q, _ = np.linalg.qr(rng.standard_normal((m, n, k)))
            out[start:start + m] = np.sum(np.einsum("tnk,n->tk", q, u) ** 2, axis=1)
    return out


def jl_tail_experiment(v_i, v_j, k, tau2, trials=100_000, seed=None, method="rotation"):
    """Frequency of ``L <= (1 - tau2) E[L]`` against ``exp(-k tau2^2 / 4)``.

    ``L`` is the squared distance between the projected points, with the
    projection scaled by ``sqrt(n/k)`` so that ``E[L] = ||v_i - v_j||^2``.
    ``method="qr"`` orthonormalises Gaussian matrices explicitly; the default
    draws the equivalent random direction against a fixed subspace.
    """
    diff = np.asarray(v_i, dtype=float).ravel() - np.asarray(v_j, dtype=float).ravel()
    n = diff.size
    k = check_positive_int(k, "k")
    if k >= n:
        raise InvalidDimensionError(f"need k < n, got k={k}, n={n}")
    tau2 = check_scalar(tau2, "tau2", 0.0, 1.0, lower_open=True, upper_open=True)
    trials = check_positive_int(trials, "trials")
    if method not in ("rotation", "qr"):
        raise DomainError(f"unknown method {method!r}")
    norm2 = float(diff @ diff)
    if norm2 == 0:
        raise DomainError("points must be distinct")
    frac = _squared_fraction(diff / np.sqrt(norm2), k, trials, as_rng(seed), method)
    ratio = (n / k) * frac  # L / E[L]
    p = float(np.mean(ratio <= 1.0 - tau2))
    se = float(np.sqrt(max(p * (1 - p), 1.0 / trials) / trials))
    bound = jl_bound(k, tau2)
    return TailBoundReport(k * norm2, tau2, p, bound, se, trials, bool(p <= bound + 3 * se))


def gaussian_width(points=None, n_draws=10_000, seed=None, support=None, dim=None):
    """Monte Carlo ``E sup_{x in T} <x, g>`` for standard Gaussian ``g``.

    ``T`` is either a finite point set (rows of ``points``) or given through
    its support function ``support(g) -> sup_x <x, g>`` (vectorised over rows
    of ``g``) together with ``dim``.
    """
    rng = as_rng(seed)
    if support is not None:
        d = check_positive_int(dim, "dim")
        return float(np.mean(support(rng.standard_normal((n_draws, d)))))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1 and not np.any(pts):
        return 0.0
    total = 0.0
    for start in range(0, n_draws, 2000):
        m = min(2000, n_draws - start)
        g = rng.standard_normal((m, pts.shape[1]))
        total += np.max(g @ pts.T, axis=1).sum()
    return float(total / n_draws)


def diameter(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        return 0.0
    sq = np.sum(pts * pts, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T
    return float(np.sqrt(max(0.0, d2.max())))


@dataclass(frozen=True)
class DiameterReport:
    width: float
    diameter: float
    rhs: float
    projected_diameters: np.ndarray
    holds_frequency: float
    target_frequency: float

    @property
    def holds(self):
        return self.holds_frequency >= self.target_frequency


def projected_diameter_check(points, r2, trials=10_000, c0=1.0, seed=None, width_draws=10_000):
    """Check ``diam(P T) <= c0 (w(T) + sqrt(r2/r1) diam(T))`` over random
    orthogonal projections ``P`` onto r2-dimensional subspaces."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r1 = pts.shape[1]
    r2 = check_positive_int(r2, "r2")
    if r2 >= r1:
        raise InvalidDimensionError("need r2 < r1")
    trials = check_positive_int(trials, "trials")
    c0 = check_scalar(c0, "c0", 0.0)
    ss = np.random.SeedSequence(seed)
    s_width, s_proj = ss.spawn(2)
    single = pts.shape[0] < 2
    width = 0.0 if single else gaussian_width(pts, width_draws, np.random.default_rng(s_width))
    diam = diameter(pts)
    rhs = c0 * (width + np.sqrt(r2 / r1) * diam)
    rng = np.random.default_rng(s_proj)
    proj_d = np.zeros(trials)
    if not single:
        for t in range(trials):
            q, _ = np.linalg.qr(rng.standard_normal((r1, r2)))
            proj_d[t] = diameter(pts @ q)
    freq = float(np.mean(proj_d <= rhs + 1e-12))
    return DiameterReport(width, diam, float(rhs), proj_d, freq, float(1 - 2 * np.exp(-r2)))
