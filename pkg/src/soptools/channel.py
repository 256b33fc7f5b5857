"""Wiretap geometry, Rayleigh fading, secrecy-rate sampling and the linear
state-space model observed by the legitimate receiver and the eavesdropper.

All SNRs are linear. Sampling functions take an explicit seed and are pure
functions of their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_rng, check_positive_int, check_square
from .exceptions import DegenerateGeometryError, DomainError, InvalidDimensionError

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class NetworkGeometry:
    """Alice/Bob positions plus Eve at ``(0, -eve_offset_d, 0)`` (meters)."""

    alice_pos: tuple = (-50.0, 0.0, 0.0)
    bob_pos: tuple = (0.0, 50.0 * SQRT3, 0.0)
    eve_offset_d: float = 150.0
    path_loss_exponent: float = 3.0

    def __post_init__(self):
        if self.eve_offset_d < 0:
            raise DegenerateGeometryError("eve_offset_d must be >= 0")
        if self.path_loss_exponent <= 0:
            raise DomainError("path_loss_exponent must be > 0")
        pts = [self.alice_pos, self.bob_pos, self.eve_pos]
        for i in range(3):
            for j in range(i + 1, 3):
                if np.linalg.norm(np.subtract(pts[i], pts[j])) <= 0:
                    raise DegenerateGeometryError("node positions must be distinct")

    @property
    def eve_pos(self):
        return (0.0, -float(self.eve_offset_d), 0.0)

    def with_offset(self, d):
        return NetworkGeometry(self.alice_pos, self.bob_pos, d, self.path_loss_exponent)


def distances(geometry: NetworkGeometry):
    """Return ``(d_ab, d_ae)`` in meters."""
    a = np.asarray(geometry.alice_pos, dtype=float)
    d_ab = float(np.linalg.norm(a - np.asarray(geometry.bob_pos, dtype=float)))
    d_ae = float(np.linalg.norm(a - np.asarray(geometry.eve_pos, dtype=float)))
    if d_ab == 0 or d_ae == 0:
        raise DegenerateGeometryError("coincident positions")
    return d_ab, d_ae


def path_gain(distance, exponent):
    """Amplitude scale ``D**(-eps/2)`` applied to small-scale fading."""
    return float(distance) ** (-float(exponent) / 2.0)


@dataclass(frozen=True)
class LinkBudget:
    transmit_power_pa: float = 1.0
    noise_var_bob: float = 1e-7
    noise_var_eve: float = 1e-7

    def __post_init__(self):
        if not self.transmit_power_pa > 0:
            raise DomainError("transmit_power_pa must be > 0")
        if not (self.noise_var_bob > 0 and self.noise_var_eve > 0):
            raise DomainError("noise variances must be > 0")

    def snrs(self, geometry: NetworkGeometry):
        """Average SNRs ``(SNR_B, SNR_E)``. An infinite noise variance gives 0."""
        d_ab, d_ae = distances(geometry)
        eps = geometry.path_loss_exponent
        snr_b = self.transmit_power_pa / (d_ab**eps * self.noise_var_bob)
        snr_e = self.transmit_power_pa / (d_ae**eps * self.noise_var_eve)
        if not (np.isfinite(snr_b) and np.isfinite(snr_e)):
            raise DomainError("derived SNRs must be finite")
        return float(snr_b), float(snr_e)


@dataclass(frozen=True)
class FadingDraw:
    h_matrix: np.ndarray
    g_matrix: np.ndarray
    entry_variance: float


def rayleigh(rng, shape, size):
    """i.i.d. CN(0, 1/size) entries: real and imaginary parts each N(0, 1/(2 size))."""
    std = np.sqrt(1.0 / (2.0 * size))
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _link_streams(rng_seed):
    # separate streams so the Bob and Eve draws do not depend on each other's size
    ss = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    return [np.random.default_rng(s) for s in ss.spawn(2)]


def sample_fading(geometry: NetworkGeometry, size, rng_seed=None, n_draws=None):
    """Draw path-loss scaled Rayleigh matrices ``H = D_AB^{-eps/2} Hhat`` and
    ``G = D_AE^{-eps/2} Ghat``.

    With ``n_draws`` the result is stacked to shape ``(n_draws, size, size)``.
    """
    size = check_positive_int(size, "size")
    shape = (size, size) if n_draws is None else (check_positive_int(n_draws, "n_draws"), size, size)
    d_ab, d_ae = distances(geometry)
    eps = geometry.path_loss_exponent
    rng_h, rng_g = _link_streams(rng_seed)
    h = path_gain(d_ab, eps) * rayleigh(rng_h, shape, size)
    g = path_gain(d_ae, eps) * rayleigh(rng_g, shape, size)
    return FadingDraw(h, g, 1.0 / size)


def secrecy_rate(snr_b, snr_e):
    """Gaussian wiretap secrecy rate ``max(0, log2((1+snr_b)/(1+snr_e)))`` in bits/use."""
    b = np.asarray(snr_b, dtype=float)
    e = np.asarray(snr_e, dtype=float)
    if np.any(b < 0) or np.any(e < 0) or np.any(np.isnan(b)) or np.any(np.isnan(e)):
        raise DomainError("SNR values must be non-negative")
    rate = np.maximum(0.0, np.log2(1.0 + b) - np.log2(1.0 + e))
    return float(rate) if rate.ndim == 0 else rate


def _gains(mats, combining):
    if combining == "scalar":
        return np.abs(mats[..., 0, 0]) ** 2
    if combining == "svd":
        return np.linalg.norm(mats, ord=2, axis=(-2, -1)) ** 2
    raise DomainError(f"unknown combining rule {combining!r}")


def sample_snrs(geometry, budget, n, rng_seed=None, size=1, combining="scalar"):
    """Per-draw instantaneous SNRs ``(snr_b, snr_e)``; each is the average SNR
    times the gain of the unit-variance small-scale fading."""
    n = check_positive_int(n, "n")
    snr_b, snr_e = budget.snrs(geometry)
    rng_h, rng_g = _link_streams(rng_seed)
    # average SNRs already carry D^eps, so fading gains use the unscaled matrices
    h_hat = rayleigh(rng_h, (n, size, size), size)
    g_hat = rayleigh(rng_g, (n, size, size), size)
    return snr_b * _gains(h_hat, combining), snr_e * _gains(g_hat, combining)


def sample_secrecy(geometry, budget, n, rng_seed=None, size=1, combining="scalar"):
    """``n`` i.i.d. secrecy-rate samples; deterministic for a fixed seed."""
    gb, ge = sample_snrs(geometry, budget, n, rng_seed, size=size, combining=combining)
    return secrecy_rate(gb, ge)


@dataclass(frozen=True)
class LinearDynamics:
    """``x+ = a1 x + w0``; Bob observes ``a2 x + w1``, Eve ``a3 x + w2``."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    noise_vars: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        a1 = check_square(self.a1, "a1", dtype=float)
        n = a1.shape[0]
        a2 = np.atleast_2d(np.asarray(self.a2, dtype=float))
        a3 = np.atleast_2d(np.asarray(self.a3, dtype=float))
        for name, m in (("a2", a2), ("a3", a3)):
            if m.shape[1] != n:
                raise InvalidDimensionError(f"{name} must have {n} columns, got {m.shape}")
        if len(self.noise_vars) != 3 or any(v < 0 for v in self.noise_vars):
            raise DomainError("noise_vars must be three non-negative variances")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "a3", a3)

    @property
    def dim(self):
        return self.a1.shape[0]


def spectral_radius(dyn):
    """Return ``(phi, unstable)`` with ``phi = max |eig(a1)|`` and
    ``unstable = phi > 1``. Accepts a :class:`LinearDynamics` or a matrix."""
    a1 = dyn.a1 if isinstance(dyn, LinearDynamics) else check_square(dyn, "a1")
    phi = float(np.max(np.abs(np.linalg.eigvals(a1))))
    return phi, phi > 1.0


def step_dynamics(state, dyn: LinearDynamics, rng=None):
    """One step of the state-space model.

    Observations are taken from the current state; returns
    ``(next_state, observation_bob, observation_eve)``.
    """
    x = np.atleast_1d(np.asarray(state, dtype=float))
    if x.shape != (dyn.dim,):
        raise InvalidDimensionError(f"state must have shape ({dyn.dim},), got {x.shape}")
    w0, w1, w2 = (np.sqrt(v) for v in dyn.noise_vars)
    rng = as_rng(rng)
    noise = lambda s, k: s * rng.standard_normal(k) if s > 0 else np.zeros(k)  # noqa: E731
    obs_b = dyn.a2 @ x + noise(w1, dyn.a2.shape[0])
    obs_e = dyn.a3 @ x + noise(w2, dyn.a3.shape[0])
    nxt = dyn.a1 @ x + noise(w0, dyn.dim)
    return nxt, obs_b, obs_e


def rollout(state, dyn: LinearDynamics, steps, rng=None):
    """Iterate :func:`step_dynamics`; returns states ``(steps+1, n)`` and the
    two observation sequences ``(steps, p)``."""
    rng = as_rng(rng)
    xs = [np.atleast_1d(np.asarray(state, dtype=float))]
    ob, oe = [], []
    for _ in range(steps):
        x, b, e = step_dynamics(xs[-1], dyn, rng)
        xs.append(x)
        ob.append(b)
        oe.append(e)
    p_b, p_e = dyn.a2.shape[0], dyn.a3.shape[0]
    return (np.array(xs), np.array(ob).reshape(steps, p_b), np.array(oe).reshape(steps, p_e))
