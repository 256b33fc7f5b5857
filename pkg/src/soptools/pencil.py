"""Eigenvalue counting for matrix pencils ``B - zA`` by the argument principle.

The count inside a closed anticlockwise contour is

    N = 1/(2 pi i) * contour_integral( Tr[(B - zA)^{-1} (-A)] dz ),

evaluated with one linear solve per quadrature node. Circles use the
trapezoidal rule; keyhole contours use composite Gauss-Legendre panels on
each of their four pieces. Eigenvalues close to the path fall back to an
adaptive panel rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._validation import check_positive_int, check_square
from .exceptions import (
    ContourTouchesSpectrumError,
    DegenerateGapError,
    DomainError,
    InvalidDimensionError,
    SingularPencilError,
    UnreliableCountError,
)

DEFAULT_NODES = 128
MAX_ORACLE_DIM = 64


@dataclass(frozen=True)
class MatrixPencil:
    b_matrix: np.ndarray
    a_matrix: np.ndarray

    def __post_init__(self):
        b = check_square(self.b_matrix, "b_matrix", dtype=complex)
        a = check_square(self.a_matrix, "a_matrix", dtype=complex)
        if a.shape != b.shape:
            raise InvalidDimensionError(f"pencil matrices differ in shape: {b.shape} vs {a.shape}")
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "a_matrix", a)
        if not self._is_regular():
            raise SingularPencilError("det(B - zA) vanishes identically")

    @property
    def n(self):
        return self.b_matrix.shape[0]

    def _is_regular(self, probes=3):
        rng = np.random.default_rng(0x5eed)
        nb = np.linalg.norm(self.b_matrix, 2)
        na = np.linalg.norm(self.a_matrix, 2)
        scale = 1.0 + nb / max(na, 1e-300)
        for _ in range(probes):
            z = scale * (rng.standard_normal() + 1j * rng.standard_normal())
            m = self.b_matrix - z * self.a_matrix
            smin = np.linalg.svd(m, compute_uv=False)[-1]
            if smin > 1e-12 * self.n * (nb + abs(z) * na):
                return True
        return False


# -- contours ----------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    center: complex = 0.0
    radius: float = 1.0
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be > 0")
        if self.nodes < 16:
            raise DomainError("need at least 16 quadrature nodes")

    @property
    def scale(self):
        return float(self.radius)

    def quadrature(self, nodes=None):
        """Nodes ``z_k`` and weights ``w_k`` with ``sum w_k g(z_k) ~ contour integral of g``."""
        m = self.nodes if nodes is None else nodes
        e = np.exp(2j * np.pi * np.arange(m) / m)
        return self.center + self.radius * e, 2j * np.pi * self.radius * e / m

    def pieces(self):
        """Parameterised pieces ``(z(t), z'(t), t0, t1)`` in traversal order."""
        c, r = self.center, self.radius
        return [(lambda t: c + r * np.exp(1j * t), lambda t: 1j * r * np.exp(1j * t), 0.0, 2 * np.pi)]

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius


def _arc(center, r, t0, t1):
    return (lambda t: center + r * np.exp(1j * t), lambda t: 1j * r * np.exp(1j * t), t0, t1)


def _segment(z0, z1):
    return (lambda t: z0 + t * (z1 - z0), lambda t: np.full(np.shape(t), z1 - z0), 0.0, 1.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _composite_gauss(piece, m):
    """About ``m`` nodes of 16-point Gauss-Legendre panels along one piece."""
    zf, dzf, t0, t1 = piece
    k = max(1, -(-m // _GL_X.size))
    edges = np.linspace(t0, t1, k + 1)
    half = 0.5 * np.diff(edges)
    t = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * _GL_X
    w = half[:, None] * _GL_W
    return zf(t).ravel(), (dzf(t) * w).ravel()


@dataclass(frozen=True)
class Keyhole:
    """Annulus ``inner_radius < |z - center| < outer_radius`` with the wedge
    ``|arg(z - center) - slit_angle| < slit_half_width`` removed.

    The default slit lies along the negative real axis.
    """

    outer_radius: float = 1.0
    inner_radius: float = 0.1
    slit_angle: float = np.pi
    slit_half_width: float = 0.05
    center: complex = 0.0
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise DomainError("need 0 < inner_radius < outer_radius")
        if not 0 < self.slit_half_width < np.pi:
            raise DomainError("slit_half_width must lie in (0, pi)")
        if self.nodes < 16:
            raise DomainError("need at least 16 quadrature nodes")

    @property
    def scale(self):
        return float(self.outer_radius)

    def quadrature(self, nodes=None):
        m = self.nodes if nodes is None else nodes
        pieces = self.pieces()
        lengths = np.array([np.sum(np.abs(p[1](np.linspace(p[2], p[3], 65)))) / 65 * abs(p[3] - p[2])
                            for p in pieces])
        counts = np.round(m * lengths / lengths.sum()).astype(int)
        parts = [_composite_gauss(p, c) for p, c in zip(pieces, counts)]
        return np.concatenate([q[0] for q in parts]), np.concatenate([q[1] for q in parts])

    def pieces(self):
        R, r, phi, d, c = (self.outer_radius, self.inner_radius, self.slit_angle,
                           self.slit_half_width, self.center)
        span = 2 * np.pi - 2 * d
        return [
            _arc(c, R, phi + d, phi + d + span),
            _segment(c + R * np.exp(1j * (phi - d)), c + r * np.exp(1j * (phi - d))),
            _arc(c, r, phi - d, phi - d - span),
            _segment(c + r * np.exp(1j * (phi + d)), c + R * np.exp(1j * (phi + d))),
        ]

    def contains(self, z):
        u = np.asarray(z) - self.center
        rad = np.abs(u)
        ang = np.abs(np.angle(u * np.exp(-1j * self.slit_angle)))
        return (rad > self.inner_radius) & (rad < self.outer_radius) & (ang > self.slit_half_width)


@dataclass(frozen=True)
class EigCountResult:
    raw_integral: complex
    count: int
    residual: float
    nodes: int


# -- counting ------------------------------------------------------------------------

def char_poly_eval(pencil: MatrixPencil, z):
    """``det(B - zA)``."""
    return complex(np.linalg.det(pencil.b_matrix - z * pencil.a_matrix))


def trace_integrand(pencil: MatrixPencil, z):
    """``Tr[(B - zA)^{-1} (-A)]`` at each node (= P'(z)/P(z))."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    mats = pencil.b_matrix[None] - z[:, None, None] * pencil.a_matrix[None]
    rhs = np.broadcast_to(pencil.a_matrix, mats.shape)
    try:
        sol = np.linalg.solve(mats, rhs)
    except np.linalg.LinAlgError as exc:
        raise ContourTouchesSpectrumError("singular solve at a contour node") from exc
    return -np.trace(sol, axis1=1, axis2=2)


def _check_path(pencil, vals, path_tolerance):
    # |P'/P| <= n / dist(z, spectrum); anything larger means an eigenvalue on the path
    if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) * path_tolerance > pencil.n:
        raise ContourTouchesSpectrumError(
            f"an eigenvalue lies within {path_tolerance:g} of the contour"
        )


def _result(raw, nodes):
    n_est = raw / (2j * np.pi)
    count = int(round(n_est.real))
    return EigCountResult(raw, max(count, 0), float(abs(n_est - count)), int(nodes))


def _integrate(pencil, contour, nodes, path_tolerance):
    z, w = contour.quadrature(nodes)
    vals = trace_integrand(pencil, z)
    _check_path(pencil, vals, path_tolerance)
    return _result(complex(np.sum(w * vals)), z.size)


def _panel_rule(pencil, zf, dzf, a, b, path_tolerance):
    """Gauss-Legendre estimates on panels ``[a, b]`` and on their two halves."""
    mid = 0.5 * (a + b)
    lo = np.stack([a, mid], axis=1)
    hi = np.stack([mid, b], axis=1)
    half = 0.5 * (hi - lo)
    t = (0.5 * (lo + hi))[..., None] + half[..., None] * _GL_X
    vals = trace_integrand(pencil, zf(t.ravel())).reshape(t.shape) * dzf(t)
    _check_path(pencil, vals, path_tolerance)
    halves = np.sum(vals * _GL_W, axis=-1) * half
    t1 = mid[:, None] + (0.5 * (b - a))[:, None] * _GL_X
    whole = np.sum(trace_integrand(pencil, zf(t1.ravel())).reshape(t1.shape) * dzf(t1) * _GL_W,
                   axis=-1) * 0.5 * (b - a)
    return whole, halves.sum(axis=1), 3 * _GL_X.size * a.size


def _integrate_adaptive(pencil, contour, path_tolerance, tol, max_panels):
    """Adaptive bisection with 16-point Gauss-Legendre panels.

    Handles eigenvalues close to (but not on) the path, where a fixed rule
    needs a number of nodes inversely proportional to the distance.
    """
    total = 0j
    evals = 0
    for zf, dzf, t0, t1 in contour.pieces():
        a = np.linspace(t0, t1, 9)[:-1]
        b = np.linspace(t0, t1, 9)[1:]
        span = abs(t1 - t0)
        while a.size:
            if evals > max_panels * 48:
                raise UnreliableCountError("adaptive quadrature did not converge")
            whole, split, k = _panel_rule(pencil, zf, dzf, a, b, path_tolerance)
            evals += k
            ok = np.abs(whole - split) <= tol * np.abs(b - a) / span
            total += np.sum(split[ok])
            mid = 0.5 * (a + b)
            a, b = np.concatenate([a[~ok], mid[~ok]]), np.concatenate([mid[~ok], b[~ok]])
    return _result(total, evals)


def count_eigs_contour(pencil: MatrixPencil, contour, nodes=None, adaptive=True,
                       target_residual=1e-3, max_nodes=4096, path_tolerance=None):
    """Number of pencil eigenvalues enclosed by ``contour``.

    With ``adaptive`` the node count is doubled until two consecutive
    estimates agree to ``target_residual`` and the latest is within
    ``target_residual`` of an integer. If that does not happen by
    ``max_nodes``, an adaptive panel rule takes over. A residual of 0.25 or
    more, or a count above the pencil dimension, is reported as
    :class:`UnreliableCountError`.
    """
    m = contour.nodes if nodes is None else check_positive_int(nodes, "nodes", 16)
    tol = 1e-6 * contour.scale if path_tolerance is None else path_tolerance
    res = _integrate(pencil, contour, m, tol)
    if adaptive:
        converged = False
        while 2 * m <= max_nodes:
            m *= 2
            nxt = _integrate(pencil, contour, m, tol)
            converged = (abs(nxt.raw_integral - res.raw_integral) / (2 * np.pi) <= target_residual
                         and nxt.residual <= target_residual)
            res = nxt
            if converged:
                break
        if not converged:
            res = _integrate_adaptive(pencil, contour, tol, 2 * np.pi * target_residual * 1e-3, 1 << 14)
    if res.residual >= 0.25 or res.count > pencil.n:
        raise UnreliableCountError(
            f"residual {res.residual:.3f}, count {res.count} with {res.nodes} nodes; "
            "increase the node count"
        )
    return res


def direct_eig_oracle(pencil: MatrixPencil):
    """All finite generalized eigenvalues of ``(B, A)`` from a dense QZ solve."""
    if pencil.n > MAX_ORACLE_DIM:
        raise DomainError(f"oracle limited to n <= {MAX_ORACLE_DIM}")
    alpha, beta = scipy.linalg.eigvals(pencil.b_matrix, pencil.a_matrix, homogeneous_eigvals=True)
    scale = max(np.linalg.norm(pencil.b_matrix), np.linalg.norm(pencil.a_matrix))
    if np.any((np.abs(alpha) < 1e-13 * scale) & (np.abs(beta) < 1e-13 * scale)):
        raise SingularPencilError("pencil is singular")
    finite = np.abs(beta) > 1e-12 * np.abs(alpha)
    return alpha[finite] / beta[finite]


def count_inside(eigs, contour):
    return int(np.count_nonzero(contour.contains(eigs)))


# -- Finsler and Davis-Kahan ---------------------------------------------------------------

@dataclass(frozen=True)
class FinslerCertificate:
    z_value: float
    threshold: float
    lambda_max: float

    @property
    def valid(self):
        return self.lambda_max < self.threshold


def default_z_grid():
    pos = np.logspace(-3, 3, 101)
    return np.concatenate([pos, -pos])


def sym_lambda_max(m):
    m = np.asarray(m)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[-1])


def finsler_search(a_matrix, b_matrix, xi, z_grid=None):
    """First grid value ``z`` with ``lambda_max(sym(B - zA)) < xi``, else ``None``."""
    a = check_square(a_matrix, "a_matrix")
    b = check_square(b_matrix, "b_matrix")
    if a.shape != b.shape:
        raise InvalidDimensionError("A and B must have equal shape")
    grid = default_z_grid() if z_grid is None else np.asarray(z_grid, dtype=float)
    for z in grid:
        lam = sym_lambda_max(b - z * a)
        if lam < xi:
            return FinslerCertificate(float(z), float(xi), lam)
    return None


@dataclass(frozen=True)
class DavisKahanReport:
    sin_angle: float
    bound: float
    gap: float
    holds: bool


def davis_kahan_check(m0, m1, i):
    """Compare ``sin angle(v_i(m0), v_i(m1))`` with ``2 ||m0 - m1|| / gap``.

    Eigenpairs are in ascending order (``i = -1`` is the top one) and
    ``gap = min_{j != i} |eig_i(m1) - eig_j(m0)|``.
    """
    m0 = check_square(m0, "m0")
    m1 = check_square(m1, "m1")
    if m0.shape != m1.shape:
        raise InvalidDimensionError("m0 and m1 must have equal shape")
    w0, v0 = np.linalg.eigh(0.5 * (m0 + m0.conj().T))
    w1, v1 = np.linalg.eigh(0.5 * (m1 + m1.conj().T))
    n = w0.size
    i = range(n)[i]
    others = np.delete(w0, i)
    gap = float(np.min(np.abs(w1[i] - others))) if others.size else np.inf
    if gap == 0:
        raise DegenerateGapError("eigenvalue gap is zero")
    cos = min(1.0, abs(np.vdot(v0[:, i], v1[:, i])))
    sin = float(np.sqrt(max(0.0, 1.0 - cos * cos)))
    bound = 2.0 * float(np.linalg.norm(m0 - m1, 2)) / gap
    return DavisKahanReport(sin, bound, gap, bool(sin <= bound + 1e-12))
