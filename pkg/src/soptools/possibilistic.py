"""Possibility calculus, possibilistic graphs and a semi-Markov mode simulator.

Possibility of an event is the max of its members' values; necessity is
``1 - possibility(complement)``. Conditioning uses the quotient rule with
the ``0 -> 1`` convention, chaining uses max-product composition.
"""
from __future__ import annotations

import graphlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_scalar
from .channel import LinearDynamics, spectral_radius, step_dynamics
from .exceptions import DomainError, InvalidDimensionError

NORM_ATOL = 1e-12


@dataclass(frozen=True)
class PossibilityDistribution:
    values: np.ndarray
    states: tuple = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0 or np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise DomainError("possibility values must lie in [0, 1]")
        if abs(v.max() - 1.0) > NORM_ATOL:
            raise DomainError(f"not normal: max value is {v.max()!r}")
        states = tuple(range(v.size)) if self.states is None else tuple(self.states)
        if len(states) != v.size or len(set(states)) != v.size:
            raise InvalidDimensionError("states must be distinct and match the values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_mapping(cls, mapping):
        return cls(list(mapping.values()), tuple(mapping))

    def index(self, subset):
        pos = {s: i for i, s in enumerate(self.states)}
        try:
            return sorted({pos[s] for s in subset})
        except KeyError as exc:
            raise DomainError(f"unknown state {exc.args[0]!r}") from None


def possibility_of(dist: PossibilityDistribution, subset):
    idx = dist.index(subset)
    return float(dist.values[idx].max()) if idx else 0.0


def necessity_of(dist: PossibilityDistribution, subset):
    """``1 - max`` over the complement (the printed ``inf`` form is not dual)."""
    inside = set(dist.index(subset))
    rest = [i for i in range(len(dist.states)) if i not in inside]
    return 1.0 - (float(dist.values[rest].max()) if rest else 0.0)


# -- kernels -------------------------------------------------------------------------

@dataclass(frozen=True)
class PossibilisticKernel:
    """``table[s, s']`` holds ``v(s'|s)``; rows index the conditioning state."""

    table: np.ndarray

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.table, dtype=float))
        if t.ndim != 2 or np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise DomainError("kernel entries must lie in [0, 1]")
        object.__setattr__(self, "table", t)

    @property
    def normalizers(self):
        return self.table.max(axis=1)

    @property
    def is_normal(self):
        return bool(np.all(np.abs(self.normalizers - 1.0) <= NORM_ATOL))

    def normalized(self):
        w = self.normalizers
        out = np.ones_like(self.table)
        pos = w > 0
        out[pos] = self.table[pos] / w[pos, None]
        return PossibilisticKernel(out)


def condition(joint, given_axes=(1,)):
    """``v(targets | given) = v(all) / v(given)`` with ``v(given) = max`` over the
    targets; a zero denominator gives 1.

    Returns a kernel whose rows enumerate the given configurations (C order)
    and whose columns enumerate the target configurations.
    """
    j = np.asarray(joint, dtype=float)
    if np.any(j < 0) or np.any(j > 1):
        raise DomainError("joint values must lie in [0, 1]")
    given = sorted({int(a) % j.ndim for a in np.atleast_1d(given_axes)})
    targets = [a for a in range(j.ndim) if a not in given]
    if not given or not targets:
        raise DomainError("need at least one given and one target axis")
    moved = np.transpose(j, given + targets)
    n_given = int(np.prod([j.shape[a] for a in given]))
    flat = moved.reshape(n_given, -1)
    den = flat.max(axis=1, keepdims=True)
    out = np.ones_like(flat)
    np.divide(flat, den, out=out, where=np.broadcast_to(den > 0, flat.shape))
    return PossibilisticKernel(out)


def max_chain(k32, k21):
    """``v(s3|s1) = max_{s2} v(s3|s2) v(s2|s1) / w3(s1)`` with
    ``w3(s1) = max_{s2} v(s2|s1)``; rows with ``w3 = 0`` follow the ``0 -> 1``
    convention."""
    a = _table(k21)
    b = _table(k32)
    if a.shape[1] != b.shape[0]:
        raise InvalidDimensionError(f"cannot chain {a.shape} with {b.shape}")
    prod = np.max(a[:, :, None] * b[None, :, :], axis=1)
    w3 = a.max(axis=1)
    out = np.ones_like(prod)
    pos = w3 > 0
    out[pos] = prod[pos] / w3[pos, None]
    return PossibilisticKernel(np.minimum(out, 1.0))


def _table(k):
    return k.table if isinstance(k, PossibilisticKernel) else PossibilisticKernel(k).table


def reverse_kernel(prior, k21, varpi2=None):
    """``v(s1|s2) = w2(s2) v(s1) v(s2|s1) / max_k v(k) v(s2|k)``.

    ``w2`` defaults to 1 (a normalized reverse kernel), where the expression
    coincides with the quotient rule. Returned rows index ``s2``.
    """
    p = prior.values if isinstance(prior, PossibilityDistribution) else np.asarray(prior, dtype=float)
    k = _table(k21)
    if p.size != k.shape[0]:
        raise InvalidDimensionError("prior and kernel rows differ in size")
    joint = p[:, None] * k                 # [s1, s2]
    den = joint.max(axis=0)                # per s2
    w2 = np.ones(k.shape[1]) if varpi2 is None else np.asarray(varpi2, dtype=float)
    out = np.ones((k.shape[1], k.shape[0]))
    pos = den > 0
    out[pos] = (w2[pos, None] * joint[:, pos].T) / den[pos, None]
    return PossibilisticKernel(np.minimum(out, 1.0))


def reverse_rule_gap(prior, k21, varpi2=None):
    """Max abs difference between :func:`reverse_kernel` and quotient conditioning."""
    p = prior.values if isinstance(prior, PossibilityDistribution) else np.asarray(prior, dtype=float)
    joint = p[:, None] * _table(k21)
    return float(np.max(np.abs(reverse_kernel(p, k21, varpi2).table - condition(joint, given_axes=(1,)).table)))


# -- graphs --------------------------------------------------------------------------

@dataclass(frozen=True)
class PossibilisticGraph:
    """Nodes with parent tuples, value domains and sparse conditional tables.

    ``tables[node]`` maps ``(value, parent_values)`` to ``alpha``; absent
    entries mean 1.
    """

    parents: dict
    domains: dict
    tables: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = set(self.domains)
        for n, ps in self.parents.items():
            if n not in nodes or any(p not in nodes for p in ps):
                raise DomainError(f"node {n!r} refers to an unknown node")
        try:
            order = tuple(graphlib.TopologicalSorter(
                {n: tuple(self.parents.get(n, ())) for n in self.domains}).static_order())
        except graphlib.CycleError as exc:
            raise DomainError("possibilistic graph must be acyclic") from exc
        object.__setattr__(self, "order", order)
        for n in self.domains:
            tab = self.tables.get(n, {})
            for (val, pv), alpha in tab.items():
                check_scalar(alpha, f"alpha[{n}]", 0.0, 1.0)
                if val not in self.domains[n]:
                    raise DomainError(f"value {val!r} outside the domain of {n!r}")
            pdoms = [self.domains[p] for p in self.parents.get(n, ())]
            for pv in itertools.product(*pdoms):
                top = max(tab.get((v, tuple(pv)), 1.0) for v in self.domains[n])
                if abs(top - 1.0) > NORM_ATOL:
                    raise DomainError(f"table of {n!r} is not normal for parents {pv!r}")

    def alpha(self, node, value, parent_values):
        return float(self.tables.get(node, {}).get((value, tuple(parent_values)), 1.0))


def chain_joint(graph: PossibilisticGraph, assignment):
    """``prod_i v(s_i | Par(s_i))`` for a full assignment ``{node: value}``."""
    missing = [n for n in graph.domains if n not in assignment]
    if missing:
        raise DomainError(f"assignment misses nodes {missing}")
    out = 1.0
    for n in graph.order:
        if assignment[n] not in graph.domains[n]:
            raise DomainError(f"value {assignment[n]!r} outside the domain of {n!r}")
        pv = tuple(assignment[p] for p in graph.parents.get(n, ()))
        out *= graph.alpha(n, assignment[n], pv)
    return out


# -- semi-Markov simulation ----------------------------------------------------------------

@dataclass(frozen=True)
class HoldingTime:
    kind: str = "exponential"
    mean: float = 5.0

    def __post_init__(self):
        if self.kind not in ("exponential", "deterministic"):
            raise DomainError(f"unknown holding-time kind {self.kind!r}")
        check_scalar(self.mean, "mean", 0.0, lower_open=True)

    def sample(self, rng):
        return self.mean if self.kind == "deterministic" else float(rng.exponential(self.mean))


@dataclass(frozen=True)
class SemiMarkovSpec:
    modes: tuple
    dynamics: dict
    holding: dict
    kernel: PossibilisticKernel

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes or len(set(modes)) != len(modes):
            raise DomainError("modes must be distinct and non-empty")
        if set(self.dynamics) != set(modes) or set(self.holding) != set(modes):
            raise DomainError("dynamics and holding times are needed for every mode")
        k = self.kernel if isinstance(self.kernel, PossibilisticKernel) else PossibilisticKernel(self.kernel)
        if k.table.shape != (len(modes), len(modes)):
            raise InvalidDimensionError("kernel must be |modes| x |modes|")
        if not k.is_normal:
            raise DomainError("kernel rows must be normal")
        dims = {d.dim for d in self.dynamics.values()}
        if len(dims) != 1:
            raise InvalidDimensionError("all modes must share the state dimension")
        for m, dyn in self.dynamics.items():
            if not isinstance(dyn, LinearDynamics):
                raise DomainError("dynamics must be LinearDynamics instances")
            _, unstable = spectral_radius(dyn)
            if m == "unstable" and not unstable:
                raise DomainError("the unstable mode needs spectral radius > 1")
            if m == "stable" and unstable:
                raise DomainError("the stable mode needs spectral radius <= 1")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "kernel", k)


def alpha_cut_sample(row, rng):
    """Uniform pick within ``{s : row[s] >= u}`` for ``u ~ U(0, 1)``."""
    u = rng.random()
    cut = np.flatnonzero(np.asarray(row) >= u)
    if cut.size == 0:
        raise DomainError("empty alpha-cut; the kernel row is not normal")
    return int(cut[rng.integers(cut.size)])


@dataclass(frozen=True)
class SemiMarkovTrajectory:
    modes: tuple
    jump_times: np.ndarray
    holding_times: np.ndarray
    states: list


def simulate_semi_markov(spec: SemiMarkovSpec, horizon, rng_seed=None, initial_mode=None,
                         x0=None, rollout=True, dt=1.0, max_jumps=None):
    """Alternate holding periods and possibilistic mode jumps up to ``horizon``.

    Holding times, destinations and dynamics noise use separate streams, so
    the destination is independent of the holding time. With ``rollout`` the
    active mode's dynamics advance once per ``dt`` tick inside each segment.
    ``jump_times`` lists every jump at or before ``horizon`` (or the first
    ``max_jumps`` of them); ``modes[i]`` is the mode held before jump ``i``.
    """
    horizon = check_scalar(horizon, "horizon", 0.0, lower_open=True)
    ss = np.random.SeedSequence(rng_seed)
    r_hold, r_dest, r_dyn = (np.random.default_rng(s) for s in ss.spawn(3))
    cur = 0 if initial_mode is None else spec.modes.index(initial_mode)
    dim = next(iter(spec.dynamics.values())).dim
    x = np.ones(dim) if x0 is None else np.asarray(x0, dtype=float)
    limit = np.inf if max_jumps is None else check_positive_int(max_jumps, "max_jumps")
    t = 0.0
    modes, jumps, holds, states = [], [], [], []
    while len(jumps) < limit:
        h = spec.holding[spec.modes[cur]].sample(r_hold)
        t_next = t + h
        if rollout:
            n_steps = int(np.floor(min(t_next, horizon) / dt) - np.floor(t / dt))
            seg = [x]
            for _ in range(max(n_steps, 0)):
                x, _, _ = step_dynamics(x, spec.dynamics[spec.modes[cur]], r_dyn)
                seg.append(x)
            states.append(np.array(seg))
        modes.append(spec.modes[cur])
        if t_next > horizon:
            break
        jumps.append(t_next)
        holds.append(h)
        cur = alpha_cut_sample(spec.kernel.table[cur], r_dest)
        t = t_next
    return SemiMarkovTrajectory(tuple(modes), np.array(jumps), np.array(holds), states)


# -- the age example -----------------------------------------------------------------

AGE_GRADES = {"aged": 1.0, "middle": 0.5, "young": 0.0}


@dataclass(frozen=True)
class AgeExampleReport:
    adult_aged_or_middle: float
    adult_middle_or_young: float
    aged_and_middle: float

    @property
    def reproduces(self):
        return self.adult_aged_or_middle == 1.0


def age_example_check():
    """Membership grades of a 50-year-old: union by max, intersection by min."""
    dist = PossibilityDistribution.from_mapping(AGE_GRADES)
    return AgeExampleReport(
        possibility_of(dist, {"aged", "middle"}),
        possibility_of(dist, {"middle", "young"}),
        min(possibility_of(dist, {"aged"}), possibility_of(dist, {"middle"})),
    )
