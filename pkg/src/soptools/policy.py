"""Tabular two-time-scale natural actor-critic over an eigenvalue-slot MDP.

The critic is a SARSA-style update of a single ``Q(s, a)`` entry per step;
the actor applies the multiplicative softmax update
``pi(a|s) <- pi(a|s) exp(beta_t Q(s, a)) / Z(s)`` to every state, carried
out in the log domain. Exploration uses the mixture
``pi_hat = eps_t/|A| + (1 - eps_t) pi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_rng, check_positive_int, check_scalar
from .exceptions import DomainError, InvalidDimensionError

R_CAP = 50.0
WINDOW = 500


# -- ensemble and reward -------------------------------------------------------------

def _square(z):
    return z * z


@dataclass(frozen=True)
class EigenEnsemble:
    u0: int = 5
    v0: int = 7
    beta: float = 2.0
    potential: object = _square

    def __post_init__(self):
        check_positive_int(self.u0, "u0")
        check_positive_int(self.v0, "v0")
        check_scalar(self.beta, "beta", 0.0, lower_open=True)
        if not callable(self.potential):
            raise DomainError("potential must be callable")

    @property
    def n_slots(self):
        return self.u0 + self.v0


def _split(zeta_max, zeta_min, ens):
    zmax = np.asarray(zeta_max, dtype=float).ravel()
    zmin = np.asarray(zeta_min, dtype=float).ravel()
    if zmax.size != ens.v0 or zmin.size != ens.u0:
        raise InvalidDimensionError(f"expected {ens.v0} max and {ens.u0} min eigenvalues")
    return zmax, zmin


def log_joint_eig_density(zeta_max, zeta_min, ensemble: EigenEnsemble):
    zmax, zmin = _split(zeta_max, zeta_min, ensemble)
    b = ensemble.beta
    with np.errstate(divide="ignore"):
        rep = b * np.sum(np.log(np.abs(zmax[:, None] - zmin[None, :])))
    conf = b * ensemble.n_slots / 2.0 * (np.sum(ensemble.potential(zmax)) + np.sum(ensemble.potential(zmin)))
    return float(rep - conf)


def joint_eig_density(zeta_max, zeta_min, ensemble: EigenEnsemble):
    """Unnormalised density: max/min repulsion times the per-eigenvalue confinement."""
    return float(np.exp(log_joint_eig_density(zeta_max, zeta_min, ensemble)))


def reward(zeta_max, zeta_min, ensemble: EigenEnsemble, r_cap=R_CAP):
    """``log(1/P)`` clipped to ``[-r_cap, r_cap]``."""
    lp = log_joint_eig_density(zeta_max, zeta_min, ensemble)
    return float(np.clip(-lp, -r_cap, r_cap))


# -- MDPs ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MdpSpec:
    kernel: np.ndarray              # (S, A, S)
    rewards: np.ndarray             # (S, A)
    discount: float = 0.9
    reward_source: str = "table"

    def __post_init__(self):
        p = np.asarray(self.kernel, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise InvalidDimensionError(f"kernel must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise InvalidDimensionError(f"rewards must have shape {p.shape[:2]}, got {r.shape}")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=2) - 1.0)) > 1e-12:
            raise DomainError("kernel rows must be probability vectors")
        if not np.all(np.isfinite(r)):
            raise DomainError("rewards must be finite")
        check_scalar(self.discount, "discount", 0.0, 1.0, lower_open=True, upper_open=True)
        if self.reward_source not in ("table", "ensemble"):
            raise DomainError(f"unknown reward source {self.reward_source!r}")
        object.__setattr__(self, "kernel", p)
        object.__setattr__(self, "rewards", r)

    @property
    def n_states(self):
        return self.kernel.shape[0]

    @property
    def n_actions(self):
        return self.kernel.shape[1]


class TabularEnv:
    """Sampling handle around an :class:`MdpSpec`; rewards are the table entries."""

    def __init__(self, spec: MdpSpec, reference=None):
        self.spec = spec
        self.reference = reference
        self._cdf = np.cumsum(spec.kernel, axis=2)

    def reward(self, s, a):
        return float(self.spec.rewards[s, a])

    def sample_next(self, s, a, rng):
        cdf = self._cdf[s, a]
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), cdf.size - 1))


def ensemble_mode(ensemble: EigenEnsemble):
    """Deterministic local maximiser of the joint density."""
    v0 = ensemble.v0
    x0 = np.concatenate([np.linspace(0.2, 0.6, v0), np.linspace(-0.6, -0.2, ensemble.u0)])
    fun = lambda x: -log_joint_eig_density(x[:v0], x[v0:], ensemble)  # noqa: E731
    res = minimize(fun, x0, method="Nelder-Mead", options={"maxiter": 20000, "xatol": 1e-8, "fatol": 1e-10})
    return res.x[:v0], res.x[v0:]


def markov_eigenstate_env(ensemble: EigenEnsemble | None = None, rng=None, n_mc=4000,
                          jitter=0.1, discount=0.9, r_cap=R_CAP, centered=True):
    """Twelve-slot environment (``v0`` max then ``u0`` min eigenvalue slots).

    The hidden configuration starts from the ensemble mode plus seeded jitter.
    Action 0 keeps the slot and re-pays the reference reward. Action ``a >= 1``
    targets slot ``(s + a) mod n_slots`` and proposes a unit-Gaussian move of
    that eigenvalue, accepted by the Metropolis ratio; on acceptance the state
    becomes the targeted slot. Acceptance probabilities and expected rewards
    are estimated once by Monte Carlo, which makes the MDP exactly tabular.

    With ``centered`` the paid reward is measured relative to the reference
    reward, so the no-op pays 0 and the initial ``Q = 0`` is neutral.
    """
    ens = EigenEnsemble() if ensemble is None else ensemble
    rng = as_rng(rng)
    n_slots = ens.n_slots
    n_actions = max(ens.u0, ens.v0)
    if n_actions >= n_slots:
        raise DomainError("need max(u0, v0) < u0 + v0")
    zmax, zmin = ensemble_mode(ens)
    ref = np.concatenate([zmax, zmin]) + jitter * rng.standard_normal(n_slots)
    split = lambda z: (z[: ens.v0], z[ens.v0:])  # noqa: E731
    lp_ref = log_joint_eig_density(*split(ref), ens)
    r_ref = float(np.clip(-lp_ref, -r_cap, r_cap))
    p_acc = np.empty(n_slots)
    r_acc = np.empty(n_slots)
    for j in range(n_slots):
        steps = rng.standard_normal(n_mc)
        u = rng.random(n_mc)
        acc = np.empty(n_mc, dtype=bool)
        rew = np.empty(n_mc)
        for m in range(n_mc):
            z = ref.copy()
            z[j] += steps[m]
            lp = log_joint_eig_density(*split(z), ens)
            acc[m] = np.log(u[m]) < lp - lp_ref
            rew[m] = np.clip(-lp, -r_cap, r_cap) if acc[m] else r_ref
        p_acc[j] = acc.mean()
        r_acc[j] = rew.mean()
    kernel = np.zeros((n_slots, n_actions, n_slots))
    rewards = np.empty((n_slots, n_actions))
    for s in range(n_slots):
        kernel[s, 0, s] = 1.0
        rewards[s, 0] = r_ref
        for a in range(1, n_actions):
            j = (s + a) % n_slots
            kernel[s, a, j] = p_acc[j]
            kernel[s, a, s] = 1.0 - p_acc[j]
            rewards[s, a] = r_acc[j]
    if centered:
        rewards -= r_ref
    spec = MdpSpec(kernel, rewards, discount, reward_source="ensemble")
    return TabularEnv(spec, reference=ref)


def value_iteration_oracle(spec: MdpSpec, tol=1e-10, max_iter=100_000):
    """``Q*`` from the Bellman optimality operator, stopped so the sup-norm
    distance to the fixed point is below ``tol``."""
    psi = spec.discount
    if not 0 < psi < 1:
        raise DomainError("discount must lie in (0, 1)")
    q = np.zeros_like(spec.rewards)
    for _ in range(max_iter):
        q_new = spec.rewards + psi * spec.kernel @ q.max(axis=1)
        diff = np.max(np.abs(q_new - q))
        q = q_new
        if diff * psi / (1 - psi) < tol * 0.1:
            break
    return q


def policy_evaluation(spec: MdpSpec, policy):
    """``Q^pi`` solving ``Q = R + psi P (pi . Q)`` exactly."""
    S, A = spec.rewards.shape
    pi = np.asarray(policy, dtype=float)
    # row (s,a) -> psi * sum_{s'} P(s'|s,a) pi(a'|s') Q(s',a')
    m = spec.discount * (spec.kernel[:, :, :, None] * pi[None, None, :, :]).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - m, spec.rewards.ravel())
    return q.reshape(S, A)


def bellman_residual(spec: MdpSpec, q):
    return float(np.max(np.abs(spec.rewards + spec.discount * spec.kernel @ q.max(axis=1) - q)))


# -- actor-critic --------------------------------------------------------------------

@dataclass(frozen=True)
class Schedules:
    """``alpha_t = 1/(t^a + 1)``, ``beta_t = 1/(t^b + 1)`` and
    ``eps_t = max(eps_floor, eps_scale/sqrt(t+1))`` unless a constant is set."""

    alpha_exp: float = 0.6
    beta_exp: float = 0.8
    eps_floor: float = 0.01
    eps_scale: float = 0.5
    constant_alpha: float | None = None
    constant_beta: float | None = None
    constant_epsilon: float | None = None

    def __post_init__(self):
        check_scalar(self.alpha_exp, "alpha_exp", 0.0, lower_open=True)
        check_scalar(self.beta_exp, "beta_exp", 0.0, lower_open=True)
        check_scalar(self.eps_floor, "eps_floor", 0.0, 1.0)
        check_scalar(self.eps_scale, "eps_scale", 0.0, 1.0)
        for name in ("constant_alpha", "constant_beta"):
            v = getattr(self, name)
            if v is not None:
                check_scalar(v, name, 0.0, 1.0 if name == "constant_alpha" else None)
        if self.constant_epsilon is not None:
            check_scalar(self.constant_epsilon, "constant_epsilon", 0.0, 1.0)

    def alpha(self, t):
        return self.constant_alpha if self.constant_alpha is not None else 1.0 / (t ** self.alpha_exp + 1.0)

    def beta(self, t):
        return self.constant_beta if self.constant_beta is not None else 1.0 / (t ** self.beta_exp + 1.0)

    def epsilon(self, t):
        if self.constant_epsilon is not None:
            return self.constant_epsilon
        return max(self.eps_floor, self.eps_scale / np.sqrt(t + 1.0))


@dataclass
class ActorCriticState:
    q_table: np.ndarray
    policy: np.ndarray
    behavior: np.ndarray
    schedules: Schedules
    t: int = 0
    s: int = 0
    a: int = 0
    last_reward: float = field(default=np.nan)

    @classmethod
    def initial(cls, n_states, n_actions, schedules=None, rng=None, q0=None):
        rng = as_rng(rng)
        sched = Schedules() if schedules is None else schedules
        pi = np.full((n_states, n_actions), 1.0 / n_actions)
        pi_hat = pi.copy()
        q = np.zeros((n_states, n_actions)) if q0 is None else np.array(q0, dtype=float)
        if q.shape != pi.shape:
            raise InvalidDimensionError("q0 must have shape (n_states, n_actions)")
        s = int(rng.integers(n_states))
        a = _draw(pi_hat[s], rng)
        return cls(q, pi, pi_hat, sched, 0, s, a)


def _draw(p, rng):
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), p.size - 1))


def ac_step(state: ActorCriticState, env: TabularEnv, rng) -> ActorCriticState:
    """One critic/actor update; returns a new state and leaves the input untouched."""
    sch = state.schedules
    t, s, a = state.t, state.s, state.a
    psi = env.spec.discount
    r = env.reward(s, a)
    s_next = env.sample_next(s, a, rng)
    a_next = _draw(state.behavior[s_next], rng)

    q = state.q_table.copy()
    alpha = sch.alpha(t)
    if alpha != 0:
        q[s, a] += alpha * (r + psi * q[s_next, a_next] - q[s, a])

    beta = sch.beta(t)
    if beta != 0:
        with np.errstate(divide="ignore"):
            logits = np.log(state.policy) + beta * q
        logits -= logits.max(axis=1, keepdims=True)
        pi = np.exp(logits)
        pi /= pi.sum(axis=1, keepdims=True)
    else:
        pi = state.policy
    eps = sch.epsilon(t)
    pi_hat = eps / pi.shape[1] + (1.0 - eps) * pi
    return replace(state, q_table=q, policy=pi, behavior=pi_hat, t=t + 1,
                   s=s_next, a=a_next, last_reward=r)


@dataclass(frozen=True)
class TrainingTrace:
    iteration: np.ndarray
    avg_reward: np.ndarray
    q_error: np.ndarray
    avg_policy: np.ndarray
    policies: np.ndarray
    t_hat: int
    final_q: np.ndarray
    final_policy: np.ndarray

    def __len__(self):
        return self.iteration.size


def _as_env(env):
    if isinstance(env, TabularEnv):
        return env
    if isinstance(env, MdpSpec):
        return TabularEnv(env)
    raise DomainError("expected an MdpSpec or TabularEnv")


def train(env=None, T=5000, schedules=None, seed=None, ensemble=None, window=WINDOW,
          keep_policies=True, q_init="policy", callback=None):
    """Run ``T`` actor-critic steps from the uniform policy.

    ``q_init="policy"`` starts the critic at the Q-function of the uniform
    initial policy; ``"zero"`` starts it at 0. ``callback(i, state)``, if
    given, sees every iterate including the initial one.

    Returns ``(trace, output_policy)`` where the output policy is the
    behaviour policy at the index ``T_hat`` drawn with probability
    proportional to ``beta_i``. When ``env`` is omitted the eigenvalue-slot
    environment of ``ensemble`` is built from the same seed.
    """
    if not isinstance(T, (int, np.integer)) or T < 0:
        raise DomainError("T must be a non-negative integer")
    sched = Schedules() if schedules is None else schedules
    if not isinstance(sched, Schedules):
        raise DomainError("schedules must be a Schedules instance")
    ss = np.random.SeedSequence(seed)
    s_env, s_run = ss.spawn(2)
    if env is None:
        env = markov_eigenstate_env(ensemble, np.random.default_rng(s_env))
    env = _as_env(env)
    rng = np.random.default_rng(s_run)
    spec = env.spec
    q_star = value_iteration_oracle(spec)
    q_norm = np.max(np.abs(q_star))
    best = np.argmax(q_star, axis=1)
    rows = np.arange(spec.n_states)

    betas = np.array([sched.beta(i) for i in range(T + 1)])
    if np.any(betas < 0) or betas.sum() <= 0:
        raise DomainError("beta schedule must be non-negative with a positive sum")
    t_hat = int(rng.choice(T + 1, p=betas / betas.sum()))

    if q_init not in ("policy", "zero"):
        raise DomainError(f"unknown q_init {q_init!r}")
    uniform = np.full(spec.rewards.shape, 1.0 / spec.n_actions)
    q0 = policy_evaluation(spec, uniform) if q_init == "policy" else None
    state = ActorCriticState.initial(spec.n_states, spec.n_actions, sched, rng, q0)
    rewards = np.empty(T)
    avg_r = np.zeros(T + 1)
    q_err = np.empty(T + 1)
    avg_pi = np.empty(T + 1)
    pols = np.empty((T + 1,) + state.policy.shape) if keep_policies else None
    output = state.behavior.copy() if t_hat == 0 else None

    def record(i, st):
        err = np.max(np.abs(st.q_table - q_star))
        q_err[i] = err / q_norm if q_norm > 0 else err
        avg_pi[i] = st.policy[rows, best].mean()
        if pols is not None:
            pols[i] = st.policy

    record(0, state)
    if callback is not None:
        callback(0, state)
    csum = 0.0
    for i in range(1, T + 1):
        state = ac_step(state, env, rng)
        rewards[i - 1] = state.last_reward
        csum += state.last_reward
        if i > window:
            csum -= rewards[i - 1 - window]
        avg_r[i] = csum / min(i, window)
        record(i, state)
        if callback is not None:
            callback(i, state)
        if i == t_hat:
            output = state.behavior.copy()
    trace = TrainingTrace(np.arange(T + 1), avg_r, q_err, avg_pi, pols, t_hat,
                          state.q_table, state.policy)
    return trace, output


class NaturalActorCritic(BaseEstimator):
    """Estimator wrapper: ``fit`` trains on an MDP (``MdpSpec`` or
    ``TabularEnv``); ``predict`` maps states to greedy actions of ``Q``."""

    def __init__(self, n_iter=5000, alpha_exp=0.6, beta_exp=0.8, eps_floor=0.01,
                 eps_scale=0.5, random_state=None):
        self.n_iter = n_iter
        self.alpha_exp = alpha_exp
        self.beta_exp = beta_exp
        self.eps_floor = eps_floor
        self.eps_scale = eps_scale
        self.random_state = random_state

    def fit(self, X, y=None):
        sched = Schedules(self.alpha_exp, self.beta_exp, self.eps_floor, self.eps_scale)
        trace, output = train(_as_env(X), self.n_iter, sched, self.random_state,
                              keep_policies=False)
        self.trace_ = trace
        self.output_policy_ = output
        self.q_table_ = trace.final_q
        self.policy_ = trace.final_policy
        return self

    def predict(self, X):
        check_is_fitted(self, "q_table_")
        s = np.asarray(X, dtype=int).ravel()
        if np.any(s < 0) or np.any(s >= self.q_table_.shape[0]):
            raise DomainError("state index out of range")
        return np.argmax(self.q_table_[s], axis=1)
