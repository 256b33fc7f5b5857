import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _mdps import HAND_MDPS, counterexample, one_state
from soptools.exceptions import DomainError, InvalidDimensionError
from soptools.policy import (
    R_CAP,
    ActorCriticState,
    EigenEnsemble,
    MdpSpec,
    NaturalActorCritic,
    Schedules,
    TabularEnv,
    ac_step,
    bellman_residual,
    joint_eig_density,
    markov_eigenstate_env,
    policy_evaluation,
    reward,
    train,
    value_iteration_oracle,
)
from soptools.textio import read_trace, trace_rows, write_csv, TRACE_COLUMNS

ENS11 = EigenEnsemble(u0=1, v0=1, beta=2.0)


def random_mdp(seed, n_s=4, n_a=3):
    rng = np.random.default_rng(seed)
    k = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    return MdpSpec(k, rng.uniform(-1, 1, (n_s, n_a)), 0.9)


def brute_q_star(spec):
    # enumerate every deterministic policy, evaluate exactly, take the entrywise best
    S, A = spec.rewards.shape
    best = None
    for acts in np.ndindex(*(A,) * S):
        pi = np.zeros((S, A))
        pi[np.arange(S), acts] = 1.0
        q = policy_evaluation(spec, pi)
        best = q if best is None else np.maximum(best, q)
    return best


# -- ensemble ------------------------------------------------------------------------

def test_density_examples():
    assert joint_eig_density([1.0], [0.0], ENS11) == pytest.approx(math.exp(-2), rel=1e-14)
    assert joint_eig_density([1.0], [0.0], ENS11) == pytest.approx(0.13534, abs=1e-5)
    ens = EigenEnsemble()
    zmax = np.linspace(0.1, 0.7, 7)
    zmin = np.linspace(-0.5, -0.1, 5)
    zmin_hit = zmin.copy()
    zmin_hit[2] = zmax[3]
    assert joint_eig_density(zmax, zmin_hit, ens) == 0.0
    assert joint_eig_density(-zmax, -zmin, ens) == pytest.approx(joint_eig_density(zmax, zmin, ens), rel=1e-12)


def test_density_matches_product_formula():
    rng = np.random.default_rng(0)
    ens = EigenEnsemble(u0=2, v0=3, beta=1.0)
    zmax, zmin = rng.normal(size=3), rng.normal(size=2)
    rep = np.prod([abs(a - b) for a in zmax for b in zmin]) ** ens.beta
    conf = np.prod([math.exp(-ens.beta * 5 / 2 * z * z) for z in np.concatenate([zmax, zmin])])
    assert joint_eig_density(zmax, zmin, ens) == pytest.approx(rep * conf, rel=1e-12)


def test_reward_examples():
    assert reward([1.0], [0.0], ENS11) == pytest.approx(2.0, rel=1e-14)
    assert reward([0.5], [0.5], ENS11) == R_CAP
    # a flat potential leaves only the repulsion, which is exactly 1 at unit distance
    flat = EigenEnsemble(u0=1, v0=1, beta=2.0, potential=np.zeros_like)
    assert joint_eig_density([1.5], [0.5], flat) == 1.0
    assert reward([1.5], [0.5], flat) == 0.0
    assert reward([0.5], [0.5 + 1e-30], flat) == R_CAP
    assert reward([0.0], [1e40], flat) == -R_CAP


def test_ensemble_validation():
    with pytest.raises(InvalidDimensionError):
        joint_eig_density([1.0, 2.0], [0.0], ENS11)
    with pytest.raises(DomainError):
        EigenEnsemble(beta=0.0)


# -- MDP plumbing and oracle ------------------------------------------------------------

def test_mdp_validation():
    with pytest.raises(DomainError):
        MdpSpec(np.full((2, 1, 2), 0.6), np.zeros((2, 1)))
    with pytest.raises(InvalidDimensionError):
        MdpSpec(np.full((2, 1, 2), 0.5), np.zeros((3, 1)))
    with pytest.raises(DomainError):
        MdpSpec(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), discount=1.0)


def test_value_iteration_examples():
    spec = MdpSpec(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 0.9)
    assert np.array_equal(value_iteration_oracle(spec), np.zeros((3, 2)))
    spec = MdpSpec(np.ones((1, 1, 1)), np.array([[2.0]]), 0.8)
    assert value_iteration_oracle(spec)[0, 0] == pytest.approx(2.0 / 0.2, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_value_iteration_random(seed):
    spec = random_mdp(seed)
    q = value_iteration_oracle(spec)
    assert bellman_residual(spec, q) < 1e-10
    assert np.allclose(q, brute_q_star(spec), atol=1e-9)


def test_policy_evaluation_against_iteration():
    spec = random_mdp(7)
    pi = np.random.default_rng(8).dirichlet(np.ones(3), size=4)
    q = policy_evaluation(spec, pi)
    it = np.zeros_like(q)
    for _ in range(2000):
        it = spec.rewards + spec.discount * spec.kernel @ np.sum(pi * it, axis=1)
    assert np.allclose(q, it, atol=1e-10)


def test_env_sampling_frequencies():
    spec = random_mdp(9)
    env = TabularEnv(spec)
    rng = np.random.default_rng(10)
    draws = np.bincount([env.sample_next(1, 2, rng) for _ in range(40_000)], minlength=4) / 40_000
    assert np.allclose(draws, spec.kernel[1, 2], atol=0.01)


# -- actor-critic step -----------------------------------------------------------------

def _state(spec, sched, seed=0):
    return ActorCriticState.initial(spec.n_states, spec.n_actions, sched, np.random.default_rng(seed))


def test_step_beta_zero_keeps_policy():
    spec = random_mdp(11)
    sched = Schedules(constant_beta=0.0)
    st0 = _state(spec, sched)
    st1 = ac_step(st0, TabularEnv(spec), np.random.default_rng(1))
    assert np.array_equal(st1.policy, st0.policy)


def test_step_alpha_zero_keeps_critic():
    spec = random_mdp(12)
    sched = Schedules(constant_alpha=0.0)
    st0 = _state(spec, sched)
    st0.q_table[:] = np.arange(12.0).reshape(4, 3)
    st1 = ac_step(st0, TabularEnv(spec), np.random.default_rng(1))
    assert np.array_equal(st1.q_table, st0.q_table)


def test_step_updates_one_entry():
    spec = random_mdp(13)
    st0 = _state(spec, Schedules())
    st0.q_table[:] = 1.0
    st1 = ac_step(st0, TabularEnv(spec), np.random.default_rng(2))
    changed = np.argwhere(st1.q_table != st0.q_table)
    assert len(changed) <= 1
    if len(changed):
        assert tuple(changed[0]) == (st0.s, st0.a)


def test_step_large_q_uses_log_domain():
    spec = random_mdp(14)
    st0 = _state(spec, Schedules(constant_beta=1.0))
    st0.q_table[:] = np.array([1e4, 0.0, -1e4])
    st1 = ac_step(st0, TabularEnv(spec), np.random.default_rng(3))
    assert np.all(np.isfinite(st1.policy)) and np.allclose(st1.policy.sum(axis=1), 1.0)


def test_single_state_constant_schedules():
    sched = Schedules(constant_alpha=0.1, constant_beta=0.5, constant_epsilon=0.1)
    spec = one_state()
    assert np.argmax(value_iteration_oracle(spec)[0]) == 0
    trace, _ = train(spec, 500, sched, seed=0, q_init="zero")
    assert np.argmax(trace.final_q[0]) == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_invariants_every_step(seed):
    spec = random_mdp(seed, 3, 2)
    sched = Schedules()
    bound = 1.0 / (1 - spec.discount)  # |rewards| <= 1

    def check(i, state):
        assert np.all(state.policy >= 0)
        assert np.max(np.abs(state.policy.sum(axis=1) - 1)) <= 1e-12
        floor = sched.epsilon(max(i - 1, 0)) / spec.n_actions
        assert np.all(state.behavior >= floor * (1 - 1e-12))
        assert np.max(np.abs(state.q_table)) <= bound + 1e-9

    train(spec, 2000, sched, seed=seed, keep_policies=False, callback=check)


# -- training ---------------------------------------------------------------------------

def test_train_t_zero():
    trace, out = train(random_mdp(15), 0, seed=1)
    assert len(trace) == 1 and trace.t_hat == 0
    assert np.allclose(out, 1 / 3)


def test_train_initial_policy_uniform_seven_actions():
    env = markov_eigenstate_env(rng=np.random.default_rng(0), n_mc=200)
    trace, _ = train(env, 3, seed=0)
    assert np.allclose(trace.policies[0], 1 / 7)


def test_train_trace_shape_and_determinism():
    spec = random_mdp(16)
    a, out_a = train(spec, 300, seed=5)
    b, out_b = train(spec, 300, seed=5)
    assert len(a) == 301 and np.all(a.q_error >= 0)
    assert np.array_equal(a.avg_reward, b.avg_reward) and np.array_equal(out_a, out_b)
    assert a.avg_reward[0] == 0.0


def test_t_hat_distribution():
    sched = Schedules()
    T = 10
    betas = np.array([sched.beta(i) for i in range(T + 1)])
    hits = np.bincount([train(one_state(), T, sched, seed=s, keep_policies=False)[0].t_hat
                        for s in range(1200)], minlength=T + 1) / 1200
    assert np.allclose(hits, betas / betas.sum(), atol=0.04)


def test_invalid_schedule():
    with pytest.raises(DomainError):
        Schedules(alpha_exp=-1.0)
    with pytest.raises(DomainError):
        train(one_state(), -1)


@pytest.mark.parametrize("name", sorted(HAND_MDPS))
def test_hand_mdps_greedy_match(name):
    spec = HAND_MDPS[name]()
    best = value_iteration_oracle(spec).argmax(axis=1)
    for seed in range(2):
        trace, _ = train(spec, 10_000, seed=seed, keep_policies=False)
        assert np.array_equal(trace.final_q.argmax(axis=1), best)


@pytest.mark.xfail(strict=True, reason="global diminishing step sizes with a 1% exploration floor can starve "
                                       "a rarely visited action; see the decisions ledger")
def test_any_two_by_two_mdp_five_seeds():
    spec = counterexample()
    best = value_iteration_oracle(spec).argmax(axis=1)
    for seed in range(5):
        trace, _ = train(spec, 10_000, seed=seed, keep_policies=False)
        assert np.array_equal(trace.final_q.argmax(axis=1), best)


# -- environment ------------------------------------------------------------------------

def test_eigenstate_env_shape_and_noop():
    env = markov_eigenstate_env(rng=np.random.default_rng(1), n_mc=300)
    spec = env.spec
    assert (spec.n_states, spec.n_actions) == (12, 7)
    assert np.max(np.abs(spec.kernel.sum(axis=2) - 1)) <= 1e-12
    for s in range(12):
        assert spec.kernel[s, 0, s] == 1.0
    assert np.allclose(spec.rewards[:, 0], spec.rewards[0, 0])
    assert np.all(np.abs(spec.rewards) <= 2 * R_CAP)


# -- trace files ------------------------------------------------------------------------

def test_trace_round_trip(tmp_path):
    trace, _ = train(random_mdp(17), 50, seed=2, keep_policies=False)
    path = tmp_path / "trace.csv"
    write_csv(path, TRACE_COLUMNS, trace_rows(trace))
    back = read_trace(path)
    assert np.array_equal(back["iteration"], trace.iteration)
    for col in ("avg_reward", "q_error", "avg_policy"):
        assert np.array_equal(back[col], getattr(trace, col))
    assert b"\r" not in path.read_bytes()


def test_estimator_wrapper():
    spec = HAND_MDPS["three-state"]()
    est = NaturalActorCritic(n_iter=10_000, random_state=0).fit(spec)
    assert np.array_equal(est.predict([0, 1, 2]), value_iteration_oracle(spec).argmax(axis=1))
    assert est.get_params()["n_iter"] == 10_000
    with pytest.raises(DomainError):
        est.predict([5])
