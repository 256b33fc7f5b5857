"""Acceptance criteria, one test each. Every test prints a single
``PASS <name>: detail`` or ``FAIL <name>: detail`` line and then asserts."""
import itertools
import math
import time

import numpy as np
import pytest

from _mdps import HAND_MDPS
from conftest import ACCEPTANCE_LINES
from soptools.cli import KINDS, ExperimentConfig, run
from soptools.pencil import (
    Circle,
    Keyhole,
    MatrixPencil,
    count_eigs_contour,
    count_inside,
    davis_kahan_check,
    direct_eig_oracle,
)
from soptools.policy import Schedules, train, value_iteration_oracle
from soptools.possibilistic import (
    PossibilityDistribution,
    age_example_check,
    max_chain,
    necessity_of,
    possibility_of,
)
from soptools.projection import (
    ProjectionBounds,
    f_margin,
    jl_tail_experiment,
    proj,
    trace_inequality,
)
from soptools.textio import TRACE_COLUMNS, read_csv, read_trace
from soptools.volume import chernoff_relation, mgf_mean_bound, vitale_check, volume_of


pytestmark = pytest.mark.acceptance


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def random_pencil(rng, n):
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return MatrixPencil(b, a)


def test_contour_count_exactness():
    start = time.perf_counter()
    bad, worst = [], 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = random_pencil(rng, int(rng.integers(1, 13)))
        eig = direct_eig_oracle(p)
        for r in (0.5, 1.0, 2.0):
            c = Circle(0, r)
            res = count_eigs_contour(p, c)
            worst = max(worst, res.residual)
            if res.count != count_inside(eig, c) or res.residual >= 0.25:
                bad.append((seed, r))
    elapsed = time.perf_counter() - start
    report("contour-count", not bad and elapsed < 10.0,
           f"300 counts, mismatches={bad}, max residual={worst:.2e}, {elapsed:.2f}s (< 10s)")


def test_keyhole_circle_agreement():
    bad = []
    for seed in range(50):
        rng = np.random.default_rng(500 + seed)
        p = random_pencil(rng, int(rng.integers(2, 13)))
        eig = direct_eig_oracle(p)
        inside = eig[np.abs(eig) < 1.2]
        # slit direction away from every enclosed eigenvalue, inner disk below the smallest modulus
        phis = np.linspace(-np.pi, np.pi, 73)
        gaps = [np.min(np.abs(np.angle(np.exp(1j * (np.angle(inside) - f))))) if inside.size else np.pi for f in phis]
        phi = phis[int(np.argmax(gaps))]
        k = Keyhole(1.2, min(0.5 * np.abs(eig).min(), 0.6), phi, 0.05)
        same_region = count_inside(eig, k) == count_inside(eig, Circle(0, 1.2))
        if not same_region or count_eigs_contour(p, k).count != count_eigs_contour(p, Circle(0, 1.2)).count:
            bad.append(seed)
    report("keyhole-circle", not bad, f"50 pencils, disagreements={bad}")


def test_chernoff_chain():
    rng = np.random.default_rng(3)
    worst, n_checks, mean_ok = math.inf, 0, True
    makers = [lambda r: r.exponential(1.0, 2000), lambda r: r.normal(0.5, 1.0, 2000),
              lambda r: r.uniform(-1, 3, 2000), lambda r: np.log1p(r.exponential(5.0, 2000))]
    for i in range(20):
        x = makers[i % 4](rng)
        grid = np.linspace(x.min(), x.max(), 10)
        for t in (0.1, 0.5, 1.0, 2.0):
            for lam in grid:
                worst = min(worst, chernoff_relation(x, t, lam).slack)
                n_checks += 1
            nonneg = np.abs(x)
            mean_ok &= mgf_mean_bound(nonneg, t).holds
    # t -> 0: the mean bound approaches E[L] with a remainder of order t
    x = np.abs(rng.normal(1.0, 1.0, 2000))
    rem = [(r.rhs - r.lhs) / t for t in (1e-2, 1e-3, 1e-4) for r in [mgf_mean_bound(x, t)]]
    m2 = float(np.mean(x * x)) / 2
    taylor_ok = all(0 <= v <= 1.1 * m2 * math.exp(0.01 * x.max()) for v in rem) and abs(rem[-1] - m2) < 1e-3 * m2 + 1e-6
    report("chernoff-chain", worst >= -1e-9 and mean_ok and taylor_ok,
           f"{n_checks} checks, min slack={worst:.3e}, mean bound holds={mean_ok}, remainder/t -> E[L^2]/2 ok={taylor_ok}")


def test_volume_calibration():
    rng = np.random.default_rng(4)
    errs = {}
    for s in (0.5, 1.0, 2.0):
        errs[f"N(0,{s})"] = volume_of(rng.normal(0, s, 100_000)).volume / (math.sqrt(2 * math.pi * math.e) * s) - 1
    for a, b in ((0.0, 1.0), (-2.0, 3.0), (10.0, 10.5)):
        errs[f"U({a},{b})"] = volume_of(rng.uniform(a, b, 100_000)).volume / (b - a) - 1
    worst = max(abs(v) for v in errs.values())
    report("volume-calibration", worst < 0.05, f"max relative error {worst:.4f} (< 0.05)")


def test_vitale():
    rng = np.random.default_rng(5)
    fails, worst = [], math.inf
    for i in range(50):
        k = int(rng.integers(2, 6))
        batches = []
        for _ in range(k):
            size = int(rng.integers(500, 3000))
            kind = rng.integers(3)
            loc, scale = rng.uniform(-3, 3), rng.uniform(0.2, 3)
            batches.append(rng.normal(loc, scale, size) if kind == 0 else
                           rng.uniform(loc, loc + scale, size) if kind == 1 else loc + rng.exponential(scale, size))
        r = vitale_check(batches, n_se=3.0)
        worst = min(worst, r.slack / r.std_error if r.std_error else math.inf)
        if not r.holds:
            fails.append(i)
    report("vitale", not fails, f"50 configurations, failures={fails}, min slack/SE={worst:.2f} (>= -3)")


def test_jl_tail():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    n = 100
    v_i, v_j = rng.standard_normal(n), rng.standard_normal(n)
    ss = np.random.SeedSequence(6).spawn(12)
    fails, margin = [], math.inf
    for seed, (k, tau2) in zip(ss, itertools.product((5, 10, 20, 40), (0.2, 0.5, 0.8))):
        r = jl_tail_experiment(v_i, v_j, k, tau2, trials=100_000, seed=seed)
        margin = min(margin, r.analytic_bound + 3 * r.std_error - r.empirical_freq)
        if not r.holds:
            fails.append((k, tau2))
    elapsed = time.perf_counter() - start
    report("jl-tail", not fails and elapsed < 60.0,
           f"12 cells x 1e5 trials, failures={fails}, min margin={margin:.3e}, {elapsed:.2f}s (< 60s)")


def test_projection_operator():
    b = ProjectionBounds(-1.0, 1.0, 0.1)
    anchors = [abs(f_margin(1.0, b) - 1), abs(f_margin(-1.0, b) - 1), abs(f_margin(-0.9, b)), abs(f_margin(0.9, b))]
    rng = np.random.default_rng(7)
    interior = rng.uniform(-0.9, 0.9, 1000)
    bigs = rng.normal(0, 5, 1000)
    identity = bool(np.all(proj(interior, bigs, b) == bigs))
    worst = -math.inf
    for _ in range(10_000):
        th = rng.uniform(-1, 1, (4, 1))
        star = rng.uniform(-0.9, 0.9, (4, 1))
        worst = max(worst, trace_inequality(th, star, rng.normal(0, 3, (4, 1)), b))
    jump = max(abs(proj(e + 1e-9, big, b) - proj(e - 1e-9, big, b))
               for e in (-0.9, 0.9) for big in (-10.0, -1.0, 1.0, 10.0))
    ok = max(anchors) <= 1e-12 and identity and worst <= 0 and jump < 1e-6
    report("projection", ok, f"anchor error={max(anchors):.1e}, identity inside={identity}, "
                             f"max trace value={worst:.3e} over 1e4 trials, jump={jump:.1e}")


def test_actor_critic_correctness():
    sched = Schedules()
    misses, inv_fail = [], []
    for name, make in sorted(HAND_MDPS.items()):
        spec = make()
        best = value_iteration_oracle(spec).argmax(axis=1)
        for seed in range(5):
            broken = []

            def check(i, st, broken=broken, n_a=spec.n_actions):
                floor = sched.epsilon(max(i - 1, 0)) / n_a
                if (np.any(st.policy < 0) or np.max(np.abs(st.policy.sum(axis=1) - 1)) > 1e-12
                        or np.any(st.behavior < floor * (1 - 1e-12))):
                    broken.append(i)

            trace, _ = train(spec, 10_000, sched, seed=seed, keep_policies=False, callback=check)
            if not np.array_equal(trace.final_q.argmax(axis=1), best):
                misses.append((name, seed))
            if broken:
                inv_fail.append((name, seed, broken[0]))
    report("actor-critic", not misses and not inv_fail,
           f"3 MDPs x 5 seeds at T=1e4, greedy mismatches={misses}, invariant breaks={inv_fail}")


def test_reward_trend_shape(tmp_path):
    rows = []
    for seed in range(3):
        cfg = ExperimentConfig("train", seed, {"iterations": "5000", "window": "500"})
        run(cfg, tmp_path / str(seed))
        header, _ = read_csv(tmp_path / str(seed) / "trace.csv")
        tr = read_trace(tmp_path / str(seed) / "trace.csv")
        rows.append((tuple(header) == TRACE_COLUMNS and len(tr["iteration"]) == 5001,
                     tr["avg_reward"][500], tr["avg_reward"][5000]))
    ok = all(fmt and late > early for fmt, early, late in rows)
    report("reward-trend", ok, "; ".join(f"seed {i}: {e:.4f} -> {l:.4f}" for i, (_, e, l) in enumerate(rows)))


def test_possibility_calculus():
    rng = np.random.default_rng(8)
    bad = 0
    for trial in range(100):
        n = 1 + trial % 6
        v = rng.uniform(0, 1, n)
        v[rng.integers(n)] = 1.0
        d = PossibilityDistribution(v)
        full = frozenset(range(n))
        subs = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(range(n), r)]
        poss = {s: possibility_of(d, s) for s in subs}
        nec = {s: necessity_of(d, s) for s in subs}
        bad += poss[full] != 1.0 or poss[frozenset()] != 0.0
        nonneg = all(0.0 <= nec[s] <= 1.0 for s in subs)
        bad += not nonneg
        for a in subs:
            bad += nec[a] != 1.0 - poss[full - a] or (bool(a) and nec[a] > poss[a])
            for b in subs:
                bad += poss[a | b] != max(poss[a], poss[b]) or nec[a & b] != min(nec[a], nec[b])
    chain_bad = 0
    for trial in range(100):
        n1, n2, n3 = rng.integers(1, 5, 3)
        k21, k32 = rng.uniform(0, 1, (n1, n2)), rng.uniform(0, 1, (n2, n3))
        got = max_chain(k32, k21).table
        for s1, s3 in itertools.product(range(n1), range(n3)):
            w = max(k21[s1, s2] for s2 in range(n2))
            want = max(k32[s2, s3] * k21[s1, s2] for s2 in range(n2)) / w
            chain_bad += abs(got[s1, s3] - want) > 1e-15
    age = age_example_check()
    report("possibility", bad == 0 and chain_bad == 0 and age.adult_aged_or_middle == 1.0,
           f"axiom violations={bad}, chain mismatches={chain_bad}, adult={age.adult_aged_or_middle}")


def test_davis_kahan():
    rng = np.random.default_rng(9)
    fails, trials = [], 0
    while trials < 100:
        n = int(rng.integers(2, 8))
        ev = np.sort(rng.uniform(-3, 3, n))
        i = int(rng.integers(n))
        neighbours = [abs(ev[i] - ev[j]) for j in range(n) if j != i]
        if min(neighbours) <= 0.1:
            continue
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        m0 = q @ np.diag(ev) @ q.T
        e = rng.standard_normal((n, n))
        e = e + e.T
        e *= rng.uniform(0, 1e-2) / np.linalg.norm(e, 2)
        if not davis_kahan_check(m0, m0 + e, i).holds:
            fails.append(trials)
        trials += 1
    report("davis-kahan", not fails, f"100 trials, gap > 0.1, ||E|| <= 1e-2, failures={fails}")


@pytest.mark.parametrize("kind", KINDS)
def test_cli_determinism(kind, tmp_path):
    m1 = run(ExperimentConfig(kind, 7), tmp_path / "a")
    m2 = run(ExperimentConfig(kind, 7), tmp_path / "b")
    report(f"determinism[{kind}]", m1 == m2, f"{len(m1['files'])} files checksum-identical={m1 == m2}")
