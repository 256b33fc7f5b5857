"""Config-driven experiment runner.

Every experiment writes comma-separated text outputs, the resolved config
(``config.ini``) and ``manifest.json`` (config hash, seed, version and a
sha256 per output file) into the output directory. Outputs depend only on
the config and the seed.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import itertools
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import LinearDynamics, LinkBudget, NetworkGeometry, sample_snrs, secrecy_rate
from .exceptions import ConfigError, DomainError, NumericalError, SopToolsError, UndefinedBoundError
from .pencil import Circle, Keyhole, MatrixPencil, count_eigs_contour, count_inside, direct_eig_oracle
from .pencil import MAX_ORACLE_DIM
from .policy import EigenEnsemble, Schedules, markov_eigenstate_env, train
from .possibilistic import (
    HoldingTime,
    PossibilisticGraph,
    PossibilisticKernel,
    SemiMarkovSpec,
    chain_joint,
    simulate_semi_markov,
)
from .projection import ProjectionBounds, f_margin, jl_tail_experiment, proj, trace_inequality
from .textio import (
    TRACE_COLUMNS,
    parse_graph,
    parse_kernel,
    parse_matrix,
    sha256_file,
    trace_rows,
    write_csv,
    write_manifest,
)
from .volume import (
    EmpiricalDistribution,
    empirical_sop,
    greedy_search,
    secrecy_throughput,
    sop_convex_bound,
    traditional_sop,
)

KINDS = ("sop-table", "count-eigs", "project", "jl-tail", "train", "possim", "complexity-table")

# -- config schema -------------------------------------------------------------------

_GEOMETRY = {
    "eve_offset_d": ("float", "150.0"),
    "path_loss_exponent": ("float", "3.0"),
    "transmit_power": ("float", "1.0"),
    "noise_var_bob": ("float", "1e-07"),
    "noise_var_eve": ("float", "1e-07"),
    "antennas": ("int", "1"),
    "combining": ("str", "scalar"),
}

SCHEMA = {
    "sop-table": {
        **_GEOMETRY,
        "n_samples": ("int", "100000"),
        "info_levels": ("floats", "0.0, 0.5, 1.0"),
        "rhos": ("floats", "0.1, 0.2"),
    },
    "count-eigs": {
        "matrix_b": ("str", "0.5 0\n0 2"),
        "matrix_a": ("str", "1 0\n0 1"),
        "contour": ("str", "circle"),
        "center_re": ("float", "0.0"),
        "center_im": ("float", "0.0"),
        "radius": ("float", "1.0"),
        "radius_rule": ("str", "fixed"),
        "rho": ("float", "0.0"),
        "prob": ("float", "0.0"),
        "radius_slope_rho": ("float", "1.0"),
        "radius_slope_prob": ("float", "1.0"),
        "inner_radius": ("float", "0.1"),
        "slit_angle": ("float", repr(float(np.pi))),
        "slit_half_width": ("float", "0.05"),
        "nodes": ("int", "128"),
    },
    "project": {
        "theta_min": ("float", "-1.0"),
        "theta_max": ("float", "1.0"),
        "eta": ("float", "0.1"),
        "theta": ("floats", "-0.97, -0.5, 0.0, 0.5, 0.95"),
        "big_theta": ("floats", "-1.0, 1.0, 1.0, 1.0, 1.0"),
        "trials": ("int", "10000"),
        "dim": ("int", "4"),
    },
    "jl-tail": {
        "n": ("int", "100"),
        "ks": ("ints", "5, 10, 20, 40"),
        "tau2s": ("floats", "0.2, 0.5, 0.8"),
        "trials": ("int", "100000"),
        "method": ("str", "rotation"),
    },
    "train": {
        "iterations": ("int", "5000"),
        "u0": ("int", "5"),
        "v0": ("int", "7"),
        "beta": ("float", "2.0"),
        "discount": ("float", "0.9"),
        "jitter": ("float", "0.1"),
        "n_mc": ("int", "4000"),
        "alpha_exp": ("float", "0.6"),
        "beta_exp": ("float", "0.8"),
        "eps_floor": ("float", "0.01"),
        "eps_scale": ("float", "0.5"),
        "window": ("int", "500"),
    },
    "possim": {
        "modes": ("strs", "stable, unstable"),
        "kernel": ("str", "stable stable 1\nunstable stable 0.6\nstable unstable 1\nunstable unstable 0.3"),
        "holding_kind": ("str", "exponential"),
        "holding_means": ("floats", "5.0, 5.0"),
        "a1": ("floats", "0.5, 1.2"),
        "a2": ("float", "1.0"),
        "a3": ("float", "1.0"),
        "noise_vars": ("floats", "0.0, 0.0, 0.0"),
        "horizon": ("float", "100.0"),
        "dt": ("float", "1.0"),
        "x0": ("float", "1.0"),
        "initial_mode": ("str", ""),
        "graph": ("str", ""),
    },
    "complexity-table": {
        **_GEOMETRY,
        "n_samples": ("int", "20000"),
        "n_thresholds": ("int", "3"),
        "grid_size": ("int", "64"),
        "t": ("float", "1.0"),
        "iterations": ("ints", "0, 50, 100"),
    },
}


def _parse(kind, raw, key):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "strs":
            return [v.strip() for v in raw.split(",") if v.strip()]
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc


def _render(kind, value):
    if kind == "float":
        return repr(value)
    if kind in ("floats", "ints"):
        return ", ".join(repr(v) for v in value)
    if kind == "strs":
        return ", ".join(value)
    if kind == "str" and "\n" in value:
        return "\n" + "\n".join("    " + line for line in value.splitlines())
    return str(value)


class ExperimentConfig:
    """Resolved experiment: kind, seed and a fully populated parameter block."""

    def __init__(self, kind, seed=0, params=None):
        if kind not in SCHEMA:
            raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}")
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        schema = SCHEMA[kind]
        params = dict(params or {})
        unknown = sorted(set(params) - set(schema))
        if unknown:
            raise ConfigError(f"unknown key(s) for {kind}: {', '.join(unknown)}")
        resolved = {}
        for key, (typ, default) in schema.items():
            val = params.get(key, default)
            resolved[key] = _parse(typ, val, key) if isinstance(val, str) else val
        self.kind = kind
        self.seed = int(seed)
        self.params = resolved

    @classmethod
    def from_text(cls, text, kind=None, seed=None):
        cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
        extra = sorted(set(exp) - {"kind", "seed"})
        if extra:
            raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(extra)}")
        file_kind = exp.get("kind")
        if kind is not None and file_kind is not None and file_kind != kind:
            raise ConfigError(f"config is for {file_kind!r}, not {kind!r}")
        kind = kind or file_kind
        if kind is None:
            raise ConfigError("no experiment kind given")
        others = [s for s in cp.sections() if s not in ("experiment", kind)]
        if others:
            raise ConfigError(f"unknown section(s): {', '.join(others)}")
        if seed is None:
            seed = _parse("int", exp.get("seed", "0"), "seed")
        params = dict(cp[kind]) if cp.has_section(kind) else {}
        return cls(kind, seed, params)

    def to_text(self):
        lines = ["[experiment]", f"kind = {self.kind}", f"seed = {self.seed}", "", f"[{self.kind}]"]
        for key, (typ, _) in SCHEMA[self.kind].items():
            val = _render(typ, self.params[key])
            lines.append(f"{key} =" + (val if val.startswith("\n") or not val else " " + val))
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()


# -- emitters -----------------------------------------------------------------------

def emit_training_trace(trace, path):
    """Write the ``iteration, avg_reward, q_error, avg_policy`` table."""
    if len(trace) == 0:
        raise DomainError("empty trace")
    write_csv(path, TRACE_COLUMNS, trace_rows(trace))
    return Path(path)


def _ratio_rows(proxy, volume, field):
    row = []
    for a, b in zip(proxy, volume):
        if a["max_iter"] != b["max_iter"]:
            raise DomainError("runs must share the iteration grid")
        if b[field] == 0:
            raise NumericalError(f"{field} of the expected-volume run is zero at {b['max_iter']} iterations")
        row += [a["max_iter"], a[field] / b[field]]
    return row


def emit_complexity_accuracy(proxy_runs, volume_runs, out_dir):
    """Ratio tables (proxy objective over expected-volume objective).

    Each run is a mapping with ``max_iter``, ``complexity`` and ``accuracy``;
    the two lists must cover the same iteration grid. Writes ``table3.csv``
    (complexity) and ``table4.csv`` (accuracy), one ``(iterations, ratio)``
    column pair per grid point.
    """
    if len(proxy_runs) != len(volume_runs) or not proxy_runs:
        raise DomainError("need matching, non-empty run lists")
    header = list(itertools.chain.from_iterable(
        (f"iterations_{i}", f"ratio_{i}") for i in range(len(proxy_runs))))
    out = []
    for name, field in (("table3.csv", "complexity"), ("table4.csv", "accuracy")):
        path = Path(out_dir, name)
        write_csv(path, header, [_ratio_rows(proxy_runs, volume_runs, field)])
        out.append(path)
    return out


def contour_radius(rho, prob, base=1.0, slope_rho=1.0, slope_prob=1.0):
    """Default hook mapping ``(rho, Pr)`` to a contour radius: an affine map."""
    return base + slope_rho * rho + slope_prob * prob


# -- experiments ---------------------------------------------------------------------

def _geometry(p):
    geo = NetworkGeometry(eve_offset_d=p["eve_offset_d"], path_loss_exponent=p["path_loss_exponent"])
    budget = LinkBudget(p["transmit_power"], p["noise_var_bob"], p["noise_var_eve"])
    return geo, budget


def _snr_draws(p, seed):
    geo, budget = _geometry(p)
    return sample_snrs(geo, budget, p["n_samples"], seed, size=p["antennas"], combining=p["combining"])


def _sop_table(cfg, out, hooks):
    p = cfg.params
    levels, rhos = p["info_levels"], p["rhos"]
    if not levels or not rhos:
        raise ConfigError("info_levels and rhos must be non-empty")
    gb, ge = _snr_draws(p, cfg.seed)
    dist = EmpiricalDistribution(secrecy_rate(gb, ge))
    probs = [float(empirical_sop(dist, lv)) for lv in levels]
    header = ["kind", "rho"] + list(itertools.chain.from_iterable(
        (f"I_{i}", f"value_{i}") for i in range(len(levels))))
    rows, long_rows = [], []
    for rho in rhos:
        row = ["our", rho]
        for lv, pr in zip(levels, probs):
            if pr == 0:
                raise UndefinedBoundError(f"Pr(L >= {lv}) is zero; bound undefined")
            val = sop_convex_bound(rho, pr)
            row += [lv, val]
            long_rows.append(("our", rho, lv, pr, val))
        rows.append(row)
    row = ["traditional", ""]
    for lv in levels:
        val = traditional_sop(gb, ge, lv)
        row += [lv, val]
        long_rows.append(("traditional", "", lv, "", val))
    rows.append(row)
    write_csv(out / "table2.csv", header, rows)
    write_csv(out / "table2_long.csv", ["kind", "rho", "info_level", "prob_at_least", "value"], long_rows)
    return ["table2.csv", "table2_long.csv"]


def _count_eigs(cfg, out, hooks):
    p = cfg.params
    pencil = MatrixPencil(parse_matrix(p["matrix_b"]), parse_matrix(p["matrix_a"]))
    if p["radius_rule"] == "fixed":
        radius = p["radius"]
    elif p["radius_rule"] == "linear":
        hook = hooks.get("radius", contour_radius)
        radius = float(hook(p["rho"], p["prob"], p["radius"], p["radius_slope_rho"], p["radius_slope_prob"]))
    else:
        raise ConfigError("radius_rule must be 'fixed' or 'linear'")
    center = complex(p["center_re"], p["center_im"])
    if p["contour"] == "circle":
        contour = Circle(center, radius, p["nodes"])
    elif p["contour"] == "keyhole":
        contour = Keyhole(radius, p["inner_radius"], p["slit_angle"], p["slit_half_width"], center, p["nodes"])
    else:
        raise ConfigError("contour must be 'circle' or 'keyhole'")
    res = count_eigs_contour(pencil, contour)
    oracle = count_inside(direct_eig_oracle(pencil), contour) if pencil.n <= MAX_ORACLE_DIM else ""
    write_csv(out / "count.csv",
              ["count", "residual", "nodes", "raw_re", "raw_im", "radius", "oracle_count"],
              [(res.count, res.residual, res.nodes, res.raw_integral.real, res.raw_integral.imag,
                radius, oracle)])
    return ["count.csv"]


def _project(cfg, out, hooks):
    p = cfg.params
    bounds = ProjectionBounds(p["theta_min"], p["theta_max"], p["eta"])
    theta, big = np.asarray(p["theta"]), np.asarray(p["big_theta"])
    if theta.shape != big.shape or theta.size == 0:
        raise ConfigError("theta and big_theta need equal, non-zero length")
    f = np.atleast_1d(f_margin(theta, bounds))
    pr = np.atleast_1d(proj(theta, big, bounds))
    write_csv(out / "projected.csv", ["theta", "big_theta", "f", "proj"], zip(theta, big, f, pr))
    rng = np.random.default_rng(cfg.seed)
    lo, hi, eta = p["theta_min"], p["theta_max"], p["eta"]
    worst = -np.inf
    nonpos = 0
    for _ in range(p["trials"]):
        th = rng.uniform(lo, hi, (p["dim"], 1))
        star = rng.uniform(lo + eta, hi - eta, (p["dim"], 1))
        val = trace_inequality(th, star, rng.standard_normal((p["dim"], 1)), bounds)
        worst = max(worst, val)
        nonpos += val <= 0
    write_csv(out / "trace_check.csv", ["trials", "max_value", "non_positive"], [(p["trials"], worst, nonpos)])
    return ["projected.csv", "trace_check.csv"]


def _jl_tail(cfg, out, hooks):
    p = cfg.params
    ss = np.random.SeedSequence(cfg.seed)
    s_pts, s_cells = ss.spawn(2)
    pts = np.random.default_rng(s_pts).standard_normal((2, p["n"]))
    cells = list(itertools.product(p["ks"], p["tau2s"]))
    rows = []
    for (k, tau2), child in zip(cells, s_cells.spawn(len(cells))):
        r = jl_tail_experiment(pts[0], pts[1], k, tau2, p["trials"], np.random.default_rng(child), p["method"])
        rows.append((k, tau2, r.tau1, r.empirical_freq, r.analytic_bound, r.std_error, r.holds))
    write_csv(out / "jl_tail.csv",
              ["k", "tau2", "tau1", "empirical_freq", "analytic_bound", "std_error", "holds"], rows)
    return ["jl_tail.csv"]


def _train(cfg, out, hooks):
    p = cfg.params
    ens = EigenEnsemble(p["u0"], p["v0"], p["beta"])
    s_env, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    env = markov_eigenstate_env(ens, np.random.default_rng(s_env), n_mc=p["n_mc"],
                                jitter=p["jitter"], discount=p["discount"])
    sched = Schedules(p["alpha_exp"], p["beta_exp"], p["eps_floor"], p["eps_scale"])
    # train() spawns the same (environment, run) pair from the seed and uses the second
    trace, output = train(env, p["iterations"], sched, cfg.seed, window=p["window"], keep_policies=False)
    emit_training_trace(trace, out / "trace.csv")
    header = ["state"] + [f"action_{a}" for a in range(output.shape[1])]
    write_csv(out / "policy.csv", header, [[s, *row] for s, row in enumerate(output)])
    write_csv(out / "summary.csv", ["t_hat", "final_avg_reward", "final_q_error"],
              [(trace.t_hat, trace.avg_reward[-1], trace.q_error[-1])])
    return ["trace.csv", "policy.csv", "summary.csv"]


def _possim(cfg, out, hooks):
    p = cfg.params
    modes = p["modes"]
    n = len(modes)
    if len(p["holding_means"]) != n or len(p["a1"]) != n:
        raise ConfigError("holding_means and a1 need one entry per mode")
    _, table = parse_kernel(p["kernel"], modes)
    noise = tuple(p["noise_vars"])
    dyn = {m: LinearDynamics([[a]], [[p["a2"]]], [[p["a3"]]], noise) for m, a in zip(modes, p["a1"])}
    hold = {m: HoldingTime(p["holding_kind"], h) for m, h in zip(modes, p["holding_means"])}
    spec = SemiMarkovSpec(tuple(modes), dyn, hold, PossibilisticKernel(table))
    init = p["initial_mode"] or None
    if init is not None and init not in modes:
        raise ConfigError(f"initial_mode {init!r} is not a mode")
    traj = simulate_semi_markov(spec, p["horizon"], cfg.seed, init, [p["x0"]], True, p["dt"])
    seg_rows, state_rows = [], []
    start = 0.0
    for i, mode in enumerate(traj.modes):
        jump = traj.jump_times[i] if i < traj.jump_times.size else ""
        seg_rows.append((i, mode, start, jump, float(np.abs(traj.states[i][-1]).max())))
        for step, x in enumerate(traj.states[i]):
            state_rows.append((i, step, *np.atleast_1d(x)))
        if jump != "":
            start = float(jump)
    write_csv(out / "segments.csv", ["segment", "mode", "start_time", "jump_time", "final_abs_state"], seg_rows)
    write_csv(out / "states.csv", ["segment", "step", "x_0"], state_rows)
    files = ["segments.csv", "states.csv"]
    if p["graph"]:
        parents, domains, tables = parse_graph(p["graph"])
        graph = PossibilisticGraph(parents, domains, tables)
        nodes = list(graph.order)
        rows = []
        for vals in itertools.product(*(domains[v] for v in nodes)):
            rows.append((*vals, chain_joint(graph, dict(zip(nodes, vals)))))
        write_csv(out / "graph_joint.csv", [*nodes, "possibility"], rows)
        files.append("graph_joint.csv")
    return files


def _complexity_table(cfg, out, hooks):
    p = cfg.params
    gb, ge = _snr_draws(p, cfg.seed)
    dist = EmpiricalDistribution(secrecy_rate(gb, ge))
    runs = {"sop-volume-proxy": [], "expected-volume": []}
    detail = []
    for obj, lst in runs.items():
        for it in p["iterations"]:
            if it < 0:
                raise ConfigError("iterations must be non-negative")
            res = greedy_search(dist, p["n_thresholds"], obj, p["grid_size"], p["t"], it)
            acc = secrecy_throughput(dist, res.thresholds)
            lst.append({"max_iter": it, "complexity": res.n_evaluations, "accuracy": acc})
            detail.append((obj, it, res.n_iter, res.n_evaluations, res.value, acc,
                           " ".join(repr(float(v)) for v in res.thresholds.thresholds)))
    emit_complexity_accuracy(runs["sop-volume-proxy"], runs["expected-volume"], out)
    write_csv(out / "complexity_detail.csv",
              ["objective", "max_iter", "n_iter", "n_evaluations", "objective_value", "throughput", "thresholds"],
              detail)
    return ["table3.csv", "table4.csv", "complexity_detail.csv"]


RUNNERS = {
    "sop-table": _sop_table,
    "count-eigs": _count_eigs,
    "project": _project,
    "jl-tail": _jl_tail,
    "train": _train,
    "possim": _possim,
    "complexity-table": _complexity_table,
}


def run(config: ExperimentConfig, out_dir, hooks=None):
    """Run one experiment; returns the manifest dictionary.

    ``hooks`` may supply ``"radius"``, a callable ``(rho, prob, base,
    slope_rho, slope_prob) -> radius`` used by ``count-eigs`` under
    ``radius_rule = linear``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config.to_text(), newline="\n")
    files = ["config.ini"] + RUNNERS[config.kind](config, out, hooks or {})
    manifest = {
        "kind": config.kind,
        "seed": config.seed,
        "config_sha256": config.digest(),
        "version": __version__,
        "files": {name: sha256_file(out / name) for name in files},
    }
    write_manifest(out, manifest)
    return manifest


# -- entry point ---------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="soptools", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + KINDS:
        sp = sub.add_parser(name, help="experiment from --config" if name == "run" else f"{name} experiment")
        sp.add_argument("--config", type=Path, required=name == "run", help="INI file")
        sp.add_argument("--seed", type=int, default=None, help="overrides [experiment] seed")
        sp.add_argument("--out", type=Path, default=Path("soptools-out"), help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        kind = None if args.command == "run" else args.command
        if args.config is not None:
            text = args.config.read_text()
        elif kind is not None:
            text = ""
        else:
            raise ConfigError("run needs --config")
        cfg = ExperimentConfig.from_text(text, kind=kind, seed=args.seed)
        manifest = run(cfg, args.out)
    except NumericalError as exc:
        print(f"soptools: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, SopToolsError, OSError) as exc:
        print(f"soptools: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(manifest['files'])} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
