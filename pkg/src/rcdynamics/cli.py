"""Command-line experiment runner.

Every run reads a JSON config, writes CSV/JSON artifacts named after the
content hash of the resolved config, and a manifest that is the only file
carrying a timestamp.
"""

import argparse
import datetime
import math
import os
import sys
from pathlib import Path

import numpy as np

from ._io import content_hash, dumps, write_csv, write_json
from .dynamics import evolve, grand_coupling, open_count_path, spd_trajectory_values, trajectory_values
from .exact import (CapExceeded, ENUM_CAP, MATRIX_CAP, exact_dt, exact_measure, generator,
                    reversibility_residual, spectral_gap, stationarity_residual, write_curve_csv)
from .infoperc import (BLUE, GREEN, RED, assemble_clusters, build_history, check_diagram,
                       diagram_record, reconstruction_check, red_probability_curve)
from .lattice import Graph, torus
from .percolations import REPORT_COLUMNS, connectivity_decay, domination_report, sandwich_violations
from .stream import RCParams, generate, replica_seeds

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_CAP = 0, 1, 2, 3
OUT_ENV = "RCDYN_OUT"


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------------

COMMON = {"d": 2, "p": 0.05, "q": 2.0, "seed": 0, "replicas": 100, "delta": None}
DEFAULTS = {
    "simulate": {"n": 8, "horizon": 20.0, "samples": 41},
    "exact": {"graph": "single_edge", "size": [2, 2], "times": [0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
              "enum_cap": ENUM_CAP, "matrix_cap": MATRIX_CAP},
    "percolations": {"n": 8, "windows": 10, "distances": [1, 2, 3, 4], "window": 1, "sandwich": True},
    "infoperc": {"n": 8, "m": 20, "m_list": [4, 8, 12, 16, 20, 24], "seed_edge": 0,
                 "particles": 2000, "dump": 1},
    "mixing": {"n_list": [8, 16], "epsilons": [0.25, 0.5, 0.75], "t_cap": 200.0},
    "gap": {"r_list": [6, 8], "t_obs": 200.0, "burn": 20.0, "dt": 0.1},
    "selftest": {"n": 5, "replicas": 20, "m": 12},
}

HELP_COLUMNS = """\
output files (HASH = first 12 hex digits of the config content hash):
  simulate      simulate-HASH-paths.csv       replica,start,t,open_edges
                simulate-HASH-histogram.csv   open_edges,count_full,count_empty
  exact         exact-HASH.json               partition_function, mu_open, gap, residuals, measure
                exact-HASH-curve.csv          t,dt,l2
  percolations  percolations-HASH-domination.csv  model,p,delta,frequency,bound,z_score,exact,ci_lo,ci_hi,trials
                percolations-HASH-decay.csv   distance,probability
                percolations-HASH.json        sandwich violation counts and decay fit
  infoperc      infoperc-HASH-colors.csv      replica,red,blue,green
                infoperc-HASH-red.csv         m,tau_m,probability,ci_lo,ci_hi
                infoperc-HASH-diagram-K.json  history levels and clusters of replica K
                infoperc-HASH.json            invariant violation totals and reconstruction counts
  mixing        mixing-HASH.csv               n,epsilon,t_mix,ci_lo,ci_hi,closed_form
                mixing-HASH.json              ratio, window and log-n fit
  gap           gap-HASH.csv                  r,lambda_hat,stderr
                gap-HASH.json                 spread of the two largest r, extrapolation
  selftest      selftest-HASH.json            pass/violation counts per invariant
every run also writes manifest-HASH.json (config, seed, files, timestamp).

exit codes: 0 ok, 1 invalid config, 2 invariant violation, 3 resource cap exceeded.
environment: RCDYN_OUT overrides the output directory.
"""


def resolve_config(sub, raw, seed=None):
    """Merge ``raw`` over the defaults of ``sub`` and validate."""
    if sub not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {sub!r}")
    allowed = dict(COMMON)
    allowed.update(DEFAULTS[sub])
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(allowed)
    cfg.update(raw)
    if seed is not None:
        cfg["seed"] = seed
    _validate(cfg)
    return cfg


def _validate(cfg):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(isinstance(cfg["p"], (int, float)) and 0 < cfg["p"] < 1, "p must lie in (0, 1)")
    need(isinstance(cfg["q"], (int, float)) and cfg["q"] >= 1, "q must be >= 1")
    need(cfg["d"] in (1, 2, 3), "d must be 1, 2 or 3")
    need(isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2 ** 64, "seed must be an unsigned 64-bit integer")
    need(isinstance(cfg["replicas"], int) and cfg["replicas"] >= 1, "replicas must be a positive integer")
    need(cfg["delta"] is None or cfg["delta"] > 0, "delta must be positive")
    for key in ("n",):
        if key in cfg:
            need(isinstance(cfg[key], int) and cfg[key] >= 3, "n must be an integer >= 3")
    if "n_list" in cfg:
        ns = cfg["n_list"]
        need(len(ns) >= 1 and all(isinstance(v, int) and v >= 3 for v in ns), "n_list entries must be integers >= 3")
        need(list(ns) == sorted(set(ns)), "n_list must be strictly increasing")
    if "r_list" in cfg:
        need(len(cfg["r_list"]) >= 2 and all(isinstance(v, int) and v >= 4 for v in cfg["r_list"]),
             "r_list needs at least two integers >= 4")
    if "epsilons" in cfg:
        need(all(0 < e < 1 for e in cfg["epsilons"]), "epsilons must lie in (0, 1)")
    if "m" in cfg:
        need(isinstance(cfg["m"], int) and cfg["m"] >= 2, "m must be an integer >= 2")
    if "m_list" in cfg:
        need(all(isinstance(v, int) and v >= 2 for v in cfg["m_list"]), "m_list entries must be integers >= 2")
    if "horizon" in cfg:
        need(cfg["horizon"] > 0, "horizon must be positive")
    if "graph" in cfg:
        need(cfg["graph"] in ("single_edge", "path", "cycle", "grid"), "graph must be single_edge, path, cycle or grid")


def _params(cfg):
    return RCParams(float(cfg["p"]), float(cfg["q"]), d=cfg["d"], delta=cfg["delta"])


def _micro_graph(cfg):
    kind, size = cfg["graph"], cfg["size"]
    if kind == "single_edge":
        return Graph.single_edge()
    if kind == "path":
        return Graph.path(int(size[0]))
    if kind == "cycle":
        return Graph.cycle(int(size[0]))
    return Graph.grid(int(size[0]), int(size[1]))


# -- subcommands ---------------------------------------------------------------------------

def run_simulate(cfg, out, tag, threads):
    params = _params(cfg)
    geom = torus(cfg["d"], cfg["n"])
    times = np.linspace(0.0, cfg["horizon"], cfg["samples"])
    rows = []
    finals = {"full": [], "empty": []}
    for r, s in enumerate(replica_seeds(cfg["seed"], cfg["replicas"])):
        stream = generate(geom, cfg["horizon"], s, materialize=False)
        for name, x0 in (("full", geom.full()), ("empty", geom.empty())):
            counts = open_count_path(geom, x0, params, stream, 0.0, times)
            rows += [{"replica": r, "start": name, "t": t, "open_edges": int(c)} for t, c in zip(times, counts)]
            finals[name].append(int(counts[-1]))
    nb = geom.n_edges + 1
    hf = np.bincount(finals["full"], minlength=nb)
    he = np.bincount(finals["empty"], minlength=nb)
    hist = [{"open_edges": k, "count_full": int(hf[k]), "count_empty": int(he[k])}
            for k in range(nb) if hf[k] or he[k]]
    files = [f"simulate-{tag}-paths.csv", f"simulate-{tag}-histogram.csv"]
    write_csv(out / files[0], rows, ["replica", "start", "t", "open_edges"])
    write_csv(out / files[1], hist, ["open_edges", "count_full", "count_empty"])
    return files, {}


def run_exact(cfg, out, tag, threads):
    g = _micro_graph(cfg)
    p, q = float(cfg["p"]), float(cfg["q"])
    mu = exact_measure(g, p, q, cap=cfg["enum_cap"])
    Q = generator(g, p, q, cap=cfg["matrix_cap"])
    gap = spectral_gap(Q, mu.probs)
    times = np.asarray(cfg["times"], float)
    dt, l2 = exact_dt(Q, mu.probs, times)
    record = {
        "graph": g.name, "n_edges": g.n_edges, "p": p, "q": q,
        "partition_function": mu.partition_function,
        "mu_open": mu.marginal(0),
        "marginals": [mu.marginal(e) for e in range(g.n_edges)],
        "gap": gap,
        "stationarity_residual": stationarity_residual(Q, mu.probs),
        "reversibility_residual": reversibility_residual(Q, mu.probs),
        "measure": {format(s, "x"): float(v) for s, v in enumerate(mu.probs)},
    }
    files = [f"exact-{tag}.json", f"exact-{tag}-curve.csv"]
    write_json(out / files[0], record)
    write_curve_csv(out / files[1], times, dt, l2)
    return files, {}


def run_percolations(cfg, out, tag, threads):
    params = _params(cfg)
    geom = torus(cfg["d"], cfg["n"])
    rows, sandwich = domination_report(geom, params, cfg["windows"], cfg["replicas"], cfg["seed"],
                                       sandwich=cfg["sandwich"])
    decay = connectivity_decay(geom, params, cfg["replicas"], cfg["distances"], cfg["seed"], cfg["window"])
    files = [f"percolations-{tag}-domination.csv", f"percolations-{tag}-decay.csv", f"percolations-{tag}.json"]
    write_csv(out / files[0], rows, REPORT_COLUMNS)
    write_csv(out / files[1], [{"distance": int(k), "probability": float(v)}
                               for k, v in zip(decay.distances, decay.probabilities)],
              ["distance", "probability"])
    write_json(out / files[2], {"sandwich_violations": sandwich, "decay_slope": decay.slope,
                                "decay_intercept": decay.intercept, "decay_r2": decay.r2,
                                "decay_samples": decay.samples})
    return files, {"sandwich": sum(sandwich.values())}


def run_infoperc(cfg, out, tag, threads):
    params = _params(cfg)
    geom = torus(cfg["d"], cfg["n"])
    m = cfg["m"]
    totals = {}
    colors = []
    agree = red_diff = 0
    files = []
    for r, s in enumerate(replica_seeds(cfg["seed"], cfg["replicas"])):
        stream = generate(geom, params.tau(m), s)
        diagram = build_history(geom, np.arange(geom.n_edges), stream, params, m)
        for k, v in check_diagram(diagram).items():
            totals[k] = totals.get(k, 0) + v
        part = assemble_clusters(diagram)
        c = part.counts()
        colors.append({"replica": r, "red": c[RED], "blue": c[BLUE], "green": c[GREEN]})
        ok, rd = reconstruction_check(geom, part, stream, params, m, geom.full(), geom.empty())
        agree += ok
        red_diff += rd
        if r < cfg["dump"]:
            name = f"infoperc-{tag}-diagram-{r}.json"
            write_json(out / name, diagram_record(diagram, part))
            files.append(name)
    curve = red_probability_curve(geom, params, cfg["seed_edge"], cfg["m_list"], cfg["particles"], cfg["seed"])
    files += [f"infoperc-{tag}-colors.csv", f"infoperc-{tag}-red.csv", f"infoperc-{tag}.json"]
    write_csv(out / files[-3], colors, ["replica", "red", "blue", "green"])
    write_csv(out / files[-2], curve.rows(), ["m", "tau_m", "probability", "ci_lo", "ci_hi"])
    write_json(out / files[-1], {"violations": totals, "runs": cfg["replicas"],
                                 "agree_off_red": agree, "red_disagreement": red_diff,
                                 "red_fit_slope": curve.slope, "red_fit_r2": curve.r2})
    return files, {"diagram": sum(totals.values()), "reconstruction": cfg["replicas"] - agree}


def closed_form_tmix(n_edges, eps):
    """Solve ``1 - (1 - e^{-t})^{|E|} = eps`` for ``t``."""
    return -math.log(1.0 - (1.0 - eps) ** (1.0 / n_edges))


def run_mixing(cfg, out, tag, threads):
    from .estimators import cutoff_profile

    params = _params(cfg)
    rep = cutoff_profile(cfg["n_list"], params, cfg["epsilons"], cfg["replicas"], cfg["seed"], cfg["d"],
                         cfg["t_cap"], threads)
    rows = rep.rows()
    for row in rows:
        n_edges = cfg["d"] * row["n"] ** cfg["d"]
        row["closed_form"] = closed_form_tmix(n_edges, row["epsilon"]) if cfg["q"] == 1 else ""
    files = [f"mixing-{tag}.csv", f"mixing-{tag}.json"]
    write_csv(out / files[0], rows, ["n", "epsilon", "t_mix", "ci_lo", "ci_hi", "closed_form"])
    write_json(out / files[1], {"n_list": cfg["n_list"], "ratio": rep.ratio, "window": rep.window,
                                "fit_slope": rep.fit_slope, "fit_intercept": rep.fit_intercept,
                                "fit_r2": rep.fit_r2, "lo_eps": rep.lo_eps, "hi_eps": rep.hi_eps})
    return files, {}


def run_gap(cfg, out, tag, threads):
    from .estimators import lambda_r

    params = _params(cfg)
    rep = lambda_r(cfg["r_list"], params, cfg["replicas"], cfg["seed"], cfg["d"], threads=threads,
                   burn=cfg["burn"], t_obs=cfg["t_obs"], dt=cfg["dt"])
    files = [f"gap-{tag}.csv", f"gap-{tag}.json"]
    write_csv(out / files[0], [{"r": e.r, "lambda_hat": e.lambda_hat, "stderr": e.stderr} for e in rep.estimates],
              ["r", "lambda_hat", "stderr"])
    write_json(out / files[1], {"spread_top2": rep.spread_top2, "extrapolated": rep.extrapolated})
    return files, {}


def selftest_battery(cfg):
    """Deterministic invariant battery; returns ``{name: {"checks", "violations"}}``."""
    seed, reps = cfg["seed"], cfg["replicas"]
    params = _params(cfg)
    res = {}

    def add(name, checks, viol):
        entry = res.setdefault(name, {"checks": 0, "violations": 0})
        entry["checks"] += int(checks)
        entry["violations"] += int(viol)

    for g in (Graph.single_edge(), Graph.grid(2, 2), Graph.path(3)):
        for p, q in ((0.5, 2.0), (0.3, 1.0), (0.2, 3.0)):
            mu = exact_measure(g, p, q)
            Q = generator(g, p, q)
            add("exact_stationarity", 1, stationarity_residual(Q, mu.probs) > 1e-12)
            add("exact_reversibility", 1, reversibility_residual(Q, mu.probs) > 1e-12)
            if q == 1:
                add("q1_gap_one", 1, abs(spectral_gap(Q, mu.probs) - 1.0) > 1e-9)

    geom = torus(2, cfg["n"])
    ones = RCParams(params.p, 1.0, d=2, delta=cfg["delta"])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    for s in replica_seeds(seed, reps):
        stream = generate(geom, 5.0, s)
        x0 = (rng.random(geom.n_edges) < 0.5).astype(np.uint8)
        fk, _ = trajectory_values(geom, x0, ones, stream, 0.0, 5.0)
        spd, _ = spd_trajectory_values(geom, x0, ones, stream, 0.0, 5.0)
        add("q1_fk_equals_spd", 1, not np.array_equal(fk, spd))
        starts = [geom.empty(), geom.full()] + [(rng.random(geom.n_edges) < v).astype(np.uint8)
                                               for v in (0.2, 0.5, 0.8)]
        _, viol = grand_coupling(geom, starts, params, stream, 0.0, 5.0)
        add("monotone_coupling", len(starts) * (len(starts) - 1), viol)

    m = cfg["m"]
    g8 = torus(2, 6)
    for s in replica_seeds(seed + 1, max(2, reps // 4)):
        stream = generate(g8, params.tau(m), s)
        for k, v in sandwich_violations(g8, params, stream, g8.full(), m - 2).items():
            add(f"sandwich_{k}", m - 2, v)
        diagram = build_history(g8, np.arange(g8.n_edges), stream, params, m)
        for k, v in check_diagram(diagram).items():
            add(f"diagram_{k}", 1, v)
        part = assemble_clusters(diagram)
        ok, _ = reconstruction_check(g8, part, stream, params, m, g8.full(), g8.empty())
        add("reconstruction_off_red", 1, not ok)
    return res


def run_selftest(cfg, out, tag, threads):
    res = selftest_battery(cfg)
    files = [f"selftest-{tag}.json"]
    write_json(out / files[0], res)
    return files, {k: v["violations"] for k, v in res.items()}


RUNNERS = {"simulate": run_simulate, "exact": run_exact, "percolations": run_percolations,
           "infoperc": run_infoperc, "mixing": run_mixing, "gap": run_gap, "selftest": run_selftest}
CHECKED = {"percolations", "infoperc", "selftest"}


def run(sub, cfg, out, threads=1):
    """Run one subcommand with a resolved config; returns ``(exit_code,
    manifest)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    full_hash = content_hash({"subcommand": sub, "config": cfg})
    tag = full_hash[:12]
    try:
        files, violations = RUNNERS[sub](cfg, out, tag, threads)
    except CapExceeded as exc:
        return EXIT_CAP, {"error": str(exc)}
    code = EXIT_VIOLATION if sub in CHECKED and any(violations.values()) else EXIT_OK
    manifest = {
        "subcommand": sub, "config": cfg, "config_hash": full_hash, "seed": cfg["seed"],
        "threads": threads, "files": files, "violations": violations, "exit_code": code,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    write_json(out / f"manifest-{tag}.json", manifest)
    return code, manifest


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rcdyn", description="Random-cluster dynamics experiments.",
        epilog=HELP_COLUMNS, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand", choices=sorted(RUNNERS))
    parser.add_argument("--config", type=Path, help="JSON config file (keys merged over defaults)")
    parser.add_argument("--out", type=Path, default=Path("rcdyn-out"), help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for replica loops")
    parser.add_argument("--print-defaults", action="store_true", help="print the resolved config and exit")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            import json
            raw = json.loads(args.config.read_text())
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        cfg = resolve_config(args.subcommand, raw, args.seed)
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"rcdyn: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_defaults:
        print(dumps(cfg))
        return EXIT_OK
    out = Path(os.environ.get(OUT_ENV) or args.out)
    code, manifest = run(args.subcommand, cfg, out, args.threads)
    if code == EXIT_CAP:
        print(f"rcdyn: resource cap exceeded: {manifest['error']}", file=sys.stderr)
    else:
        print(dumps({k: manifest[k] for k in ("subcommand", "config_hash", "files", "violations", "exit_code")}))
    return code


if __name__ == "__main__":
    sys.exit(main())
