"""Command-line entry points.

One JSON config per experiment; individual fields may be overridden on the
command line with dotted paths (--run.seed=7). Exit-code contract:

    0  success / comparison passed
    1  comparison exceeded tolerance
    2  usage or validation failure (JSON error object on stderr)
    3  numeric failure (integrator step-size underflow)

All numeric output is written with 17 significant digits, and every command
is a deterministic function of its config, so re-running overwrites files
with identical bytes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analytics, graphs, ode, simulate
from .errors import GridMismatch, SbmSirError, StepSizeUnderflow
from .model import ModelParams, mean_degrees, validate

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


# --- config plumbing --------------------------------------------------------

def load_config(path: str, overrides) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    for dotted, raw in overrides:
        node = cfg
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        try:
            node[keys[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[keys[-1]] = raw
    return cfg


def parse_overrides(extra):
    """--a.b=c / --a.b c pairs from argparse's leftover args."""
    out = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ValueError(f"unrecognized argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, val = body.split("=", 1)
        else:
            key = body
            try:
                val = next(it)
            except StopIteration:
                raise ValueError(f"override {tok!r} is missing a value")
        out.append((key, val))
    return out


def model_from_config(cfg: dict) -> ModelParams:
    m = cfg["model"]
    params = ModelParams(
        K=int(m["K"]),
        W=np.array(m["W"], dtype=float),
        community_sizes=np.array(m["sizes"], dtype=np.int64),
        eta=float(m["eta"]),
        gamma=float(m["gamma"]),
    )
    validate(params)
    return params


def init_from_config(cfg: dict, params: ModelParams) -> simulate.InitialCondition:
    i = cfg.get("init", {})
    init = simulate.InitialCondition(
        infected=np.array(i.get("infected", np.zeros(params.K)), dtype=np.int64),
        recovered=(
            np.array(i["recovered"], dtype=np.int64) if "recovered" in i else None
        ),
        active_degrees=(
            np.array(i["active_degrees"], dtype=np.int64)
            if i.get("active_degrees") is not None
            else None
        ),
    )
    init.counts(params)
    return init


def grid_from_config(cfg: dict):
    run = cfg.get("run", {})
    g = run.get("grid", {"start": 0.0, "stop": 0.0, "points": 1})
    if isinstance(g, list):
        grid = np.array(g, dtype=float)
    else:
        grid = np.linspace(float(g["start"]), float(g["stop"]), int(g["points"]))
    horizon = run.get("horizon", "inf")
    horizon = np.inf if horizon in ("inf", None) else float(horizon)
    if horizon > 0 and grid.size < 2:
        raise ValueError("grid must have >= 2 points when horizon > 0")
    return grid, horizon


def output_dir(cfg: dict) -> Path:
    d = Path(cfg.get("outputs", {}).get("directory", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def normalized_initial(params: ModelParams, init: simulate.InitialCondition):
    inf0, rec0 = init.counts(params)
    n = params.n
    s0 = (params.community_sizes - inf0 - rec0) / n
    i0 = inf0 / n
    return s0, i0


# --- subcommands ------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    params = model_from_config(cfg)
    init = init_from_config(cfg, params)
    run = cfg.get("run", {})
    grid, horizon = grid_from_config(cfg)
    n_runs = int(run.get("n_runs", 1))
    seed = int(run.get("seed", 0))
    mode = run.get("mode", "exploration")
    outdir = output_dir(cfg)
    per_run = cfg.get("outputs", {}).get("per_run_csv", True)

    def write_run(r, traj):
        if per_run:
            (outdir / f"run_{r:04d}.csv").write_text(simulate.trajectory_to_csv(traj))

    stats = simulate.ensemble(
        params, init, n_runs, seed, mode=mode, grid=grid, horizon=horizon,
        run_callback=write_run,
    )
    (outdir / "ensemble_stats.json").write_text(stats.to_json() + "\n")
    print(json.dumps({"written": str(outdir / "ensemble_stats.json"), "n_runs": n_runs}))
    return EXIT_OK


def cmd_ode(cfg: dict, with_reff: bool, with_steady: bool) -> int:
    params = model_from_config(cfg)
    init = init_from_config(cfg, params)
    grid, _ = grid_from_config(cfg)
    s0, i0 = normalized_initial(params, init)
    x0 = cfg.get("ode", {}).get("x0")
    y0 = ode.default_initial_state(params, s0, i0, None if x0 is None else np.asarray(x0, float))
    traj = ode.integrate(y0, params, grid)
    reff = analytics.reff_values(traj, params) if with_reff else None
    text = ode.ode_trajectory_to_csv(traj, params, reff=reff)
    if with_steady:
        ss = ode.steady_state(y0, params)
        K = params.K
        s_inf = ss[:K]
        r_inf = params.rho - s_inf
        row = ["inf"]
        for block in (s_inf, np.zeros(K), r_inf, np.zeros(K)):
            row.extend(f"{v:.17g}" for v in block)
        if with_reff:
            row.append(f"{analytics.r0(params, s_inf).value:.17g}")
        text += ",".join(row) + "\n"
    outdir = output_dir(cfg)
    (outdir / "ode.csv").write_text(text)

    fs = analytics.solve_final_size(params, s0, y0[2 * params.K:])
    theta = analytics.survival_backward(params, s0)
    pi = analytics.survival_forward(params, s0)
    rep = analytics.r0(params, s0)
    (outdir / "final_size.json").write_text(
        analytics.report_json(fs, theta, pi, rep.value) + "\n"
    )
    print(json.dumps({"written": str(outdir / "ode.csv"), "steps": traj.steps}))
    return EXIT_OK


def _load_columns(path: str):
    """Columns of a stats JSON or trajectory CSV: (grid, {name: array})."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        stats = simulate.EnsembleStats.from_json(text)
        cols = {c: stats.mean[:, j] for j, c in enumerate(stats.columns)}
        return stats.grid, cols
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:] if not ln.startswith("inf")]
    data = np.array([[float(v) for v in row] for row in rows])
    grid = data[:, 0]
    return grid, {name: data[:, j] for j, name in enumerate(header) if j > 0}


def cmd_compare(sim_path: str, ode_path: str, tol: float) -> int:
    grid_a, cols_a = _load_columns(sim_path)
    grid_b, cols_b = _load_columns(ode_path)
    if grid_a.shape != grid_b.shape or not np.allclose(grid_a, grid_b, rtol=0, atol=1e-12):
        raise GridMismatch(f"grids of {sim_path} and {ode_path} differ")
    shared = [c for c in cols_a if c in cols_b]
    if not shared:
        raise GridMismatch("no shared columns to compare")
    distances = {
        c: float(np.max(np.abs(cols_a[c] - cols_b[c]))) for c in shared
    }
    ok = all(d < tol for d in distances.values())
    print(json.dumps({"distances": distances, "tol": tol, "pass": ok}))
    return EXIT_OK if ok else EXIT_COMPARE_FAIL


def cmd_outbreak(cfg: dict, threshold_exponent: float) -> int:
    params = model_from_config(cfg)
    init = init_from_config(cfg, params)
    run = cfg.get("run", {})
    n_runs = int(run.get("n_runs", 100))
    seed = int(run.get("seed", 0))
    n = params.n
    threshold = n ** threshold_exponent
    inf0, rec0 = init.counts(params)
    s0, _ = normalized_initial(params, init)

    sizes = np.zeros(n_runs, dtype=np.int64)
    attacks = np.zeros((n_runs, params.K))
    from .seeds import derive_stream
    for r in range(n_runs):
        traj = simulate.run_exploration(params, init, derive_stream(seed, r))
        drop = traj.initial_S - traj.final_state.S
        sizes[r] = int(drop.sum())
        attacks[r] = drop / n
    outbreaks = sizes > threshold
    freq = float(outbreaks.mean())
    pi = analytics.survival_forward(params, s0)
    theta = analytics.survival_backward(params, s0)
    report = {
        "n_runs": n_runs,
        "threshold": float(threshold),
        "threshold_exponent": threshold_exponent,
        "outbreak_frequency": freq,
        "analytic_outbreak_probability": analytics.outbreak_probability(pi, inf0),
        "pi": pi.tolist(),
        "theta": theta.tolist(),
        "expected_attack": (theta * s0).tolist(),
        "conditional_mean_attack": (
            attacks[outbreaks].mean(axis=0).tolist() if outbreaks.any() else None
        ),
        "final_sizes": sizes.tolist(),
    }
    outdir = output_dir(cfg)
    (outdir / "outbreak.json").write_text(json.dumps(report) + "\n")
    print(json.dumps({k: report[k] for k in (
        "outbreak_frequency", "analytic_outbreak_probability", "threshold")}))
    return EXIT_OK


def cmd_final_size(cfg: dict) -> int:
    params = model_from_config(cfg)
    init = init_from_config(cfg, params)
    s0, i0 = normalized_initial(params, init)
    x0 = np.asarray(cfg.get("ode", {}).get("x0", i0), dtype=float)
    fs = analytics.solve_final_size(params, s0, x0)
    theta = analytics.survival_backward(params, s0)
    pi = analytics.survival_forward(params, s0)
    rep = analytics.r0(params, s0)
    print(analytics.report_json(fs, theta, pi, rep.value))
    return EXIT_OK


def cmd_sample_graph(cfg: dict, kind: str, out: str) -> int:
    params = model_from_config(cfg)
    seed = int(cfg.get("run", {}).get("seed", 0))
    if kind == "sbm":
        g = graphs.sample_sbm(params, seed)
    elif kind == "psbm":
        g = graphs.sample_psbm(params, seed)
    elif kind == "coupled":
        g = graphs.sample_sbm_via_coupling(params, seed)
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    Path(out).write_text(g.to_edgelist())
    print(json.dumps({"written": out, "edges": len(g.adjacency)}))
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sbm-sir",
        description="SIR epidemics on stochastic block models: simulate, "
        "integrate the mean-field limit, and solve final-size equations.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a stochastic ensemble, write CSVs and stats")
    p.add_argument("config")

    p = sub.add_parser("ode", help="integrate the mean-field ODE system")
    p.add_argument("config")
    p.add_argument("--reff", action="store_true", help="append an R_eff column")
    p.add_argument("--steady-state", action="store_true",
                   help="append the t=inf steady-state row")

    p = sub.add_parser("compare", help="sup-norm distance between two trajectory files")
    p.add_argument("sim_stats")
    p.add_argument("ode_csv")
    p.add_argument("--tol", type=float, default=0.02)

    p = sub.add_parser("outbreak", help="outbreak-frequency experiment vs analytic pi")
    p.add_argument("config")
    p.add_argument("--threshold-exponent", type=float, default=2.0 / 3.0)

    p = sub.add_parser("final-size", help="print the final-size / survival report")
    p.add_argument("config")

    p = sub.add_parser("sample-graph", help="sample a graph and write its edge list")
    p.add_argument("config")
    p.add_argument("--kind", choices=["sbm", "psbm", "coupled"], default="sbm")
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args, extra = ap.parse_known_args(argv)
        overrides = parse_overrides(extra)
        if args.command == "compare":
            if overrides:
                raise ValueError("compare takes no config overrides")
            return cmd_compare(args.sim_stats, args.ode_csv, args.tol)
        cfg = load_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "ode":
            return cmd_ode(cfg, with_reff=args.reff, with_steady=args.steady_state)
        if args.command == "outbreak":
            return cmd_outbreak(cfg, args.threshold_exponent)
        if args.command == "final-size":
            return cmd_final_size(cfg)
        if args.command == "sample-graph":
            return cmd_sample_graph(cfg, args.kind, args.out)
        raise ValueError(f"unknown command {args.command!r}")
    except StepSizeUnderflow as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_NUMERIC
    except (SbmSirError, ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
