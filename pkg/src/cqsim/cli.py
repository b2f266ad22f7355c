"""Batch front-end: config-driven simulation, oracle curves, comparison.

Subcommands
-----------
``cqsim simulate --config run.toml [--out DIR] [--seed N] [--threads N]``
    Run a trajectory ensemble and write per-snapshot density, moment,
    coherence and energy CSVs.  Identical config and seed produce
    byte-identical files for any thread count.

``cqsim oracle --config oracle.toml [--out DIR]``
    Evaluate an analytic prediction and write it as CSV.

``cqsim compare SIM_DIR ORACLE_DIR [--max-z Z] [--max-rel R]``
    Join CSVs with the same name from both directories and check every
    shared quantity: a z-score against the simulation's Monte Carlo
    standard error where one is available, a relative error otherwise.
    Exit code 0 only when all tolerances hold.

Every output file starts with comment lines carrying the resolved
configuration and master seed.  Execution-only settings (thread count,
output directory) are excluded from that header so they cannot break
byte-level reproducibility.  Exit codes: 0 success, 2 invalid
configuration or inputs, 3 engine fault (failing seed reported).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - py 3.10 path
    import tomli as tomllib

from . import oracles, stats
from .core import ConfigError, EngineFault, HybridPureState, PhasePoint, QuantumState
from .engine import EngineConfig, run_ensemble
from .models import MODEL_BUILDERS, QubitParams, build_model

__all__ = ["main", "cmd_simulate", "cmd_oracle", "cmd_compare"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config parse error in {path}: {err}")


def _require(table, key, section):
    if key not in table:
        raise ConfigError(f"missing required key '{key}' in [{section}]")
    return table[key]


def _write_csv(path, header_lines, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _header(kind, config, seed):
    audit = json.dumps(config, sort_keys=True)
    return [f"cqsim {kind}", f"config = {audit}", f"master_seed = {seed}"]


def _strip_execution_keys(cfg):
    cleaned = json.loads(json.dumps(cfg))
    cleaned.get("engine", {}).pop("threads", None)
    cleaned.get("outputs", {}).pop("directory", None)
    cleaned.get("oracle", {}).pop("directory", None)
    return cleaned


def _initial_state(table, d):
    kind = table.get("quantum", "plus")
    if kind == "plus":
        if d != 2:
            raise ConfigError("'plus' initial state requires a 2-level model")
        phi = QuantumState.superposition(2, [0, 1])
    elif kind == "level":
        level = int(_require(table, "level", "initial"))
        if not 0 <= level < d:
            raise ConfigError(f"initial level {level} outside dimension {d}")
        phi = QuantumState.basis(d, level)
    elif kind == "superposition":
        levels = [int(v) for v in _require(table, "levels", "initial")]
        if any(not 0 <= v < d for v in levels):
            raise ConfigError(f"initial levels {levels} outside dimension {d}")
        phi = QuantumState.superposition(d, levels)
    else:
        raise ConfigError(f"unknown initial state kind {kind!r}")
    z = PhasePoint(float(table.get("q_m", 0.0)), float(table.get("p_kg_m_per_s", 0.0)))
    return HybridPureState(phi, z, 0.0)


def _grid_edges(table):
    n_q = int(_require(table, "n_q", "engine.grid"))
    n_p = int(_require(table, "n_p", "engine.grid"))
    if n_q < 1 or n_p < 1:
        raise ConfigError("grid bin counts must be >= 1")
    q_edges = np.linspace(
        float(_require(table, "q_min_m", "engine.grid")),
        float(_require(table, "q_max_m", "engine.grid")),
        n_q + 1,
    )
    p_edges = np.linspace(
        float(_require(table, "p_min_kg_m_per_s", "engine.grid")),
        float(_require(table, "p_max_kg_m_per_s", "engine.grid")),
        n_p + 1,
    )
    return q_edges, p_edges


def cmd_simulate(config_path, out_dir=None, seed=None, threads=None) -> int:
    cfg = _load_toml(config_path)
    for section in ("model", "engine", "outputs"):
        if section not in cfg:
            raise ConfigError(f"config is missing the [{section}] section")
    if seed is not None:
        cfg["engine"]["master_seed"] = int(seed)
    model = build_model(_require(cfg, "model", "config"))
    eng = cfg["engine"]
    if "grid" not in eng:
        raise ConfigError("config is missing the [engine.grid] section")
    q_edges, p_edges = _grid_edges(eng["grid"])
    config = EngineConfig(
        dt=float(_require(eng, "dt_seconds", "engine")),
        total_time=float(_require(eng, "total_time_seconds", "engine")),
        n_traj=int(_require(eng, "n_traj", "engine")),
        master_seed=int(_require(eng, "master_seed", "engine")),
        snapshot_times=[float(t) for t in _require(eng, "snapshot_times_seconds", "engine")],
        q_edges=q_edges,
        p_edges=p_edges,
    )
    initial = _initial_state(cfg.get("initial", {}), model.d)
    n_threads = int(threads if threads is not None else eng.get("threads", 1))

    outputs = cfg["outputs"]
    directory = Path(out_dir if out_dir is not None else _require(outputs, "directory", "outputs"))
    directory.mkdir(parents=True, exist_ok=True)

    grids, samples = run_ensemble(
        model, initial, config, threads=n_threads, collect_samples=True
    )

    header = _header("simulate", _strip_execution_keys(cfg), config.master_seed)

    levels = outputs.get("moment_levels", list(range(model.d)) if model.d == 2 else [])
    axes = outputs.get("moment_axes", ["q", "p"])
    rows = []
    for snap in samples:
        for level in [*levels, "trace"]:
            w = None if level == "trace" else snap.population_weights(int(level))
            for axis in axes:
                vals = snap.q if axis == "q" else snap.p
                try:
                    m = stats.sample_moments(vals, w)
                except ValueError:
                    continue
                rows.append(
                    (snap.t, level, axis, m.mean, m.se_mean, m.variance, m.se_variance, m.weight)
                )
    _write_csv(
        directory / "moments.csv",
        header,
        ["t_seconds", "level", "axis", "mean", "se_mean", "variance", "se_variance", "weight"],
        rows,
    )

    pairs = [tuple(int(v) for v in pair) for pair in outputs.get("coherence_pairs", [])]
    if pairs:
        rows = []
        for snap in samples:
            for n1, n2 in pairs:
                est = stats.coherence_extract(snap, n1, n2, mode="traced")
                rows.append(
                    (snap.t, n1, n2, est.value.real, est.value.imag, abs(est.value), est.se)
                )
        _write_csv(
            directory / "coherence.csv",
            header,
            ["t_seconds", "n1", "n2", "real", "imag", "abs", "se"],
            rows,
        )

    if outputs.get("energy", True):
        rows = []
        for snap in samples:
            e = stats.energy_samples(snap, model)
            rows.append((snap.t, float(e.mean()), float(e.std(ddof=1) / math.sqrt(e.size))))
        _write_csv(
            directory / "energy.csv", header, ["t_seconds", "energy_J", "se_energy_J"], rows
        )

    if outputs.get("density", True):
        for idx, grid in enumerate(grids):
            cols = ["q_m", "p_kg_m_per_s"]
            d = grid.d
            for i in range(d):
                for j in range(d):
                    cols += [f"cell_{i}_{j}_re", f"cell_{i}_{j}_im"]
            occupied = np.argwhere(np.abs(grid.cells).sum(axis=(2, 3)) > 0)
            rows = []
            qc, pc = grid.q_centers, grid.p_centers
            for i, j in occupied:
                row = [qc[i], pc[j]]
                for a in range(d):
                    for b in range(d):
                        row += [grid.cells[i, j, a, b].real, grid.cells[i, j, a, b].imag]
                rows.append(row)
            _write_csv(directory / f"density_t{idx}.csv", header, cols, rows)

    rows = []
    truncated = model.d > 2
    for grid, snap in zip(grids, samples):
        row = [snap.t, grid.total_trace(), grid.n_samples, grid.n_dropped]
        if truncated:
            top2 = stats.top_level_population(snap, 2)
            row += [top2, int(top2 <= 1e-3)]
        rows.append(row)
    cols = ["t_seconds", "total_trace", "n_samples", "n_dropped"]
    if truncated:
        cols += ["top2_population", "truncation_ok"]
    _write_csv(directory / "summary.csv", header, cols, rows)
    return 0


def _oracle_qubit_params(params):
    return QubitParams(
        B=float(params.get("B_J_s_per_m", 1.0)),
        omega0=float(params.get("omega0_per_s", 1.0)),
        omega1=float(params.get("omega1_per_s", -1.0)),
        mass=float(params.get("mass_kg", 1.0)),
        tau=float(params.get("tau_seconds", 0.01)),
    )


def cmd_oracle(config_path, out_dir=None) -> int:
    cfg = _load_toml(config_path)
    table = _require(cfg, "oracle", "config")
    name = _require(table, "name", "oracle")
    params = cfg.get("params", {})
    directory = Path(out_dir if out_dir is not None else _require(table, "directory", "oracle"))
    directory.mkdir(parents=True, exist_ok=True)
    header = _header("oracle", _strip_execution_keys(cfg), table.get("seed", 0))

    def times():
        return [float(t) for t in _require(params, "times_seconds", "params")]

    if name == "qubit-moments":
        qp = _oracle_qubit_params(params)
        tau0 = float(params.get("tau0_seconds", 0.0))
        header.append(
            "formula: mean_q = B*w0/(2m)*t^2; mean_p = B*w0*t; "
            "var_q = (B*w0*t/m)^2*((tau0+tau)*t + 5*tau0*tau)/3; var_p = (B*w0)^2*tau*t"
        )
        rows = []
        for t in times():
            mom = oracles.qubit_diag_moments(t, qp, tau0)
            rows.append((t, 0, "q", mom.mean_q, mom.var_q))
            rows.append((t, 0, "p", mom.mean_p, mom.var_p))
        _write_csv(
            directory / "moments.csv",
            header,
            ["t_seconds", "level", "axis", "mean", "variance"],
            rows,
        )
    elif name == "qubit-coherence":
        qp = _oracle_qubit_params(params)
        q = float(params.get("q_m", 0.0))
        p = float(params.get("p_kg_m_per_s", 0.0))
        c0 = complex(float(params.get("c0_real", 0.5)), float(params.get("c0_imag", 0.0)))
        header.append("formula: c(q,p,t) = c0(q - p*t/m) * exp(-i*q*B*(w0-w1)*t - t/tau)")
        rows = []
        for t in times():
            c = oracles.qubit_diag_coherence(lambda qq, pp: c0, q, p, t, qp)
            rows.append((t, 0, 1, c.real, c.imag, abs(c)))
        _write_csv(
            directory / "coherence.csv",
            header,
            ["t_seconds", "n1", "n2", "real", "imag", "abs"],
            rows,
        )
    elif name == "qubit-energy":
        qp = _oracle_qubit_params(params)
        header.append("formula: <H>(t) = (B*w0)^2*tau*t/(2m)")
        rows = [(t, oracles.qubit_diag_energy(t, qp)) for t in times()]
        _write_csv(directory / "energy.csv", header, ["t_seconds", "energy_J"], rows)
    elif name == "qubit-diffusion":
        qp = _oracle_qubit_params(params)
        header.append("formula: D = (B*w0)^2*tau")
        _write_csv(
            directory / "diffusion.csv",
            header,
            ["diffusion_coefficient"],
            [(oracles.diffusion_coefficient(qp),)],
        )
    elif name == "nondiag-position":
        qp = _oracle_qubit_params(params)
        dt = float(_require(params, "dt_seconds", "params"))
        header.append(
            "formula: |mean_q|(t) = B*w*(tau-dt)*t/(2m); "
            "sigma_q(t) = B*w/(2m)*(tau-dt)^1.5*sqrt(t)"
        )
        rows = []
        for t in times():
            mean_q, sigma_q = oracles.nondiag_position_stats(t, qp, dt)
            rows.append((t, mean_q, sigma_q))
        _write_csv(
            directory / "position.csv", header, ["t_seconds", "mean_q_m", "sigma_q_m"], rows
        )
    elif name == "ho-coherence":
        n1 = int(_require(params, "n1", "params"))
        n2 = int(_require(params, "n2", "params"))
        N = int(_require(params, "N", "params"))
        tau = float(_require(params, "tau_seconds", "params"))
        header.append(
            "formula: u_band(t) = B^dag exp(diag(lambda_m) t) B u(0), "
            "lambda_m = -(n1+n2)/tau + 2*sqrt(n1*n2)*cos(m*pi/(N+1))/tau"
        )
        levels = oracles.band_levels(n1, n2, N)
        rows = []
        for t in times():
            band = oracles.ho_coherence_evolution(n1, n2, N, tau, t)
            for (m1, m2), u in zip(levels, band):
                rows.append((t, m1, m2, u.real, u.imag, abs(u)))
        _write_csv(
            directory / "coherence.csv",
            header,
            ["t_seconds", "n1", "n2", "real", "imag", "abs"],
            rows,
        )
    elif name == "ho-spectrum":
        n1 = int(_require(params, "n1", "params"))
        n2 = int(_require(params, "n2", "params"))
        N = int(_require(params, "N", "params"))
        tau = float(_require(params, "tau_seconds", "params"))
        phi = float(params.get("phi", 0.0))
        system = oracles.ho_toeplitz_eigen(n1, n2, N, tau, phi)
        header.append("formula: lambda_m = -(n1+n2)/tau + 2*sqrt(n1*n2)*cos(m*pi/(N+1))/tau")
        rows = [
            (m + 1, lam.real, lam.imag) for m, lam in enumerate(system.eigenvalues)
        ]
        _write_csv(
            directory / "spectrum.csv",
            header,
            ["m", "lambda_re_per_s", "lambda_im_per_s"],
            rows,
        )
    elif name == "history-stats":
        k = int(_require(params, "k", "params"))
        n = int(_require(params, "n", "params"))
        mode = params.get("mode", "closed_form")
        header.append(
            "formula: mean = n*k/2; variance(closed_form) = n*k*(n+k-1)*(2*(n+k)-1)/(6*(n+k))"
        )
        mean, var = oracles.history_position_stats(k, n, mode)
        _write_csv(
            directory / "history.csv",
            header,
            ["k", "n", "mode", "mean", "variance"],
            [(k, n, mode, mean, var)],
        )
    elif name == "poisson":
        t = float(_require(params, "t_seconds", "params"))
        tau = float(_require(params, "tau_seconds", "params"))
        k_max = int(params.get("k_max", 50))
        header.append("formula: P(k) = (t/tau)^k * exp(-t/tau) / k!")
        rows = [(k, oracles.poisson_weight(k, t, tau)) for k in range(k_max + 1)]
        _write_csv(directory / "poisson.csv", header, ["k", "weight"], rows)
    else:
        raise ConfigError(f"unknown oracle {name!r}")
    return 0


_KEY_COLUMNS = {"t_seconds", "level", "axis", "n1", "n2", "m", "k", "n", "mode", "slot"}


def _read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    table = list(reader)
    if not table:
        raise ConfigError(f"empty CSV {path}")
    return table[0], table[1:]


def cmd_compare(sim_dir, oracle_dir, max_z=3.0, max_rel=0.1) -> int:
    sim_dir, oracle_dir = Path(sim_dir), Path(oracle_dir)
    if not sim_dir.is_dir() or not oracle_dir.is_dir():
        raise ConfigError("compare needs two existing directories")
    shared = sorted(
        {p.name for p in sim_dir.glob("*.csv")} & {p.name for p in oracle_dir.glob("*.csv")}
    )
    if not shared:
        raise ConfigError("no CSV files with matching names to compare")
    all_ok = True
    for name in shared:
        sim_cols, sim_rows = _read_csv(sim_dir / name)
        ora_cols, ora_rows = _read_csv(oracle_dir / name)
        keys = [c for c in sim_cols if c in _KEY_COLUMNS and c in ora_cols]
        values = [
            c
            for c in ora_cols
            if c in sim_cols and c not in _KEY_COLUMNS and not c.startswith("se_")
        ]
        if not values:
            continue
        sim_idx = {c: i for i, c in enumerate(sim_cols)}
        ora_idx = {c: i for i, c in enumerate(ora_cols)}
        sim_map = {tuple(r[sim_idx[k]] for k in keys): r for r in sim_rows}
        matched = 0
        stats_per_col = {c: {"max_rel": 0.0, "max_z": 0.0, "ok": True} for c in values}
        for row in ora_rows:
            key = tuple(row[ora_idx[k]] for k in keys)
            if key not in sim_map:
                raise ConfigError(
                    f"{name}: oracle row {key} has no matching simulation row "
                    "(mismatched grids)"
                )
            matched += 1
            srow = sim_map[key]
            for col in values:
                o = float(row[ora_idx[col]])
                s = float(srow[sim_idx[col]])
                if col.startswith("mean"):
                    # sign conventions differ between kick direction and the
                    # analytic curves; magnitudes are the comparable quantity
                    o, s = abs(o), abs(s)
                rel = abs(s - o) / max(abs(o), 1e-300)
                entry = stats_per_col[col]
                entry["max_rel"] = max(entry["max_rel"], rel)
                se_col = f"se_{col}"
                if se_col in sim_idx:
                    se = float(srow[sim_idx[se_col]])
                    z = abs(s - o) / se if se > 0 else math.inf
                    entry["max_z"] = max(entry["max_z"], z)
                    if z > max_z:
                        entry["ok"] = False
                elif rel > max_rel:
                    entry["ok"] = False
        if matched == 0:
            raise ConfigError(f"{name}: no rows matched (mismatched grids)")
        for col, entry in stats_per_col.items():
            status = "ok" if entry["ok"] else "FAIL"
            print(
                f"{name}:{col} max_rel={entry['max_rel']:.3e} "
                f"max_z={entry['max_z']:.3f} {status}"
            )
            all_ok &= entry["ok"]
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cqsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a trajectory ensemble from a config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--threads", type=int, default=None, help="worker threads (results identical)")

    p_ora = sub.add_parser("oracle", help="evaluate an analytic prediction")
    p_ora.add_argument("--config", required=True)
    p_ora.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare", help="check simulation output against oracle curves")
    p_cmp.add_argument("sim_dir")
    p_cmp.add_argument("oracle_dir")
    p_cmp.add_argument("--max-z", type=float, default=3.0)
    p_cmp.add_argument("--max-rel", type=float, default=0.1)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed, args.threads)
        if args.command == "oracle":
            return cmd_oracle(args.config, args.out)
        return cmd_compare(args.sim_dir, args.oracle_dir, args.max_z, args.max_rel)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except EngineFault as err:
        print(f"engine fault: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
