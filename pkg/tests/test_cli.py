import csv
from pathlib import Path

import numpy as np
import pytest

from cqsim.cli import main

SIM_CONFIG = """
[model]
name = "qubit-diag"
B_J_s_per_m = 1.0
omega0_per_s = 1.0
omega1_per_s = -1.0
mass_kg = 1.0
tau_seconds = 0.01

[initial]
quantum = "plus"
q_m = 0.0
p_kg_m_per_s = 0.0

[engine]
dt_seconds = 1e-4
total_time_seconds = 0.02
n_traj = 400
master_seed = 5
snapshot_times_seconds = [0.01, 0.02]

[engine.grid]
q_min_m = -0.05
q_max_m = 0.05
n_q = 41
p_min_kg_m_per_s = -0.505
p_max_kg_m_per_s = 0.505
n_p = 101

[outputs]
directory = "unused"
moment_levels = [0, 1]
moment_axes = ["q", "p"]
coherence_pairs = [[0, 1]]
energy = true
density = true
"""

ORACLE_CONFIG = """
[oracle]
name = "qubit-moments"
directory = "unused"

[params]
B_J_s_per_m = 1.0
omega0_per_s = 1.0
omega1_per_s = -1.0
mass_kg = 1.0
tau_seconds = 0.01
tau0_seconds = 0.0
times_seconds = [0.01, 0.02]
"""


def write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


def read_table(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    table = list(csv.reader(rows))
    return table[0], table[1:]


def dir_bytes(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


class TestSimulate:
    def test_writes_expected_files(self, tmp_path):
        cfg = write(tmp_path / "run.toml", SIM_CONFIG)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        names = {p.name for p in out.glob("*.csv")}
        assert {"moments.csv", "coherence.csv", "energy.csv", "summary.csv"} <= names
        assert "density_t0.csv" in names and "density_t1.csv" in names
        header = (out / "moments.csv").read_text().splitlines()
        assert header[0].startswith("#")
        assert "config =" in header[1]
        assert "master_seed = 5" in header[2]

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write(tmp_path / "run.toml", SIM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
        assert dir_bytes(a) == dir_bytes(b)

    def test_threads_do_not_change_bytes(self, tmp_path):
        cfg = write(tmp_path / "run.toml", SIM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(b), "--threads", "3"]) == 0
        assert dir_bytes(a) == dir_bytes(b)

    def test_seed_override_changes_results(self, tmp_path):
        cfg = write(tmp_path / "run.toml", SIM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "6"]) == 0
        assert dir_bytes(a) != dir_bytes(b)

    def test_rejects_zero_trajectories(self, tmp_path):
        cfg = write(
            tmp_path / "bad.toml", SIM_CONFIG.replace("n_traj = 400", "n_traj = 0")
        )
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_rejects_missing_file_and_sections(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 2
        cfg = write(tmp_path / "broken.toml", "[model]\nname = 'qubit-diag'\n")
        assert main(["simulate", "--config", cfg]) == 2

    def test_engine_fault_exit_code(self, tmp_path):
        text = """
[model]
name = "oscillator"
tau_seconds = 0.1
fock_dim = 24

[initial]
quantum = "level"
level = 20

[engine]
dt_seconds = 5e-3
total_time_seconds = 0.05
n_traj = 10
master_seed = 1
snapshot_times_seconds = [0.05]

[engine.grid]
q_min_m = -1.0
q_max_m = 1.0
n_q = 11
p_min_kg_m_per_s = -1.0
p_max_kg_m_per_s = 1.0
n_p = 11

[outputs]
directory = "unused"
"""
        cfg = write(tmp_path / "fault.toml", text)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


class TestOracle:
    def test_moments_table(self, tmp_path):
        cfg = write(tmp_path / "o.toml", ORACLE_CONFIG)
        out = tmp_path / "oracle"
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        cols, rows = read_table(out / "moments.csv")
        assert cols == ["t_seconds", "level", "axis", "mean", "variance"]
        by_key = {(r[0], r[2]): r for r in rows}
        assert float(by_key[("0.02", "p")][4]) == pytest.approx(
            1.0 * 0.01 * 0.02, rel=1e-12
        )
        header = (out / "moments.csv").read_text().splitlines()
        assert any("formula" in line for line in header[:5])

    def test_history_stats_enumerate(self, tmp_path):
        text = """
[oracle]
name = "history-stats"
directory = "unused"

[params]
k = 3
n = 2
mode = "enumerate"
"""
        cfg = write(tmp_path / "h.toml", text)
        out = tmp_path / "hist"
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        _, rows = read_table(out / "history.csv")
        assert float(rows[0][3]) == 3.0

    def test_ho_coherence_curve(self, tmp_path):
        text = """
[oracle]
name = "ho-coherence"
directory = "unused"

[params]
n1 = 15
n2 = 30
N = 10
tau_seconds = 0.25
times_seconds = [0.0, 0.004]
"""
        cfg = write(tmp_path / "ho.toml", text)
        out = tmp_path / "ho"
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        cols, rows = read_table(out / "coherence.csv")
        center = [r for r in rows if r[1] == "15" and r[2] == "30"]
        assert float(center[0][5]) == pytest.approx(0.5)
        assert float(center[1][5]) == pytest.approx(0.2722309317979769, rel=1e-9)

    def test_unknown_oracle(self, tmp_path):
        text = "[oracle]\nname = \"nope\"\ndirectory = \"x\"\n"
        cfg = write(tmp_path / "o.toml", text)
        assert main(["oracle", "--config", cfg, "--out", str(tmp_path / "x")]) == 2


class TestCompare:
    def run_pair(self, tmp_path, n_traj=4000, oracle_text=ORACLE_CONFIG):
        sim_cfg = write(
            tmp_path / "run.toml", SIM_CONFIG.replace("n_traj = 400", f"n_traj = {n_traj}")
        )
        ora_cfg = write(tmp_path / "oracle.toml", oracle_text)
        sim_out, ora_out = tmp_path / "sim", tmp_path / "ora"
        assert main(["simulate", "--config", sim_cfg, "--out", str(sim_out)]) == 0
        assert main(["oracle", "--config", ora_cfg, "--out", str(ora_out)]) == 0
        return sim_out, ora_out

    def test_agreement_passes(self, tmp_path, capsys):
        sim_out, ora_out = self.run_pair(tmp_path)
        assert main(["compare", str(sim_out), str(ora_out)]) == 0
        report = capsys.readouterr().out
        assert "moments.csv:variance" in report

    def test_wrong_oracle_rate_fails(self, tmp_path):
        wrong = ORACLE_CONFIG.replace("tau_seconds = 0.01", "tau_seconds = 0.05")
        sim_out, ora_out = self.run_pair(tmp_path, oracle_text=wrong)
        assert main(["compare", str(sim_out), str(ora_out)]) == 1

    def test_mismatched_time_grid_rejected(self, tmp_path):
        shifted = ORACLE_CONFIG.replace("[0.01, 0.02]", "[0.01, 0.03]")
        sim_out, ora_out = self.run_pair(tmp_path, oracle_text=shifted)
        assert main(["compare", str(sim_out), str(ora_out)]) == 2

    def test_empty_directories_rejected(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert main(["compare", str(a), str(b)]) == 2
        assert main(["compare", str(a), str(tmp_path / "missing")]) == 2
