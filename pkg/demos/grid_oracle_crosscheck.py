"""Brute-force lattice integrator vs trajectory ensemble, side by side.

The master equation is integrated directly on a commensurate phase-space
lattice (every classical shift an exact re-indexing) and compared in L1
against the Monte Carlo density on the same binning.  Also prints the
analytic Toeplitz spectrum check used for the oscillator band.

Run:  python demos/grid_oracle_crosscheck.py
"""

import numpy as np

from cqsim import EngineConfig, HybridPureState, PhasePoint, QuantumState, run_ensemble
from cqsim.models import QubitParams, qubit_diagonal
from cqsim.oracles import grid_master_integrator, ho_toeplitz_eigen, ho_tridiagonal_matrix

params = QubitParams(B=1.0, omega0=1.0, omega1=-1.0, mass=1.0, tau=0.1)
model = qubit_diagonal(params)
initial = HybridPureState(QuantumState.superposition(2, [0, 1]), PhasePoint(0, 0))

q_edges = np.linspace(-0.01005, 0.01005, 202)
p_edges = np.linspace(-10.05, 10.05, 202)

oracle = grid_master_integrator(
    model, q_edges, p_edges, initial, 0.05, 1e-3, [0.05], q_margin_bins=400
)[0]
print(f"lattice integrator: trace {oracle.total_trace():.6f} inside the window")

for n_traj in (2_000, 20_000):
    config = EngineConfig(
        dt=1e-4, total_time=0.05, n_traj=n_traj, master_seed=4,
        snapshot_times=(0.05,), q_edges=q_edges, p_edges=p_edges,
    )
    grid = run_ensemble(model, initial, config, threads=4)[0]
    print(f"n_traj = {n_traj:>6}: L1 distance to the lattice solution "
          f"{grid.l1_distance(oracle):.4f}")

print("\nToeplitz spectrum vs dense solver (n1 = n2 = 1000, N = 10):")
system = ho_toeplitz_eigen(1000, 1000, 10, 0.25)
dense = np.sort(np.linalg.eigvals(ho_tridiagonal_matrix(1000, 1000, 10, 0.25, 0.0)).real)
for analytic, exact in zip(np.sort(system.eigenvalues.real)[:3], dense[:3]):
    print(f"  analytic {analytic:12.3f}   dense {exact:12.3f}")
