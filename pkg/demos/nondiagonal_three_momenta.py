"""Ladder-channel qubit: three momentum values and a drifting position.

Same interaction Hamiltonian as the projector model but decomposed into
level-flipping channels.  From |0> at rest, the momentum can only ever be
0 or -B w tau (at most three values from a superposition), and the level
populated after one jump drifts at half the kicked velocity while the
other lags behind by roughly one jump time tau.

Run:  python demos/nondiagonal_three_momenta.py
"""

import numpy as np

from cqsim import EngineConfig, HybridPureState, PhasePoint, QuantumState, run_ensemble
from cqsim.models import QubitParams, qubit_nondiagonal
from cqsim.oracles import nondiag_position_stats
from cqsim import stats

params = QubitParams(B=1.0, omega0=1.0, omega1=-1.0, mass=1.0, tau=0.01)
dt = 1e-4
model = qubit_nondiagonal(params)
initial = HybridPureState(QuantumState.basis(2, 0), PhasePoint(0, 0))

times = tuple(np.round(np.arange(1, 6) * 0.02, 10))
config = EngineConfig(
    dt=dt, total_time=0.1, n_traj=20_000, master_seed=2,
    snapshot_times=times,
    q_edges=np.linspace(-0.0505, 0.0505, 102),
    p_edges=np.linspace(-0.505, 0.505, 102),
)
_, samples = run_ensemble(model, initial, config, threads=4, collect_samples=True)

kick = params.tau * params.omega0 * params.B
print(f"momentum support check (exact values 0 and {-kick}):")
for snap in samples:
    values = np.unique(snap.p)
    print(f"  t={snap.t:.2f}  p values: {values}")

print("\ntime   |<q>|(u1)   analytic    |<q>|(u0)   analytic(t - tau)")
for snap in samples:
    m1 = stats.sample_moments(snap.q, snap.population_weights(1))
    m0 = stats.sample_moments(snap.q, snap.population_weights(0))
    a1, _ = nondiag_position_stats(snap.t, params, dt)
    a0, _ = nondiag_position_stats(max(snap.t - params.tau, 0.0), params, dt)
    print(
        f"{snap.t:.2f}  {abs(m1.mean):.4e}  {a1:.4e}  {abs(m0.mean):.4e}  {a0:.4e}"
    )
