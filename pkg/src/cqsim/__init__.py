"""Hybrid classical-quantum trajectory simulation.

Pure CQ states (a quantum state vector pinned to a phase-space point)
evolve by a stochastic unravelling: continuous non-Hermitian evolution
with classical drift, interrupted by joint quantum-classical jumps.
Ensembles of trajectories estimate the hybrid phase-space density, and
every headline statistic has an independent analytic or brute-force
oracle to check it against.
"""

from .core import (
    ConfigError,
    EngineFault,
    HybridDensityGrid,
    HybridPureState,
    LindbladChannel,
    ModelSpec,
    PhasePoint,
    QuantumState,
    StepSizeFault,
    expectation,
    interaction_hamiltonian,
)
from .engine import (
    EngineConfig,
    SnapshotSamples,
    StepEvent,
    TrajectoryBatch,
    TrajectoryRecord,
    continuous_step,
    effective_hamiltonian,
    jump_probabilities,
    jump_step,
    run_ensemble,
    run_trajectory,
    step,
    trajectory_rng,
)
from .models import (
    OscillatorParams,
    QubitParams,
    harmonic_oscillator,
    qubit_diagonal,
    qubit_nondiagonal,
)

__version__ = "0.1.0"
