"""Trajectory unravelling of the CQ master equation.

One update step either evolves the pure CQ state continuously (non-Hermitian
quantum generator plus symplectic classical drift) or applies one jump
channel: the Lindblad operator acts on the quantum state while the classical
point receives the exact Hamiltonian-flow kick of that channel's coupling.
The branch is sampled from first-order probabilities that sum to one by
construction.

Two execution paths share the same arithmetic conventions:

* scalar ops (`step`, `run_trajectory`) - the readable reference;
* `TrajectoryBatch` / `run_ensemble` - many trajectories in lockstep with
  vectorized numpy operations, used for large ensembles.

Reproducibility contract: trajectory i draws from a Philox stream keyed by
``(master_seed, i)``, a counter-based splitting that is independent of
scheduling.  Ensemble grids are reduced strictly in trajectory order (fixed
chunking, chunk results merged in chunk order), so results are bitwise
identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ConfigError,
    EngineFault,
    HybridDensityGrid,
    HybridPureState,
    ModelSpec,
    PhasePoint,
    QuantumState,
    StepSizeFault,
    interaction_hamiltonian,
)

__all__ = [
    "StepEvent",
    "TrajectoryRecord",
    "EngineConfig",
    "SnapshotSamples",
    "TrajectoryBatch",
    "trajectory_rng",
    "effective_hamiltonian",
    "continuous_step",
    "jump_probabilities",
    "jump_step",
    "step",
    "run_trajectory",
    "run_ensemble",
]

_UNIFORM_BLOCK = 256


def trajectory_rng(master_seed: int, traj_index: int) -> np.random.Generator:
    """Counter-based per-trajectory stream: Philox keyed by (seed, index)."""
    key = np.array([master_seed, traj_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class StepEvent:
    """Outcome of one update: continuous (channel None) or jump (channel a)."""

    channel: Optional[int]
    t_before: float
    t_after: float
    z_after: PhasePoint

    @property
    def is_jump(self) -> bool:
        return self.channel is not None


@dataclass(frozen=True)
class TrajectoryRecord:
    """One unravelled realization: every event plus configured snapshots."""

    initial: HybridPureState
    events: tuple
    snapshots: tuple
    snapshot_times: tuple
    master_seed: int
    traj_index: int

    def jump_count(self) -> int:
        return sum(1 for e in self.events if e.is_jump)


def _steps_for(total_time: float, dt: float) -> int:
    return max(0, math.ceil(total_time / dt - 1e-9))


def _step_of(t: float, dt: float) -> int:
    k = int(round(t / dt))
    if abs(t - k * dt) > 1e-9 * max(dt, abs(t)):
        raise ConfigError(f"time {t} is not a multiple of dt={dt}")
    return k


@dataclass(frozen=True)
class EngineConfig:
    """Run parameters: step size, horizon, ensemble size, seed, outputs."""

    dt: float
    total_time: float
    n_traj: int
    master_seed: int
    snapshot_times: tuple = ()
    q_edges: Optional[np.ndarray] = None
    p_edges: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.total_time < 0:
            raise ConfigError(f"total_time must be >= 0, got {self.total_time}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if not (0 <= self.master_seed < 2**64):
            raise ConfigError("master_seed must fit in 64 bits")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        n = self.n_steps
        for t in self.snapshot_times:
            k = _step_of(t, self.dt)
            if k < 0 or k > n:
                raise ConfigError(f"snapshot time {t} outside [0, {self.total_time}]")
        if len(set(self.snapshot_times)) != len(self.snapshot_times):
            raise ConfigError("snapshot times must be unique")

    @property
    def n_steps(self) -> int:
        return _steps_for(self.total_time, self.dt)

    def snapshot_steps(self) -> list:
        return [_step_of(t, self.dt) for t in self.snapshot_times]

    def validate_for(self, model: ModelSpec):
        if self.dt >= model.min_tau():
            raise ConfigError(
                f"dt={self.dt} must be smaller than the fastest channel rate "
                f"tau={model.min_tau()} for first-order validity"
            )


def effective_hamiltonian(model: ModelSpec, z: PhasePoint) -> np.ndarray:
    """Non-Hermitian generator H_I(z) - (i/2) sum_a (1/tau_a) L_a^dag L_a."""
    H = interaction_hamiltonian(model, z)
    for ch in model.channels:
        H = H - (0.5j / ch.tau) * (ch.L.conj().T @ ch.L)
    return H


def continuous_step(model: ModelSpec, state: HybridPureState, dt: float) -> HybridPureState:
    """No-jump update: first-order non-unitary quantum step plus exact drift.

    The drift is the Euler step of H_C's Hamiltonian flow evaluated at the
    pre-step point; for H_C = p^2/2m it is exact because p is constant
    between jumps.
    """
    z = state.z
    amps = state.phi.amplitudes
    heff = effective_hamiltonian(model, z)
    cand = amps - (1j * dt) * (heff @ amps)
    norm2 = float(np.vdot(cand, cand).real)
    if not (norm2 > 0 and math.isfinite(norm2)):
        raise StepSizeFault(
            f"continuous step annihilated the state (norm^2={norm2}); shrink dt"
        )
    phi = QuantumState(cand / math.sqrt(norm2))
    dq = dt * float(model.dHC_dp(z.q, z.p))
    dp = -dt * float(model.dHC_dq(z.q, z.p))
    return HybridPureState(phi, z.shifted(dq, dp), state.t + dt)


def jump_probabilities(model: ModelSpec, state: HybridPureState, dt: float):
    """Branch distribution (p_0, [p_a]) with p_a = (dt/tau_a) <phi|L^dag L|phi>.

    p_0 is defined as 1 minus the accumulated jump mass, so the total is
    exactly one by construction.  A negative p_0 means dt is too large for
    the current state and raises a step-size fault.
    """
    amps = state.phi.amplitudes
    probs = np.empty(len(model.channels))
    total = 0.0
    for a, ch in enumerate(model.channels):
        y = ch.L @ amps
        pa = (dt / ch.tau) * float(np.vdot(y, y).real)
        probs[a] = pa
        total += pa
    p0 = 1.0 - total
    if p0 < 0.0:
        raise StepSizeFault(f"jump probabilities sum to {total} > 1; shrink dt")
    return p0, probs


def jump_step(model: ModelSpec, state: HybridPureState, alpha: int, dt: float) -> HybridPureState:
    """Apply channel alpha: project the quantum state, kick the classical one.

    The classical shift is the time-tau_a flow of h^a at the pre-jump
    point; time still advances by one step dt.
    """
    ch = model.channels[alpha]
    amps = state.phi.amplitudes
    y = ch.L @ amps
    norm2 = float(np.vdot(y, y).real)
    if norm2 <= 0.0:
        raise EngineFault(
            f"channel {alpha} has zero amplitude on this state; "
            "jump must not be selected when its probability vanishes"
        )
    phi = QuantumState(y / math.sqrt(norm2))
    dq, dp = ch.jump_shift(state.z)
    return HybridPureState(phi, state.z.shifted(dq, dp), state.t + dt)


def step(model: ModelSpec, state: HybridPureState, dt: float, rng) -> tuple:
    """One unravelling update: sample the branch with a single uniform draw."""
    p0, probs = jump_probabilities(model, state, dt)
    u = rng.random()
    if u < p0:
        new = continuous_step(model, state, dt)
        ev = StepEvent(None, state.t, new.t, new.z)
        return new, ev
    cum = p0
    chosen = None
    for a, pa in enumerate(probs):
        cum += pa
        if u < cum:
            chosen = a
            break
    if chosen is None:
        # u fell in the rounding sliver above the accumulated total; the
        # total is 1 up to one ulp, so attribute it to the last open channel.
        nonzero = np.flatnonzero(probs > 0)
        if nonzero.size == 0:
            new = continuous_step(model, state, dt)
            return new, StepEvent(None, state.t, new.t, new.z)
        chosen = int(nonzero[-1])
    new = jump_step(model, state, chosen, dt)
    return new, StepEvent(chosen, state.t, new.t, new.z)


def run_trajectory(
    model: ModelSpec, initial: HybridPureState, config: EngineConfig, traj_index: int
) -> TrajectoryRecord:
    """Evolve one trajectory; a deterministic function of (seed, index)."""
    config.validate_for(model)
    rng = trajectory_rng(config.master_seed, traj_index)
    n_steps = config.n_steps
    snap_steps = config.snapshot_steps()
    want = dict(zip(snap_steps, config.snapshot_times))
    events = []
    snapshots = []
    snap_times = []
    state = initial
    if 0 in want:
        snapshots.append(state)
        snap_times.append(want[0])
    try:
        for k in range(n_steps):
            state, ev = step(model, state, config.dt, rng)
            events.append(ev)
            if (k + 1) in want:
                snapshots.append(state)
                snap_times.append(want[k + 1])
    except EngineFault as err:
        raise type(err)(str(err), config.master_seed, traj_index) from None
    return TrajectoryRecord(
        initial, tuple(events), tuple(snapshots), tuple(snap_times),
        config.master_seed, traj_index,
    )


@dataclass
class SnapshotSamples:
    """Raw per-trajectory states captured at one snapshot time."""

    t: float
    q: np.ndarray
    p: np.ndarray
    phi: np.ndarray  # (n, d) complex

    @property
    def n(self) -> int:
        return self.q.size

    def population_weights(self, level: int) -> np.ndarray:
        return np.abs(self.phi[:, level]) ** 2


class TrajectoryBatch:
    """Many trajectories evolved in lockstep with vectorized updates.

    Uses the same update rule, branch thresholds and per-trajectory RNG
    streams as the scalar path; phase-space functions of the model must
    broadcast over numpy arrays.
    """

    def __init__(self, model, initial, dt, n, master_seed, first_traj_index=0):
        if dt >= model.min_tau():
            raise ConfigError("dt must be smaller than the fastest channel tau")
        self.model = model
        self.dt = float(dt)
        self.n = int(n)
        self.master_seed = master_seed
        self.first_traj_index = first_traj_index
        self.step_index = 0
        d = model.d
        self.phi = np.tile(initial.phi.amplitudes, (self.n, 1))
        self.q = np.full(self.n, initial.z.q, dtype=float)
        self.p = np.full(self.n, initial.z.p, dtype=float)
        self.t0 = initial.t
        self._LT = [np.ascontiguousarray(ch.L.T) for ch in model.channels]
        self._Lconj = [np.ascontiguousarray(ch.L.conj()) for ch in model.channels]
        self._gens = [
            trajectory_rng(master_seed, first_traj_index + i) for i in range(self.n)
        ]
        self._ublock = np.empty((self.n, _UNIFORM_BLOCK))
        self._ucol = _UNIFORM_BLOCK

    @property
    def t(self) -> float:
        return self.t0 + self.step_index * self.dt

    def _uniforms(self) -> np.ndarray:
        if self._ucol == _UNIFORM_BLOCK:
            for i, g in enumerate(self._gens):
                self._ublock[i] = g.random(_UNIFORM_BLOCK)
            self._ucol = 0
        u = self._ublock[:, self._ucol]
        self._ucol += 1
        return u

    def _fault_index(self, rows) -> int:
        return self.first_traj_index + int(np.flatnonzero(rows)[0])

    def step(self):
        """Advance every trajectory by one unravelling update."""
        model, dt = self.model, self.dt
        phi, q, p = self.phi, self.q, self.p

        ys = [phi @ lt for lt in self._LT]  # row-wise L_a phi
        # |L phi|^2 row-wise via the interleaved real view (no conj copy)
        exps = [np.einsum("ni,ni->n", yv, yv) for yv in (y.view(np.float64) for y in ys)]
        probs = []
        total = np.zeros(self.n)
        for ch, e in zip(model.channels, exps):
            pa = (dt / ch.tau) * e
            probs.append(pa)
            total = total + pa
        p0 = 1.0 - total
        if np.any(p0 < 0.0):
            raise StepSizeFault(
                "jump probabilities exceed 1; shrink dt",
                self.master_seed,
                self._fault_index(p0 < 0.0),
            )

        u = self._uniforms()

        # Branch per row: -1 continuous, a >= 0 jump, same cumulative
        # thresholds as the scalar path.
        branch = np.full(self.n, -1, dtype=np.int64)
        undecided = ~(u < p0)
        cum = p0.copy()
        for a in range(len(model.channels)):
            cum = cum + probs[a]
            rows = undecided & (u < cum)
            branch[rows] = a
            undecided &= ~rows
        for r in np.flatnonzero(undecided):
            # rounding sliver above the accumulated total (one ulp wide):
            # attribute it to the last channel with nonzero amplitude
            open_ch = [a for a in range(len(model.channels)) if probs[a][r] > 0]
            branch[r] = open_ch[-1] if open_ch else -1

        cont = branch == -1
        # Non-Hermitian generator applied to every row; used on no-jump rows.
        heff_phi = None
        for ch, y, lc in zip(model.channels, ys, self._Lconj):
            m_phi = y @ lc  # L^dag L phi via the cached L phi
            ha = np.broadcast_to(np.asarray(ch.h(q, p), dtype=float), q.shape)
            coef = ha - 0.5j / ch.tau  # coupling plus decay in one factor
            term = coef[:, None] * m_phi
            heff_phi = term if heff_phi is None else heff_phi + term
        if heff_phi is None:
            cand = phi.copy()
        else:
            cand = phi - (1j * dt) * heff_phi
        cv = cand.view(np.float64)
        norm2 = np.einsum("ni,ni->n", cv, cv)
        bad = cont & ~(norm2 > 0.0)
        if np.any(bad):
            raise StepSizeFault(
                "continuous step annihilated a state; shrink dt",
                self.master_seed,
                self._fault_index(bad),
            )
        if np.any(cont):
            qc, pc = q[cont], p[cont]
            dq = dt * np.broadcast_to(np.asarray(model.dHC_dp(qc, pc), float), qc.shape)
            dp = -dt * np.broadcast_to(np.asarray(model.dHC_dq(qc, pc), float), pc.shape)
            phi[cont] = cand[cont] / np.sqrt(norm2[cont])[:, None]
            q[cont] = qc + dq
            p[cont] = pc + dp

        for a, ch in enumerate(model.channels):
            rows = branch == a
            if not np.any(rows):
                continue
            e_rows = exps[a][rows]
            if np.any(e_rows <= 0.0):
                raise EngineFault(
                    f"channel {a} selected with zero amplitude",
                    self.master_seed,
                    self.first_traj_index + int(np.flatnonzero(rows)[0]),
                )
            phi[rows] = ys[a][rows] / np.sqrt(e_rows)[:, None]
            qr, pr = q[rows], p[rows]
            dq = ch.tau * np.broadcast_to(np.asarray(ch.dh_dp(qr, pr), float), qr.shape)
            dp = -ch.tau * np.broadcast_to(np.asarray(ch.dh_dq(qr, pr), float), pr.shape)
            q[rows] = qr + dq
            p[rows] = pr + dp
        self.step_index += 1

    def snapshot(self) -> SnapshotSamples:
        return SnapshotSamples(self.t, self.q.copy(), self.p.copy(), self.phi.copy())


def _chunk_size(d: int) -> int:
    if d <= 8:
        return 4096
    if d <= 64:
        return 1024
    return 256


def _run_chunk(model, initial, config, start, count):
    batch = TrajectoryBatch(model, initial, config.dt, count, config.master_seed, start)
    remaining = sorted(set(config.snapshot_steps()))
    out = {}
    if remaining and remaining[0] == 0:
        out[0] = batch.snapshot()
        remaining = remaining[1:]
    for target in remaining:
        while batch.step_index < target:
            batch.step()
        out[target] = batch.snapshot()
    return out


def _deposit(grid, samples, weight):
    """Accumulate sample projectors into the grid, in row (trajectory) order."""
    iq = np.searchsorted(grid.q_edges, samples.q, side="right") - 1
    ip = np.searchsorted(grid.p_edges, samples.p, side="right") - 1
    ok = (
        (iq >= 0)
        & (iq < grid.q_edges.size - 1)
        & (ip >= 0)
        & (ip < grid.p_edges.size - 1)
    )
    grid.n_samples += samples.n
    grid.n_dropped += int(samples.n - ok.sum())
    if not np.any(ok):
        return
    iq, ip = iq[ok], ip[ok]
    phi = samples.phi[ok]
    area = np.diff(grid.q_edges)[iq] * np.diff(grid.p_edges)[ip]
    proj = np.einsum("ni,nj->nij", phi, phi.conj())
    proj *= (weight / area)[:, None, None]
    np.add.at(grid.cells, (iq, ip), proj)


def run_ensemble(
    model: ModelSpec,
    initial: HybridPureState,
    config: EngineConfig,
    *,
    threads: int = 1,
    collect_samples: bool = False,
):
    """Average many trajectories into one density grid per snapshot time.

    Each trajectory deposits |phi><phi| / n_traj into the cell containing
    its phase point.  Chunks of trajectories may run on any number of
    worker threads; the reduction is ordered by trajectory index, so the
    output is bitwise identical for any ``threads`` value.

    Returns the list of grids, plus the raw per-trajectory samples when
    ``collect_samples`` is set.
    """
    if config.q_edges is None or config.p_edges is None:
        raise ConfigError("run_ensemble requires grid edges in the config")
    config.validate_for(model)
    snap_steps = config.snapshot_steps()
    chunk = _chunk_size(model.d)
    starts = list(range(0, config.n_traj, chunk))
    jobs = [(s, min(chunk, config.n_traj - s)) for s in starts]

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(
                ex.map(lambda job: _run_chunk(model, initial, config, *job), jobs)
            )
    else:
        results = [_run_chunk(model, initial, config, *job) for job in jobs]

    weight = 1.0 / config.n_traj
    grids = [
        HybridDensityGrid.empty(config.q_edges, config.p_edges, model.d, t=t)
        for t in config.snapshot_times
    ]
    samples = None
    if collect_samples:
        samples = []
        for t in config.snapshot_times:
            k = _step_of(t, config.dt)
            parts = [res[k] for res in results]
            samples.append(
                SnapshotSamples(
                    t,
                    np.concatenate([s.q for s in parts]),
                    np.concatenate([s.p for s in parts]),
                    np.concatenate([s.phi for s in parts]),
                )
            )
    for grid, t in zip(grids, config.snapshot_times):
        k = _step_of(t, config.dt)
        for res in results:  # chunk order == trajectory order
            _deposit(grid, res[k], weight)
    if collect_samples:
        return grids, samples
    return grids
