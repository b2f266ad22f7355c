"""Shared state model for hybrid classical-quantum (CQ) systems.

A pure CQ state is a normalized quantum state vector pinned to a single
phase-space point.  Ensembles of such states are aggregated into a
phase-space grid whose cells hold subnormalized density matrices.  The
classical point is kept exact (never smeared onto the grid); binning
happens only when trajectories are aggregated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ConfigError",
    "EngineFault",
    "StepSizeFault",
    "PhasePoint",
    "QuantumState",
    "HybridPureState",
    "LindbladChannel",
    "ModelSpec",
    "HybridDensityGrid",
    "expectation",
    "interaction_hamiltonian",
]

# Scalar field over phase space, must broadcast over numpy arrays of q, p.
PhaseFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Rejected input or configuration (dimension mismatch, bad bins, ...)."""


class EngineFault(RuntimeError):
    """A trajectory could not be advanced (carries seed/trajectory info)."""

    def __init__(self, message, master_seed=None, traj_index=None):
        if master_seed is not None:
            message = f"{message} [master_seed={master_seed}, traj_index={traj_index}]"
        super().__init__(message)
        self.master_seed = master_seed
        self.traj_index = traj_index


class StepSizeFault(EngineFault):
    """The time step is too large for the current state; shrink dt."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PhasePoint:
    """A point z = (q, p) in single-particle phase space (SI units)."""

    q: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "p", float(self.p))
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ConfigError(f"non-finite phase point ({self.q}, {self.p})")

    def shifted(self, dq: float, dp: float) -> "PhasePoint":
        return PhasePoint(self.q + dq, self.p + dp)


@dataclass(frozen=True)
class QuantumState:
    """Unit-norm state vector of a d-dimensional quantum system, d >= 2."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size < 2:
            raise ConfigError("state vector must be 1-d with dimension >= 2")
        if not np.all(np.isfinite(amps.real)) or not np.all(np.isfinite(amps.imag)):
            raise ConfigError("state vector has non-finite amplitudes")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"state vector norm {norm} is not 1")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def d(self) -> int:
        return self.amplitudes.size

    @staticmethod
    def basis(d: int, level: int) -> "QuantumState":
        amps = np.zeros(d, dtype=complex)
        amps[level] = 1.0
        return QuantumState(amps)

    @staticmethod
    def superposition(d: int, levels) -> "QuantumState":
        """Even real superposition of the given basis levels."""
        amps = np.zeros(d, dtype=complex)
        amps[list(levels)] = 1.0 / math.sqrt(len(levels))
        return QuantumState(amps)


@dataclass(frozen=True)
class HybridPureState:
    """Pure CQ state: quantum state |phi> attached to phase point z at time t."""

    phi: QuantumState
    z: PhasePoint
    t: float = 0.0


@dataclass(frozen=True)
class LindbladChannel:
    """One jump channel: operator L, scalar coupling h(z), and rate 1/tau.

    A jump applies L to the quantum state and moves the classical point by
    the time-tau Hamiltonian flow of h:

        dq = +tau * dh/dp,    dp = -tau * dh/dq.

    The partial derivatives are supplied analytically so the classical
    kicks are exact, not finite-differenced.
    """

    L: np.ndarray
    h: PhaseFunction
    dh_dq: PhaseFunction
    dh_dp: PhaseFunction
    tau: float
    label: str = ""

    def __post_init__(self):
        L = np.asarray(self.L, dtype=complex)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ConfigError(f"Lindblad operator must be square, got {L.shape}")
        if not np.all(np.isfinite(L.real)) or not np.all(np.isfinite(L.imag)):
            raise ConfigError("Lindblad operator has non-finite entries")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"channel rate tau must be positive, got {self.tau}")
        object.__setattr__(self, "L", _readonly(L))

    def jump_shift(self, z: PhasePoint) -> tuple:
        """Classical kick (dq, dp) accompanying this channel's jump at z."""
        dq = self.tau * self.dh_dp(z.q, z.p)
        dp = -self.tau * self.dh_dq(z.q, z.p)
        return float(dq), float(dp)


@dataclass(frozen=True)
class ModelSpec:
    """A CQ master equation: Lindblad channels plus the classical Hamiltonian.

    H_C and its analytic partials drive the continuous classical drift;
    the interaction Hamiltonian is reconstructed from the channels as
    sum_a h^a(z) L_a^dag L_a.
    """

    name: str
    d: int
    channels: tuple
    H_C: PhaseFunction
    dHC_dq: PhaseFunction
    dHC_dp: PhaseFunction
    mass: float

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError("quantum dimension must be >= 2")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "channels", tuple(self.channels))
        for ch in self.channels:
            if ch.L.shape != (self.d, self.d):
                raise ConfigError(
                    f"channel operator shape {ch.L.shape} does not match d={self.d}"
                )

    def min_tau(self) -> float:
        return min((ch.tau for ch in self.channels), default=math.inf)


def expectation(A: np.ndarray, phi) -> float:
    """Expectation value <phi|A|phi> of a Hermitian operator.

    The imaginary residual (rounding-level for Hermitian A) is discarded.
    """
    A = np.asarray(A, dtype=complex)
    amps = phi.amplitudes if isinstance(phi, QuantumState) else np.asarray(phi, complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"operator must be square, got shape {A.shape}")
    if A.shape[0] != amps.size:
        raise ConfigError(f"dimension mismatch: operator {A.shape}, state {amps.size}")
    herm_defect = np.max(np.abs(A - A.conj().T))
    if herm_defect > 1e-10 * max(1.0, np.max(np.abs(A))):
        raise ConfigError(f"operator is not Hermitian (defect {herm_defect:.3g})")
    return float(np.vdot(amps, A @ amps).real)


def interaction_hamiltonian(model: ModelSpec, z: PhasePoint) -> np.ndarray:
    """Interaction Hamiltonian sum_a h^a(z) L_a^dag L_a at the point z.

    Exactly Hermitian by construction (real couplings times L^dag L).
    """
    H = np.zeros((model.d, model.d), dtype=complex)
    for ch in model.channels:
        H += float(ch.h(z.q, z.p)) * (ch.L.conj().T @ ch.L)
    return H


def _check_edges(edges, name):
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ConfigError(f"{name} must be a 1-d array of at least 2 edges")
    if not np.all(np.diff(edges) > 0):
        raise ConfigError(f"{name} must be strictly increasing")
    return edges


@dataclass
class HybridDensityGrid:
    """Phase-space grid of subnormalized d x d density matrices.

    ``cells[i, j]`` holds the density (weight per unit cell area) of
    trajectories binned into q-bin i and p-bin j, so the physical mass in
    a cell is ``trace(cells[i, j]) * area[i, j]`` and the total trace over
    a fully covered ensemble is 1.

    Grids built independently (e.g. one per worker with weights 1/n_total)
    merge by cell-wise addition.  Merging is exact when, within every
    cell, contributions are accumulated in a fixed trajectory order; the
    engine's reducer guarantees that order.
    """

    q_edges: np.ndarray
    p_edges: np.ndarray
    cells: np.ndarray
    t: float = 0.0
    n_samples: int = 0
    n_dropped: int = 0

    def __post_init__(self):
        self.q_edges = _check_edges(self.q_edges, "q_edges")
        self.p_edges = _check_edges(self.p_edges, "p_edges")
        self.cells = np.asarray(self.cells, dtype=complex)
        nq, npp = self.q_edges.size - 1, self.p_edges.size - 1
        if self.cells.shape[:2] != (nq, npp) or self.cells.ndim != 4:
            raise ConfigError(
                f"cells shape {self.cells.shape} does not match bins ({nq}, {npp})"
            )

    @classmethod
    def empty(cls, q_edges, p_edges, d: int, t: float = 0.0) -> "HybridDensityGrid":
        q_edges = _check_edges(q_edges, "q_edges")
        p_edges = _check_edges(p_edges, "p_edges")
        cells = np.zeros((q_edges.size - 1, p_edges.size - 1, d, d), dtype=complex)
        return cls(q_edges, p_edges, cells, t=t)

    @property
    def d(self) -> int:
        return self.cells.shape[-1]

    @property
    def q_centers(self) -> np.ndarray:
        return 0.5 * (self.q_edges[:-1] + self.q_edges[1:])

    @property
    def p_centers(self) -> np.ndarray:
        return 0.5 * (self.p_edges[:-1] + self.p_edges[1:])

    @property
    def cell_area(self) -> np.ndarray:
        return np.outer(np.diff(self.q_edges), np.diff(self.p_edges))

    def locate(self, q: float, p: float):
        """Bin indices of a point, or None if outside the grid.

        A point exactly on an interior bin edge belongs to the
        higher-index bin.
        """
        i = int(np.searchsorted(self.q_edges, q, side="right")) - 1
        j = int(np.searchsorted(self.p_edges, p, side="right")) - 1
        if 0 <= i < self.q_edges.size - 1 and 0 <= j < self.p_edges.size - 1:
            return i, j
        return None

    def add_state(self, z: PhasePoint, phi: np.ndarray, weight: float) -> bool:
        """Accumulate weight * |phi><phi| / area into the cell containing z.

        Returns False (and counts a drop) when z lies outside the grid.
        """
        loc = self.locate(z.q, z.p)
        self.n_samples += 1
        if loc is None:
            self.n_dropped += 1
            return False
        i, j = loc
        area = (self.q_edges[i + 1] - self.q_edges[i]) * (
            self.p_edges[j + 1] - self.p_edges[j]
        )
        self.cells[i, j] += (weight / area) * np.outer(phi, np.conj(phi))
        return True

    def merge(self, other: "HybridDensityGrid") -> "HybridDensityGrid":
        """Cell-wise sum of two partial grids with sample-count addition."""
        if (
            self.q_edges.shape != other.q_edges.shape
            or not np.array_equal(self.q_edges, other.q_edges)
            or not np.array_equal(self.p_edges, other.p_edges)
        ):
            raise ConfigError("cannot merge grids with different binning")
        if self.t != other.t:
            raise ConfigError(f"cannot merge grids at different times {self.t} != {other.t}")
        return HybridDensityGrid(
            self.q_edges,
            self.p_edges,
            self.cells + other.cells,
            t=self.t,
            n_samples=self.n_samples + other.n_samples,
            n_dropped=self.n_dropped + other.n_dropped,
        )

    def total_trace(self) -> float:
        """Sum over cells of trace(cell) * cell area; 1 for a full ensemble."""
        tr = np.trace(self.cells, axis1=2, axis2=3).real
        return float(np.sum(tr * self.cell_area))

    def population(self, level: int) -> np.ndarray:
        """Real density of the given quantum level over the grid."""
        return self.cells[:, :, level, level].real.copy()

    def coherence(self, n1: int, n2: int) -> np.ndarray:
        """Complex coherence density <n1|.|n2> over the grid."""
        return self.cells[:, :, n1, n2].copy()

    def l1_distance(self, other: "HybridDensityGrid") -> float:
        """Mass-weighted element-wise L1 distance between two grids."""
        if not np.array_equal(self.q_edges, other.q_edges) or not np.array_equal(
            self.p_edges, other.p_edges
        ):
            raise ConfigError("L1 distance requires identical binning")
        diff = np.abs(self.cells - other.cells).sum(axis=(2, 3))
        return float(np.sum(diff * self.cell_area))
