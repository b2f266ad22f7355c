"""Estimators over trajectory ensembles and density grids.

Moments are preferably computed from the raw trajectory samples (no
binning bias); the grid-based path exists for comparisons against the
grid oracle and uses bin centers.  The Gaussian "fit" is moment matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigError, HybridDensityGrid, ModelSpec, interaction_hamiltonian
from .engine import SnapshotSamples

__all__ = [
    "WeightedMoments",
    "CoherenceEstimate",
    "marginal_moments",
    "sample_moments",
    "gaussian_fit",
    "coherence_extract",
    "energy_expectation",
    "energy_samples",
    "fit_decay_rate",
    "top_level_population",
]


@dataclass(frozen=True)
class WeightedMoments:
    """Weighted sample mean/variance with their standard errors."""

    mean: float
    variance: float
    se_mean: float
    se_variance: float
    weight: float  # total weight fraction of the conditioning


def marginal_moments(grid: HybridDensityGrid, level: Optional[int], axis: str):
    """Mean and variance of a level-conditioned marginal, from bin centers.

    ``level=None`` uses the trace (full phase-space density).  Raises when
    the conditional mass vanishes.
    """
    if axis not in ("q", "p"):
        raise ConfigError(f"axis must be 'q' or 'p', got {axis!r}")
    if level is None:
        density = np.trace(grid.cells, axis1=2, axis2=3).real
    else:
        density = grid.cells[:, :, level, level].real
    mass = density * grid.cell_area
    marg = mass.sum(axis=1) if axis == "q" else mass.sum(axis=0)
    centers = grid.q_centers if axis == "q" else grid.p_centers
    total = marg.sum()
    if total <= 0:
        raise ValueError(f"marginal has no mass for level={level}")
    mean = float(np.dot(marg, centers) / total)
    var = float(np.dot(marg, (centers - mean) ** 2) / total)
    return mean, var


def sample_moments(values, weights=None) -> WeightedMoments:
    """Weighted mean/variance of raw samples with delta-method errors."""
    x = np.asarray(values, float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    w = np.ones_like(x) if weights is None else np.asarray(weights, float)
    tot = w.sum()
    if tot <= 0:
        raise ValueError("total weight vanishes")
    mean = float(np.dot(w, x) / tot)
    dev = x - mean
    var = float(np.dot(w, dev**2) / tot)
    se_mean = float(np.sqrt(np.dot(w**2, dev**2)) / tot)
    se_var = float(np.sqrt(np.dot(w**2, (dev**2 - var) ** 2)) / tot)
    return WeightedMoments(mean, var, se_mean, se_var, float(tot / x.size))


def gaussian_fit(samples):
    """Moment-matched normal parameters (mean, unbiased standard deviation)."""
    x = np.asarray(samples, float)
    if x.size < 2:
        raise ValueError("need at least 2 samples to fit a Gaussian")
    return float(x.mean()), float(x.std(ddof=1))


@dataclass(frozen=True)
class CoherenceEstimate:
    """Ensemble coherence <n1|.|n2> with its Monte Carlo standard error."""

    value: complex
    se: float
    n_used: int
    cell: Optional[tuple] = None


def coherence_extract(
    samples: SnapshotSamples,
    n1: int,
    n2: int,
    mode: str = "traced",
    cell: Optional[tuple] = None,
) -> CoherenceEstimate:
    """Coherence (1/n) sum_i <n1|phi_i><phi_i|n2> over a snapshot.

    ``traced`` sums every trajectory (classical degrees integrated out);
    ``at-cell`` restricts the sum to trajectories inside the half-open
    cell ((q_lo, q_hi), (p_lo, p_hi)), still normalized by the full
    ensemble size, and reports the cell used.
    """
    contrib = samples.phi[:, n1] * samples.phi[:, n2].conj()
    n = samples.n
    if mode == "traced":
        mask = np.ones(n, dtype=bool)
        used_cell = None
    elif mode == "at-cell":
        if cell is None:
            raise ConfigError("at-cell mode needs cell=((q_lo, q_hi), (p_lo, p_hi))")
        (q_lo, q_hi), (p_lo, p_hi) = cell
        mask = (
            (samples.q >= q_lo) & (samples.q < q_hi)
            & (samples.p >= p_lo) & (samples.p < p_hi)
        )
        if not mask.any():
            raise ValueError(f"no trajectories in cell {cell}")
        used_cell = ((float(q_lo), float(q_hi)), (float(p_lo), float(p_hi)))
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    kept = np.where(mask, contrib, 0.0)
    value = complex(kept.sum() / n)
    dev = kept - value
    se = float(np.sqrt((dev.real.var() + dev.imag.var()) / n))
    return CoherenceEstimate(value, se, int(mask.sum()), used_cell)


def energy_expectation(grid: HybridDensityGrid, model: ModelSpec) -> float:
    """Mean energy sum_cells area * tr[(H_C + H_I)(z_c) cell] at bin centers."""
    qc, pc = grid.q_centers, grid.p_centers
    area = grid.cell_area
    tr = np.trace(grid.cells, axis1=2, axis2=3).real
    Q, P = np.meshgrid(qc, pc, indexing="ij")
    classical = np.broadcast_to(np.asarray(model.H_C(Q, P), float), Q.shape)
    total = float(np.sum(classical * tr * area))
    HI = np.zeros((qc.size, pc.size, model.d, model.d), complex)
    for ch in model.channels:
        ha = np.broadcast_to(np.asarray(ch.h(Q, P), float), Q.shape)
        HI += ha[..., None, None] * (ch.L.conj().T @ ch.L)
    inter = np.einsum("qpij,qpji->qp", HI, grid.cells).real
    total += float(np.sum(inter * area))
    return total


def energy_samples(samples: SnapshotSamples, model: ModelSpec) -> np.ndarray:
    """Per-trajectory energies H_C(z) + <phi|H_I(z)|phi> from raw samples."""
    q, p, phi = samples.q, samples.p, samples.phi
    e = np.broadcast_to(np.asarray(model.H_C(q, p), float), q.shape).copy()
    for ch in model.channels:
        y = phi @ ch.L.T
        ha = np.broadcast_to(np.asarray(ch.h(q, p), float), q.shape)
        e = e + ha * np.einsum("ni,ni->n", y.conj(), y).real
    return e


def fit_decay_rate(times, magnitudes) -> float:
    """Decay rate from a least-squares line through log|magnitude|."""
    t = np.asarray(times, float)
    m = np.asarray(magnitudes, float)
    if t.size < 2:
        raise ValueError("need at least 2 points to fit a rate")
    if np.any(m <= 0):
        raise ValueError("magnitudes must be positive for a log fit")
    slope = np.polyfit(t, np.log(m), 1)[0]
    return float(-slope)


def top_level_population(samples: SnapshotSamples, n_top: int = 2) -> float:
    """Mean total population of the top Fock levels; flags truncation issues."""
    return float(np.sum(np.abs(samples.phi[:, -n_top:]) ** 2, axis=1).mean())
