"""Independent predictions used to validate the trajectory engine.

Three families:

* closed-form results for the qubit models (coherence decay, phase-space
  moments, energy growth, diffusion coefficient, jump-history
  combinatorics, Poisson mixtures);
* a brute-force grid integrator of the CQ master equation on a
  commensurate phase-space lattice, where every shift is an exact
  re-indexing;
* the tridiagonal / Toeplitz eigen-machinery for the harmonic-oscillator
  coherence band.

Everything here is a pure function of its inputs and never calls the
trajectory engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import poisson as _poisson

from .core import (
    ConfigError,
    HybridDensityGrid,
    HybridPureState,
    ModelSpec,
    PhasePoint,
    interaction_hamiltonian,
)
from .models import QubitParams

__all__ = [
    "MomentPrediction",
    "ToeplitzSystem",
    "qubit_diag_coherence",
    "qubit_diag_moments",
    "qubit_diag_energy",
    "diffusion_coefficient",
    "nondiag_position_stats",
    "nondiag_energy_plateau",
    "history_position_stats",
    "poisson_weight",
    "grid_master_integrator",
    "ho_tridiagonal_matrix",
    "toeplitz_band_matrix",
    "ho_toeplitz_eigen",
    "ho_coherence_evolution",
    "band_levels",
    "band_momenta",
]


@dataclass(frozen=True)
class MomentPrediction:
    """Predicted phase-space moments at time t (magnitude conventions)."""

    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    t: float


def qubit_diag_coherence(c0, q: float, p: float, t: float, params: QubitParams) -> complex:
    """Coherence of the diagonal-qubit model transported along free flight.

    c(q, p, t) = c0(q - p t / m, p) * exp(-i q B (omega0 - omega1) t - t / tau):
    a pure phase from the interaction Hamiltonian and an exponential decay
    at rate 1/tau, independent of the phase-space point.
    """
    phase = -1j * q * params.B * (params.omega0 - params.omega1) * t
    return complex(c0(q - p * t / params.mass, p)) * np.exp(phase - t / params.tau)


def qubit_diag_moments(t: float, params: QubitParams, tau0: float = 0.0) -> MomentPrediction:
    """Moments of the diagonal-qubit phase-space marginal at time t.

    mean_q = (B w0 / 2m) t^2, mean_p = B w0 t (magnitudes; the jump kicks
    carry the opposite sign, so comparisons use absolute values),
    var_p = (B w0)^2 tau t and
    var_q = (B w0 t / m)^2 ((tau0 + tau) t + 5 tau0 tau) / 3, where tau0 is
    the rate of the stochastic position-jump picture (tau0 -> 0 recovers
    continuous drift).
    """
    if t < 0 or tau0 < 0:
        raise ConfigError("t and tau0 must be >= 0")
    bw = params.B * params.omega0
    mean_q = 0.5 * bw / params.mass * t * t
    mean_p = bw * t
    var_p = bw * bw * params.tau * t
    var_q = (bw * t / params.mass) ** 2 * ((tau0 + params.tau) * t + 5.0 * tau0 * params.tau) / 3.0
    return MomentPrediction(mean_q, mean_p, var_q, var_p, t)


def qubit_diag_energy(t: float, params: QubitParams) -> float:
    """Mean total energy at time t from the initial state delta(z)|0><0|.

    <H>(t) = (B omega0)^2 tau t / (2 m): linear growth, the kinetic gain
    from momentum diffusion minus the potential-energy drift.
    """
    bw = params.B * params.omega0
    return bw * bw * params.tau * t / (2.0 * params.mass)


def diffusion_coefficient(params: QubitParams) -> float:
    """Momentum diffusion coefficient D = (B omega0)^2 tau, with D t = var_p."""
    bw = params.B * params.omega0
    return bw * bw * params.tau


def nondiag_position_stats(t: float, params: QubitParams, dt: float):
    """Mean and spread of the drifting population for the ladder-channel qubit.

    Starting from delta(z)|0><0| the momentum alternates between 0 and one
    kick, so position accumulates only between odd and even jumps:

        |mean_q|(t) = B w (tau - dt) t / (2 m)
        sigma_q(t)  = (B w / 2 m) (tau - dt)^(3/2) sqrt(t)

    (w = omega0 = -omega1).  The mean applies to the level populated after
    one jump; the other level's curve is the same shifted in time by
    about tau.
    """
    if t < 0:
        raise ConfigError("t must be >= 0")
    if not 0 <= dt < params.tau:
        raise ConfigError("need 0 <= dt < tau")
    w = params.omega0
    mean_q = params.B * w * (params.tau - dt) * t / (2.0 * params.mass)
    sigma_q = params.B * w / (2.0 * params.mass) * (params.tau - dt) ** 1.5 * math.sqrt(t)
    return mean_q, sigma_q


def nondiag_energy_plateau(params: QubitParams) -> float:
    """Saturation value tau^2 / 2 of the ladder-qubit mean energy.

    Late-time limit (in the units B = w = m = 1 of the reference run):
    kinetic tau^2/4 from the half-time spent at the kicked momentum plus
    tau^2/4 of potential-energy gap between the two drifting populations.
    """
    w = params.omega0
    return 0.5 * (params.B * w * params.tau) ** 2 / params.mass


def history_position_stats(k: int, n: int, mode: str = "closed_form"):
    """Position statistics over jump histories with k drifts and n kicks.

    A history is an (n+k)-bit string (1 = momentum kick); the final
    position in jump units equals the number of kick-before-drift pairs.
    ``closed_form`` evaluates mean = n k / 2 and the
    independent-bit approximation
    variance = n k (n+k-1) (2(n+k)-1) / (6 (n+k)); ``enumerate`` averages
    the position over all C(n+k, n) strings exactly.
    """
    if k < 0 or n < 0:
        raise ConfigError("k and n must be >= 0")
    m = n + k
    if mode == "closed_form":
        mean = n * k / 2.0
        var = n * k * (m - 1) * (2 * m - 1) / (6.0 * m) if m > 0 else 0.0
        return mean, var
    if mode == "enumerate":
        if m > 20:
            raise ConfigError(f"enumeration limited to n + k <= 20, got {m}")
        base = n * k + n * (n - 1) // 2
        positions = np.array(
            [base - sum(ones) for ones in combinations(range(m), n)], dtype=float
        )
        return float(positions.mean()), float(positions.var())
    raise ConfigError(f"unknown mode {mode!r}")


def poisson_weight(k: int, t: float, tau: float) -> float:
    """Poisson weight (t/tau)^k exp(-t/tau) / k! of k jumps by time t."""
    if k < 0 or t < 0 or tau <= 0:
        raise ConfigError("need k >= 0, t >= 0, tau > 0")
    return float(_poisson.pmf(k, t / tau))


# ---------------------------------------------------------------------------
# Brute-force master-equation integrator on a commensurate lattice
# ---------------------------------------------------------------------------


def _uniform_width(edges, name):
    widths = np.diff(edges)
    w = widths[0]
    if np.max(np.abs(widths - w)) > 1e-9 * abs(w):
        raise ConfigError(f"{name} must be uniform for the grid integrator")
    return float(w)


def _integer_ratio(value, unit, what):
    r = value / unit
    k = int(round(r))
    if abs(r - k) > 1e-6 * max(1.0, abs(r)):
        raise ConfigError(f"{what} = {value} is not commensurate with bin width {unit}")
    return k


def _shift_2d(W, di, dj):
    """out[i, j] = W[i - di, j - dj] with zero fill; returns (out, lost mass)."""
    out = np.zeros_like(W)
    nq, npp = W.shape[:2]
    qs_src = slice(max(0, -di), min(nq, nq - di))
    qs_dst = slice(max(0, di), min(nq, nq + di))
    ps_src = slice(max(0, -dj), min(npp, npp - dj))
    ps_dst = slice(max(0, dj), min(npp, npp + dj))
    lost = float(np.abs(np.trace(W, axis1=2, axis2=3)).sum())
    if qs_src.stop > qs_src.start and ps_src.stop > ps_src.start:
        out[qs_dst, ps_dst] = W[qs_src, ps_src]
        lost -= float(np.abs(np.trace(W[qs_src, ps_src], axis1=2, axis2=3)).sum())
    return out, lost


def _extend_edges(edges, margin):
    if margin == 0:
        return np.asarray(edges, float)
    w = _uniform_width(edges, "edges")
    lo = edges[0] - w * np.arange(margin, 0, -1)
    hi = edges[-1] + w * np.arange(1, margin + 1)
    return np.concatenate([lo, edges, hi])


def grid_master_integrator(
    model: ModelSpec,
    q_edges,
    p_edges,
    initial,
    total_time: float,
    dt_int: float,
    snapshot_times,
    q_margin_bins: int = 0,
    p_margin_bins: int = 0,
):
    """Evolve the CQ master equation directly on a phase-space lattice.

    First-order splitting: the classical drift is applied as an exact
    per-row re-indexing (each momentum row moves an integer number of
    position bins per step), and the jump dynamics one Euler step

        W += dt (-i [H_I, W] - sum_a {L^dag L, W} / (2 tau_a)
                 + sum_a L_a W(z - Delta_a) L_a^dag / tau_a)

    where the jump reads are exact shifted-bin lookups.  The drift
    sub-step precedes the jump sub-step, matching the unravelling
    convention that a jump update carries no drift.  The configuration
    is rejected unless every classical shift is an integer number of
    bins.

    ``initial`` is a pure CQ state or a ``(PhasePoint, rho)`` pair whose
    point must sit on a bin center.  Margins enlarge the working lattice
    beyond the reported grid to keep transient mass from leaking.

    Returns one HybridDensityGrid per snapshot time (n_samples = 0 marks
    them as analytic).
    """
    q_edges = np.asarray(q_edges, float)
    p_edges = np.asarray(p_edges, float)
    wq = _uniform_width(q_edges, "q_edges")
    wp = _uniform_width(p_edges, "p_edges")
    iq_edges = _extend_edges(q_edges, q_margin_bins)
    ip_edges = _extend_edges(p_edges, p_margin_bins)
    qc = 0.5 * (iq_edges[:-1] + iq_edges[1:])
    pc = 0.5 * (ip_edges[:-1] + ip_edges[1:])
    nq, npp, d = qc.size, pc.size, model.d

    # classical drift must be q-directed and independent of q
    probe_q = np.array([qc[0], qc[nq // 2], qc[-1]])
    for pj in (pc[0], pc[npp // 2], pc[-1]):
        if np.max(np.abs(np.asarray(model.dHC_dq(probe_q, np.full(3, pj))))) > 1e-12:
            raise ConfigError("grid integrator requires dH_C/dq = 0 (free drift)")
        v = np.asarray(model.dHC_dp(probe_q, np.full(3, pj)), float)
        if np.max(np.abs(v - v.flat[0])) > 1e-12 * max(1.0, abs(float(v.flat[0]))):
            raise ConfigError("grid integrator requires q-independent drift speed")
    v_rows = np.broadcast_to(
        np.asarray(model.dHC_dp(np.zeros(npp), pc), float), pc.shape
    )
    drift_bins = np.array(
        [_integer_ratio(v * dt_int, wq, "drift displacement per step") for v in v_rows]
    )

    # channel kicks must be constant over the grid and bin-commensurate
    kicks = []
    for ch in model.channels:
        zs = [PhasePoint(float(qc[0]), float(pc[0])), PhasePoint(float(qc[-1]), float(pc[-1])),
              PhasePoint(float(qc[nq // 2]), float(pc[npp // 2]))]
        shifts = [ch.jump_shift(z) for z in zs]
        dq0, dp0 = shifts[0]
        for dqs, dps in shifts[1:]:
            if abs(dqs - dq0) > 1e-12 * max(1.0, abs(dq0)) or abs(dps - dp0) > 1e-12 * max(
                1.0, abs(dp0)
            ):
                raise ConfigError("grid integrator requires state-independent jump kicks")
        kicks.append(
            (
                _integer_ratio(dq0, wq, f"jump kick dq of channel {ch.label or ''}"),
                _integer_ratio(dp0, wp, f"jump kick dp of channel {ch.label or ''}"),
            )
        )

    if isinstance(initial, HybridPureState):
        z0 = initial.z
        rho0 = np.outer(initial.phi.amplitudes, initial.phi.amplitudes.conj())
    else:
        z0, rho0 = initial
        rho0 = np.asarray(rho0, complex)
    i0 = int(np.searchsorted(iq_edges, z0.q, side="right")) - 1
    j0 = int(np.searchsorted(ip_edges, z0.p, side="right")) - 1
    if not (0 <= i0 < nq and 0 <= j0 < npp):
        raise ConfigError("initial point lies outside the grid")
    if abs(z0.q - qc[i0]) > 1e-9 * wq or abs(z0.p - pc[j0]) > 1e-9 * wp:
        raise ConfigError("initial point must sit on a bin center")

    n_steps = max(0, math.ceil(total_time / dt_int - 1e-9))
    snap_steps = {}
    for t in snapshot_times:
        ks = int(round(t / dt_int))
        if abs(t - ks * dt_int) > 1e-9 * max(dt_int, abs(t)) or ks > n_steps:
            raise ConfigError(f"snapshot time {t} not commensurate with dt_int")
        snap_steps.setdefault(ks, []).append(t)

    # static fields
    Q, P = np.meshgrid(qc, pc, indexing="ij")
    HI = np.zeros((nq, npp, d, d), complex)
    Ms, Ls, Ldags = [], [], []
    for ch in model.channels:
        M = ch.L.conj().T @ ch.L
        Ms.append(M)
        Ls.append(ch.L)
        Ldags.append(ch.L.conj().T)
        ha = np.broadcast_to(np.asarray(ch.h(Q, P), float), Q.shape)
        HI += ha[..., None, None] * M
    D_half = np.zeros((d, d), complex)
    for ch, M in zip(model.channels, Ms):
        D_half += (0.5 / ch.tau) * M

    W = np.zeros((nq, npp, d, d), complex)
    W[i0, j0] = rho0
    leaked = 0.0

    def drift(Warr):
        nonlocal leaked
        out = np.zeros_like(Warr)
        for j, s in enumerate(drift_bins):
            col = Warr[:, j]
            if s == 0:
                out[:, j] = col
            elif s > 0:
                out[s:, j] = col[:-s] if s < nq else 0.0
                lost = col[nq - s:] if s < nq else col
                leaked += float(np.abs(np.trace(lost, axis1=1, axis2=2)).sum())
            else:
                out[: nq + s, j] = col[-s:] if -s < nq else 0.0
                lost = col[: -s] if -s < nq else col
                leaked += float(np.abs(np.trace(lost, axis1=1, axis2=2)).sum())
        return out

    def relax(Warr):
        nonlocal leaked
        dW = -1j * (HI @ Warr - Warr @ HI)
        dW -= D_half @ Warr + Warr @ D_half
        for ch, (kq, kp), L, Ldag in zip(model.channels, kicks, Ls, Ldags):
            shifted, lost = _shift_2d(Warr, kq, kp)
            leaked += dt_int / ch.tau * lost
            dW += (1.0 / ch.tau) * (L @ shifted @ Ldag)
        return Warr + dt_int * dW

    def crop(Warr):
        sl_q = slice(q_margin_bins, nq - q_margin_bins or None)
        sl_p = slice(p_margin_bins, npp - p_margin_bins or None)
        return Warr[sl_q, sl_p]

    area = wq * wp
    grids = []

    def record(step_idx):
        for t in snap_steps.get(step_idx, []):
            g = HybridDensityGrid(q_edges, p_edges, crop(W) / area, t=t, n_samples=0)
            g.mass_leaked = leaked  # diagnostic: mass lost at lattice edges so far
            grids.append(g)

    record(0)
    for k in range(n_steps):
        W = relax(drift(W))
        record(k + 1)
    order = {t: i for i, t in enumerate(snapshot_times)}
    grids.sort(key=lambda g: order[g.t])
    return grids


# ---------------------------------------------------------------------------
# Harmonic-oscillator coherence band: tridiagonal system and Toeplitz limit
# ---------------------------------------------------------------------------


def _band_ks(N: int) -> np.ndarray:
    """Band offsets k in (-N/2, N/2], i.e. k_r = r - N/2 for slots r = 1..N."""
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N % 2:
        raise ConfigError("N must be even (symmetric band)")
    return np.arange(1, N + 1) - N // 2


def ho_tridiagonal_matrix(n1: int, n2: int, N: int, tau: float, phi: float) -> np.ndarray:
    """Generator of the coherence band u_{n1+k, n2+k}, k in (-N/2, N/2].

    Row k couples to k -/+ 1 with sqrt((n1+k)(n2+k)) exp(+/- i phi) / tau
    and decays at (n1 + n2 + 2k + 1) / tau; factors are clipped to zero at
    the k = -n1 boundary.  n1 = n2 selects the population diagonal.
    """
    if not n1 <= n2:
        raise ConfigError("need n1 <= n2")
    ks = _band_ks(N)
    M = np.zeros((N, N), complex)
    for r, k in enumerate(ks):
        M[r, r] = -(n1 + n2 + 2 * k + 1) / tau
        if r > 0:
            M[r, r - 1] = math.sqrt(max(n1 + k, 0) * max(n2 + k, 0)) * np.exp(1j * phi) / tau
        if r < N - 1:
            M[r, r + 1] = (
                math.sqrt(max(n1 + k + 1, 0) * max(n2 + k + 1, 0)) * np.exp(-1j * phi) / tau
            )
    return M


def toeplitz_band_matrix(n1: int, n2: int, N: int, tau: float, phi: float) -> np.ndarray:
    """Constant-diagonal large-n approximation of the band generator.

    Same phase pattern as ho_tridiagonal_matrix (sub-diagonal carries
    exp(+i phi)); the analytic eigensystem reconstructs it as
    B^dag diag(lambda) B.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    off = math.sqrt(n1 * n2) / tau
    T = np.diag(np.full(N, -(n1 + n2) / tau, dtype=complex))
    for r in range(N - 1):
        T[r, r + 1] = off * np.exp(-1j * phi)
        T[r + 1, r] = off * np.exp(1j * phi)
    return T


@dataclass(frozen=True)
class ToeplitzSystem:
    """Analytic eigensystem of the coherence-band Toeplitz matrix."""

    n1: int
    n2: int
    N: int
    tau: float
    phi: float
    eigenvalues: np.ndarray  # lambda_m, m = 1..N
    B: np.ndarray  # unitary, rows are eigenvectors over band slots


def ho_toeplitz_eigen(n1: int, n2: int, N: int, tau: float, phi: float = 0.0) -> ToeplitzSystem:
    """Closed-form eigenvalues and eigenvectors of the band Toeplitz matrix.

    lambda_m = -(n1+n2)/tau + (2/tau) sqrt(n1 n2) cos(m pi / (N+1)) and
    B_{m,r} = sqrt(2/(N+1)) exp(-i r phi) sin(m r pi / (N+1)).
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    m = np.arange(1, N + 1)
    lam = -(n1 + n2) / tau + (2.0 / tau) * math.sqrt(n1 * n2) * np.cos(m * np.pi / (N + 1))
    r = np.arange(1, N + 1)
    B = (
        math.sqrt(2.0 / (N + 1))
        * np.exp(-1j * r[None, :] * phi)
        * np.sin(m[:, None] * r[None, :] * np.pi / (N + 1))
    )
    return ToeplitzSystem(n1, n2, N, tau, phi, lam.astype(complex), B)


def band_levels(n1: int, n2: int, N: int):
    """Fock-label pairs (n1+k, n2+k) of the band slots, in slot order."""
    return [(n1 + int(k), n2 + int(k)) for k in _band_ks(N)]


def band_momenta(N: int, B: float, tau: float) -> np.ndarray:
    """Classical momentum attached to each band slot: k net raises <-> k B tau.

    The engine's flow convention kicks the momentum by +B tau on a raise,
    so slot offset k carries the delta-supported momentum k B tau.
    """
    return _band_ks(N) * B * tau


def ho_coherence_evolution(n1: int, n2: int, N: int, tau: float, t: float) -> np.ndarray:
    """Coherence band at time t from the half-unit initial center slot.

    Expands the initial vector (1/2 at slot (n1, n2), zero elsewhere) in
    the Toeplitz eigenbasis at phase phi = 0 (the traced magnitude is
    phase-independent) and propagates each mode by exp(lambda_m t).
    Returns the N band amplitudes in slot order.
    """
    sys = ho_toeplitz_eigen(n1, n2, N, tau, phi=0.0)
    u0 = np.zeros(N, complex)
    u0[N // 2 - 1] = 0.5  # slot ell = N/2 holds (n1, n2)
    modes = sys.B.conj() @ u0  # expansion coefficients via B^-1 = B^dag
    return sys.B.T @ (np.exp(sys.eigenvalues * t) * modes)
