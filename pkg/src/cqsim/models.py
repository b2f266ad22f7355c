"""The three worked CQ systems: two qubit models and a harmonic oscillator.

All three couple a quantum system to a free classical particle
(H_C = p^2 / 2m) through a position-linear coupling B(q) = q B.  The two
qubit models share the same interaction Hamiltonian but decompose it into
different Lindblad channels, which produces qualitatively different
dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, LindbladChannel, ModelSpec

__all__ = [
    "QubitParams",
    "OscillatorParams",
    "qubit_diagonal",
    "qubit_nondiagonal",
    "harmonic_oscillator",
    "lowering_operator",
    "MODEL_BUILDERS",
    "build_model",
]


@dataclass(frozen=True)
class QubitParams:
    """Qubit-particle coupling constants (defaults match the reference runs)."""

    B: float = 1.0  # coupling, J*s/m
    omega0: float = 1.0  # 1/s
    omega1: float = -1.0  # 1/s
    mass: float = 1.0  # kg
    tau: float = 0.01  # s

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.mass <= 0:
            raise ConfigError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class OscillatorParams:
    """Harmonic-oscillator model constants.

    gamma_up / gamma_down weight the pumping (a^dag) and damping (a)
    channels; both default to 1.  fock_dim is the hard truncation of the
    Fock space: the raising operator annihilates the top level, and runs
    that populate the top two levels beyond 1e-3 must be flagged invalid.
    """

    B: float = 1.0  # J*s/m
    tau: float = 0.1  # s
    gamma_up: float = 1.0
    gamma_down: float = 1.0
    fock_dim: int = 64
    mass: float = 1.0  # kg

    def __post_init__(self):
        if self.fock_dim < 2:
            raise ConfigError(f"fock_dim must be >= 2, got {self.fock_dim}")
        if self.gamma_up < 0 or self.gamma_down < 0:
            raise ConfigError("gamma_up and gamma_down must be >= 0")
        if self.tau <= 0 or self.mass <= 0:
            raise ConfigError("tau and mass must be positive")


def _free_particle(mass):
    H_C = lambda q, p: p * p / (2.0 * mass)
    dHC_dq = lambda q, p: 0.0
    dHC_dp = lambda q, p: p / mass
    return H_C, dHC_dq, dHC_dp


def _linear_coupling(weight, B):
    """h(q, p) = weight * B * q with its exact partials."""
    h = lambda q, p: weight * B * q
    dh_dq = lambda q, p: weight * B
    dh_dp = lambda q, p: 0.0
    return h, dh_dq, dh_dp


def qubit_diagonal(params: QubitParams) -> ModelSpec:
    """Qubit with projector channels |0><0| and |1><1|.

    Channel a carries h^a = omega_a * B * q, so a jump leaves the quantum
    level fixed and kicks the momentum by -omega_a * B * tau.  The
    reconstructed interaction Hamiltonian is
    q B (omega0 |0><0| + omega1 |1><1|).
    """
    P0 = np.diag([1.0 + 0j, 0.0])
    P1 = np.diag([0.0, 1.0 + 0j])
    channels = (
        LindbladChannel(P0, *_linear_coupling(params.omega0, params.B), params.tau, "proj0"),
        LindbladChannel(P1, *_linear_coupling(params.omega1, params.B), params.tau, "proj1"),
    )
    return ModelSpec("qubit-diag", 2, channels, *_free_particle(params.mass), params.mass)


def qubit_nondiagonal(params: QubitParams) -> ModelSpec:
    """Qubit with ladder channels |1><0| and |0><1|.

    L_1^dag L_1 = |0><0| and L_2^dag L_2 = |1><1|, so the interaction
    Hamiltonian equals the diagonal model's, yet every jump now flips the
    quantum level along with the momentum kick.
    """
    up = np.zeros((2, 2), dtype=complex)
    up[1, 0] = 1.0  # |1><0|
    down = np.zeros((2, 2), dtype=complex)
    down[0, 1] = 1.0  # |0><1|
    channels = (
        LindbladChannel(up, *_linear_coupling(params.omega0, params.B), params.tau, "raise01"),
        LindbladChannel(down, *_linear_coupling(params.omega1, params.B), params.tau, "lower10"),
    )
    return ModelSpec("qubit-nondiag", 2, channels, *_free_particle(params.mass), params.mass)


def lowering_operator(dim: int) -> np.ndarray:
    """Truncated annihilation operator a with a|n> = sqrt(n)|n-1>."""
    a = np.zeros((dim, dim), dtype=complex)
    n = np.arange(1, dim)
    a[n - 1, n] = np.sqrt(n)
    return a


def harmonic_oscillator(params: OscillatorParams) -> ModelSpec:
    """Quantum oscillator whose ladder jumps kick the classical momentum.

    The lowering channel sqrt(gamma_down) * a carries h = +B q (momentum
    kick -B tau); the raising channel sqrt(gamma_up) * a^dag carries
    h = -B q (kick +B tau).  The Fock space is truncated hard at
    fock_dim: a^dag maps the top level to zero.
    """
    a = lowering_operator(params.fock_dim)
    channels = (
        LindbladChannel(
            np.sqrt(params.gamma_down) * a,
            *_linear_coupling(+1.0, params.B),
            params.tau,
            "lower",
        ),
        LindbladChannel(
            np.sqrt(params.gamma_up) * a.conj().T,
            *_linear_coupling(-1.0, params.B),
            params.tau,
            "raise",
        ),
    )
    return ModelSpec(
        "oscillator", params.fock_dim, channels, *_free_particle(params.mass), params.mass
    )


def _build_qubit_diag(table):
    return qubit_diagonal(_qubit_params(table))


def _build_qubit_nondiag(table):
    return qubit_nondiagonal(_qubit_params(table))


def _qubit_params(table):
    return QubitParams(
        B=float(table.get("B_J_s_per_m", 1.0)),
        omega0=float(table.get("omega0_per_s", 1.0)),
        omega1=float(table.get("omega1_per_s", -1.0)),
        mass=float(table.get("mass_kg", 1.0)),
        tau=float(table.get("tau_seconds", 0.01)),
    )


def _build_oscillator(table):
    params = OscillatorParams(
        B=float(table.get("B_J_s_per_m", 1.0)),
        tau=float(table.get("tau_seconds", 0.1)),
        gamma_up=float(table.get("gamma_up", 1.0)),
        gamma_down=float(table.get("gamma_down", 1.0)),
        fock_dim=int(table.get("fock_dim", 64)),
        mass=float(table.get("mass_kg", 1.0)),
    )
    return harmonic_oscillator(params)


MODEL_BUILDERS = {
    "qubit-diag": _build_qubit_diag,
    "qubit-nondiag": _build_qubit_nondiag,
    "oscillator": _build_oscillator,
}


def build_model(table: dict) -> ModelSpec:
    """Build a model from a config table with a 'name' key."""
    name = table.get("name")
    if name not in MODEL_BUILDERS:
        raise ConfigError(
            f"unknown model {name!r}; expected one of {sorted(MODEL_BUILDERS)}"
        )
    return MODEL_BUILDERS[name](table)
