import math

import numpy as np
import pytest

from cqsim.core import ConfigError, HybridPureState, PhasePoint, QuantumState
from cqsim.models import ModelSpec, QubitParams, qubit_diagonal
from cqsim.oracles import (
    band_levels,
    band_momenta,
    diffusion_coefficient,
    grid_master_integrator,
    history_position_stats,
    ho_coherence_evolution,
    ho_toeplitz_eigen,
    ho_tridiagonal_matrix,
    nondiag_energy_plateau,
    nondiag_position_stats,
    poisson_weight,
    qubit_diag_coherence,
    qubit_diag_energy,
    qubit_diag_moments,
    toeplitz_band_matrix,
)

FIG_PARAMS = QubitParams(B=1.0, omega0=1.0, omega1=-1.0, mass=1.0, tau=0.01)


class TestQubitCoherence:
    def test_initial_value(self):
        c0 = lambda q, p: 0.25 + 0.1j
        assert qubit_diag_coherence(c0, 0.3, -0.2, 0.0, FIG_PARAMS) == 0.25 + 0.1j

    def test_decay_ratio_point_independent(self):
        c0 = lambda q, p: 0.5
        for q, p in [(0.0, 0.0), (1.3, -0.7), (-2.0, 4.0)]:
            c = qubit_diag_coherence(c0, q, p, 0.02, FIG_PARAMS)
            assert abs(c) / 0.5 == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_magnitude_frozen_value(self):
        c0 = lambda q, p: 1.0
        c = qubit_diag_coherence(c0, 0.0, 0.0, 0.02, FIG_PARAMS)
        assert abs(c) == pytest.approx(0.1353352832366127, rel=1e-12)

    def test_transport_argument(self):
        c0 = lambda q, p: q  # recognizable profile
        c = qubit_diag_coherence(c0, 1.0, 2.0, 0.5, QubitParams(tau=1e9, mass=4.0))
        assert abs(c) == pytest.approx(1.0 - 2.0 * 0.5 / 4.0, rel=1e-9)


class TestQubitMoments:
    def test_zero_time(self):
        m = qubit_diag_moments(0.0, FIG_PARAMS)
        assert (m.mean_q, m.mean_p, m.var_q, m.var_p) == (0.0, 0.0, 0.0, 0.0)

    def test_momentum_variance_frozen(self):
        assert qubit_diag_moments(0.1, FIG_PARAMS).var_p == pytest.approx(1e-3, rel=1e-12)

    def test_tau0_limit_matches_printed_form(self):
        t = 0.1
        lim = (FIG_PARAMS.B * FIG_PARAMS.omega0 * t) ** 2 * FIG_PARAMS.tau * t / 3.0
        assert qubit_diag_moments(t, FIG_PARAMS, tau0=0.0).var_q == pytest.approx(lim)
        near = qubit_diag_moments(t, FIG_PARAMS, tau0=1e-15).var_q
        assert near == pytest.approx(lim, abs=1e-12)

    def test_variances_nonnegative(self):
        for t in (0.0, 0.05, 1.0, 7.3):
            m = qubit_diag_moments(t, FIG_PARAMS, tau0=0.3)
            assert m.var_q >= 0 and m.var_p >= 0


class TestEnergyAndDiffusion:
    def test_energy_zero_at_start(self):
        assert qubit_diag_energy(0.0, FIG_PARAMS) == 0.0

    def test_energy_frozen_value(self):
        assert qubit_diag_energy(0.1, FIG_PARAMS) == pytest.approx(5e-4, rel=1e-12)

    def test_diffusion_value_and_identity(self):
        assert diffusion_coefficient(FIG_PARAMS) == pytest.approx(0.01, rel=1e-12)
        t = 0.37
        assert diffusion_coefficient(FIG_PARAMS) * t == pytest.approx(
            qubit_diag_moments(t, FIG_PARAMS).var_p
        )

    def test_diffusion_vanishes_with_tau(self):
        slow = QubitParams(tau=1e-9)
        assert diffusion_coefficient(slow) == pytest.approx(1e-9)


class TestNondiagPosition:
    def test_zero_time(self):
        assert nondiag_position_stats(0.0, FIG_PARAMS, 1e-4) == (0.0, 0.0)

    def test_frozen_values(self):
        mean_q, sigma_q = nondiag_position_stats(1.0, FIG_PARAMS, 1e-4)
        assert mean_q == pytest.approx(0.00495, rel=1e-12)
        assert sigma_q == pytest.approx(0.5 * 0.0099**1.5, rel=1e-12)

    def test_plateau_value(self):
        assert nondiag_energy_plateau(FIG_PARAMS) == pytest.approx(5e-5, rel=1e-12)


class TestHistoryStats:
    def test_no_position_jumps(self):
        assert history_position_stats(0, 5, "enumerate") == (0.0, 0.0)

    def test_enumeration_mean_three_two(self):
        mean, _ = history_position_stats(3, 2, "enumerate")
        assert mean == 3.0 == 3 * 2 / 2

    def test_one_one_hand_enumeration(self):
        mean_c, var_c = history_position_stats(1, 1, "closed_form")
        mean_e, var_e = history_position_stats(1, 1, "enumerate")
        assert (mean_c, var_c) == (0.5, 0.25)
        assert (mean_e, var_e) == (0.5, 0.25)

    def test_mean_exact_small_sweep(self):
        for k in range(0, 7):
            for n in range(0, 7):
                mc, _ = history_position_stats(k, n, "closed_form")
                me, _ = history_position_stats(k, n, "enumerate")
                assert mc == me == n * k / 2

    def test_size_fault(self):
        with pytest.raises(ConfigError):
            history_position_stats(11, 10, "enumerate")


class TestPoisson:
    def test_zero_zero(self):
        assert poisson_weight(0, 0.0, 1.0) == 1.0

    def test_normalization_and_mean(self):
        w = np.array([poisson_weight(k, 0.1, 0.01) for k in range(201)])
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.dot(np.arange(201), w) == pytest.approx(10.0, abs=1e-10)


class TestTridiagonal:
    def test_frozen_small_case(self):
        M = ho_tridiagonal_matrix(1, 2, 2, 1.0, 0.0)
        assert M[0, 0] == -4.0 and M[1, 1] == -6.0
        assert M[0, 1] == pytest.approx(math.sqrt(6.0))
        assert M[1, 0] == pytest.approx(math.sqrt(6.0))

    def test_real_symmetric_at_zero_phase(self):
        M = ho_tridiagonal_matrix(4, 9, 6, 0.5, 0.0)
        assert np.max(np.abs(M.imag)) == 0.0
        assert np.allclose(M, M.T)

    def test_rejects_odd_band_or_bad_levels(self):
        with pytest.raises(ConfigError):
            ho_tridiagonal_matrix(1, 2, 3, 1.0, 0.0)
        with pytest.raises(ConfigError):
            ho_tridiagonal_matrix(3, 2, 2, 1.0, 0.0)

    def test_toeplitz_limit_entrywise(self):
        n = 1000
        M = ho_tridiagonal_matrix(n, n, 10, 1.0, 0.3)
        T = toeplitz_band_matrix(n, n, 10, 1.0, 0.3)
        rel = np.abs(M - T).max() / np.abs(M).max()
        assert rel < 10.0 / n * 2  # deviation O(N/n)


class TestToeplitzEigen:
    def test_single_mode(self):
        sys1 = ho_toeplitz_eigen(1, 1, 1, 1.0)
        assert sys1.eigenvalues[0] == pytest.approx(-2.0, abs=1e-14)

    def test_unitary(self):
        sys_ = ho_toeplitz_eigen(5, 9, 8, 0.7, phi=1.3)
        assert np.max(np.abs(sys_.B @ sys_.B.conj().T - np.eye(8))) < 1e-10

    def test_spectral_bound(self):
        sys_ = ho_toeplitz_eigen(4, 16, 10, 0.5)
        bound = -((2.0 - 4.0) ** 2) / 0.5  # -(sqrt(n1)-sqrt(n2))^2 / tau
        assert np.all(sys_.eigenvalues.real <= bound + 1e-12)
        assert np.all(sys_.eigenvalues.real < 0)

    def test_reconstructs_band_matrix(self):
        n1, n2, N, tau, phi = 7, 19, 6, 0.4, 0.9
        sys_ = ho_toeplitz_eigen(n1, n2, N, tau, phi)
        T = toeplitz_band_matrix(n1, n2, N, tau, phi)
        rec = sys_.B.conj().T @ np.diag(sys_.eigenvalues) @ sys_.B
        assert np.linalg.norm(rec - T) < 1e-8

    def test_eigenvectors_match_dense_solver(self):
        n1, n2, N, tau, phi = 6, 11, 8, 0.3, 0.4
        sys_ = ho_toeplitz_eigen(n1, n2, N, tau, phi)
        T = toeplitz_band_matrix(n1, n2, N, tau, phi)
        for m in range(N):
            v = sys_.B[m].conj()  # rows of B diagonalize T from the left
            assert np.linalg.norm(T @ v - sys_.eigenvalues[m] * v) < 1e-8
        dense = np.sort(np.linalg.eigvals(T).real)
        assert np.allclose(dense, np.sort(sys_.eigenvalues.real), atol=1e-9)


class TestCoherenceEvolution:
    def test_initial_condition(self):
        band = ho_coherence_evolution(15, 30, 10, 0.25, 0.0)
        expected = np.zeros(10)
        expected[4] = 0.5
        assert np.allclose(band, expected, atol=1e-12)

    def test_frozen_center_value(self):
        u = ho_coherence_evolution(15, 30, 10, 0.25, 0.004)[4]
        assert abs(u) == pytest.approx(0.2722309317979769, rel=1e-10)

    def test_center_matches_mode_sum(self):
        # independent evaluation: explicit eigen-sum for the center slot
        n1, n2, N, tau, t = 15, 30, 10, 0.25, 0.006
        m = np.arange(1, N + 1)
        lam = -(n1 + n2) / tau + 2 * math.sqrt(n1 * n2) / tau * np.cos(m * np.pi / (N + 1))
        s = np.sin(N * m * np.pi / (2 * (N + 1))) ** 2
        direct = np.sum(s * np.exp(lam * t)) / (N + 1)
        assert abs(ho_coherence_evolution(n1, n2, N, tau, t)[N // 2 - 1]) == pytest.approx(
            direct, rel=1e-10
        )

    def test_early_log_slope_dominated_by_gamma(self):
        n1, n2, tau, N = 15, 30, 0.25, 10
        ts = np.array([1e-5, 2e-5])
        vals = [abs(ho_coherence_evolution(n1, n2, N, tau, t)[N // 2 - 1]) for t in ts]
        slope = (math.log(vals[1]) - math.log(vals[0])) / (ts[1] - ts[0])
        m = np.arange(1, N + 1)
        s = np.sin(N * m * np.pi / (2 * (N + 1))) ** 2
        mean_cos = np.sum(s * np.cos(m * np.pi / (N + 1))) / s.sum()
        expected = -(n1 + n2) / tau + 2 * math.sqrt(n1 * n2) / tau * mean_cos
        assert slope == pytest.approx(expected, rel=0.10)

    def test_band_size_convergence(self):
        ts = np.linspace(0.0, 0.01, 11)
        for t in ts:
            u10 = abs(ho_coherence_evolution(15, 30, 10, 0.25, t)[4])
            u14 = abs(ho_coherence_evolution(15, 30, 14, 0.25, t)[6])
            assert abs(u10 - u14) <= 0.01 * u10

    def test_band_bookkeeping(self):
        assert band_levels(15, 30, 4) == [(14, 29), (15, 30), (16, 31), (17, 32)]
        assert np.allclose(band_momenta(4, 1.0, 0.25), [-0.25, 0.0, 0.25, 0.5])


def _trivial_model():
    return ModelSpec(
        "static",
        2,
        (),
        lambda q, p: 0.0,
        lambda q, p: 0.0,
        lambda q, p: 0.0,
        1.0,
    )


class TestGridIntegrator:
    def test_static_model_is_constant(self):
        model = _trivial_model()
        q_edges = np.linspace(-0.5, 0.5, 6)
        p_edges = np.linspace(-0.5, 0.5, 6)
        state = HybridPureState(QuantumState.basis(2, 0), PhasePoint(-0.2, 0.2))
        grids = grid_master_integrator(
            model, q_edges, p_edges, state, 1.0, 0.01, [0.0, 0.5, 1.0]
        )
        assert np.array_equal(grids[0].cells, grids[1].cells)
        assert np.array_equal(grids[0].cells, grids[2].cells)
        assert grids[2].total_trace() == pytest.approx(1.0, abs=1e-12)

    def test_trace_preserved_every_step(self):
        params = QubitParams(tau=0.1)
        model = qubit_diagonal(params)
        dt_int = 1e-3
        # window wide enough that (up to < 1e-9 tail mass) nothing drifts out
        q_edges = (np.arange(284) - 141.5) * 1e-4  # width = B*tau*dt_int
        p_edges = (np.arange(22) - 10.5) * 0.1  # width = B*tau
        state = HybridPureState(
            QuantumState.superposition(2, [0, 1]),
            PhasePoint(1e-4, 0.1),  # a bin center off the origin
        )
        times = [k * dt_int for k in range(21)]
        grids = grid_master_integrator(
            model, q_edges, p_edges, state, times[-1], dt_int, times,
            q_margin_bins=40, p_margin_bins=10,
        )
        for g in grids:
            assert abs(g.total_trace() - 1.0) < 1e-8
            # PSD of the subnormalized density matrices (mass units)
            mass = g.cells * g.cell_area[..., None, None]
            eigs = np.linalg.eigvalsh(mass.reshape(-1, 2, 2))
            assert eigs.min() > -1e-10

    def test_coherence_cell_matches_analytic_decay(self):
        # populations drift off the narrow lattice (irrelevant here); the
        # origin coherence cell evolves in place and must track the
        # analytic transport-decay solution
        params = QubitParams(tau=0.1)
        model = qubit_diagonal(params)
        dt_int = 2e-6
        n_steps = 1000
        t_final = dt_int * n_steps
        wq = params.B * params.tau * dt_int / params.mass
        q_edges = (np.arange(6) - 2.5) * wq
        p_edges = (np.arange(6) - 2.5) * params.B * params.tau
        state = HybridPureState(QuantumState.superposition(2, [0, 1]), PhasePoint(0, 0))
        grids = grid_master_integrator(
            model, q_edges, p_edges, state, t_final, dt_int, [t_final],
            q_margin_bins=25, p_margin_bins=25,
        )
        i, j = grids[0].locate(0.0, 0.0)
        got = grids[0].coherence(0, 1)[i, j] * grids[0].cell_area[i, j]
        want = qubit_diag_coherence(lambda q, p: 0.5, 0.0, 0.0, t_final, params)
        assert abs(got - want) / abs(want) < 1e-6

    def test_rejects_non_commensurate_bins(self):
        model = qubit_diagonal(QubitParams(tau=0.1))
        state = HybridPureState(QuantumState.basis(2, 0), PhasePoint(0, 0))
        p_edges = np.linspace(-0.33, 0.33, 12)  # kick 0.1 not a multiple of 0.06
        q_edges = np.linspace(-1e-4, 1e-4, 12)
        with pytest.raises(ConfigError):
            grid_master_integrator(model, q_edges, p_edges, state, 0.01, 1e-3, [0.01])

    def test_rejects_off_center_initial_point(self):
        model = _trivial_model()
        edges = np.linspace(-0.5, 0.5, 6)
        state = HybridPureState(QuantumState.basis(2, 0), PhasePoint(0.05, 0.1))
        with pytest.raises(ConfigError):
            grid_master_integrator(model, edges, edges, state, 0.1, 0.01, [0.1])
