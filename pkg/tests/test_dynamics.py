"""Tests for the conditional covariance dynamics: coefficient builders
checked against hand computations, the RK4 integrator against closed-form
solutions, and steady states against scipy's algebraic solvers."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg as sla

from mechmbqc import dynamics as dyn
from mechmbqc.states import GaussianState, symplectic_form, vacuum


def mode_coupling(rate):
    """2x2 coupling block of sqrt(rate) (X X_out + P P_out)."""
    return np.sqrt(rate) * np.eye(2)


def q_coupling(rate):
    """2x2 block coupling only the q quadrature, sqrt(rate) q Q_out."""
    c = np.zeros((2, 2))
    c[0, 0] = np.sqrt(rate)
    return c


# ---------------------------------------------------------------------------
# Lyapunov coefficients


def test_lyapunov_damped_mode_vacuum_bath():
    gamma = 2.0
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma), 0.5 * np.eye(2))
    assert_allclose(drift, -0.5 * gamma * np.eye(2), atol=1e-14)
    assert_allclose(diffusion, 0.5 * gamma * np.eye(2), atol=1e-14)


def test_lyapunov_damped_mode_thermal_bath():
    gamma, nbar = 1.3, 2.5
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma), (nbar + 0.5) * np.eye(2))
    assert_allclose(drift, -0.5 * gamma * np.eye(2), atol=1e-14)
    assert_allclose(diffusion, gamma * (nbar + 0.5) * np.eye(2), atol=1e-14)


def test_lyapunov_zero_coupling():
    drift, diffusion = dyn.build_lyapunov(np.zeros((4, 2)), 0.5 * np.eye(2))
    assert_allclose(drift, np.zeros((4, 4)))
    assert_allclose(diffusion, np.zeros((4, 4)))


def test_lyapunov_dimension_mismatch():
    with pytest.raises(ValueError):
        dyn.build_lyapunov(np.zeros((4, 2)), 0.5 * np.eye(4))


def test_add_system_hamiltonian_zero():
    drift = -np.eye(2)
    assert_allclose(dyn.add_system_hamiltonian(drift, np.zeros((2, 2))), drift)


def test_add_system_hamiltonian_harmonic_rotation():
    omega = 0.7
    h = omega * np.eye(2)
    out = dyn.add_system_hamiltonian(np.zeros((2, 2)), h)
    assert_allclose(out, omega * np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_add_system_hamiltonian_qnd_pattern():
    # Cavity X coupled to mechanical X at strength g: momenta pick up the
    # partner position, positions stay untouched.
    g = 1.7
    h = np.zeros((4, 4))
    h[0, 2] = h[2, 0] = g
    drift = dyn.add_system_hamiltonian(np.zeros((4, 4)), h)
    expected = np.zeros((4, 4))
    expected[1, 2] = -g
    expected[3, 0] = -g
    assert_allclose(drift, expected)


# ---------------------------------------------------------------------------
# Riccati coefficients


def test_riccati_hand_computation_equal_covariances():
    # sigma_m = sigma_B = I/2 and eta = 1 make (sigma_B + sigma_m)^-1 = I.
    c = mode_coupling(2.0)
    drift_t, diffusion_t, backaction = dyn.build_riccati(
        c, 0.5 * np.eye(2), 0.5 * np.eye(2), eta=1.0
    )
    omega = symplectic_form(1)
    drift, diffusion = dyn.build_lyapunov(c, 0.5 * np.eye(2))
    assert_allclose(drift_t, drift - 0.5 * omega @ c @ omega @ c.T, atol=1e-14)
    assert_allclose(
        diffusion_t, diffusion + 0.25 * omega @ c @ c.T @ omega, atol=1e-14
    )
    assert_allclose(backaction, c @ omega, atol=1e-14)


def test_riccati_low_efficiency_degrades_to_lyapunov():
    c = mode_coupling(1.0)
    sigma_m = dyn.homodyne_post_meas_cov(10.0)
    drift_t, diffusion_t, backaction = dyn.build_riccati(
        c, 0.5 * np.eye(2), sigma_m, eta=1e-9
    )
    drift, diffusion = dyn.build_lyapunov(c, 0.5 * np.eye(2))
    assert_allclose(drift_t, drift, atol=1e-6)
    assert_allclose(diffusion_t, diffusion, atol=1e-6)
    assert np.max(np.abs(backaction)) < 1e-4
    # The integrated evolutions agree over a couple of decay times.
    sigma0 = np.diag([3.0, 0.4])
    monitored = dyn.integrate(
        sigma0, dyn.EvolutionCoefficients(drift_t, diffusion_t, backaction),
        2.0, dt=1e-3)
    lyapunov = dyn.integrate(
        sigma0, dyn.EvolutionCoefficients(drift, diffusion), 2.0, dt=1e-3)
    assert np.max(np.abs(monitored.covs[-1] - lyapunov.covs[-1])) < 1e-6


def test_riccati_backaction_row_pattern_for_q_coupling():
    # A pure q Q coupling read out in the conjugate quadrature conditions q:
    # B has support only in the q row.
    sigma_m = 0.5 * np.diag([np.exp(2.0), np.exp(-2.0)])  # momentum-squeezed
    _, _, backaction = dyn.build_riccati(q_coupling(3.0), 0.5 * np.eye(2),
                                         sigma_m, eta=1.0)
    assert np.max(np.abs(backaction[1, :])) < 1e-14
    assert np.max(np.abs(backaction[0, :])) > 0.1


def test_riccati_rejects_singular_total_covariance():
    with pytest.raises(ValueError, match="positive definite"):
        dyn.build_riccati(mode_coupling(1.0), np.zeros((2, 2)),
                          np.zeros((2, 2)), eta=1.0)


def test_riccati_rejects_bad_efficiency():
    with pytest.raises(ValueError):
        dyn.build_riccati(mode_coupling(1.0), 0.5 * np.eye(2),
                          0.5 * np.eye(2), eta=0.0)


def test_coefficients_without_monitored_channel_have_no_backaction():
    coupling = dyn.CouplingSpec(np.zeros((4, 4)), np.zeros((4, 0)),
                                np.zeros((4, 2)))
    baths = dyn.BathSpec(np.zeros((0, 0)), 0.5 * np.eye(2), np.zeros((0, 0)))
    coeffs = dyn.build_coefficients(coupling, baths)
    assert coeffs.backaction.shape == (4, 0)
    assert not np.any(coeffs.bbt())


def test_coefficients_compose_additively():
    # build_coefficients must equal the manual sum of its three parts.
    rng = np.random.default_rng(2)
    h = rng.normal(size=(4, 4))
    h = 0.5 * (h + h.T)
    c_m = rng.normal(size=(4, 2))
    c_d = rng.normal(size=(4, 4))
    sigma_d = np.diag(rng.uniform(0.5, 3.0, size=4))
    sigma_m = dyn.homodyne_post_meas_cov(8.0)
    coupling = dyn.CouplingSpec(h, c_m, c_d)
    baths = dyn.BathSpec(0.5 * np.eye(2), sigma_d, sigma_m, eta=0.9)
    coeffs = dyn.build_coefficients(coupling, baths)

    a_lyap, d_lyap = dyn.build_lyapunov(c_d, sigma_d)
    a_ricc, d_ricc, backaction = dyn.build_riccati(c_m, 0.5 * np.eye(2),
                                                   sigma_m, eta=0.9)
    assert_allclose(coeffs.drift,
                    dyn.add_system_hamiltonian(a_lyap + a_ricc, h), atol=1e-12)
    assert_allclose(coeffs.diffusion, d_lyap + d_ricc, atol=1e-12)
    assert_allclose(coeffs.backaction, backaction, atol=1e-12)


# ---------------------------------------------------------------------------
# integrator


def test_integrate_matches_thermal_relaxation():
    gamma, nbar = 2.0, 1.5
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma),
                                          (nbar + 0.5) * np.eye(2))
    coeffs = dyn.EvolutionCoefficients(drift, diffusion)
    t_end = 1.0 / gamma
    traj = dyn.integrate(0.5 * np.eye(2), coeffs, t_end, dt=t_end / 500)
    decay = np.exp(-gamma * t_end)
    expected = decay * 0.5 * np.eye(2) + (1 - decay) * (nbar + 0.5) * np.eye(2)
    assert np.max(np.abs(traj.covs[-1] - expected)) < 1e-8
    assert traj.times[-1] == pytest.approx(t_end)


def test_integrate_harmonic_rotation_preserves_purity():
    omega = 3.0
    drift = dyn.add_system_hamiltonian(np.zeros((2, 2)), omega * np.eye(2))
    coeffs = dyn.EvolutionCoefficients(drift, np.zeros((2, 2)))
    sigma0 = np.diag([1.0, 0.25])
    traj = dyn.integrate(sigma0, coeffs, 2.0, dt=1e-3, n_samples=50)
    for cov in traj.covs:
        state = GaussianState(1, cov)
        assert state.is_pure(atol=1e-6)
    # Quarter period swaps the quadratures.
    quarter = dyn.integrate(sigma0, coeffs, np.pi / (2 * omega), dt=1e-5)
    assert_allclose(quarter.covs[-1], np.diag([0.25, 1.0]), atol=1e-6)


def scalar_riccati_setup(strength, r_pm_db, eta):
    """Single mode with only its q quadrature coupled out and monitored.

    Reading out the conjugate quadrature of the output conditions q. The
    closed forms used as oracles:

        Var_q(t) = V0 / (1 + b V0 t),   b = strength / (1/2 + sm_pp)
        Var_p(t) = Vp0 + (strength/2 - strength * u_qq / 4) t

    with sm the eta-distorted post-measurement covariance and
    u_qq = 1 / (1/2 + sm_qq).
    """
    r = r_pm_db * np.log(10.0) / 20.0
    sigma_m = 0.5 * np.diag([np.exp(2 * r), np.exp(-2 * r)])
    drift_t, diffusion_t, backaction = dyn.build_riccati(
        q_coupling(strength), 0.5 * np.eye(2), sigma_m, eta=eta
    )
    sm_eff = sigma_m / eta + (1 - eta) / eta * np.eye(2)
    b = strength / (0.5 + sm_eff[1, 1])
    u_qq = 1.0 / (0.5 + sm_eff[0, 0])
    dp_rate = strength / 2.0 - strength * u_qq / 4.0
    return dyn.EvolutionCoefficients(drift_t, diffusion_t, backaction), b, dp_rate


def test_integrate_matches_scalar_riccati_oracle():
    strength, v0, vp0 = 4.0, 3.0, 1.0
    coeffs, b, dp_rate = scalar_riccati_setup(strength, 10.0, 0.9)
    t_end = 2.0 / b
    traj = dyn.integrate(np.diag([v0, vp0]), coeffs, t_end, dt=t_end / 4000)
    assert abs(traj.covs[-1][0, 0] - v0 / (1 + b * v0 * t_end)) < 1e-8
    assert abs(traj.covs[-1][1, 1] - (vp0 + dp_rate * t_end)) < 1e-8
    assert abs(traj.covs[-1][0, 1]) < 1e-10


def test_monitored_variance_monotone_without_dissipators():
    coeffs, b, _ = scalar_riccati_setup(2.0, 12.0, 1.0)
    traj = dyn.integrate(np.diag([5.0, 1.0]), coeffs, 3.0 / b, dt=0.002 / b,
                         n_samples=100)
    variances = traj.covs[:, 0, 0]
    assert np.all(np.diff(variances) <= 1e-12)


def test_integrate_symmetry_and_physicality_every_sample():
    gamma, nbar = 1.0, 0.8
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma),
                                          (nbar + 0.5) * np.eye(2))
    coeffs = dyn.EvolutionCoefficients(drift, diffusion)
    traj = dyn.integrate(0.5 * np.eye(2), coeffs, 3.0, dt=1e-3, n_samples=60)
    for cov in traj.covs:
        assert_allclose(cov, cov.T, atol=1e-14)
        assert GaussianState(1, cov).is_physical()


def test_integrate_rejects_bad_step():
    coeffs = dyn.EvolutionCoefficients(-np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        dyn.integrate(0.5 * np.eye(2), coeffs, 1.0, dt=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_integrate_aborts_on_physicality_loss():
    # An absurdly large fixed step makes RK4 blow up; the guard reports it.
    coeffs, b, _ = scalar_riccati_setup(4.0, 20.0, 1.0)
    with pytest.raises(dyn.PhysicalityError):
        dyn.integrate(np.diag([30.0, 30.0]), coeffs, 2000.0, dt=40.0,
                      check_interval=1)


def test_suggest_dt_resolves_fastest_scale():
    gamma = 50.0
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma), 0.5 * np.eye(2))
    coeffs = dyn.EvolutionCoefficients(drift, diffusion)
    dt = dyn.suggest_dt(coeffs, 0.5 * np.eye(2), horizon=1.0)
    assert dt <= 1.0 / (20.0 * gamma / 2.0)


def test_integrator_dt_refinement_converges():
    coeffs, b, _ = scalar_riccati_setup(3.0, 8.0, 0.95)
    t_end = 1.0 / b
    coarse = dyn.integrate(np.diag([4.0, 1.0]), coeffs, t_end, dt=t_end / 400)
    fine = dyn.integrate(np.diag([4.0, 1.0]), coeffs, t_end, dt=t_end / 800)
    assert np.max(np.abs(coarse.covs[-1] - fine.covs[-1])) < 1e-9


# ---------------------------------------------------------------------------
# steady states


def test_steady_state_thermal():
    gamma, nbar = 0.7, 2.2
    drift, diffusion = dyn.build_lyapunov(mode_coupling(gamma),
                                          (nbar + 0.5) * np.eye(2))
    out = dyn.steady_state(dyn.EvolutionCoefficients(drift, diffusion))
    assert_allclose(out.cov, (nbar + 0.5) * np.eye(2), atol=1e-12)


def test_steady_state_lyapunov_residual():
    rng = np.random.default_rng(9)
    m = rng.normal(size=(4, 4))
    drift = -(m @ m.T) - 0.1 * np.eye(4)  # negative definite, hence Hurwitz
    noise = rng.normal(size=(4, 4))
    diffusion = noise @ noise.T
    coeffs = dyn.EvolutionCoefficients(drift, diffusion)
    out = dyn.steady_state(coeffs)
    residual = drift @ out.cov + out.cov @ drift.T + diffusion
    assert np.max(np.abs(residual)) < 1e-10


def test_steady_state_rejects_non_hurwitz():
    coeffs = dyn.EvolutionCoefficients(np.eye(2), np.eye(2))
    with pytest.raises(ValueError, match="Hurwitz"):
        dyn.steady_state(coeffs)


def test_steady_state_with_monitoring_matches_care():
    # Independent check: the Riccati fixed point solves the continuous-time
    # algebraic Riccati equation, solvable directly by scipy.
    gamma, nbar = 0.5, 1.0
    drift_d, diffusion_d = dyn.build_lyapunov(mode_coupling(gamma),
                                              (nbar + 0.5) * np.eye(2))
    coeffs_m, _, _ = scalar_riccati_setup(2.0, 10.0, 0.9)
    coeffs = dyn.EvolutionCoefficients(
        drift_d + coeffs_m.drift,
        diffusion_d + coeffs_m.diffusion,
        coeffs_m.backaction,
    )
    iterated = dyn.steady_state(coeffs, tol=1e-12)
    care = sla.solve_continuous_are(
        coeffs.drift.T, coeffs.backaction, coeffs.diffusion,
        np.eye(coeffs.backaction.shape[1]),
    )
    assert_allclose(iterated.cov, care, atol=1e-8)


def test_trajectory_state_accessors():
    coeffs = dyn.EvolutionCoefficients(-np.eye(2), np.eye(2))
    traj = dyn.integrate(vacuum(1), coeffs, 1.0, dt=0.01, n_samples=5)
    assert isinstance(traj.final_state, GaussianState)
    assert len(traj) == len(traj.times)
    assert_allclose(traj.state_at(0).cov, 0.5 * np.eye(2))


def test_trajectory_columnar_export():
    coeffs = dyn.EvolutionCoefficients(-np.eye(2), np.eye(2))
    traj = dyn.integrate(vacuum(1), coeffs, 1.0, dt=0.01, n_samples=5)
    columns = traj.as_records()
    assert set(columns) == {"time_s", "cov_0_0", "cov_0_1", "cov_1_1",
                            "min_symplectic_eigenvalue"}
    assert_allclose(columns["time_s"], traj.times)
    assert_allclose(columns["cov_0_1"], traj.covs[:, 0, 1])
    assert np.all(columns["min_symplectic_eigenvalue"] >= 0.5 - 1e-9)
