"""Deterministic covariance evolution under dissipation and monitoring.

Unmonitored bath channels drive a Lyapunov equation
``sigma' = A sigma + sigma A^T + D``; continuously monitored channels add the
Riccati term ``- sigma B B^T sigma`` and modify the coefficients. Both kinds
of channel compose additively into a single matrix ODE that is integrated
with fixed-step RK4.

Couplings are expressed in the quadrature representation: a system-bath
coupling Hamiltonian (1/2) r^T [[0, C], [C^T, 0]] r with ``n`` system and
``m`` input modes has a 2n x 2m block ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .states import GaussianState, symplectic_form

# Default number of RK4 steps between physicality checks.
CHECK_INTERVAL = 100


class PhysicalityError(RuntimeError):
    """Raised when an integrated covariance stops being a physical state."""

    def __init__(self, t: float, nu_min: float):
        super().__init__(
            f"covariance lost physicality at t = {t:.6e} "
            f"(min symplectic eigenvalue {nu_min:.6e}); "
            "the time step is probably too large"
        )
        self.t = t
        self.nu_min = nu_min


@dataclass(frozen=True)
class CouplingSpec:
    """System Hamiltonian matrix plus monitored/dissipative coupling blocks.

    Attributes:
        h_system: 2n x 2n symmetric Hamiltonian matrix.
        c_monitored: 2n x 2m_m coupling to the monitored input modes.
        c_dissipative: 2n x 2m_d coupling to the lost input modes.
    """

    h_system: np.ndarray
    c_monitored: np.ndarray
    c_dissipative: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_system, dtype=float)
        cm = np.asarray(self.c_monitored, dtype=float)
        cd = np.asarray(self.c_dissipative, dtype=float)
        dim = h.shape[0]
        if h.shape != (dim, dim) or dim % 2:
            raise ValueError("system Hamiltonian matrix must be 2n x 2n")
        if np.max(np.abs(h - h.T)) > 1e-10 * max(1.0, np.max(np.abs(h))):
            raise ValueError("system Hamiltonian matrix must be symmetric")
        for name, c in (("monitored", cm), ("dissipative", cd)):
            if c.shape[0] != dim or c.shape[1] % 2:
                raise ValueError(f"{name} coupling must be 2n x 2m")
        object.__setattr__(self, "h_system", h)
        object.__setattr__(self, "c_monitored", cm)
        object.__setattr__(self, "c_dissipative", cd)

    @property
    def n_modes(self) -> int:
        return self.h_system.shape[0] // 2


@dataclass(frozen=True)
class BathSpec:
    """Input-mode covariances and detection parameters.

    Attributes:
        sigma_monitored: 2m_m x 2m_m covariance of the monitored inputs
            (vacuum I/2 for an optical channel).
        sigma_dissipative: 2m_d x 2m_d covariance of the lost inputs
            (block-diagonal thermal (n + 1/2) I per mechanical channel).
        sigma_post_meas: 2m_m x 2m_m post-measurement covariance of the
            homodyned modes, (1/2) diag(e^-2r, e^2r) per channel.
        eta: detector efficiency in (0, 1].
    """

    sigma_monitored: np.ndarray
    sigma_dissipative: np.ndarray
    sigma_post_meas: np.ndarray
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("detector efficiency must lie in (0, 1]")
        for name in ("sigma_monitored", "sigma_dissipative", "sigma_post_meas"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def effective_post_meas(self) -> np.ndarray:
        """Post-measurement covariance distorted by detector inefficiency.

        sigma_m -> sigma_m / eta + (1 - eta)/eta * I.
        """
        dim = self.sigma_post_meas.shape[0]
        return self.sigma_post_meas / self.eta + (1.0 - self.eta) / self.eta * np.eye(dim)


def homodyne_post_meas_cov(r_post_meas_db: float, n_channels: int = 1) -> np.ndarray:
    """Position-squeezed post-measurement covariance (1/2) diag(e^-2r, e^2r)."""
    r = float(r_post_meas_db) * np.log(10.0) / 20.0
    block = 0.5 * np.diag([np.exp(-2.0 * r), np.exp(2.0 * r)])
    return sla.block_diag(*([block] * n_channels))


def build_lyapunov(c_dissipative: np.ndarray, sigma_bath: np.ndarray):
    """Drift and diffusion of the unmonitored channels.

    A = Omega C Omega C^T / 2 and D = Omega C sigma_B C^T Omega^T.

    Returns:
        (A, D) with D symmetric positive semidefinite.
    """
    c = np.asarray(c_dissipative, dtype=float)
    sigma_b = np.asarray(sigma_bath, dtype=float)
    n2, m2 = c.shape
    if sigma_b.shape != (m2, m2):
        raise ValueError("bath covariance does not match the coupling width")
    omega_s = symplectic_form(n2 // 2)
    omega_b = symplectic_form(m2 // 2) if m2 else np.zeros((0, 0))
    drift = 0.5 * omega_s @ c @ omega_b @ c.T
    diffusion = omega_s @ c @ sigma_b @ c.T @ omega_s.T
    return drift, 0.5 * (diffusion + diffusion.T)


def add_system_hamiltonian(drift: np.ndarray, h_system: np.ndarray) -> np.ndarray:
    """Add the Hamiltonian contribution Omega H_s to a drift matrix."""
    drift = np.asarray(drift, dtype=float)
    h = np.asarray(h_system, dtype=float)
    return drift + symplectic_form(drift.shape[0] // 2) @ h


def build_riccati(c_monitored: np.ndarray, sigma_bath: np.ndarray,
                  sigma_post_meas: np.ndarray, eta: float = 1.0):
    """Coefficients of the monitored channels after the inefficiency map.

    With M = (sigma_B + sigma_m)^-1 evaluated at the eta-distorted
    post-measurement covariance:

        A_tilde = A - Omega C sigma_B M Omega C^T
        D_tilde = D + Omega C sigma_B M sigma_B C^T Omega
        B       = C Omega sqrt(M)

    Returns:
        (A_tilde, D_tilde, B).
    """
    c = np.asarray(c_monitored, dtype=float)
    n2, m2 = c.shape
    sigma_b = np.asarray(sigma_bath, dtype=float)
    if not 0.0 < eta <= 1.0:
        raise ValueError("detector efficiency must lie in (0, 1]")
    sigma_m = (
        np.asarray(sigma_post_meas, dtype=float) / eta
        + (1.0 - eta) / eta * np.eye(m2)
    )
    total = sigma_b + sigma_m
    evals = np.linalg.eigvalsh(0.5 * (total + total.T))
    if np.min(evals) <= 1e-14 * max(1.0, np.max(evals)):
        raise ValueError("sigma_B + sigma_m must be positive definite")
    m_inv = np.linalg.inv(total)

    drift, diffusion = build_lyapunov(c, sigma_b)
    omega_s = symplectic_form(n2 // 2)
    omega_b = symplectic_form(m2 // 2)
    g = omega_s @ c @ sigma_b
    drift_t = drift - g @ m_inv @ omega_b @ c.T
    diffusion_t = diffusion + g @ m_inv @ sigma_b @ c.T @ omega_s

    w, v = np.linalg.eigh(m_inv)
    sqrt_m = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    backaction = c @ omega_b @ sqrt_m
    return drift_t, 0.5 * (diffusion_t + diffusion_t.T), backaction


@dataclass(frozen=True)
class EvolutionCoefficients:
    """Additively combined coefficients of the covariance ODE.

    sigma' = drift sigma + sigma drift^T + diffusion - sigma (B B^T) sigma.
    """

    drift: np.ndarray
    diffusion: np.ndarray
    backaction: np.ndarray = field(default=None)

    def __post_init__(self):
        drift = np.asarray(self.drift, dtype=float)
        diffusion = np.asarray(self.diffusion, dtype=float)
        dim = drift.shape[0]
        backaction = self.backaction
        if backaction is None:
            backaction = np.zeros((dim, 0))
        backaction = np.asarray(backaction, dtype=float)
        if diffusion.shape != (dim, dim):
            raise ValueError("diffusion matrix dimension mismatch")
        if np.max(np.abs(diffusion - diffusion.T)) > 1e-9 * max(1.0, np.max(np.abs(diffusion))):
            raise ValueError("diffusion matrix must be symmetric")
        if backaction.shape[0] != dim:
            raise ValueError("backaction matrix dimension mismatch")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)
        object.__setattr__(self, "backaction", backaction)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def bbt(self) -> np.ndarray:
        return self.backaction @ self.backaction.T


def build_coefficients(coupling: CouplingSpec, baths: BathSpec) -> EvolutionCoefficients:
    """Assemble the full ODE coefficients from a coupling and bath spec.

    The Lyapunov part (dissipative channels), the Riccati part (monitored
    channels) and the Hamiltonian drift compose by matrix addition.
    """
    a_lyap, d_lyap = build_lyapunov(coupling.c_dissipative, baths.sigma_dissipative)
    if coupling.c_monitored.shape[1]:
        a_ricc, d_ricc, backaction = build_riccati(
            coupling.c_monitored, baths.sigma_monitored, baths.sigma_post_meas, baths.eta
        )
    else:
        dim = 2 * coupling.n_modes
        a_ricc = np.zeros((dim, dim))
        d_ricc = np.zeros((dim, dim))
        backaction = np.zeros((dim, 0))
    drift = add_system_hamiltonian(a_lyap + a_ricc, coupling.h_system)
    return EvolutionCoefficients(drift, d_lyap + d_ricc, backaction)


@dataclass(frozen=True)
class Trajectory:
    """Sampled covariance trajectory of one integration run."""

    times: np.ndarray
    covs: np.ndarray

    @property
    def final_state(self) -> GaussianState:
        return GaussianState(self.covs.shape[1] // 2, self.covs[-1])

    def state_at(self, index: int) -> GaussianState:
        return GaussianState(self.covs.shape[1] // 2, self.covs[index])

    def __len__(self) -> int:
        return len(self.times)

    def as_records(self) -> dict:
        """Columnar export: time, flattened covariance entries (upper
        triangle), and the minimum symplectic eigenvalue per sample."""
        dim = self.covs.shape[1]
        iu = np.triu_indices(dim)
        columns = {"time_s": np.asarray(self.times)}
        flat = self.covs[:, iu[0], iu[1]]
        for col, (i, j) in enumerate(zip(*iu)):
            columns[f"cov_{i}_{j}"] = flat[:, col]
        columns["min_symplectic_eigenvalue"] = np.array(
            [self.state_at(k).symplectic_spectrum()[0] for k in range(len(self))]
        )
        return columns


def suggest_dt(coeffs: EvolutionCoefficients, sigma0: np.ndarray,
               horizon: float, safety: float = 20.0) -> float:
    """Fixed time step sized against the fastest rate in the ODE.

    The linear part contributes its spectral norm. The measurement
    nonlinearity enters through ``sigma B B^T``, which only reads the
    covariance columns of the monitored block, so the estimate uses the norm
    of those columns (plus diffusive growth over the horizon) rather than the
    full covariance: quadratures that merely anti-squeeze without coupling to
    the monitored modes do not make the system stiff.
    """
    if isinstance(sigma0, GaussianState):
        sigma0 = sigma0.cov
    sigma = np.asarray(sigma0, dtype=float)
    rate = np.linalg.norm(coeffs.drift, 2)
    bbt = coeffs.bbt()
    if np.any(bbt):
        cols = np.flatnonzero(np.abs(bbt).max(axis=0))
        # Diffusive growth per direction saturates once the local damping
        # balances it, so damped directions do not inflate long horizons.
        a_diag = np.diag(coeffs.drift)
        d_diag = np.diag(coeffs.diffusion)
        window = np.minimum(horizon, 1.0 / np.maximum(-a_diag, 1.0 / horizon))
        growth = float(np.max(d_diag * window, initial=0.0))
        v_est = max(np.linalg.norm(sigma[:, cols], 2) + growth, 1.0)
        rate += np.linalg.norm(bbt, 2) * v_est
    if rate <= 0.0:
        return horizon
    return min(horizon, 1.0 / (safety * rate))


def integrate(sigma0, coeffs: EvolutionCoefficients, t_total: float, dt: float,
              n_samples: int = 200, check_interval: int = CHECK_INTERVAL,
              t_offset: float = 0.0, physicality_atol: float = 1e-6) -> Trajectory:
    """Integrate the covariance ODE with fixed-step RK4.

    The covariance is symmetrized after every step and checked for
    physicality every ``check_interval`` steps (and at the end); a violation
    beyond ``physicality_atol`` raises :class:`PhysicalityError`. The last
    step is shortened so the trajectory lands exactly on ``t_total``.

    Args:
        sigma0: initial covariance (or GaussianState).
        coeffs: combined ODE coefficients.
        t_total: integration horizon (>= 0).
        dt: fixed step (> 0).
        n_samples: cap on the number of stored samples (endpoints included).
        check_interval: steps between physicality checks; 0 disables.
        t_offset: value the returned time axis starts at.

    Returns:
        Trajectory of sampled times and covariances.
    """
    if isinstance(sigma0, GaussianState):
        sigma0 = sigma0.cov
    sigma = np.array(sigma0, dtype=float)
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    if t_total < 0.0:
        raise ValueError("integration horizon must be non-negative")

    n_steps = max(1, int(np.ceil(t_total / dt))) if t_total > 0 else 0
    sample_every = max(1, int(np.ceil(n_steps / max(1, n_samples - 1)))) if n_steps else 1

    drift = coeffs.drift
    diffusion = coeffs.diffusion
    backaction = coeffs.backaction
    has_backaction = bool(np.any(backaction))

    def rhs(s):
        # s is kept symmetric, so drift @ s + s @ drift.T == a + a.T here,
        # and s B B^T s factors through the thin matrix s @ B.
        a = drift @ s
        out = a + a.T + diffusion
        if has_backaction:
            g = s @ backaction
            out -= g @ g.T
        return out

    times = [t_offset]
    covs = [sigma.copy()]
    t = 0.0
    for step in range(n_steps):
        h = min(dt, t_total - t)
        k1 = rhs(sigma)
        k2 = rhs(sigma + 0.5 * h * k1)
        k3 = rhs(sigma + 0.5 * h * k2)
        k4 = rhs(sigma + h * k3)
        sigma = sigma + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        sigma = 0.5 * (sigma + sigma.T)
        t += h
        last = step == n_steps - 1
        if check_interval and (step % check_interval == check_interval - 1 or last):
            _require_physical(sigma, t + t_offset, physicality_atol)
        if step % sample_every == sample_every - 1 or last:
            times.append(t + t_offset)
            covs.append(sigma.copy())
    return Trajectory(np.asarray(times), np.asarray(covs))


def _require_physical(sigma: np.ndarray, t: float, atol: float):
    if not np.all(np.isfinite(sigma)):
        raise PhysicalityError(t, float("-inf"))
    state = GaussianState(sigma.shape[0] // 2, sigma)
    if not state.is_physical(atol):
        raise PhysicalityError(t, float(state.symplectic_spectrum()[0]))


def steady_state(coeffs: EvolutionCoefficients, sigma0=None, tol: float = 1e-10,
                 max_time: float = None) -> GaussianState:
    """Stationary covariance of the evolution.

    Without measurement backaction this solves the algebraic Lyapunov
    equation directly (the drift must be Hurwitz). With backaction the ODE is
    iterated from ``sigma0`` (default: vacuum) over doubling horizons until
    the residual norm of the right-hand side falls below ``tol``.
    """
    dim = coeffs.dim
    if not np.any(coeffs.bbt()):
        evals = np.linalg.eigvals(coeffs.drift)
        if np.max(evals.real) >= 0.0:
            raise ValueError("drift is not Hurwitz; no unique Lyapunov steady state")
        solution = sla.solve_continuous_lyapunov(coeffs.drift, -coeffs.diffusion)
        return GaussianState(dim // 2, 0.5 * (solution + solution.T))

    sigma = 0.5 * np.eye(dim) if sigma0 is None else np.array(
        sigma0.cov if isinstance(sigma0, GaussianState) else sigma0, dtype=float
    )
    rate = np.linalg.norm(coeffs.drift, 2) + np.linalg.norm(coeffs.bbt(), 2)
    horizon = 1.0 / rate if rate > 0 else 1.0
    if max_time is None:
        max_time = 1e7 * horizon
    elapsed = 0.0
    while elapsed < max_time:
        dt = suggest_dt(coeffs, sigma, horizon)
        traj = integrate(sigma, coeffs, horizon, dt, n_samples=2)
        sigma = traj.covs[-1]
        elapsed += horizon
        horizon *= 2.0
        residual = (
            coeffs.drift @ sigma + sigma @ coeffs.drift.T + coeffs.diffusion
            - sigma @ coeffs.bbt() @ sigma
        )
        if np.max(np.abs(residual)) < tol * max(1.0, np.max(np.abs(sigma))):
            return GaussianState(dim // 2, sigma)
    raise RuntimeError("steady-state iteration did not converge within max_time")
