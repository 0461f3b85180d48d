"""Covariance-matrix representation of Gaussian states and the exact
operations on them: symplectic maps, CZ entangling gates, cluster-state
construction, projective homodyne measurement and Uhlmann fidelity.

Conventions used throughout the package:

* quadrature ordering ``(q1, p1, ..., qn, pn)``,
* hbar = 1 with vacuum variance 1/2 per quadrature,
* all states are zero-mean; only second moments are tracked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

# Vacuum variance per quadrature.
VACUUM_VAR = 0.5

# Relative tolerance for symmetry of covariance matrices.
SYMMETRY_RTOL = 1e-10

# Slack allowed on the minimum symplectic eigenvalue of a physical state.
PHYSICALITY_ATOL = 1e-9

# Relative cutoff for discarding singular values in pseudoinverses.
PINV_RCOND = 1e-12


def symplectic_form(n_modes: int) -> np.ndarray:
    """Return the 2n x 2n symplectic form, a direct sum of [[0, 1], [-1, 0]]."""
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for j in range(n_modes):
        omega[2 * j, 2 * j + 1] = 1.0
        omega[2 * j + 1, 2 * j] = -1.0
    return omega


def is_symplectic(matrix: np.ndarray, atol: float = 1e-10) -> bool:
    """Check M Omega M^T = Omega to within ``atol`` in max norm."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
        return False
    omega = symplectic_form(matrix.shape[0] // 2)
    return bool(np.max(np.abs(matrix @ omega @ matrix.T - omega)) < atol)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance matrix, sorted ascending.

    The eigenvalues of ``Omega @ cov`` come in pairs ``+/- i nu``; the
    ``nu >= 1/2`` condition is the physicality criterion in the vacuum = 1/2
    convention.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0] // 2
    evals = np.sort(np.abs(np.linalg.eigvals(symplectic_form(n) @ cov)))
    return 0.5 * (evals[0::2] + evals[1::2])


@dataclass(frozen=True)
class GaussianState:
    """Zero-mean Gaussian state of ``n_modes`` modes.

    Attributes:
        n_modes: number of bosonic modes.
        cov: 2n x 2n real symmetric covariance matrix in (q1, p1, ...)
            ordering; stored symmetrized and read-only.
    """

    n_modes: int
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("a Gaussian state needs at least one mode")
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (2 * self.n_modes, 2 * self.n_modes):
            raise ValueError(
                f"covariance shape {cov.shape} does not match {self.n_modes} modes"
            )
        scale = max(np.max(np.abs(cov)), 1.0)
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
            raise ValueError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        cov.flags.writeable = False
        object.__setattr__(self, "cov", cov)

    def symplectic_spectrum(self) -> np.ndarray:
        return symplectic_eigenvalues(self.cov)

    def is_physical(self, atol: float = PHYSICALITY_ATOL) -> bool:
        # Highly squeezed covariances stress the eigensolver, so the slack
        # scales with the matrix magnitude.
        tol = max(atol, 1e-10 * np.max(np.abs(self.cov)))
        return bool(self.symplectic_spectrum()[0] >= VACUUM_VAR - tol)

    def is_pure(self, atol: float = 1e-7) -> bool:
        spectrum = self.symplectic_spectrum()
        return bool(np.all(np.abs(spectrum - VACUUM_VAR) < atol))

    def mode_block(self, mode: int) -> np.ndarray:
        """The 2x2 covariance block of a single mode."""
        self._check_mode(mode)
        s = slice(2 * mode, 2 * mode + 2)
        return np.array(self.cov[s, s])

    def _check_mode(self, mode: int):
        if not 0 <= mode < self.n_modes:
            raise ValueError(f"mode index {mode} out of range for {self.n_modes} modes")


def check_physical(state: GaussianState, atol: float = PHYSICALITY_ATOL):
    """Return ``(is_physical, min_symplectic_eigenvalue)``."""
    nu_min = float(state.symplectic_spectrum()[0])
    return state.is_physical(atol), nu_min


def vacuum(n_modes: int) -> GaussianState:
    """The n-mode vacuum state, covariance I/2."""
    if n_modes < 1:
        raise ValueError("mode count must be positive")
    return GaussianState(n_modes, VACUUM_VAR * np.eye(2 * n_modes))


def thermal(n_modes: int, occupancy) -> GaussianState:
    """Product of thermal states with mean occupation ``occupancy`` per mode.

    ``occupancy`` may be a scalar or a length-``n_modes`` sequence.
    """
    nbar = np.broadcast_to(np.asarray(occupancy, dtype=float), (n_modes,))
    if np.any(nbar < 0):
        raise ValueError("thermal occupancy must be non-negative")
    diag = np.repeat(nbar + VACUUM_VAR, 2)
    return GaussianState(n_modes, np.diag(diag))


def db_to_squeeze_parameter(r_db: float) -> float:
    """Convert squeezing quoted in dB to the dimensionless parameter r.

    Defined so the squeezed variance ratio is ``10**(-r_db / 10)``, i.e.
    ``r = r_db * ln(10) / 20``.
    """
    return float(r_db) * np.log(10.0) / 20.0


def embed_single_mode(matrix2: np.ndarray, n_modes: int, mode: int) -> np.ndarray:
    """Embed a 2x2 matrix acting on ``mode`` into a 2n x 2n identity."""
    full = np.eye(2 * n_modes)
    s = slice(2 * mode, 2 * mode + 2)
    full[s, s] = matrix2
    return full


def apply_symplectic(state: GaussianState, matrix: np.ndarray) -> GaussianState:
    """Map the covariance by ``S cov S^T`` after checking S is symplectic."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (2 * state.n_modes, 2 * state.n_modes):
        raise ValueError("symplectic matrix has the wrong dimension")
    if not is_symplectic(matrix):
        raise ValueError("matrix is not symplectic")
    return GaussianState(state.n_modes, matrix @ state.cov @ matrix.T)


def squeeze_momentum(state: GaussianState, mode: int, r_db: float) -> GaussianState:
    """Squeeze the momentum quadrature of one mode by ``r_db`` decibels.

    Acts with the symplectic ``diag(e^r, e^-r)`` so an initially vacuum mode
    ends with ``Var(p) = e^(-2r)/2`` and ``Var(q) = e^(2r)/2``.
    """
    state._check_mode(mode)
    if r_db < 0:
        raise ValueError("squeezing in dB must be non-negative")
    r = db_to_squeeze_parameter(r_db)
    local = np.diag([np.exp(r), np.exp(-r)])
    return apply_symplectic(state, embed_single_mode(local, state.n_modes, mode))


def rotation_matrix(phi: float) -> np.ndarray:
    """Single-mode phase-space rotation mapping q onto X_phi = q cos(phi) + p sin(phi)."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


def cz_matrix(n_modes: int, j: int, k: int, weight: float = 1.0) -> np.ndarray:
    """Symplectic matrix of CZ between modes j and k: p_j += w q_k, p_k += w q_j."""
    if j == k:
        raise ValueError("CZ needs two distinct modes")
    full = np.eye(2 * n_modes)
    full[2 * j + 1, 2 * k] = weight
    full[2 * k + 1, 2 * j] = weight
    return full


def apply_cz(state: GaussianState, j: int, k: int, weight: float = 1.0) -> GaussianState:
    """Apply the controlled-phase gate of given weight between two modes."""
    state._check_mode(j)
    state._check_mode(k)
    return apply_symplectic(state, cz_matrix(state.n_modes, j, k, weight))


@dataclass(frozen=True)
class GraphSpec:
    """Weighted graph describing a cluster state's nodes and CZ edges."""

    n_nodes: int
    edges: tuple = ()

    def __post_init__(self):
        normalized = []
        for edge in self.edges:
            if len(edge) == 2:
                j, k = edge
                weight = 1.0
            else:
                j, k, weight = edge
            if j == k:
                raise ValueError("graph may not contain self-loops")
            if not (0 <= j < self.n_nodes and 0 <= k < self.n_nodes):
                raise ValueError(f"edge ({j}, {k}) references a missing node")
            normalized.append((int(j), int(k), float(weight)))
        object.__setattr__(self, "edges", tuple(normalized))

    @staticmethod
    def linear(n_nodes: int, weight: float = 1.0) -> "GraphSpec":
        """Chain graph 0-1-...-(n-1)."""
        return GraphSpec(n_nodes, tuple((j, j + 1, weight) for j in range(n_nodes - 1)))

    def neighbors(self, node: int):
        """Mapping of neighbor -> edge weight for one node."""
        out = {}
        for j, k, w in self.edges:
            if j == node:
                out[k] = out.get(k, 0.0) + w
            elif k == node:
                out[j] = out.get(j, 0.0) + w
        return out


def build_cluster(graph: GraphSpec, r_cluster_db: float) -> GaussianState:
    """Build a Gaussian cluster state on ``graph``.

    Every node starts as a momentum-squeezed vacuum at ``r_cluster_db`` and
    each weighted edge is applied as a CZ gate.
    """
    state = vacuum(graph.n_nodes)
    for node in range(graph.n_nodes):
        state = squeeze_momentum(state, node, r_cluster_db)
    for j, k, w in graph.edges:
        state = apply_cz(state, j, k, w)
    return state


def nullifier_variances(state: GaussianState, graph: GraphSpec) -> np.ndarray:
    """Variances of the nullifiers p_j - sum_k w_jk q_k for each node.

    These vanish in the infinite-squeezing limit of an ideal cluster state.
    """
    variances = np.empty(graph.n_nodes)
    for node in range(graph.n_nodes):
        vec = np.zeros(2 * state.n_modes)
        vec[2 * node + 1] = 1.0
        for other, w in graph.neighbors(node).items():
            vec[2 * other] = -w
        variances[node] = vec @ state.cov @ vec
    return variances


def normalize_angle(phi: float) -> float:
    """Reduce an angle to the interval (-pi, pi]."""
    phi = float(np.mod(phi + np.pi, 2.0 * np.pi) - np.pi)
    return np.pi if phi == -np.pi else phi


def partial_trace(state: GaussianState, modes_to_keep) -> GaussianState:
    """Reduced state on the listed modes (order preserved)."""
    keep = list(modes_to_keep)
    if not keep:
        raise ValueError("must keep at least one mode")
    for mode in keep:
        state._check_mode(mode)
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in keep]).astype(int)
    return GaussianState(len(keep), state.cov[np.ix_(idx, idx)])


def homodyne_project(state: GaussianState, mode: int, phi: float,
                     atol: float = PHYSICALITY_ATOL) -> GaussianState:
    """Project one mode onto the quadrature X_phi = q cos(phi) + p sin(phi).

    The measured mode is rotated so X_phi becomes its q quadrature, the
    remaining modes receive the Schur-complement update
    ``sigma_A - sigma_AB (Pi sigma_B Pi)^+ sigma_AB^T`` with Pi = diag(1, 0),
    and the measured mode is removed. At the covariance level the update is
    independent of the measurement outcome.

    Args:
        state: input state; must be physical.
        mode: index of the measured mode.
        phi: quadrature angle in radians.
        atol: physicality slack on the input (loosen for states carrying
            accumulated integration error).

    Returns:
        GaussianState with one fewer mode.
    """
    state._check_mode(mode)
    if state.n_modes < 2:
        raise ValueError("measuring the only mode leaves no state behind")
    physical, nu_min = check_physical(state, atol)
    if not physical:
        raise ValueError(f"input state is unphysical (min symplectic eigenvalue {nu_min:.3e})")

    rot = embed_single_mode(rotation_matrix(phi), state.n_modes, mode)
    cov = rot @ state.cov @ rot.T

    rest = [m for m in range(state.n_modes) if m != mode]
    idx_a = np.concatenate([[2 * m, 2 * m + 1] for m in rest]).astype(int)
    idx_b = np.array([2 * mode, 2 * mode + 1])

    sigma_a = cov[np.ix_(idx_a, idx_a)]
    sigma_ab = cov[np.ix_(idx_a, idx_b)]
    sigma_b = cov[np.ix_(idx_b, idx_b)]

    pi = np.diag([1.0, 0.0])
    update = sigma_ab @ np.linalg.pinv(pi @ sigma_b @ pi, rcond=PINV_RCOND) @ sigma_ab.T
    return GaussianState(len(rest), sigma_a - update)


def _overlap(cov_sum: np.ndarray) -> float:
    """tr(rho1 rho2) for zero-mean Gaussians, 1/sqrt(det(sigma1 + sigma2))."""
    sign, logdet = np.linalg.slogdet(cov_sum)
    if sign <= 0:
        raise ValueError("covariance sum is not positive definite")
    return float(np.exp(-0.5 * logdet))


def fidelity(state1: GaussianState, state2: GaussianState) -> float:
    """Uhlmann fidelity F = (tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2.

    Uses the overlap shortcut ``1/sqrt(det(sigma1 + sigma2))`` when either
    state is pure (exact in that case) and the general closed form for a pair
    of mixed Gaussian states otherwise. Both states must be physical, have
    equal mode counts and zero means.

    Returns:
        Fidelity in [0, 1]; 1 iff the covariances coincide.
    """
    if state1.n_modes != state2.n_modes:
        raise ValueError("fidelity needs equal mode counts")
    for state in (state1, state2):
        physical, nu_min = check_physical(state)
        if not physical:
            raise ValueError(
                f"fidelity input is unphysical (min symplectic eigenvalue {nu_min:.3e})"
            )

    cov_sum = state1.cov + state2.cov
    if state1.is_pure() or state2.is_pure():
        return float(min(1.0, _overlap(cov_sum)))

    # General mixed-Gaussian closed form via the auxiliary matrix
    # W.T (s1+s2)^-1 (W/4 + s2 W s1) with W the symplectic form.
    n = state1.n_modes
    s1, s2 = state1.cov, state2.cov
    omega = symplectic_form(n)
    sum_inv = np.linalg.inv(cov_sum)
    v_aux = omega.T @ sum_inv @ (0.25 * omega + s2 @ omega @ s1)
    w = v_aux @ omega
    core = sla.sqrtm(np.eye(2 * n) + 0.25 * np.linalg.inv(w @ w))
    if np.iscomplexobj(core):
        core = core.real
    total = 2.0 * (core + np.eye(2 * n)) @ v_aux
    f = np.sqrt(np.linalg.det(total) * np.linalg.det(sum_inv))
    return float(min(1.0, f))
