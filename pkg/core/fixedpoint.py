"""
Fixed Point Analysis
Induced memory channel 𝒞(ξ) = Tr_sys[U(ξ⊗ϱ̄)U†] and the affine structure of its fixed set
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from core.errors import ModelViolation
from core.qcore import EPS, BlochAffineMap, QubitState, TestEnsemble, memory_channel

logger = logging.getLogger(__name__)

EIGEN_ONE_BAND = 1e-7
CONSISTENCY_TOL = 1e-6


@dataclass(eq=False)
class FixedPointReport:
    """Fixed set of a Bloch affine map: representative, dimension and spectrum"""
    fixed_point: QubitState
    unique: bool
    fixed_set_dim: int
    spectral_data: np.ndarray
    directions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            'fixed_point': self.fixed_point.bloch.tolist(),
            'unique': self.unique,
            'fixed_set_dim': self.fixed_set_dim,
            'eigenvalues': [complex(v) for v in self.spectral_data],
            'residual': self.residual,
        }


@dataclass(eq=False)
class FixedPointIteration:
    state: QubitState
    converged: bool
    iterations: int


def memory_map(u, ensemble: TestEnsemble) -> BlochAffineMap:
    """𝒞 with the ensemble average ϱ̄ = Σ_x q_x ϱ_x as the system input"""
    return memory_channel(u, ensemble.average_state())


def fixed_points(channel: BlochAffineMap, band: float = EIGEN_ONE_BAND) -> FixedPointReport:
    """
    Solve (T − I)r = −t. The fixed set is r₀ + null(T − I); r₀ is the
    minimum-norm solution, which lies in the Bloch ball whenever any fixed point does.
    """
    eigenvalues = np.linalg.eigvals(channel.T)
    a = channel.T - np.eye(3)
    u, s, vt = np.linalg.svd(a)
    keep = s > band
    inv = np.zeros(3)
    inv[keep] = 1.0 / s[keep]
    r0 = -(vt.T * inv) @ u.T @ channel.t
    residual = float(np.linalg.norm(a @ r0 + channel.t))
    dim = int(np.count_nonzero(~keep))

    if residual > CONSISTENCY_TOL:
        raise ModelViolation(f'Affine map has no fixed point (residual {residual:.3e})',
                             stage='fixed_points', residual=residual)
    if np.linalg.norm(r0) > 1.0 + max(EPS, CONSISTENCY_TOL):
        raise ModelViolation(f'Fixed set misses the Bloch ball (|r0| = {np.linalg.norm(r0):.6f})',
                             stage='fixed_points', residual=float(np.linalg.norm(r0) - 1.0))

    logger.debug('fixed_points: dim=%d eig=%s', dim, np.round(eigenvalues, 9))
    return FixedPointReport(fixed_point=QubitState(r0), unique=(dim == 0), fixed_set_dim=dim,
                            spectral_data=eigenvalues, directions=vt[~keep], residual=residual)


def iterate_to_fixed_point(channel: BlochAffineMap, start: QubitState, tol: float = 1e-12,
                           max_iters: int = 10000) -> FixedPointIteration:
    """
    Power iteration r ↦ T r + t; stops at the first iterate that the map moves by at most tol;
    iterations counts applications of the map up to that iterate (at least one).
    """
    if tol <= 0:
        raise ValueError('tol must be positive')
    r = channel.apply(start.bloch)
    for i in range(1, max_iters + 1):
        nxt = channel.apply(r)
        if np.linalg.norm(nxt - r) <= tol:
            return FixedPointIteration(QubitState(r), True, i)
        r = nxt
    logger.warning('iterate_to_fixed_point: no convergence after %d iterations', max_iters)
    return FixedPointIteration(QubitState(r), False, max_iters)


def cesaro_average(channel: BlochAffineMap, start: QubitState, horizon: int) -> QubitState:
    """(1/h) Σ_{j<h} 𝒞^j(ξ₀); the time-averaged memory when iteration does not settle"""
    r = start.bloch.copy()
    total = np.zeros(3)
    for _ in range(horizon):
        total += r
        r = channel.apply(r)
    return QubitState(total / horizon)
