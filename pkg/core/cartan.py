"""
Cartan Parametrization
Canonical two-qubit interactions U = (W₂⊗V₂)·D(α)·(W₁⊗V₁): assembly, KAK decomposition
in the magic basis, chamber canonicalization and a memory-gauge-aware distance.

D(α) = exp{(i/2) Σ_j α_j σ_j⊗σ_j}; the canonical chamber is 0 ≤ |α_z| ≤ α_y ≤ α_x ≤ π/2.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation
from scipy.stats import unitary_group

from core.errors import NotControlled, NotUnitaryError
from core.qcore import (
    IDENTITY2, PAULIS, PAULI_STACK, TwoQubitUnitary, controlled_unitary, is_unitary,
    rotation_from_unitary, as_matrix,
)

logger = logging.getLogger(__name__)

HALF_PI = np.pi / 2
CHAMBER_ATOL = 1e-9
CONTROLLED_ATOL = 1e-7

# Magic basis: Φ⁺, iΨ⁺, Ψ⁻, iΦ⁻. Local SU(2)⊗SU(2) becomes SO(4) and σ_j⊗σ_j are diagonal.
MAGIC = np.array([[1, 0, 0, 1j],
                  [0, 1j, 1, 0],
                  [0, 1j, -1, 0],
                  [1, 0, 0, -1j]]) * np.sqrt(0.5)
MAGIC_DAG = MAGIC.conj().T

# Phases θ of B†·e^{iw}D(α)·B mapped to (w, α_x/2, α_y/2, α_z/2).
MAGIC_GAMMA = np.array([[1, 1, 1, 1],
                        [1, 1, -1, -1],
                        [-1, 1, -1, 1],
                        [1, -1, -1, 1]]) * 0.25

# Mixing weights for the simultaneous diagonalization of Re P and Im P.
_MIXERS = (0.5772156649015329, 1.618033988749895, -0.7071067811865476, 2.718281828459045)


def d_matrix(alpha) -> TwoQubitUnitary:
    """D(α) as the product of its three commuting factors cos(α_j/2) + i sin(α_j/2) σ_j⊗σ_j"""
    alpha = np.asarray(alpha, dtype=float).reshape(3)
    out = np.eye(4, dtype=complex)
    for a, sigma in zip(alpha, PAULIS):
        out = out @ (np.cos(a / 2) * np.eye(4) + 1j * np.sin(a / 2) * np.kron(sigma, sigma))
    return TwoQubitUnitary(out)


@dataclass(eq=False)
class CartanParams:
    """Gauge-fixed parameters (W₁ = I) of U = (W₂⊗V₂)·D(α)·(I⊗V₁)"""
    w2: np.ndarray
    v2: np.ndarray
    alpha: np.ndarray
    v1: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(3)
        for name in ('w2', 'v2', 'v1'):
            op = np.asarray(getattr(self, name), dtype=complex).reshape(2, 2)
            if not is_unitary(op):
                raise NotUnitaryError(f'Local factor {name} is not unitary')
            setattr(self, name, op)

    @property
    def w1(self) -> np.ndarray:
        return IDENTITY2.copy()

    @property
    def cosines(self) -> np.ndarray:
        return np.cos(self.alpha)

    @property
    def sines(self) -> np.ndarray:
        return np.sin(self.alpha)

    def in_chamber(self, atol: float = CHAMBER_ATOL) -> bool:
        return in_chamber(self.alpha, atol)

    def unitary(self) -> TwoQubitUnitary:
        return assemble(self)


def in_chamber(alpha, atol: float = CHAMBER_ATOL) -> bool:
    ax, ay, az = np.asarray(alpha, dtype=float)
    ok = (abs(az) <= ay + atol) and (ay <= ax + atol) and (ax <= HALF_PI + atol) and (ay >= -atol)
    if ok and ax >= HALF_PI - atol:
        ok = az >= -atol
    return bool(ok)


def assemble(params: CartanParams) -> TwoQubitUnitary:
    """(W₂⊗V₂)·D(α)·(I⊗V₁)"""
    return TwoQubitUnitary(np.kron(params.w2, params.v2) @ d_matrix(params.alpha).matrix
                           @ np.kron(IDENTITY2, params.v1))


@dataclass(eq=False)
class LocalFactors:
    """Raw factorization U = phase·(w2⊗v2)·D(α)·(w1⊗v1) before gauge fixing"""
    w2: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    v2: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    w1: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    v1: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    phase: complex = 1.0 + 0j


@dataclass(eq=False)
class KakDecomposition:
    """
    Result of kak_decompose / canonicalize.

    U = phase·(w1†⊗I)·assemble(params)·(w1⊗I): params carry the gauge-fixed interaction,
    w1 is the raw memory-side pre-local that the gauge V_M = w1 removes.
    """
    params: CartanParams
    w1: np.ndarray
    phase: complex
    residual: float = 0.0

    @property
    def alpha(self) -> np.ndarray:
        return self.params.alpha

    def unitary(self) -> TwoQubitUnitary:
        gauge = np.kron(self.w1, IDENTITY2)
        return TwoQubitUnitary(self.phase * gauge.conj().T @ assemble(self.params).matrix @ gauge)


@dataclass(eq=False)
class ControlledUnitaryForm:
    """e^{iβ}P₊⊗V₊ + e^{−iβ}P₋⊗V₋ with P± the projectors on ±axis of the memory"""
    axis: np.ndarray
    beta: float
    v_plus: np.ndarray
    v_minus: np.ndarray

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float).reshape(3)
        self.axis = self.axis / np.linalg.norm(self.axis)

    def unitary(self) -> TwoQubitUnitary:
        return controlled_unitary(self.axis, self.v_plus, self.v_minus, self.beta)


class _Canonicalizer:
    """Moves α into the chamber while updating the raw local factors"""

    def __init__(self, alpha, factors: LocalFactors, atol: float):
        self.v = [float(a) for a in alpha]
        self.f = factors
        self.atol = atol

    def shift(self, k: int, step: int):
        # D(α) = D(α + step·π e_k)·(−step·i)(σ_k⊗σ_k)
        self.v[k] += step * np.pi
        self.f.phase *= -1j * step
        self.f.w1 = PAULIS[k] @ self.f.w1
        self.f.v1 = PAULIS[k] @ self.f.v1

    def negate(self, k1: int, k2: int):
        # D(α) = (σ_l⊗I)·D(α')·(σ_l⊗I)
        self.v[k1] *= -1
        self.v[k2] *= -1
        flip = PAULIS[3 - k1 - k2]
        self.f.w2 = self.f.w2 @ flip
        self.f.w1 = flip @ self.f.w1

    def swap(self, k1: int, k2: int):
        # D(α) = (S⊗S)†·D(α')·(S⊗S) with S a quarter turn about the remaining axis
        self.v[k1], self.v[k2] = self.v[k2], self.v[k1]
        quarter = (IDENTITY2 - 1j * PAULIS[3 - k1 - k2]) / np.sqrt(2)
        self.f.w2 = self.f.w2 @ quarter.conj().T
        self.f.v2 = self.f.v2 @ quarter.conj().T
        self.f.w1 = quarter @ self.f.w1
        self.f.v1 = quarter @ self.f.v1

    def canonical_shift(self, k: int):
        while self.v[k] <= -HALF_PI:
            self.shift(k, +1)
        while self.v[k] > HALF_PI:
            self.shift(k, -1)

    def sort(self):
        if abs(self.v[0]) < abs(self.v[1]):
            self.swap(0, 1)
        if abs(self.v[1]) < abs(self.v[2]):
            self.swap(1, 2)
        if abs(self.v[0]) < abs(self.v[1]):
            self.swap(0, 1)

    def run(self) -> Tuple[np.ndarray, LocalFactors]:
        for k in range(3):
            self.canonical_shift(k)
        self.sort()
        if self.v[0] < 0:
            self.negate(0, 2)
        if self.v[1] < 0:
            self.negate(1, 2)
        self.canonical_shift(2)
        if self.v[0] > HALF_PI - self.atol and self.v[2] < 0:
            self.shift(0, -1)
            self.negate(0, 2)
        return np.array(self.v), self.f


def _gauge_fix(alpha: np.ndarray, factors: LocalFactors, residual: float = 0.0) -> KakDecomposition:
    params = CartanParams(w2=factors.w1 @ factors.w2, v2=factors.v2, alpha=alpha, v1=factors.v1)
    return KakDecomposition(params=params, w1=factors.w1, phase=complex(factors.phase), residual=residual)


def canonicalize(alpha, factors: Optional[LocalFactors] = None,
                 atol: float = CHAMBER_ATOL) -> KakDecomposition:
    """
    Bring α into the canonical chamber by shift/negate/swap moves.
    The locals absorb the compensating Pauli and quarter-turn factors, so
    phase·(w2⊗v2)·D(α)·(w1⊗v1) is unchanged.
    """
    factors = factors or LocalFactors()
    factors = LocalFactors(factors.w2.copy(), factors.v2.copy(), factors.w1.copy(),
                           factors.v1.copy(), complex(factors.phase))
    new_alpha, new_factors = _Canonicalizer(alpha, factors, atol).run()
    return _gauge_fix(new_alpha, new_factors)


def kron_factor(matrix: np.ndarray) -> Tuple[complex, np.ndarray, np.ndarray]:
    """Split matrix = g·(A⊗B) using its largest entry as the reference cell"""
    a, b = max(((i, j) for i in range(4) for j in range(4)), key=lambda t: abs(matrix[t]))
    f1 = np.zeros((2, 2), dtype=complex)
    f2 = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            f1[(a >> 1) ^ i, (b >> 1) ^ j] = matrix[a ^ (i << 1), b ^ (j << 1)]
            f2[(a & 1) ^ i, (b & 1) ^ j] = matrix[a ^ i, b ^ j]
    f1 /= np.sqrt(np.linalg.det(f1))
    f2 /= np.sqrt(np.linalg.det(f2))
    g = matrix[a, b] / (f1[a >> 1, b >> 1] * f2[a & 1, b & 1])
    return complex(g), f1, f2


def _diagonalizing_rotation(p: np.ndarray) -> np.ndarray:
    """Real orthogonal Q (det +1) with QᵀPQ diagonal for complex symmetric unitary P"""
    best, best_err = None, np.inf
    for mix in _MIXERS:
        _, q = np.linalg.eigh(np.real(p) + mix * np.imag(p))
        off = q.T @ p @ q
        err = float(np.max(np.abs(off - np.diag(np.diag(off)))))
        if err < best_err:
            best, best_err = q, err
        if err < 1e-12:
            break
    if np.linalg.det(best) < 0:
        best[:, 0] *= -1
    return best


def kak_decompose(u, atol: float = 1e-8) -> KakDecomposition:
    """Full KAK decomposition with α in the canonical chamber"""
    matrix = as_matrix(u)
    if matrix.shape != (4, 4) or not is_unitary(matrix, atol):
        raise NotUnitaryError('kak_decompose needs a 4x4 unitary')

    m = MAGIC_DAG @ matrix @ MAGIC
    q = _diagonalizing_rotation(m.T @ m)
    theta = np.angle(np.diag(q.T @ m.T @ m @ q)) / 2
    left = np.real(m @ q @ np.diag(np.exp(-1j * theta)))
    if np.linalg.det(left) < 0:
        theta[0] += np.pi
        left[:, 0] *= -1

    w, hx, hy, hz = MAGIC_GAMMA @ theta
    g_left, w2, v2 = kron_factor(MAGIC @ left @ MAGIC_DAG)
    g_right, w1, v1 = kron_factor(MAGIC @ q.T @ MAGIC_DAG)
    factors = LocalFactors(w2=w2, v2=v2, w1=w1, v1=v1, phase=np.exp(1j * w) * g_left * g_right)

    result = canonicalize(2 * np.array([hx, hy, hz]), factors)
    result.residual = float(np.max(np.abs(result.unitary().matrix - matrix)))
    logger.debug('kak_decompose alpha=%s residual=%.2e', np.round(result.alpha, 12), result.residual)
    return result


def _conjugated_overlaps(ua: np.ndarray, ub: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """Tr(U_a†·(V⊗I)·U_b·(V†⊗I)) for a stack of quaternions (x, y, z, w)"""
    quats = np.atleast_2d(quats)
    v = (quats[:, 3, None, None] * IDENTITY2
         - 1j * np.einsum('ni,ijk->njk', quats[:, :3], PAULI_STACK))
    lifted = np.einsum('nab,cd->nacbd', v, IDENTITY2).reshape(-1, 4, 4)
    conj = lifted @ ub @ lifted.conj().transpose(0, 2, 1)
    return np.einsum('ji,nji->n', ua.conj(), conj)


def _gauge_residuals(rv: np.ndarray, ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Real and imaginary parts of U_a − e^{iφ}(V⊗I)U_b(V†⊗I) with φ optimal for this V"""
    quat = Rotation.from_rotvec(rv).as_quat()
    lifted = np.kron(quat[3] * IDENTITY2 - 1j * np.einsum('i,ijk->jk', quat[:3], PAULI_STACK), IDENTITY2)
    conj = lifted @ ub @ lifted.conj().T
    overlap = np.trace(ua.conj().T @ conj)
    phase = np.exp(-1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0
    diff = (ua - phase * conj).ravel()
    return np.concatenate([diff.real, diff.imag])


def gauge_alignment(u_a, u_b, grid: int = 8, starts: int = 2) -> Tuple[float, np.ndarray, complex]:
    """
    Minimise ‖U_a − e^{iφ}(V_M⊗I)U_b(V_M†⊗I)‖_F over V_M ∈ SU(2) and φ.
    Returns (distance, V_M, e^{iφ}); coarse Euler-angle grid, then Levenberg-Marquardt
    on the residual matrix from the best grid points.
    """
    ua, ub = as_matrix(u_a), as_matrix(u_b)
    angles = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    euler = np.array(np.meshgrid(angles, angles / 2, angles, indexing='ij')).reshape(3, -1).T
    rotvecs = Rotation.from_euler('zyz', euler).as_rotvec()
    objective_grid = 8.0 - 2.0 * np.abs(_conjugated_overlaps(ua, ub, Rotation.from_rotvec(rotvecs).as_quat()))

    best_rv, best_cost = None, np.inf
    for idx in np.argsort(objective_grid)[:starts]:
        res = least_squares(_gauge_residuals, rotvecs[idx], args=(ua, ub), method='lm',
                            xtol=1e-14, ftol=1e-15, gtol=1e-15)
        if res.cost < best_cost:
            best_rv, best_cost = res.x, res.cost

    quat = Rotation.from_rotvec(best_rv).as_quat()
    v_m = quat[3] * IDENTITY2 - 1j * np.einsum('i,ijk->jk', quat[:3], PAULI_STACK)
    overlap = _conjugated_overlaps(ua, ub, quat)[0]
    phase = np.exp(-1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0 + 0j
    lifted = np.kron(v_m, IDENTITY2)
    distance = float(np.linalg.norm(ua - phase * lifted @ ub @ lifted.conj().T))
    return distance, v_m, complex(phase)


def gauge_distance(u_a, u_b) -> float:
    """Frobenius distance modulo memory-side conjugation and global phase"""
    return gauge_alignment(u_a, u_b)[0]


def random_unitary(rng: np.random.Generator) -> TwoQubitUnitary:
    return TwoQubitUnitary(unitary_group.rvs(4, random_state=rng))


def random_regular_params(rng: np.random.Generator, margin: float = 0.1) -> CartanParams:
    """Haar-random locals, chamber-ordered α with every |α_j| in [margin, π/2 − margin]"""
    magnitudes = np.sort(rng.uniform(margin, HALF_PI - margin, size=3))[::-1]
    alpha = magnitudes * np.array([1.0, 1.0, rng.choice([-1.0, 1.0])])
    w2, v2, v1 = (unitary_group.rvs(2, random_state=rng) for _ in range(3))
    return CartanParams(w2=w2, v2=v2, alpha=alpha, v1=v1)


def _axis_decomposition(w: np.ndarray) -> Tuple[complex, float, np.ndarray]:
    """w = e^{iγ}·(cos β·I + i sin β·n·σ) with sin β ≥ 0"""
    phase = np.sqrt(np.linalg.det(w))
    su = w / phase
    cos_beta = float(np.clip(np.real(np.trace(su)) / 2, -1.0, 1.0))
    n_sin = np.real(np.einsum('ij,kji->k', su, PAULI_STACK) / 2j)
    sin_beta = float(np.linalg.norm(n_sin))
    axis = n_sin / sin_beta if sin_beta > CONTROLLED_ATOL else np.array([1.0, 0.0, 0.0])
    return complex(phase), float(np.arctan2(sin_beta, cos_beta)), axis


def is_controlled_unitary(params: CartanParams, atol: float = CONTROLLED_ATOL) -> bool:
    """α_y = α_z = 0 and either α_x = 0 or W₂ leaves the x axis invariant"""
    _, ay, az = np.abs(params.alpha)
    if ay > atol or az > atol:
        return False
    if abs(params.alpha[0]) <= atol:
        return True
    return bool(np.linalg.norm(rotation_from_unitary(params.w2) @ np.array([1.0, 0, 0])
                               - np.array([1.0, 0, 0])) <= np.sqrt(atol))


def controlled_form(params: CartanParams, atol: float = CONTROLLED_ATOL) -> ControlledUnitaryForm:
    """Rewrite a controlled-unitary interaction as e^{iβ}P₊⊗V₊ + e^{−iβ}P₋⊗V₋"""
    if not is_controlled_unitary(params, atol):
        raise NotControlled(f'alpha={np.round(params.alpha, 6).tolist()} with this W2 is not controlled',
                            stage='controlled_form')
    phase, beta, axis = _axis_decomposition(params.w2)
    if abs(params.alpha[0]) <= atol:
        v = phase * params.v2 @ params.v1
        return ControlledUnitaryForm(axis=axis, beta=beta, v_plus=v, v_minus=v)
    if axis[0] < 0:
        axis, beta = -axis, -beta
    half = params.alpha[0] / 2
    x_axis = np.array([1.0, 0.0, 0.0])
    v_plus = phase * params.v2 @ (np.cos(half) * IDENTITY2 + 1j * np.sin(half) * PAULIS[0]) @ params.v1
    v_minus = phase * params.v2 @ (np.cos(half) * IDENTITY2 - 1j * np.sin(half) * PAULIS[0]) @ params.v1
    return ControlledUnitaryForm(axis=x_axis, beta=beta, v_plus=v_plus, v_minus=v_minus)
