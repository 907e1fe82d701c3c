"""
Quantum Core
Exact qubit primitives: Bloch/density conversions, two-qubit unitaries, POVMs,
partial traces, the memory-update instrument and Bloch affine channel maps.

Tensor ordering is memory ⊗ system everywhere (row/col index = 2·m + s).
"""

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from core.errors import NotUnitaryError, ZeroProbabilityBranch

EPS = 1e-9             # validity checks (physicality, effect bounds)
UNITARY_ATOL = 1e-8    # accepted deviation from U·U† = I
POVM_ATOL = 1e-10      # accepted deviation from Σ E_k = I
PROB_FLOOR = 1e-14     # below this an instrument branch is treated as impossible

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULI_STACK = np.stack(PAULIS)
PAULI_BASIS = np.concatenate([IDENTITY2[None], PAULI_STACK])

# Tetrahedron vertices: the qubit SIC-POVM directions.
TETRAHEDRON = np.array([
    [0.0, 0.0, 1.0],
    [2.0 * np.sqrt(2.0) / 3.0, 0.0, -1.0 / 3.0],
    [-np.sqrt(2.0) / 3.0, np.sqrt(2.0 / 3.0), -1.0 / 3.0],
    [-np.sqrt(2.0) / 3.0, -np.sqrt(2.0 / 3.0), -1.0 / 3.0],
])

MatrixLike = Union['TwoQubitUnitary', np.ndarray]


def bloch_to_density(r: Sequence[float]) -> np.ndarray:
    """ρ = ½(I + r·σ); accepts |r| > 1, physicality is the caller's concern"""
    r = np.asarray(r, dtype=float).reshape(3)
    return 0.5 * (IDENTITY2 + np.einsum('i,ijk->jk', r, PAULI_STACK))


def density_to_bloch(rho: np.ndarray) -> np.ndarray:
    """Bloch vector r_i = Tr(ρ σ_i)"""
    rho = np.asarray(rho, dtype=complex)
    return np.real(np.einsum('jk,ikj->i', rho, PAULI_STACK))


def operator_components(op: np.ndarray) -> np.ndarray:
    """(Tr A, Tr Aσ_x, Tr Aσ_y, Tr Aσ_z) for a Hermitian 2×2 operator"""
    op = np.asarray(op, dtype=complex)
    return np.real(np.concatenate([[np.trace(op)], np.einsum('jk,ikj->i', op, PAULI_STACK)]))


@dataclass(frozen=True, eq=False)
class QubitState:
    """Qubit density operator carried as its Bloch vector"""
    bloch: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'bloch', np.asarray(self.bloch, dtype=float).reshape(3).copy())

    @classmethod
    def from_density(cls, rho: np.ndarray) -> 'QubitState':
        return cls(density_to_bloch(rho))

    @classmethod
    def maximally_mixed(cls) -> 'QubitState':
        return cls(np.zeros(3))

    def density(self) -> np.ndarray:
        return bloch_to_density(self.bloch)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.bloch))

    def is_physical(self, atol: float = EPS) -> bool:
        return self.norm <= 1.0 + atol

    def trace_distance(self, other: 'QubitState') -> float:
        return trace_distance(self, other)

    def __repr__(self) -> str:
        x, y, z = self.bloch
        return f'QubitState(bloch=({x:.6g}, {y:.6g}, {z:.6g}))'


def trace_distance(a: QubitState, b: QubitState) -> float:
    """½‖ρ_a − ρ_b‖₁, which for qubits is half the Bloch distance"""
    return 0.5 * float(np.linalg.norm(a.bloch - b.bloch))


def is_unitary(matrix: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    matrix = np.asarray(matrix, dtype=complex)
    return bool(np.allclose(matrix @ matrix.conj().T, np.eye(matrix.shape[0]), atol=atol, rtol=0.0))


@dataclass(eq=False)
class TwoQubitUnitary:
    """4×4 unitary on memory ⊗ system"""
    matrix: np.ndarray
    atol: float = field(default=UNITARY_ATOL, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (4, 4):
            raise NotUnitaryError(f'Expected a 4x4 matrix, got shape {self.matrix.shape}')
        if not is_unitary(self.matrix, self.atol):
            deviation = float(np.max(np.abs(self.matrix @ self.matrix.conj().T - np.eye(4))))
            raise NotUnitaryError(f'Matrix is not unitary (max |UU†-I| = {deviation:.3e})')

    @classmethod
    def identity(cls) -> 'TwoQubitUnitary':
        return cls(np.eye(4, dtype=complex))

    @classmethod
    def local(cls, memory_op: np.ndarray, system_op: np.ndarray) -> 'TwoQubitUnitary':
        return cls(np.kron(memory_op, system_op))

    def dagger(self) -> 'TwoQubitUnitary':
        return TwoQubitUnitary(self.matrix.conj().T)

    def __matmul__(self, other: 'TwoQubitUnitary') -> 'TwoQubitUnitary':
        return TwoQubitUnitary(self.matrix @ as_matrix(other))


def as_matrix(u: MatrixLike) -> np.ndarray:
    if isinstance(u, TwoQubitUnitary):
        return u.matrix
    return np.asarray(u, dtype=complex)


@dataclass(eq=False)
class Povm:
    """Qubit POVM with effects E_1..E_m"""
    effects: np.ndarray
    name: str = 'explicit'

    def __post_init__(self):
        self.effects = np.asarray(self.effects, dtype=complex).reshape(-1, 2, 2)
        for k, effect in enumerate(self.effects):
            if not np.allclose(effect, effect.conj().T, atol=EPS):
                raise ValueError(f'Effect {k} is not Hermitian')
            eigs = np.linalg.eigvalsh(effect)
            if eigs.min() < -EPS or eigs.max() > 1.0 + EPS:
                raise ValueError(f'Effect {k} has eigenvalues outside [0, 1]: {eigs}')
        total = self.effects.sum(axis=0)
        if not np.allclose(total, IDENTITY2, atol=POVM_ATOL, rtol=0.0):
            raise ValueError('POVM effects do not sum to the identity')

    @property
    def size(self) -> int:
        return len(self.effects)

    @classmethod
    def from_bloch_rows(cls, rows: Sequence[Sequence[float]], name: str = 'explicit') -> 'Povm':
        """Effects given as rows (a, b_x, b_y, b_z) meaning E = a·I + b·σ"""
        effects = [row[0] * IDENTITY2 + np.einsum('i,ijk->jk', np.asarray(row[1:], dtype=float), PAULI_STACK)
                   for row in rows]
        return cls(np.array(effects), name=name)

    @classmethod
    def tetrahedral(cls) -> 'Povm':
        """Symmetric informationally complete 4-outcome POVM"""
        return cls.from_bloch_rows([[0.25, *(0.25 * n)] for n in TETRAHEDRON], name='tetrahedral')

    @classmethod
    def pauli6(cls) -> 'Povm':
        """The three Pauli measurements mixed with probability 1/3 each"""
        rows = []
        for axis in range(3):
            for sign in (1.0, -1.0):
                b = np.zeros(3)
                b[axis] = sign / 6.0
                rows.append([1.0 / 6.0, *b])
        return cls.from_bloch_rows(rows, name='pauli6')

    def bloch_components(self) -> Tuple[np.ndarray, np.ndarray]:
        """(a_k, b_k) with E_k = a_k I + b_k·σ"""
        comps = np.array([operator_components(e) for e in self.effects]) / 2.0
        return comps[:, 0], comps[:, 1:]

    def probabilities(self, bloch: np.ndarray) -> np.ndarray:
        """Born rule p_k = Tr(E_k ρ) for one Bloch vector or an (n, 3) stack"""
        a, b = self.bloch_components()
        return a + np.asarray(bloch, dtype=float) @ b.T


@dataclass(eq=False)
class TestEnsemble:
    """Test states ϱ_x with their selection probabilities q_x"""
    __test__ = False

    states: List[QubitState]
    weights: np.ndarray
    name: str = 'explicit'

    def __post_init__(self):
        self.states = [s if isinstance(s, QubitState) else QubitState(s) for s in self.states]
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.states) != len(self.weights):
            raise ValueError('Ensemble needs one weight per state')
        if np.any(self.weights <= 0.0) or np.any(self.weights > 1.0):
            raise ValueError('Ensemble weights must lie in (0, 1]')
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f'Ensemble weights sum to {self.weights.sum():.15f}, not 1')
        for x, state in enumerate(self.states):
            if not state.is_physical():
                raise ValueError(f'Test state {x} lies outside the Bloch ball')

    @property
    def size(self) -> int:
        return len(self.states)

    @classmethod
    def pauli6(cls) -> 'TestEnsemble':
        """The six Pauli eigenstates (+x, −x, +y, −y, +z, −z) with q_x = 1/6"""
        vectors = []
        for axis in range(3):
            for sign in (1.0, -1.0):
                r = np.zeros(3)
                r[axis] = sign
                vectors.append(r)
        return cls([QubitState(v) for v in vectors], np.full(6, 1.0 / 6.0), name='pauli6')

    @classmethod
    def tetrahedral(cls) -> 'TestEnsemble':
        return cls([QubitState(v) for v in TETRAHEDRON], np.full(4, 0.25), name='tetrahedral')

    def bloch_matrix(self) -> np.ndarray:
        return np.array([s.bloch for s in self.states])

    def average_bloch(self) -> np.ndarray:
        return self.weights @ self.bloch_matrix()

    def average_state(self) -> QubitState:
        return QubitState(self.average_bloch())

    def is_unital(self, atol: float = 1e-12) -> bool:
        """Σ_x q_x r_x = 0, i.e. the average test state is I/2"""
        return bool(np.linalg.norm(self.average_bloch()) <= atol)

    def spans_bloch_space(self, tol: float = 1e-9) -> bool:
        centred = self.bloch_matrix()
        return bool(np.linalg.matrix_rank(np.hstack([np.ones((self.size, 1)), centred]), tol=tol) == 4)


@dataclass(eq=False)
class BlochAffineMap:
    """Qubit channel in Bloch form r ↦ T·r + t (complete positivity not enforced)"""
    T: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> 'BlochAffineMap':
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def constant(cls, r: Sequence[float]) -> 'BlochAffineMap':
        return cls(np.zeros((3, 3)), r)

    @classmethod
    def from_transfer_matrix(cls, ptm: np.ndarray) -> 'BlochAffineMap':
        ptm = np.asarray(ptm, dtype=float)
        return cls(ptm[1:, 1:], ptm[1:, 0])

    def transfer_matrix(self) -> np.ndarray:
        """4×4 Pauli transfer matrix [[1, 0], [t, T]]"""
        ptm = np.zeros((4, 4))
        ptm[0, 0] = 1.0
        ptm[1:, 0] = self.t
        ptm[1:, 1:] = self.T
        return ptm

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r @ self.T.T + self.t

    def apply_state(self, state: QubitState) -> QubitState:
        return QubitState(self.apply(state.bloch))

    def compose(self, inner: 'BlochAffineMap') -> 'BlochAffineMap':
        """self ∘ inner"""
        return BlochAffineMap(self.T @ inner.T, self.T @ inner.t + self.t)

    def act_on_operator(self, op: np.ndarray) -> np.ndarray:
        """Linear extension to arbitrary 2×2 operators"""
        comps = np.einsum('jk,ikj->i', np.asarray(op, dtype=complex),
                          np.concatenate([[IDENTITY2], PAULI_STACK])) / 2.0
        a0, a = comps[0], comps[1:]
        out = a0 * self.t + self.T @ a
        return a0 * IDENTITY2 + np.einsum('i,ijk->jk', out, PAULI_STACK)

    def choi(self) -> np.ndarray:
        """Normalised Choi matrix ½ Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)"""
        choi = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                unit = np.zeros((2, 2), dtype=complex)
                unit[i, j] = 1.0
                choi += np.kron(unit, self.act_on_operator(unit))
        return choi / 2.0

    def min_choi_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.choi()).min())

    def is_physical(self, atol: float = EPS) -> bool:
        return self.min_choi_eigenvalue() >= -atol

    def is_unital(self, atol: float = EPS) -> bool:
        return bool(np.linalg.norm(self.t) <= atol)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.T, compute_uv=False)


def affine_from_action(action: Callable[[QubitState], QubitState]) -> BlochAffineMap:
    """Bloch affine map of a channel known only through its action on states"""
    t = action(QubitState.maximally_mixed()).bloch
    T = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        T[:, j] = action(QubitState(e)).bloch - t
    return BlochAffineMap(T, t)


def apply_dilation(u: MatrixLike, xi: QubitState, rho: QubitState) -> np.ndarray:
    """Joint output U (ξ ⊗ ρ) U† before any trace"""
    u = as_matrix(u)
    return u @ np.kron(xi.density(), rho.density()) @ u.conj().T


def partial_trace_operator(joint: np.ndarray, keep: str) -> np.ndarray:
    """Reduced 2×2 operator of a 4×4 memory ⊗ system operator"""
    blocks = np.asarray(joint, dtype=complex).reshape(2, 2, 2, 2)
    if keep == 'system':
        return np.einsum('msmt->st', blocks)
    if keep == 'memory':
        return np.einsum('msns->mn', blocks)
    raise ValueError(f"keep must be 'memory' or 'system', got {keep!r}")


def partial_trace(joint: np.ndarray, keep: str) -> QubitState:
    return QubitState.from_density(partial_trace_operator(joint, keep))


def instrument_operator(u: MatrixLike, xi: QubitState, rho_x: QubitState, effect: np.ndarray) -> np.ndarray:
    """Unnormalised memory output ℐ[ξ] = Tr_sys[U(ξ⊗ρ)U† (I ⊗ E)]"""
    joint = apply_dilation(u, xi, rho_x)
    return partial_trace_operator(joint @ np.kron(IDENTITY2, effect), 'memory')


def instrument_update(u: MatrixLike, xi: QubitState, rho_x: QubitState,
                      effect: np.ndarray) -> Tuple[float, QubitState]:
    """Outcome probability and post-measurement memory state"""
    op = instrument_operator(u, xi, rho_x, effect)
    prob = float(np.real(np.trace(op)))
    if prob < PROB_FLOOR:
        raise ZeroProbabilityBranch(f'Outcome probability {prob:.3e} is below the numeric floor',
                                    probability=prob)
    # Hermitian part only; the anti-Hermitian residue is rounding noise
    op = 0.5 * (op + op.conj().T)
    return prob, QubitState.from_density(op / prob)


def channel_from_dilation(u: MatrixLike, xi: QubitState) -> BlochAffineMap:
    """Average channel ρ ↦ Tr_mem[U(ξ⊗ρ)U†] in Bloch form"""
    return affine_from_action(lambda rho: partial_trace(apply_dilation(u, xi, rho), 'system'))


def memory_channel(u: MatrixLike, rho: QubitState) -> BlochAffineMap:
    """Channel on the memory ξ ↦ Tr_sys[U(ξ⊗ρ)U†] for a fixed system input"""
    return affine_from_action(lambda xi: partial_trace(apply_dilation(u, xi, rho), 'memory'))


def instrument_matrices(u: MatrixLike, ensemble: TestEnsemble, povm: Povm) -> np.ndarray:
    """
    Real (X, K, 4, 4) array A with A[x, k] @ (1, r_ξ) = (Tr ℐ_xk[ξ], Tr(ℐ_xk[ξ] σ)).
    ℐ_xk[ξ] = Tr_sys[U(ξ⊗ϱ_x)U†(I⊗E_k)], contracted in one pass over all (x, k).
    """
    blocks = as_matrix(u).reshape(2, 2, 2, 2)
    rhos = np.array([state.density() for state in ensemble.states])
    effects = np.asarray(povm.effects, dtype=complex)
    # K[x, k, m', n', m, n]: memory superoperator of branch (x, k)
    kernel = np.einsum('ASms,xst,BTnt,kTS->xkABmn', blocks, rhos, blocks.conj(), effects)
    return 0.5 * np.real(np.einsum('vBA,xkABmn,umn->xkvu', PAULI_BASIS, kernel, PAULI_BASIS))


def rotation_from_unitary(v: np.ndarray) -> np.ndarray:
    """SO(3) matrix of ρ ↦ VρV†: R_ij = ½ Tr(σ_i V σ_j V†)"""
    v = np.asarray(v, dtype=complex)
    conj = np.einsum('ab,jbc,dc->jad', v, PAULI_STACK, v.conj())
    return 0.5 * np.real(np.einsum('iab,jba->ij', PAULI_STACK, conj))


def _phase_fix(v: np.ndarray) -> np.ndarray:
    # (0,0) entry real nonnegative; fall back to (1,0) when it vanishes
    ref = v[0, 0] if abs(v[0, 0]) > 1e-12 else v[1, 0]
    if abs(ref) > 0:
        v = v * (np.conj(ref) / abs(ref))
    return v


def unitary_from_quaternion(quat: Sequence[float]) -> np.ndarray:
    x, y, z, w = quat
    v = w * IDENTITY2 - 1j * (x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)
    return _phase_fix(v)


def unitary_from_rotation(rotation: np.ndarray) -> np.ndarray:
    """Lift a proper rotation to a 2×2 unitary (phase fixed, sign irrelevant)"""
    return unitary_from_quaternion(Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat())


def unitary_from_rotvec(rotvec: Sequence[float]) -> np.ndarray:
    """exp(−i θ n·σ / 2) for rotation vector θn, phase fixed"""
    return unitary_from_quaternion(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_quat())


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor, with the smallest singular axis flipped if det < 0"""
    w, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    d = np.diag([1.0, 1.0, np.sign(np.linalg.det(w @ vt)) or 1.0])
    return w @ d @ vt


def swap_unitary() -> TwoQubitUnitary:
    m = np.zeros((4, 4), dtype=complex)
    for a in range(2):
        for b in range(2):
            m[2 * b + a, 2 * a + b] = 1.0
    return TwoQubitUnitary(m)


def controlled_unitary(axis: Sequence[float], v_plus: np.ndarray, v_minus: np.ndarray,
                       beta: float = 0.0) -> TwoQubitUnitary:
    """e^{iβ} P₊ ⊗ V₊ + e^{−iβ} P₋ ⊗ V₋ with P± projectors onto ±axis of the memory"""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    sigma_n = np.einsum('i,ijk->jk', axis, PAULI_STACK)
    p_plus = 0.5 * (IDENTITY2 + sigma_n)
    p_minus = 0.5 * (IDENTITY2 - sigma_n)
    return TwoQubitUnitary(np.exp(1j * beta) * np.kron(p_plus, v_plus)
                           + np.exp(-1j * beta) * np.kron(p_minus, v_minus))


def cnot_memory_control() -> TwoQubitUnitary:
    """|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ σ_x with the memory as control"""
    return controlled_unitary((0, 0, 1), IDENTITY2, SIGMA_X)


def cz_memory_control() -> TwoQubitUnitary:
    return controlled_unitary((0, 0, 1), IDENTITY2, SIGMA_Z)
