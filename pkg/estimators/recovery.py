"""
Interaction Recovery
From the single-use and conditional channel estimates, recover the Cartan parameters
of the memory interaction (angles, local unitaries, sign of α_z), or classify it as a
controlled unitary of which one branch was observed.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from core.cartan import CartanParams, assemble, d_matrix, kak_decompose
from core.errors import (
    IllPosedReconstruction, InsufficientData, MemchanError, ModelViolation, NotControlled, NotUnital,
    PipelineError, error_kind,
)
from core.fixedpoint import fixed_points, memory_map
from core.qcore import (
    IDENTITY2, BlochAffineMap, Povm, TestEnsemble, nearest_rotation, rotation_from_unitary,
    unitary_from_rotation, unitary_from_rotvec,
)
from estimators.tomography import (
    FrequencyTable, conditional_tally, fit_single, tally, unitarity_score,
)
from simulation.simulator import Dataset, stationary_tables

logger = logging.getLogger(__name__)

REFERENCE_STEPS = 1e5
CONTROLLED_FLOOR = 0.5

# Proper signed permutations: the discrete ambiguities of a poorly conditioned O₂.
OCTAHEDRAL = [m for m in (np.diag(signs) @ np.eye(3)[list(perm)]
                          for perm in itertools.permutations(range(3))
                          for signs in itertools.product((1.0, -1.0), repeat=3))
              if np.linalg.det(m) > 0]
FLIP_XY = np.diag([-1.0, -1.0, 1.0])


@dataclass
class RecoveryThresholds:
    """Decision thresholds of the pipeline; statistical ones are quoted at 10⁵ samples"""
    t_unital_tol: float = 0.02
    degenerate_tol: float = 1e-3
    s_min: float = 0.05
    m_min: float = 0.05
    unitary_threshold: float = 0.9
    min_pairs: int = 1000
    det_tol: float = 1e-3
    product_tol: float = 0.02
    refine: bool = True
    refine_starts: int = 4

    @classmethod
    def for_exact_input(cls) -> 'RecoveryThresholds':
        """Tight tolerances for infinite-data (oracle) statistics; the closed form is already exact"""
        return cls(t_unital_tol=1e-8, degenerate_tol=1e-6, s_min=1e-6, m_min=1e-6,
                   unitary_threshold=1.0 - 1e-9, min_pairs=0, det_tol=1e-9, product_tol=1e-8, refine=False)

    def statistical_scale(self, n_effective: float) -> float:
        """max(1, √(10⁵ / n))"""
        return max(1.0, float(np.sqrt(REFERENCE_STEPS / max(float(n_effective), 1.0))))

    def unital_tolerance(self, n_effective: float) -> float:
        return self.t_unital_tol * self.statistical_scale(n_effective)

    def product_tolerance(self, n_effective: float) -> float:
        return self.product_tol * self.statistical_scale(n_effective)

    def controlled_threshold(self, n_effective: float) -> float:
        """unitary_threshold with its margin widened like the sampling noise, never below 0.5"""
        margin = (1.0 - self.unitary_threshold) * self.statistical_scale(n_effective)
        return max(CONTROLLED_FLOOR, 1.0 - margin)


@dataclass(eq=False)
class SvdSplit:
    r2: np.ndarray
    cdiag: np.ndarray
    r1: np.ndarray
    residual: float = 0.0


@dataclass(eq=False)
class AlphaEstimate:
    alpha_abs: np.ndarray
    cosines: np.ndarray
    degenerate: bool = False
    residual: float = 0.0
    message: str = ''


@dataclass(eq=False)
class ConditionalMap:
    """Conditional channel estimate together with the conditioning input r₁"""
    r1: np.ndarray
    channel: BlochAffineMap


@dataclass(eq=False)
class MemoryLocalEstimate:
    o2: np.ndarray
    sign_alpha_z: int
    partial: bool = False
    residual: float = 0.0
    condition_number: float = 1.0
    message: str = ''


@dataclass(eq=False)
class RefinedFit:
    """Joint least-squares fit of the Cartan parameters to every frequency table"""
    params: CartanParams
    cost: float
    start_cost: float
    starts: int
    evaluations: int

    @property
    def sign_alpha_z(self) -> int:
        return int(np.sign(self.params.alpha[2]))


@dataclass(eq=False)
class ControlledBranch:
    """One observed branch V_l of a controlled-unitary interaction"""
    v_hat: np.ndarray
    rotation: np.ndarray
    score: float
    half_scores: List[float] = field(default_factory=list)
    label: str = 'one branch V_l of a controlled-unitary interaction, observed with probability q_l'


@dataclass(eq=False)
class RecoveryResult:
    success: bool = False
    branch: str = 'none'
    params: Optional[CartanParams] = None
    controlled: Optional[ControlledBranch] = None
    single_map: Optional[BlochAffineMap] = None
    conditional_maps: Dict[int, BlochAffineMap] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    errors: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[Dict[str, Any]] = field(default_factory=list)

    def unitary(self):
        return assemble(self.params) if self.params is not None else None


def _issue(stage: str, message: str, details: str = '', suggestion: str = '') -> Dict[str, str]:
    return {'stage': stage, 'message': message, 'details': details, 'suggestion': suggestion}


def split_svd(e1: BlochAffineMap, t_tol: float = 0.02, det_tol: float = 1e-3) -> SvdSplit:
    """T = R₂·diag(C)·R₁ with proper rotations and C descending"""
    t_norm = float(np.linalg.norm(e1.t))
    if t_norm > t_tol:
        raise NotUnital(f'|t| = {t_norm:.4f} exceeds the unitality tolerance {t_tol:.4f}',
                        stage='split_svd', residual=t_norm)
    det = float(np.linalg.det(e1.T))
    if det < -det_tol:
        raise ModelViolation(f'det T = {det:.4e} is negative', stage='split_svd', residual=det)

    u, s, vt = np.linalg.svd(e1.T)
    cdiag = s.copy()
    # Flip the smallest axis on each side that is improper; a lone flip moves a sign onto C.
    if np.linalg.det(u) < 0:
        u[:, 2] *= -1
        cdiag[2] *= -1
    if np.linalg.det(vt) < 0:
        vt[2, :] *= -1
        cdiag[2] *= -1
    residual = float(np.linalg.norm(u @ np.diag(cdiag) @ vt - e1.T))
    if cdiag[2] < 0:
        logger.debug('split_svd: clamping C_z = %.3e to zero', cdiag[2])
        cdiag[2] = 0.0
    return SvdSplit(r2=u, cdiag=cdiag, r1=vt, residual=residual)


def alpha_from_products(cdiag: Sequence[float], degenerate_tol: float = 1e-3) -> AlphaEstimate:
    """
    Invert p_x = c_y c_z, p_y = c_z c_x, p_z = c_x c_y via c_x = √(p_y p_z / p_x), cyclically.
    When p_y, p_z vanish (c_x = 0) only c_y·c_z = p_x is known and c_y = c_z is taken.
    residual is the largest excess of a cosine over 1 (inconsistent products).
    """
    p = np.clip(np.asarray(cdiag, dtype=float), 0.0, 1.0)
    px, py, pz = p
    degenerate = bool(p.min() <= degenerate_tol)
    message = ''
    if px <= degenerate_tol:
        cos = np.zeros(3)
        message = 'all products vanish; alpha taken as (pi/2, pi/2, pi/2)'
    elif py <= degenerate_tol:
        cos = np.array([0.0, np.sqrt(px), np.sqrt(px)])
        message = 'c_x vanishes; c_y = c_z assumed'
    else:
        floor = np.finfo(float).tiny
        cos = np.sqrt(np.array([py * pz / px, pz * px / py, px * py / max(pz, floor)]))
        if degenerate:
            message = 'smallest product below the degenerate tolerance'
    residual = float(np.max(np.maximum(cos - 1.0, 0.0)))
    cos = np.clip(cos, 0.0, 1.0)
    return AlphaEstimate(alpha_abs=np.arccos(cos), cosines=cos, degenerate=degenerate,
                         residual=residual, message=message)


def recover_memory_local(cond_maps: Sequence[ConditionalMap], r1: np.ndarray, r2: np.ndarray,
                         alpha_abs: np.ndarray, thresholds: Optional[RecoveryThresholds] = None
                         ) -> MemoryLocalEstimate:
    """
    Solve t_i = A r1_i for A = R₂|S|(ΣO₂Σ)|S|R₁ with Σ = diag(σ, σ, 1), σ = sign α_z,
    then fix σ from F = R₂ᵀTR₁ᵀ whose (y, x) entry is −m_z c_x s_z.
    Sines are floored at s_min for the inversion so a small angle never zeroes a row of O₂.
    """
    thresholds = thresholds or RecoveryThresholds()
    if len(cond_maps) < 3:
        raise InsufficientData(f'need at least 3 conditional maps, got {len(cond_maps)}',
                               stage='recover_memory_local')
    inputs = np.array([c.r1 for c in cond_maps])
    outputs = np.array([c.channel.t for c in cond_maps])
    if np.linalg.matrix_rank(inputs, tol=1e-6) < 3:
        raise IllPosedReconstruction('conditioning states do not span the Bloch space',
                                     stage='recover_memory_local')
    a_mat = np.linalg.lstsq(inputs, outputs, rcond=None)[0].T

    raw_s = np.sin(alpha_abs)
    s = np.maximum(raw_s, max(thresholds.s_min, np.finfo(float).eps))
    c = np.cos(alpha_abs)
    s_abs = np.array([s[1] * s[2], s[2] * s[0], s[0] * s[1]])
    partial = bool(raw_s.min() < thresholds.s_min)
    middle = np.diag(1.0 / s_abs) @ r2.T @ a_mat @ r1.T @ np.diag(1.0 / s_abs)
    o2_est = nearest_rotation(middle)
    residual = float(np.linalg.norm(middle - o2_est))
    cond = float(s_abs.max() / s_abs.min())
    message = 'some sin(alpha) below s_min; O2 poorly determined along that axis' if partial else ''

    sign = 0
    if alpha_abs[2] > thresholds.degenerate_tol:
        mu_z = np.array([(o2_est @ (s_abs * (r1 @ c_map.r1)))[2] for c_map in cond_maps])
        if np.max(np.abs(mu_z)) < thresholds.m_min:
            partial = True
            message = (message + '; ' if message else '') + 'no conditioning state gives |m_z| >= m_min'
        else:
            votes = 0.0
            for mz, c_map in zip(mu_z, cond_maps):
                f = r2.T @ c_map.channel.T @ r1.T
                votes += f[1, 0] * (-mz * c[0] * s[2]) + f[0, 1] * (mz * c[1] * s[2])
            sign = 1 if votes >= 0 else -1

    sigma = np.diag([sign or 1, sign or 1, 1])
    return MemoryLocalEstimate(o2=sigma @ o2_est @ sigma, sign_alpha_z=sign, partial=partial,
                               residual=residual, condition_number=cond, message=message)


def _interaction_matrix(theta: np.ndarray) -> np.ndarray:
    """(W₂⊗V₂)·D(α)·(I⊗V₁) from θ = (rotvec W₂, rotvec V₂, α, rotvec V₁)"""
    w2, v2, v1 = (unitary_from_rotvec(theta[i:i + 3]) for i in (0, 3, 9))
    return np.kron(w2, v2) @ d_matrix(theta[6:9]).matrix @ np.kron(IDENTITY2, v1)


def _start_vector(o2: np.ndarray, r2: np.ndarray, alpha: np.ndarray, r1: np.ndarray) -> np.ndarray:
    rotvecs = [Rotation.from_matrix(m).as_rotvec() for m in (o2, r2, r1)]
    return np.concatenate([rotvecs[0], rotvecs[1], alpha, rotvecs[2]])


def refine_interaction(single: FrequencyTable, conditional: Dict[int, FrequencyTable],
                       ensemble: TestEnsemble, povm: Povm, start: CartanParams,
                       thresholds: Optional[RecoveryThresholds] = None) -> RefinedFit:
    """
    Weighted least squares of the stationary single and conditional tables over
    (W₂, V₂, α, V₁). Candidate starts are the closed-form estimate for both signs of
    α_z, each composed with the proper signed permutations of O₂; the best
    refine_starts by initial cost are polished with Levenberg-Marquardt.
    """
    thresholds = thresholds or RecoveryThresholds()
    settings = sorted(conditional)
    tables = [single] + [conditional[a] for a in settings]
    weights = [np.sqrt(t.setting_counts.astype(float))[:, None] for t in tables]
    observed = [np.nan_to_num(t.freqs) for t in tables]
    scale = np.sqrt(sum(t.total for t in tables))
    evaluations = 0

    def residuals(theta: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        evaluations += 1
        single_p, cond_p = stationary_tables(_interaction_matrix(theta), ensemble, povm, settings)
        predicted = [single_p] + [cond_p[a] for a in settings]
        return np.concatenate([(w * (f - p)).ravel() for w, f, p in zip(weights, observed, predicted)]) / scale

    def cost(theta: np.ndarray) -> float:
        return 0.5 * float(np.sum(residuals(theta) ** 2))

    o2, r2, r1 = (rotation_from_unitary(m) for m in (start.w2, start.v2, start.v1))
    magnitude = np.abs(start.alpha)
    magnitude[2] = max(magnitude[2], thresholds.s_min)
    own_sign = -1.0 if start.alpha[2] < 0 else 1.0
    candidates = []
    for sign in (own_sign, -own_sign):
        base = o2 if sign == own_sign else FLIP_XY @ o2 @ FLIP_XY
        alpha = magnitude * np.array([1.0, 1.0, sign])
        for g in OCTAHEDRAL:
            theta = _start_vector(base @ g, r2, alpha, r1)
            candidates.append((cost(theta), np.allclose(g, np.eye(3)), theta))
    # closed-form starts first, then the cheapest of the rest
    candidates.sort(key=lambda item: (not item[1], item[0]))
    closed_form = candidates[:2]
    others = sorted(candidates[2:], key=lambda item: item[0])[:max(thresholds.refine_starts - 2, 0)]

    best = None
    for start_cost, _, theta in closed_form + others:
        fit = least_squares(residuals, theta, method='lm', xtol=1e-10, ftol=1e-12, gtol=1e-12)
        if best is None or fit.cost < best[0].cost:
            best = (fit, start_cost)
    fit, start_cost = best

    params = kak_decompose(_interaction_matrix(fit.x)).params
    logger.info('refine_interaction: cost %.3e -> %.3e over %d starts (%d evaluations)',
                start_cost, fit.cost, len(closed_form) + len(others), evaluations)
    return RefinedFit(params=params, cost=float(fit.cost), start_cost=float(start_cost),
                      starts=len(closed_form) + len(others), evaluations=evaluations)


def classify_and_extract_controlled(e1: BlochAffineMap, dataset: Optional[Dataset], povm: Povm,
                                    ensemble: TestEnsemble,
                                    thresholds: Optional[RecoveryThresholds] = None,
                                    n_effective: float = np.inf) -> ControlledBranch:
    """A unitary-looking single-use channel is one branch of a controlled unitary"""
    thresholds = thresholds or RecoveryThresholds()
    score = unitarity_score(e1)
    threshold = thresholds.controlled_threshold(n_effective)
    if score < threshold:
        raise NotControlled(f'unitarity score {score:.4f} below {threshold:.4f}',
                            stage='classify_controlled', residual=score)
    rotation = nearest_rotation(e1.T)
    half_scores: List[float] = []
    if dataset is not None and len(dataset) >= 2:
        half = len(dataset) // 2
        for mask in (np.arange(len(dataset)) < half, np.arange(len(dataset)) >= half):
            table = tally(dataset, ensemble.size, povm.size, mask=mask)
            half_scores.append(unitarity_score(fit_single(table, ensemble, povm).channel))
    return ControlledBranch(v_hat=unitary_from_rotation(rotation), rotation=rotation,
                            score=score, half_scores=half_scores)


def estimate_from_tables(single: FrequencyTable, conditional: Dict[int, FrequencyTable],
                         ensemble: TestEnsemble, povm: Povm,
                         thresholds: Optional[RecoveryThresholds] = None,
                         dataset: Optional[Dataset] = None) -> RecoveryResult:
    """Pipeline body shared by sampled datasets and oracle tables"""
    thresholds = thresholds or RecoveryThresholds()
    result = RecoveryResult()
    diag = result.diagnostics
    stage = 'preconditions'
    try:
        if not ensemble.is_unital(atol=1e-9):
            raise ModelViolation('test ensemble average is not I/2', stage=stage,
                                 residual=float(np.linalg.norm(ensemble.average_bloch())))

        stage = 'reconstruct_single'
        fit = fit_single(single, ensemble, povm)
        e1 = fit.channel
        result.single_map = e1
        score = unitarity_score(e1)
        threshold = thresholds.controlled_threshold(single.n_effective)
        diag.update({'n_effective': single.n_effective, 'tomography_residual': fit.residual,
                     'tomography_condition_number': fit.condition_number, 'unitarity_score': score,
                     'controlled_threshold': threshold})
        logger.info('estimate: unitarity score %.4f (threshold %.4f)', score, threshold)

        if score >= threshold:
            stage = 'classify_controlled'
            result.controlled = classify_and_extract_controlled(e1, dataset, povm, ensemble, thresholds,
                                                                single.n_effective)
            result.branch = 'controlled'
            diag['half_scores'] = result.controlled.half_scores
            result.success = True
            return result

        stage = 'split_svd'
        split = split_svd(e1, thresholds.unital_tolerance(single.n_effective), thresholds.det_tol)
        diag.update({'svd_residual': split.residual, 'products': split.cdiag.tolist(),
                     't_norm': float(np.linalg.norm(e1.t))})

        stage = 'alpha_from_products'
        alpha = alpha_from_products(split.cdiag, thresholds.degenerate_tol)
        diag.update({'alpha_abs': alpha.alpha_abs.tolist(), 'alpha_residual': alpha.residual})
        if alpha.degenerate:
            result.warnings.append(_issue(stage, 'degenerate regime, cosines ill-conditioned', alpha.message,
                                          'collect more data or treat the angles as partial'))
        product_tol = thresholds.product_tolerance(single.n_effective)
        if alpha.residual > product_tol:
            result.warnings.append(_issue(stage, 'products of cosines are inconsistent',
                                          f'largest cosine exceeds 1 by {alpha.residual:.3e} '
                                          f'(tolerance {product_tol:.3e})',
                                          'the interaction may not match the model, or n is too small'))

        stage = 'reconstruct_conditional'
        cond_maps = []
        for setting in sorted(conditional):
            table = conditional[setting]
            if table.n_effective < thresholds.min_pairs:
                raise InsufficientData(f'{int(table.total)} pairs conditioned on setting {setting}',
                                       stage=stage, residual=table.total)
            channel = fit_single(table, ensemble, povm).channel
            result.conditional_maps[setting] = channel
            cond_maps.append(ConditionalMap(r1=ensemble.states[setting].bloch, channel=channel))

        stage = 'recover_memory_local'
        local = recover_memory_local(cond_maps, split.r1, split.r2, alpha.alpha_abs, thresholds)
        diag.update({'o2_residual': local.residual, 'sign_alpha_z': local.sign_alpha_z,
                     's_condition_number': local.condition_number})
        if local.partial:
            result.warnings.append(_issue(stage, 'partial memory-local estimate', local.message,
                                          'thresholds.s_min / thresholds.m_min control this check'))

        stage = 'assemble'
        signed = alpha.alpha_abs * np.array([1.0, 1.0, local.sign_alpha_z or 1])
        result.params = CartanParams(w2=unitary_from_rotation(local.o2), v2=unitary_from_rotation(split.r2),
                                     alpha=signed, v1=unitary_from_rotation(split.r1))

        if thresholds.refine:
            stage = 'refine'
            try:
                refined = refine_interaction(single, conditional, ensemble, povm, result.params, thresholds)
            except (np.linalg.LinAlgError, ValueError, MemchanError) as exc:
                result.warnings.append(_issue(stage, 'joint refinement failed, closed-form estimate kept',
                                              str(exc), 'inspect the conditional tables'))
            else:
                result.params = refined.params
                sign = refined.sign_alpha_z if abs(refined.params.alpha[2]) > thresholds.degenerate_tol else 0
                diag.update({'closed_form_alpha': signed.tolist(), 'sign_alpha_z': sign,
                             'refine_cost': refined.cost, 'refine_start_cost': refined.start_cost,
                             'refine_starts': refined.starts})

        report = fixed_points(memory_map(assemble(result.params), ensemble))
        diag['fixed_point_unique'] = report.unique
        result.branch = 'generic'
        result.success = True
    except PipelineError as error:
        logger.warning('estimate aborted in %s: %s', error.stage, error)
        result.errors.append(_issue(error.stage, str(error), f'residual={error.residual}',
                                    'check the dataset/config pairing and the thresholds.* settings'))
        diag['failed_stage'] = error.stage
        diag['failed_kind'] = error_kind(error)
        diag['failed_residual'] = error.residual
        result.success = False
    return result


def estimate_interaction(dataset: Dataset, ensemble: TestEnsemble, povm: Povm,
                         thresholds: Optional[RecoveryThresholds] = None,
                         conditioning_settings: Optional[Sequence[int]] = None) -> RecoveryResult:
    """tally → single-use channel → branch → (generic) SVD, angles, conditional maps, memory local, refinement"""
    thresholds = thresholds or RecoveryThresholds()
    single = tally(dataset, ensemble.size, povm.size)
    settings = list(conditioning_settings) if conditioning_settings else list(range(ensemble.size))
    conditional = {a: conditional_tally(dataset, ensemble.size, povm.size, a) for a in settings}
    logger.info('estimate_interaction: n=%d conditioning on %s', len(dataset), settings)
    return estimate_from_tables(single, conditional, ensemble, povm, thresholds, dataset=dataset)
