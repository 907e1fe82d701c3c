"""
Process Tomography
Frequency tallies and weighted least-squares linear inversion of qubit channels
from randomized-input data, plus the unitarity decision statistic.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from core.errors import DataRangeError, IllPosedReconstruction, InsufficientData
from core.qcore import BlochAffineMap, Povm, TestEnsemble
from simulation.simulator import Dataset

logger = logging.getLogger(__name__)

DEFAULT_MIN_PAIRS = 1000


@dataclass(eq=False)
class FrequencyTable:
    """
    Counts N_xk (settings × outcomes). Tables built from exact probabilities carry
    pseudo-counts q_x·p(k|x) and report an infinite effective sample size.
    """
    counts: np.ndarray
    exact: bool = False

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float if self.exact else np.int64)

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, weights: np.ndarray) -> 'FrequencyTable':
        return cls(np.asarray(weights, dtype=float)[:, None] * np.asarray(probs, dtype=float), exact=True)

    @property
    def setting_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def n_effective(self) -> float:
        return np.inf if self.exact else self.total

    @property
    def empty_settings(self):
        return [int(x) for x in np.flatnonzero(self.setting_counts == 0)]

    @property
    def freqs(self) -> np.ndarray:
        """p̃(k|x); rows of empty settings are NaN"""
        n_x = self.setting_counts.astype(float)
        with np.errstate(invalid='ignore', divide='ignore'):
            return self.counts / n_x[:, None]

    def merge(self, other: 'FrequencyTable') -> 'FrequencyTable':
        if self.counts.shape != other.counts.shape:
            raise ValueError('cannot merge tables of different shape')
        return FrequencyTable(self.counts + other.counts, exact=self.exact or other.exact)

    def total_variation(self, probs: np.ndarray) -> np.ndarray:
        """½ Σ_k |p̃(k|x) − p(k|x)| per setting"""
        return 0.5 * np.abs(self.freqs - np.asarray(probs)).sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        n_x, k = self.counts.shape
        freqs = self.freqs
        return pd.DataFrame({
            'setting_id': np.repeat(np.arange(n_x), k),
            'outcome_id': np.tile(np.arange(k), n_x),
            'count': self.counts.ravel(),
            'freq': freqs.ravel(),
        })


def _check_range(values: np.ndarray, size: int, what: str):
    if len(values) and (values.min() < 0 or values.max() >= size):
        bad = int(values[(values < 0) | (values >= size)][0])
        raise DataRangeError(f'{what} id {bad} outside [0, {size})')


def _count(settings: np.ndarray, outcomes: np.ndarray, ensemble_size: int, povm_size: int) -> FrequencyTable:
    _check_range(settings, ensemble_size, 'setting')
    _check_range(outcomes, povm_size, 'outcome')
    flat = np.bincount(settings * povm_size + outcomes, minlength=ensemble_size * povm_size)
    return FrequencyTable(flat.reshape(ensemble_size, povm_size))


def tally(dataset: Dataset, ensemble_size: int, povm_size: int,
          mask: Optional[np.ndarray] = None) -> FrequencyTable:
    """N_xk over all steps, or over the steps selected by a boolean mask"""
    settings, outcomes = dataset.settings, dataset.outcomes
    if mask is not None:
        settings, outcomes = settings[mask], outcomes[mask]
    table = _count(settings, outcomes, ensemble_size, povm_size)
    if table.empty_settings:
        logger.warning('tally: settings %s never occur', table.empty_settings)
    return table


def block_interior_mask(n_steps: int, block_size: int) -> np.ndarray:
    """Steps that are not the first of their block (ordered mode analysis)"""
    return (np.arange(n_steps) % block_size) != 0


def conditional_tally(dataset: Dataset, ensemble_size: int, povm_size: int,
                      conditioning_setting: int, lag: int = 1) -> FrequencyTable:
    """Step-(j+lag) counts over the overlapping pairs whose step j used conditioning_setting"""
    _check_range(dataset.settings, ensemble_size, 'setting')
    if lag < 1 or lag >= len(dataset):
        return FrequencyTable(np.zeros((ensemble_size, povm_size), dtype=np.int64))
    selected = np.flatnonzero(dataset.settings[:-lag] == conditioning_setting) + lag
    return _count(dataset.settings[selected], dataset.outcomes[selected], ensemble_size, povm_size)


def shifted_tally(dataset: Dataset, ensemble_size: int, povm_size: int, lag: int = 1) -> FrequencyTable:
    """Setting at step j paired with the outcome at step j+lag"""
    if lag < 1 or lag >= len(dataset):
        return FrequencyTable(np.zeros((ensemble_size, povm_size), dtype=np.int64))
    return _count(dataset.settings[:-lag], dataset.outcomes[lag:], ensemble_size, povm_size)


@dataclass(eq=False)
class LinearInversionFit:
    channel: BlochAffineMap
    residual: float
    condition_number: float
    rank: int


def design_matrix(ensemble: TestEnsemble, povm: Povm) -> np.ndarray:
    """Rows [b_k ⊗ r_x, b_k] for p(k|x) − a_k = b_k·(T r_x + t), unknowns vec(T) then t"""
    _, b = povm.bloch_components()
    r = ensemble.bloch_matrix()
    rows = [np.concatenate([np.kron(b_k, r_x), b_k]) for r_x in r for b_k in b]
    return np.array(rows)


def fit_single(table: FrequencyTable, ensemble: TestEnsemble, povm: Povm) -> LinearInversionFit:
    """Weighted (N_x) least-squares inversion of the Born rule over all (x, k)"""
    a, _ = povm.bloch_components()
    design = design_matrix(ensemble, povm)
    n_x = table.setting_counts.astype(float)
    weights = np.repeat(np.sqrt(n_x), povm.size)
    keep = weights > 0
    target = (np.nan_to_num(table.freqs) - a[None, :]).ravel()

    weighted = design[keep] * weights[keep, None]
    rank = int(np.linalg.matrix_rank(weighted))
    if rank < 12:
        raise IllPosedReconstruction(f'design matrix has rank {rank} < 12; ensemble or POVM is not '
                                     f'informationally complete', stage='reconstruct_single')
    theta, _, _, singular = np.linalg.lstsq(weighted, target[keep] * weights[keep], rcond=None)
    residual = float(np.linalg.norm(weighted @ theta - target[keep] * weights[keep]) / np.sqrt(n_x.sum()))
    fit = LinearInversionFit(channel=BlochAffineMap(theta[:9].reshape(3, 3), theta[9:]),
                             residual=residual, condition_number=float(singular[0] / singular[-1]), rank=rank)
    logger.debug('fit_single: residual=%.3e cond=%.2f', fit.residual, fit.condition_number)
    return fit


def reconstruct_single(table: FrequencyTable, ensemble: TestEnsemble, povm: Povm) -> BlochAffineMap:
    return fit_single(table, ensemble, povm).channel


def reconstruct_conditional(dataset: Dataset, ensemble: TestEnsemble, povm: Povm, conditioning_setting: int,
                            min_pairs: int = DEFAULT_MIN_PAIRS, lag: int = 1) -> BlochAffineMap:
    """Channel on step j+1 restricted to steps j that used the conditioning setting"""
    table = conditional_tally(dataset, ensemble.size, povm.size, conditioning_setting, lag)
    if table.total < min_pairs:
        raise InsufficientData(f'only {int(table.total)} pairs conditioned on setting {conditioning_setting} '
                               f'(need {min_pairs})', stage='reconstruct_conditional', residual=table.total)
    return reconstruct_single(table, ensemble, povm)


def unitarity_score(channel: BlochAffineMap) -> float:
    """1 − max(‖TᵀT − I‖₂, |det T − 1|, ‖t‖), clamped to [0, 1]"""
    t_mat = channel.T
    deviation = max(np.linalg.norm(t_mat.T @ t_mat - np.eye(3), 2),
                    abs(np.linalg.det(t_mat) - 1.0),
                    np.linalg.norm(channel.t))
    return float(np.clip(1.0 - deviation, 0.0, 1.0))


def predicted_probabilities(channel: BlochAffineMap, ensemble: TestEnsemble, povm: Povm) -> np.ndarray:
    return povm.probabilities(channel.apply(ensemble.bloch_matrix()))


def estimation_error(a: BlochAffineMap, b: BlochAffineMap) -> float:
    """Frobenius norm of the difference of [T | t]"""
    return float(np.linalg.norm(np.column_stack([a.T - b.T, a.t - b.t])))
