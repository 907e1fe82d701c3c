"""
Collision Model Simulator
Randomized (or ordered) repeated uses of a memory channel: setting choice, Born-rule
outcome sampling with memory back-action, and the exact infinite-data statistics.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from cryptography.hazmat.primitives import hashes

from core.cartan import CartanParams, assemble
from core.errors import ConfigError, ZeroProbabilityBranch
from core.fixedpoint import (
    FixedPointReport, cesaro_average, fixed_points, iterate_to_fixed_point, memory_map,
)
from core.qcore import (
    PROB_FLOOR, Povm, QubitState, TestEnsemble, TwoQubitUnitary, channel_from_dilation,
    instrument_matrices, memory_channel,
)

logger = logging.getLogger(__name__)

MODES = ('random', 'ordered')


@dataclass(eq=False)
class ExperimentConfig:
    """Everything that determines a dataset, seed included"""
    interaction: Union[CartanParams, TwoQubitUnitary]
    initial_memory: QubitState
    ensemble: TestEnsemble
    povm: Povm
    n_steps: int
    seed: int
    mode: str = 'random'
    block_size: int = 1
    record_memory_trajectory: bool = False

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigError('n_steps must be at least 1', field_path='run.n_steps')
        if self.mode not in MODES:
            raise ConfigError(f'mode must be one of {MODES}, got {self.mode!r}', field_path='run.mode')
        if self.mode == 'ordered' and self.block_size < 1:
            raise ConfigError('block_size must be at least 1', field_path='run.block_size')
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError('seed must be a 64-bit unsigned integer', field_path='run.seed')
        if not self.initial_memory.is_physical():
            raise ConfigError('initial memory state lies outside the Bloch ball', field_path='memory.bloch')

    def unitary(self) -> TwoQubitUnitary:
        if isinstance(self.interaction, CartanParams):
            return assemble(self.interaction)
        return self.interaction

    def fingerprint(self) -> str:
        """SHA-256 over a canonical hex rendering of every field that affects the data"""
        digest = hashes.Hash(hashes.SHA256())
        for line in self._canonical_lines():
            digest.update(line.encode('ascii') + b'\n')
        return digest.finalize().hex()

    def _canonical_lines(self) -> Iterable[str]:
        def hexes(values) -> str:
            return ','.join(float(v).hex() for v in np.ravel(values))

        matrix = self.unitary().matrix
        yield 'U.re=' + hexes(matrix.real)
        yield 'U.im=' + hexes(matrix.imag)
        yield 'memory=' + hexes(self.initial_memory.bloch)
        yield 'ensemble.states=' + hexes(self.ensemble.bloch_matrix())
        yield 'ensemble.weights=' + hexes(self.ensemble.weights)
        a, b = self.povm.bloch_components()
        yield 'povm=' + hexes(np.column_stack([a, b]))
        yield f'n_steps={self.n_steps}'
        yield f'seed={int(self.seed)}'
        yield f'mode={self.mode}'
        yield f'block_size={self.block_size if self.mode == "ordered" else 0}'


@dataclass(eq=False)
class Dataset:
    """Event record of one run: (step, setting_id, outcome_id) per use"""
    settings: np.ndarray
    outcomes: np.ndarray
    config_fingerprint: str
    memory_trajectory: Optional[np.ndarray] = None

    def __post_init__(self):
        self.settings = np.asarray(self.settings, dtype=np.int64)
        self.outcomes = np.asarray(self.outcomes, dtype=np.int64)
        if self.settings.shape != self.outcomes.shape:
            raise ValueError('settings and outcomes must have the same length')

    def __len__(self) -> int:
        return len(self.settings)

    @property
    def n_steps(self) -> int:
        return len(self.settings)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(len(self.settings), dtype=np.int64)

    @property
    def records(self) -> List[Tuple[int, int, int]]:
        return list(zip(self.steps.tolist(), self.settings.tolist(), self.outcomes.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'step': self.steps, 'setting_id': self.settings, 'outcome_id': self.outcomes})

    def running_average_memory(self) -> np.ndarray:
        """(1/n) Σ_{j≤n} ξ_j in Bloch form, one row per step"""
        if self.memory_trajectory is None:
            raise ValueError('dataset was generated without a memory trajectory')
        counts = np.arange(1, len(self.memory_trajectory) + 1)[:, None]
        return np.cumsum(self.memory_trajectory, axis=0) / counts


def make_generators(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent Philox streams for setting choice and outcome sampling"""
    settings_seq, outcomes_seq = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.Philox(settings_seq)), np.random.Generator(np.random.Philox(outcomes_seq))


def draw_settings(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    size = config.ensemble.size
    if config.mode == 'ordered':
        return (np.arange(config.n_steps) // config.block_size) % size
    return rng.choice(size, size=config.n_steps, p=config.ensemble.weights)


def run_experiment(config: ExperimentConfig) -> Dataset:
    """Simulate n_steps collisions; the memory state is carried from one use to the next"""
    settings_rng, outcomes_rng = make_generators(config.seed)
    settings = draw_settings(config, settings_rng)
    uniforms = outcomes_rng.random(config.n_steps)
    table = instrument_matrices(config.unitary(), config.ensemble, config.povm)

    logger.info('run_experiment: mode=%s n_steps=%d seed=%d', config.mode, config.n_steps, config.seed)
    outcomes = np.empty(config.n_steps, dtype=np.int64)
    trajectory = np.empty((config.n_steps, 3)) if config.record_memory_trajectory else None
    state = np.concatenate([[1.0], config.initial_memory.bloch])
    last = config.povm.size - 1

    for step in range(config.n_steps):
        if trajectory is not None:
            trajectory[step] = state[1:]
        branches = table[settings[step]] @ state
        cumulative = np.cumsum(branches[:, 0])
        k = min(int(np.searchsorted(cumulative, uniforms[step] * cumulative[-1], side='right')), last)
        prob = branches[k, 0]
        if prob < PROB_FLOOR:
            raise ZeroProbabilityBranch(f'step {step}: outcome {k} drawn with probability {prob:.3e}',
                                        step=step, probability=float(prob))
        state = branches[k] / prob
        outcomes[step] = k

    logger.info('run_experiment: done, final memory bloch=%s', np.round(state[1:], 6))
    return Dataset(settings=settings, outcomes=outcomes, config_fingerprint=config.fingerprint(),
                   memory_trajectory=trajectory)


@dataclass(eq=False)
class ExactStatistics:
    """Infinite-data limit of the outcome statistics"""
    xi_bar: QubitState
    probs: np.ndarray
    initial_state_dependent: bool = False
    report: Optional[FixedPointReport] = None


def outcome_probabilities(u, memory: QubitState, ensemble: TestEnsemble, povm: Povm) -> np.ndarray:
    """p(k|x) = Tr[U(ξ⊗ϱ_x)U†(I⊗E_k)] as an (X, K) table"""
    channel = channel_from_dilation(u, memory)
    return povm.probabilities(channel.apply(ensemble.bloch_matrix()))


def exact_statistics(u, xi0: QubitState, ensemble: TestEnsemble, povm: Povm,
                     horizon: int = 10000) -> ExactStatistics:
    """
    Average memory ξ̄ and the limiting p(k|x). With a unique fixed point of 𝒞 the
    answer is independent of ξ0; otherwise the time average reached from ξ0 is used.
    """
    channel = memory_map(u, ensemble)
    report = fixed_points(channel)
    dependent = not report.unique
    if report.unique:
        xi_bar = report.fixed_point
    else:
        iteration = iterate_to_fixed_point(channel, xi0, tol=1e-13, max_iters=horizon)
        xi_bar = iteration.state if iteration.converged else cesaro_average(channel, xi0, horizon)
        logger.warning('exact_statistics: fixed set has dimension %d, result depends on the initial memory',
                       report.fixed_set_dim)
    return ExactStatistics(xi_bar=xi_bar, probs=outcome_probabilities(u, xi_bar, ensemble, povm),
                           initial_state_dependent=dependent, report=report)


def exact_conditional_statistics(u, xi_bar: QubitState, ensemble: TestEnsemble, povm: Povm,
                                 conditioning_setting: int) -> np.ndarray:
    """p(k | x at step j+1, conditioning setting at step j), step-j outcome summed out"""
    after = memory_channel(u, ensemble.states[conditioning_setting]).apply_state(xi_bar)
    return outcome_probabilities(u, after, ensemble, povm)


def oracle_tables(u, xi0: QubitState, ensemble: TestEnsemble, povm: Povm,
                  conditioning_settings: Optional[Iterable[int]] = None
                  ) -> Tuple[ExactStatistics, Dict[int, np.ndarray]]:
    """Exact single-use table plus one conditional table per conditioning setting"""
    stats = exact_statistics(u, xi0, ensemble, povm)
    settings = range(ensemble.size) if conditioning_settings is None else conditioning_settings
    conditional = {a: exact_conditional_statistics(u, stats.xi_bar, ensemble, povm, a) for a in settings}
    return stats, conditional


def stationary_tables(u, ensemble: TestEnsemble, povm: Povm, conditioning_settings: Iterable[int]
                      ) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """
    Single-use and conditional p(k|x) at the stationary memory, straight from the
    instrument table. Assumes a unique fixed point of 𝒞 (least-squares ξ̄ otherwise).
    """
    table = instrument_matrices(u, ensemble, povm)
    per_setting = table.sum(axis=1)
    average = np.einsum('x,xab->ab', ensemble.weights, per_setting)
    xi_bar = np.linalg.lstsq(np.eye(3) - average[1:, 1:], average[1:, 0], rcond=None)[0]
    state = np.concatenate([[1.0], xi_bar])
    born = table[:, :, 0, :]
    conditional = {a: born @ (per_setting[a] @ state) for a in conditioning_settings}
    return born @ state, conditional
