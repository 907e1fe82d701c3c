"""
Configuration Schema
Pydantic models for the flat `key = value` run configuration, the shipped presets,
and conversion into simulator / estimator objects.
"""

import copy
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.cartan import CartanParams, random_regular_params
from core.errors import ConfigError
from core.qcore import (
    Povm, QubitState, TestEnsemble, TwoQubitUnitary, cnot_memory_control, cz_memory_control,
    swap_unitary, unitary_from_rotvec,
)
from estimators.recovery import RecoveryThresholds
from simulation.simulator import ExperimentConfig

Vector3 = Tuple[float, float, float]

PRESETS: Dict[str, Dict[str, Any]] = {
    'identity': {
        'interaction': {'kind': 'named', 'name': 'identity'},
    },
    'delay-swap': {
        'interaction': {'kind': 'named', 'name': 'swap'},
    },
    'controlled-not': {
        'interaction': {'kind': 'named', 'name': 'cnot'},
        'run': {'n_steps': '10000'},
    },
    'controlled-z': {
        'interaction': {'kind': 'named', 'name': 'cz'},
        'run': {'n_steps': '10000'},
    },
    'random-regular': {
        'interaction': {'kind': 'random-regular', 'seed': '7', 'margin': '0.1'},
        'run': {'n_steps': '1000000'},
    },
}


def _split_floats(text: str, expected: Optional[int] = None) -> List[float]:
    parts = [p.strip() for p in str(text).split(',') if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f'not a comma-separated list of reals: {text!r}') from exc
    if expected is not None and len(values) != expected:
        raise ValueError(f'expected {expected} values, got {len(values)}')
    return values


def _vector(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(_split_floats(value, 3))
    return value


def _rows(value: Any, width: int) -> Any:
    if isinstance(value, str):
        return [_split_floats(row, width) for row in value.split(';') if row.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class LocalSection(_Section):
    """Local unitaries as rotation vectors (radians)"""
    w2: Vector3 = (0.0, 0.0, 0.0)
    v2: Vector3 = (0.0, 0.0, 0.0)
    v1: Vector3 = (0.0, 0.0, 0.0)

    @field_validator('w2', 'v2', 'v1', mode='before')
    @classmethod
    def parse_vectors(cls, v):
        return _vector(v)


class InteractionSection(_Section):
    kind: Literal['cartan', 'named', 'random-regular'] = 'cartan'
    name: Optional[Literal['identity', 'swap', 'cnot', 'cz']] = None
    alpha: Vector3 = (0.0, 0.0, 0.0)
    local: LocalSection = Field(default_factory=LocalSection)
    seed: int = Field(default=0, ge=0)
    margin: float = Field(default=0.1, ge=0.0, lt=np.pi / 4)

    @field_validator('alpha', mode='before')
    @classmethod
    def parse_alpha(cls, v):
        return _vector(v)

    @model_validator(mode='after')
    def named_needs_name(self):
        if self.kind == 'named' and self.name is None:
            raise ValueError("interaction.kind = named requires interaction.name")
        return self


class MemorySection(_Section):
    bloch: Vector3 = (0.0, 0.0, 0.0)

    @field_validator('bloch', mode='before')
    @classmethod
    def parse_bloch(cls, v):
        return _vector(v)

    @field_validator('bloch')
    @classmethod
    def inside_ball(cls, v):
        if np.linalg.norm(v) > 1.0 + 1e-9:
            raise ValueError('memory state lies outside the Bloch ball')
        return v


class EnsembleSection(_Section):
    preset: Literal['pauli6', 'tetrahedral'] = 'pauli6'
    explicit: Optional[List[List[float]]] = None

    @field_validator('explicit', mode='before')
    @classmethod
    def parse_rows(cls, v):
        return _rows(v, 4)


class PovmSection(_Section):
    preset: Literal['tetrahedral', 'pauli6'] = 'tetrahedral'
    explicit: Optional[List[List[float]]] = None

    @field_validator('explicit', mode='before')
    @classmethod
    def parse_rows(cls, v):
        return _rows(v, 4)


class RunSection(_Section):
    n_steps: int = Field(default=100000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    mode: Literal['random', 'ordered'] = 'random'
    block_size: int = Field(default=100, ge=1)
    record_trajectory: bool = False


class ThresholdsSection(_Section):
    t_unital_tol: float = Field(default=0.02, gt=0)
    degenerate_tol: float = Field(default=1e-3, gt=0)
    s_min: float = Field(default=0.05, ge=0)
    m_min: float = Field(default=0.05, ge=0)
    unitary_threshold: float = Field(default=0.9, gt=0, le=1)
    min_pairs: int = Field(default=1000, ge=0)
    det_tol: float = Field(default=1e-3, ge=0)
    product_tol: float = Field(default=0.02, gt=0)
    refine: bool = True
    refine_starts: int = Field(default=4, ge=2, le=48)


class MemchanConfig(_Section):
    """Validated run configuration"""
    preset: Optional[Literal['identity', 'delay-swap', 'controlled-not', 'controlled-z', 'random-regular']] = None
    interaction: InteractionSection = Field(default_factory=InteractionSection)
    memory: MemorySection = Field(default_factory=MemorySection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    povm: PovmSection = Field(default_factory=PovmSection)
    run: RunSection = Field(default_factory=RunSection)
    thresholds: ThresholdsSection = Field(default_factory=ThresholdsSection)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any], preset: Optional[str] = None) -> 'MemchanConfig':
        """Validate a nested mapping; a preset (argument or `preset` key) supplies the base values"""
        chosen = preset or mapping.get('preset')
        merged: Dict[str, Any] = {}
        if chosen is not None:
            if chosen not in PRESETS:
                raise ConfigError(f'unknown preset {chosen!r}; choose from {sorted(PRESETS)}', field_path='preset')
            merged = copy.deepcopy(PRESETS[chosen])
            merged['preset'] = chosen
        _deep_merge(merged, {k: v for k, v in mapping.items() if k != 'preset'})
        try:
            return cls.model_validate(merged)
        except ValidationError as exc:
            first = exc.errors()[0]
            path = '.'.join(str(part) for part in first['loc'])
            raise ConfigError(f"{path}: {first['msg']}", field_path=path) from exc

    def build_ensemble(self) -> TestEnsemble:
        try:
            if self.ensemble.explicit:
                rows = np.array(self.ensemble.explicit)
                return TestEnsemble([QubitState(r[:3]) for r in rows], rows[:, 3])
            return getattr(TestEnsemble, self.ensemble.preset)()
        except ValueError as exc:
            raise ConfigError(str(exc), field_path='ensemble.explicit') from exc

    def build_povm(self) -> Povm:
        try:
            if self.povm.explicit:
                return Povm.from_bloch_rows(self.povm.explicit)
            return getattr(Povm, self.povm.preset)()
        except ValueError as exc:
            raise ConfigError(str(exc), field_path='povm.explicit') from exc

    def build_interaction(self):
        section = self.interaction
        if section.kind == 'named':
            return {
                'identity': TwoQubitUnitary.identity,
                'swap': swap_unitary,
                'cnot': cnot_memory_control,
                'cz': cz_memory_control,
            }[section.name]()
        if section.kind == 'random-regular':
            rng = np.random.Generator(np.random.Philox(section.seed))
            return random_regular_params(rng, section.margin)
        return CartanParams(w2=unitary_from_rotvec(section.local.w2), v2=unitary_from_rotvec(section.local.v2),
                            alpha=section.alpha, v1=unitary_from_rotvec(section.local.v1))

    def to_experiment(self, seed: Optional[int] = None, n_steps: Optional[int] = None) -> ExperimentConfig:
        return ExperimentConfig(
            interaction=self.build_interaction(),
            initial_memory=QubitState(self.memory.bloch),
            ensemble=self.build_ensemble(),
            povm=self.build_povm(),
            n_steps=n_steps if n_steps is not None else self.run.n_steps,
            seed=seed if seed is not None else self.run.seed,
            mode=self.run.mode,
            block_size=self.run.block_size,
            record_memory_trajectory=self.run.record_trajectory,
        )

    def to_thresholds(self) -> RecoveryThresholds:
        return RecoveryThresholds(**self.thresholds.model_dump())


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base
