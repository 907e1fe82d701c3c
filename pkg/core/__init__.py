"""
Memchan Core Package
Qubit primitives, Cartan parametrization, fixed-point analysis and error types
"""

from .errors import (
    ConfigError, DataFormatError, DataRangeError, IllPosedReconstruction, InsufficientData,
    MemchanError, ModelViolation, NotControlled, NotUnital, NotUnitaryError, PipelineError,
    ZeroProbabilityBranch,
)
from .qcore import BlochAffineMap, Povm, QubitState, TestEnsemble, TwoQubitUnitary
from .cartan import (
    CartanParams, ControlledUnitaryForm, KakDecomposition, assemble, canonicalize, d_matrix,
    gauge_distance, kak_decompose,
)
from .fixedpoint import FixedPointReport, fixed_points, iterate_to_fixed_point, memory_map

__all__ = [
    'MemchanError', 'ConfigError', 'DataFormatError', 'DataRangeError', 'NotUnitaryError',
    'ZeroProbabilityBranch', 'PipelineError', 'IllPosedReconstruction', 'InsufficientData',
    'ModelViolation', 'NotUnital', 'NotControlled',
    'QubitState', 'TwoQubitUnitary', 'Povm', 'TestEnsemble', 'BlochAffineMap',
    'CartanParams', 'ControlledUnitaryForm', 'KakDecomposition', 'd_matrix', 'assemble',
    'kak_decompose', 'canonicalize', 'gauge_distance',
    'FixedPointReport', 'memory_map', 'fixed_points', 'iterate_to_fixed_point',
]
