"""
Memchan Estimators Package
Process tomography and recovery of the memory interaction
"""

from .tomography import (
    FrequencyTable, conditional_tally, reconstruct_conditional, reconstruct_single, shifted_tally, tally,
    unitarity_score,
)
from .recovery import (
    RecoveryResult, RecoveryThresholds, alpha_from_products, classify_and_extract_controlled,
    estimate_from_tables, estimate_interaction, recover_memory_local, refine_interaction, split_svd,
)

__all__ = [
    'FrequencyTable', 'tally', 'conditional_tally', 'shifted_tally', 'reconstruct_single',
    'reconstruct_conditional', 'unitarity_score',
    'RecoveryThresholds', 'RecoveryResult', 'split_svd', 'alpha_from_products', 'recover_memory_local',
    'classify_and_extract_controlled', 'refine_interaction', 'estimate_from_tables', 'estimate_interaction',
]
