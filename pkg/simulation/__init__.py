"""
Memchan Simulation Package
Collision-model experiment engine and exact-statistics oracle
"""

from .simulator import (
    Dataset, ExactStatistics, ExperimentConfig, exact_conditional_statistics, exact_statistics,
    oracle_tables, run_experiment, stationary_tables,
)

__all__ = [
    'ExperimentConfig',
    'Dataset',
    'ExactStatistics',
    'run_experiment',
    'exact_statistics',
    'exact_conditional_statistics',
    'oracle_tables',
    'stationary_tables',
]
