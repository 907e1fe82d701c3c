#!/usr/bin/env python3
"""
Test script for frequency tallies and linear-inversion process tomography
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from core.errors import DataRangeError, IllPosedReconstruction, InsufficientData
from core.qcore import (
    BlochAffineMap, Povm, QubitState, TestEnsemble, channel_from_dilation, cnot_memory_control, swap_unitary,
)
from estimators.tomography import (
    FrequencyTable, block_interior_mask, conditional_tally, estimation_error, fit_single, predicted_probabilities,
    reconstruct_conditional, shifted_tally, tally, unitarity_score,
)
from simulation.simulator import Dataset, ExperimentConfig, run_experiment


def toy_dataset() -> Dataset:
    return Dataset(settings=[0, 1, 0, 0, 1, 1], outcomes=[3, 2, 1, 0, 0, 2], config_fingerprint='toy')


def test_tally_counts():
    table = tally(toy_dataset(), 2, 4)
    assert table.counts.tolist() == [[1, 1, 0, 1], [1, 0, 2, 0]]
    assert table.total == 6
    masked = tally(toy_dataset(), 2, 4, mask=np.array([True, False, True, False, False, False]))
    assert masked.counts.tolist() == [[0, 1, 0, 1], [0, 0, 0, 0]]
    assert masked.empty_settings == [1]
    assert np.all(np.isnan(masked.freqs[1]))


def test_conditional_and_shifted_tallies():
    # step j+1 after each step j that used setting 0 (j = 0, 2, 3)
    conditional = conditional_tally(toy_dataset(), 2, 4, 0)
    assert conditional.counts.tolist() == [[1, 0, 0, 0], [1, 0, 1, 0]]
    shifted = shifted_tally(toy_dataset(), 2, 4)
    assert shifted.counts.tolist() == [[2, 0, 1, 0], [0, 1, 1, 0]]
    assert conditional_tally(toy_dataset(), 2, 4, 0, lag=10).total == 0


def test_out_of_range_ids_rejected():
    bad = Dataset(settings=[0, 1], outcomes=[0, 4], config_fingerprint='bad')
    try:
        tally(bad, 2, 4)
        raise AssertionError('outcome 4 accepted for a 4-outcome POVM')
    except DataRangeError:
        pass


def test_block_interior_mask():
    assert block_interior_mask(6, 3).tolist() == [False, True, True, False, True, True]


def test_exact_inversion_recovers_channel():
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    channel = channel_from_dilation(cnot_memory_control(), QubitState([0.3, -0.2, 0.4]))
    table = FrequencyTable.from_probabilities(predicted_probabilities(channel, ensemble, povm), ensemble.weights)
    assert table.n_effective == np.inf
    fit = fit_single(table, ensemble, povm)
    assert estimation_error(fit.channel, channel) < 1e-10
    assert fit.rank == 12 and fit.residual < 1e-10


def test_non_informative_ensemble_is_ill_posed():
    ensemble = TestEnsemble([QubitState([0, 0, 1]), QubitState([0, 0, -1])], [0.5, 0.5])
    table = FrequencyTable(np.full((2, 4), 100))
    try:
        fit_single(table, ensemble, Povm.tetrahedral())
        raise AssertionError('two-state ensemble accepted')
    except IllPosedReconstruction as exc:
        assert exc.stage == 'reconstruct_single'


def test_sampled_swap_channel_is_complete_noise():
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    dataset = run_experiment(ExperimentConfig(interaction=swap_unitary(), initial_memory=QubitState([0, 0, 0]),
                                              ensemble=ensemble, povm=povm, n_steps=60000, seed=5))
    fit = fit_single(tally(dataset, 6, 4), ensemble, povm)
    assert estimation_error(fit.channel, BlochAffineMap.constant([0, 0, 0])) < 0.1
    assert unitarity_score(fit.channel) < 0.01
    # conditioned on the previous input the output is that input
    conditional = reconstruct_conditional(dataset, ensemble, povm, 4, min_pairs=1000)
    assert np.linalg.norm(conditional.t - [0, 0, 1]) < 0.1
    try:
        reconstruct_conditional(dataset, ensemble, povm, 4, min_pairs=10 ** 6)
        raise AssertionError('too few pairs accepted')
    except InsufficientData:
        pass


def test_unitarity_score():
    assert unitarity_score(BlochAffineMap.identity()) == 1.0
    assert unitarity_score(BlochAffineMap(np.diag([1.0, -1.0, -1.0]), np.zeros(3))) == 1.0
    assert unitarity_score(BlochAffineMap.constant([0, 0, 0])) == 0.0
    assert 0.0 < unitarity_score(BlochAffineMap(np.eye(3) * 0.95, np.zeros(3))) < 1.0


def test_table_helpers():
    table = FrequencyTable([[1, 3], [2, 2]])
    merged = table.merge(table)
    assert merged.counts.tolist() == [[2, 6], [4, 4]]
    frame = table.to_frame()
    assert list(frame.columns) == ['setting_id', 'outcome_id', 'count', 'freq']
    assert frame['freq'].tolist() == [0.25, 0.75, 0.5, 0.5]


if __name__ == "__main__":
    print("📐 Testing process tomography...")
    failed = 0
    for name, func in list(globals().items()):
        if name.startswith('test_') and callable(func):
            try:
                func()
                print(f"✅ {name}")
            except Exception as e:
                failed += 1
                print(f"❌ {name}: {e}")
    sys.exit(0 if failed == 0 else 1)
