#!/usr/bin/env python3
"""
Test script for the collision-model simulator and the exact statistics
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from core.cartan import CartanParams, random_regular_params
from core.errors import ConfigError
from core.qcore import (
    Povm, QubitState, TestEnsemble, TwoQubitUnitary, cnot_memory_control, instrument_matrices, swap_unitary,
    unitary_from_rotvec,
)
from estimators.tomography import conditional_tally, estimation_error, fit_single, tally
from simulation.simulator import (
    Dataset, ExperimentConfig, exact_conditional_statistics, exact_statistics, oracle_tables, outcome_probabilities,
    run_experiment, stationary_tables,
)


def regular_params() -> CartanParams:
    return CartanParams(w2=unitary_from_rotvec([0.3, 0.1, 0]), v2=unitary_from_rotvec([0, 0.8, 0.2]),
                        alpha=[1.1, 0.7, -0.4], v1=unitary_from_rotvec([-0.4, 0, 0.6]))


def make_config(interaction=None, **overrides) -> ExperimentConfig:
    settings = dict(
        interaction=interaction if interaction is not None else swap_unitary(),
        initial_memory=QubitState([0, 0, 0]),
        ensemble=TestEnsemble.pauli6(),
        povm=Povm.tetrahedral(),
        n_steps=2000,
        seed=42,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def test_config_validation():
    for overrides, path in (({'n_steps': 0}, 'run.n_steps'), ({'mode': 'sorted'}, 'run.mode'),
                            ({'seed': -1}, 'run.seed'), ({'mode': 'ordered', 'block_size': 0}, 'run.block_size'),
                            ({'initial_memory': QubitState([1, 1, 0])}, 'memory.bloch')):
        try:
            make_config(**overrides)
            raise AssertionError(f'{overrides} accepted')
        except ConfigError as exc:
            assert exc.field_path == path


def test_runs_are_reproducible():
    first, second = run_experiment(make_config()), run_experiment(make_config())
    assert np.array_equal(first.settings, second.settings)
    assert np.array_equal(first.outcomes, second.outcomes)
    assert first.config_fingerprint == second.config_fingerprint
    other = run_experiment(make_config(seed=43))
    assert not np.array_equal(first.outcomes, other.outcomes)
    assert other.config_fingerprint != first.config_fingerprint


def test_fingerprint_tracks_inputs():
    base = make_config().fingerprint()
    assert len(base) == 64
    assert make_config(n_steps=2001).fingerprint() != base
    assert make_config(povm=Povm.pauli6()).fingerprint() != base
    assert make_config(mode='ordered', block_size=10).fingerprint() != base


def test_ordered_mode_settings():
    dataset = run_experiment(make_config(mode='ordered', block_size=3, n_steps=40))
    assert np.array_equal(dataset.settings, (np.arange(40) // 3) % 6)


def test_swap_memory_holds_previous_input():
    config = make_config(record_memory_trajectory=True, initial_memory=QubitState([0.2, 0.1, 0.0]))
    dataset = run_experiment(config)
    trajectory = dataset.memory_trajectory
    assert np.allclose(trajectory[0], [0.2, 0.1, 0.0])
    bloch = config.ensemble.bloch_matrix()
    assert np.allclose(trajectory[1:], bloch[dataset.settings[:-1]])
    assert dataset.running_average_memory().shape == (2000, 3)


def test_identity_statistics_follow_born_rule():
    config = make_config(interaction=TwoQubitUnitary.identity(), n_steps=30000)
    dataset = run_experiment(config)
    table = tally(dataset, 6, 4)
    expected = config.povm.probabilities(config.ensemble.bloch_matrix())
    assert np.all(table.total_variation(expected) <= 3.0 / np.sqrt(table.setting_counts))


def test_exact_statistics_regular():
    u = random_regular_params(np.random.Generator(np.random.Philox(2)))
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    stats = exact_statistics(u.unitary(), QubitState([0, 0, 1]), ensemble, povm)
    assert not stats.initial_state_dependent
    assert np.allclose(stats.probs.sum(axis=1), 1.0)
    assert np.all(stats.probs >= -1e-12)
    other = exact_statistics(u.unitary(), QubitState([1, 0, 0]), ensemble, povm)
    assert np.allclose(stats.probs, other.probs)


def test_sampled_frequencies_approach_exact():
    config = make_config(interaction=regular_params())
    stats = exact_statistics(config.unitary(), config.initial_memory, config.ensemble, config.povm)
    within = []
    for seed in range(20):
        table = tally(run_experiment(make_config(interaction=regular_params(), n_steps=100000, seed=seed)), 6, 4)
        within.extend(table.total_variation(stats.probs) <= 3.0 / np.sqrt(table.setting_counts))
    assert len(within) == 120
    assert np.mean(within) >= 0.95, np.mean(within)


def test_later_settings_leave_earlier_outcomes_alone():
    # same seed, longer run: the first 2000 settings and outcomes must not move
    short = run_experiment(make_config(interaction=regular_params(), n_steps=2000, seed=31))
    longer = run_experiment(make_config(interaction=regular_params(), n_steps=5000, seed=31))
    assert np.array_equal(short.settings, longer.settings[:2000])
    assert np.array_equal(short.outcomes, longer.outcomes[:2000])
    # exact version: summing the step-2 outcome leaves p(k1 | x1) whatever x2 was
    config = make_config(interaction=regular_params())
    table = instrument_matrices(config.unitary(), config.ensemble, config.povm)
    start = np.concatenate([[1.0], [0.3, -0.2, 0.5]])
    for x1 in range(6):
        first = np.array([(table[x1, k1] @ start)[0] for k1 in range(4)])
        for x2 in range(6):
            joint = np.array([[(table[x2, k2] @ table[x1, k1] @ start)[0] for k2 in range(4)] for k1 in range(4)])
            assert np.allclose(joint.sum(axis=1), first, atol=1e-12)


def test_conditional_tables_average_to_single():
    config = make_config(interaction=regular_params())
    ensemble, povm = config.ensemble, config.povm
    stats, conditional = oracle_tables(config.unitary(), config.initial_memory, ensemble, povm)
    averaged = sum(ensemble.weights[a] * probs for a, probs in conditional.items())
    assert np.allclose(averaged, stats.probs, atol=1e-12)
    single, by_setting = stationary_tables(config.unitary(), ensemble, povm, sorted(conditional))
    assert np.allclose(single, stats.probs, atol=1e-12)
    assert all(np.allclose(by_setting[a], conditional[a], atol=1e-12) for a in conditional)

    dataset = run_experiment(make_config(interaction=regular_params(), n_steps=60000, seed=5))
    merged = conditional_tally(dataset, 6, 4, 0)
    for a in range(1, 6):
        merged = merged.merge(conditional_tally(dataset, 6, 4, a))
    shifted = Dataset(dataset.settings[1:], dataset.outcomes[1:], dataset.config_fingerprint)
    assert np.array_equal(merged.counts, tally(shifted, 6, 4).counts)
    single_fit = fit_single(tally(dataset, 6, 4), ensemble, povm).channel
    assert estimation_error(fit_single(merged, ensemble, povm).channel, single_fit) < 0.01


def test_running_average_memory_reaches_fixed_point():
    config = make_config(interaction=regular_params(), n_steps=50000, seed=13, record_memory_trajectory=True,
                         initial_memory=QubitState([0, 0, 1]))
    dataset = run_experiment(config)
    stats = exact_statistics(config.unitary(), config.initial_memory, config.ensemble, config.povm)
    average = QubitState(dataset.running_average_memory()[-1])
    assert average.trace_distance(stats.xi_bar) <= 0.02


def test_controlled_not_depends_on_initial_memory():
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    up = exact_statistics(cnot_memory_control(), QubitState([0, 0, 1]), ensemble, povm)
    down = exact_statistics(cnot_memory_control(), QubitState([0, 0, -1]), ensemble, povm)
    assert up.initial_state_dependent and down.initial_state_dependent
    assert np.allclose(up.xi_bar.bloch, [0, 0, 1]) and np.allclose(down.xi_bar.bloch, [0, 0, -1])
    assert np.allclose(up.probs, povm.probabilities(ensemble.bloch_matrix()))


def test_swap_conditional_statistics():
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    probs = exact_conditional_statistics(swap_unitary(), QubitState([0, 0, 0]), ensemble, povm, 4)
    assert np.allclose(probs, np.tile(povm.probabilities(np.array([0, 0, 1.0])), (6, 1)))
    stats, tables = oracle_tables(swap_unitary(), QubitState([0, 0, 0]), ensemble, povm, [0, 2, 4])
    assert sorted(tables) == [0, 2, 4]
    assert np.allclose(stats.probs, outcome_probabilities(swap_unitary(), QubitState([0, 0, 0]), ensemble, povm))


if __name__ == "__main__":
    print("🎲 Testing collision-model simulator...")
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
