#!/usr/bin/env python3
"""
Test script for the memory channel fixed-point analysis
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from core.cartan import CartanParams, assemble, is_controlled_unitary, kak_decompose, random_regular_params
from core.errors import ModelViolation
from core.fixedpoint import cesaro_average, fixed_points, iterate_to_fixed_point, memory_map
from core.qcore import (
    IDENTITY2, BlochAffineMap, QubitState, TestEnsemble, TwoQubitUnitary, cnot_memory_control, swap_unitary,
    unitary_from_rotvec,
)


def test_regular_instance_has_unique_fixed_point():
    u = assemble(random_regular_params(np.random.Generator(np.random.Philox(21))))
    channel = memory_map(u, TestEnsemble.pauli6())
    report = fixed_points(channel)
    assert report.unique and report.fixed_set_dim == 0
    assert np.allclose(channel.apply(report.fixed_point.bloch), report.fixed_point.bloch, atol=1e-9)
    assert report.fixed_point.is_physical()
    iteration = iterate_to_fixed_point(channel, QubitState([0, 0, 1]))
    assert iteration.converged
    assert np.allclose(iteration.state.bloch, report.fixed_point.bloch, atol=1e-9)


def test_swap_memory_forgets():
    report = fixed_points(memory_map(swap_unitary(), TestEnsemble.pauli6()))
    assert report.unique
    assert np.allclose(report.fixed_point.bloch, 0)


def test_controlled_not_dephases_memory():
    channel = memory_map(cnot_memory_control(), TestEnsemble.pauli6())
    assert np.allclose(channel.T, np.diag([0, 0, 1]), atol=1e-12)
    report = fixed_points(channel)
    assert not report.unique and report.fixed_set_dim == 1
    assert np.allclose(np.abs(report.directions[0]), [0, 0, 1], atol=1e-9)
    iteration = iterate_to_fixed_point(channel, QubitState([0.5, 0.0, -0.5]))
    assert iteration.converged
    assert np.allclose(iteration.state.bloch, [0, 0, -0.5])


def test_identity_fixes_everything():
    channel = memory_map(TwoQubitUnitary.identity(), TestEnsemble.tetrahedral())
    report = fixed_points(channel)
    assert report.fixed_set_dim == 3
    iteration = iterate_to_fixed_point(channel, QubitState([0.3, 0.3, 0.3]))
    assert iteration.converged and iteration.iterations == 1



def test_constant_map_settles_after_one_application():
    target = QubitState([0.1, -0.2, 0.4])
    iteration = iterate_to_fixed_point(BlochAffineMap.constant(target.bloch), QubitState([0, 0, 1]))
    assert iteration.converged and iteration.iterations == 1
    assert np.allclose(iteration.state.bloch, target.bloch)


def test_contraction_iterates_geometrically():
    channel = BlochAffineMap(np.diag([0.5, 0.4, 0.3]), np.zeros(3))
    iteration = iterate_to_fixed_point(channel, QubitState([1, 0, 0]), tol=1e-12)
    assert iteration.converged and iteration.iterations <= 45
    assert np.linalg.norm(iteration.state.bloch) < 1e-11

def test_cesaro_average_of_rotation():
    flip = BlochAffineMap(np.diag([-1.0, -1.0, 1.0]), np.zeros(3))
    start = QubitState([1.0, 0.0, 0.5])
    iteration = iterate_to_fixed_point(flip, start, max_iters=50)
    assert not iteration.converged
    assert np.allclose(cesaro_average(flip, start, 1000).bloch, [0, 0, 0.5])


def test_inconsistent_map_raises():
    shift = BlochAffineMap(np.eye(3), [0.1, 0, 0])
    try:
        fixed_points(shift)
        raise AssertionError('translation accepted as having a fixed point')
    except ModelViolation as exc:
        assert exc.stage == 'fixed_points'


def test_uniqueness_matches_controlled_criterion():
    rng = np.random.Generator(np.random.Philox(8))
    cases = [random_regular_params(rng) for _ in range(5)]
    cases.append(kak_decompose(cnot_memory_control()).params)
    cases.append(CartanParams(w2=unitary_from_rotvec([0.7, 0, 0]), v2=IDENTITY2, alpha=[1.0, 0, 0], v1=IDENTITY2))
    cases.append(CartanParams(w2=unitary_from_rotvec([0, 0.7, 0]), v2=IDENTITY2, alpha=[1.0, 0, 0], v1=IDENTITY2))
    verdicts = [(is_controlled_unitary(p), fixed_points(memory_map(assemble(p), TestEnsemble.pauli6())).unique)
                for p in cases]
    assert all(controlled != unique for controlled, unique in verdicts), verdicts
    assert [v[0] for v in verdicts[-3:]] == [True, True, False]


def test_report_dict():
    report = fixed_points(BlochAffineMap(np.eye(3) * 0.5, [0, 0, 0.25]))
    data = report.to_dict()
    assert data['unique'] is True
    assert np.allclose(data['fixed_point'], [0, 0, 0.5])


if __name__ == "__main__":
    print("🔁 Testing fixed-point analysis...")
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
