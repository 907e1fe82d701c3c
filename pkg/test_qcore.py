#!/usr/bin/env python3
"""
Test script for the qubit core: states, POVMs, dilations and Bloch channel maps
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
from scipy.spatial.transform import Rotation

from core.errors import NotUnitaryError, ZeroProbabilityBranch
from core.qcore import (
    IDENTITY2, BlochAffineMap, Povm, QubitState, TestEnsemble, TwoQubitUnitary, apply_dilation, bloch_to_density,
    channel_from_dilation, cnot_memory_control, density_to_bloch, instrument_matrices, instrument_update, memory_channel,
    nearest_rotation, partial_trace, rotation_from_unitary, swap_unitary, unitary_from_rotation, unitary_from_rotvec,
)


def test_presets_are_valid():
    for povm in (Povm.tetrahedral(), Povm.pauli6()):
        assert np.allclose(povm.effects.sum(axis=0), IDENTITY2)
        probs = povm.probabilities(np.array([0.3, -0.2, 0.5]))
        assert abs(probs.sum() - 1.0) < 1e-12
        assert probs.min() >= 0
    ensemble = TestEnsemble.pauli6()
    assert ensemble.is_unital()
    assert ensemble.spans_bloch_space()
    assert np.allclose(ensemble.bloch_matrix()[2], [0, 1, 0])
    assert TestEnsemble.tetrahedral().is_unital()


def test_invalid_inputs_rejected():
    try:
        TwoQubitUnitary(np.ones((4, 4)))
        raise AssertionError('non-unitary matrix accepted')
    except NotUnitaryError:
        pass
    try:
        TestEnsemble([QubitState([0, 0, 1]), QubitState([0, 0, -1])], [0.7, 0.7])
        raise AssertionError('weights summing to 1.4 accepted')
    except ValueError:
        pass
    try:
        Povm.from_bloch_rows([[0.5, 0, 0, 0.5], [0.6, 0, 0, -0.5]])
        raise AssertionError('effects not summing to I accepted')
    except ValueError:
        pass


def test_density_and_partial_traces():
    rho = bloch_to_density([0.3, -0.4, 0.5])
    assert np.allclose(rho, rho.conj().T) and abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(density_to_bloch(rho), [0.3, -0.4, 0.5])
    xi, sys_state = QubitState([0.1, 0.0, -0.7]), QubitState([0.0, 0.6, 0.2])
    joint = apply_dilation(TwoQubitUnitary.identity(), xi, sys_state)
    assert np.allclose(joint, np.kron(xi.density(), sys_state.density()))
    assert np.allclose(partial_trace(joint, 'memory').bloch, xi.bloch)
    assert np.allclose(partial_trace(joint, 'system').bloch, sys_state.bloch)
    swapped = apply_dilation(swap_unitary(), xi, sys_state)
    assert np.allclose(partial_trace(swapped, 'memory').bloch, sys_state.bloch)


def test_swap_dilation():
    xi, rho = QubitState([0.1, 0.2, 0.6]), QubitState([-0.5, 0.0, 0.3])
    system = channel_from_dilation(swap_unitary(), xi)
    assert np.allclose(system.T, 0) and np.allclose(system.t, xi.bloch)
    memory = memory_channel(swap_unitary(), rho)
    assert np.allclose(memory.T, 0) and np.allclose(memory.t, rho.bloch)


def test_cnot_memory_control_branches():
    up = channel_from_dilation(cnot_memory_control(), QubitState([0, 0, 1]))
    assert np.allclose(up.T, np.eye(3)) and np.allclose(up.t, 0)
    down = channel_from_dilation(cnot_memory_control(), QubitState([0, 0, -1]))
    assert np.allclose(down.T, np.diag([1, -1, -1]))


def test_instrument_matrices_match_update():
    u = unitary_from_rotvec([0.3, -0.2, 0.9])
    interaction = TwoQubitUnitary(np.kron(u, IDENTITY2)) @ swap_unitary() @ cnot_memory_control()
    ensemble, povm = TestEnsemble.pauli6(), Povm.tetrahedral()
    table = instrument_matrices(interaction, ensemble, povm)
    xi = QubitState([0.2, -0.4, 0.1])
    vec = np.concatenate([[1.0], xi.bloch])
    for x, rho in enumerate(ensemble.states):
        summed = table[x].sum(axis=0) @ vec
        assert np.allclose(summed, np.concatenate([[1.0], memory_channel(interaction, rho).apply(xi.bloch)]))
        for k, effect in enumerate(povm.effects):
            prob, post = instrument_update(interaction, xi, rho, effect)
            assert np.allclose(table[x, k] @ vec, prob * np.concatenate([[1.0], post.bloch]))


def test_zero_probability_branch():
    projector_down = np.diag([0.0, 1.0]).astype(complex)
    try:
        instrument_update(TwoQubitUnitary.identity(), QubitState([0, 0, 0]), QubitState([0, 0, 1]), projector_down)
        raise AssertionError('impossible outcome returned a state')
    except ZeroProbabilityBranch as exc:
        assert exc.probability < 1e-14


def test_rotation_lifts():
    rotvec = np.array([0.4, -1.1, 0.7])
    expected = Rotation.from_rotvec(rotvec).as_matrix()
    assert np.allclose(rotation_from_unitary(unitary_from_rotvec(rotvec)), expected)
    assert np.allclose(rotation_from_unitary(unitary_from_rotation(expected)), expected)


def test_nearest_rotation_is_proper():
    improper = np.diag([1.0, 0.9, -0.2])
    rotation = nearest_rotation(improper)
    assert abs(np.linalg.det(rotation) - 1.0) < 1e-12
    assert np.allclose(rotation.T @ rotation, np.eye(3))


def test_choi_physicality():
    assert BlochAffineMap.identity().is_physical()
    assert BlochAffineMap.constant([0, 0, 1]).is_physical()
    transpose = BlochAffineMap(np.diag([1.0, -1.0, 1.0]), np.zeros(3))
    assert abs(transpose.min_choi_eigenvalue() + 0.5) < 1e-12
    assert not transpose.is_physical()


def test_affine_map_algebra():
    a = BlochAffineMap(np.diag([0.5, 0.5, 1.0]), [0, 0, 0.1])
    b = BlochAffineMap.from_transfer_matrix(a.transfer_matrix())
    assert np.allclose(a.T, b.T) and np.allclose(a.t, b.t)
    composed = a.compose(BlochAffineMap.constant([1, 0, 0]))
    assert np.allclose(composed.t, [0.5, 0, 0.1])
    stack = a.apply(np.eye(3))
    assert stack.shape == (3, 3)


if __name__ == "__main__":
    print("⚛️  Testing quantum core...")
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
