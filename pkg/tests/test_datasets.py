"""Target generators: step distributions, Haar states, random teachers."""

import numpy as np
import pytest

from qbmlab.datasets import (
    ExperimentTarget,
    haar_random_pure,
    haar_unitary,
    random_mixed,
    random_ti_teacher,
    split_seeds,
    step_distribution,
    step_function_state,
)
from qbmlab.linalg import gibbs_state
from qbmlab.operators import assemble_hamiltonian
from qbmlab.serialize import load_target, save_target
from qbmlab.training import PovmTrainingSet, StateTrainingSet


class TestStepDistribution:
    def test_noiseless_uniform_over_steps(self):
        # n=2 steps: 00, 10, 11 (most significant bit first)
        q = step_distribution(2, noise_p=0.0)
        assert np.allclose(q, [1 / 3, 0.0, 1 / 3, 1 / 3])

    def test_frozen_noisy_value(self):
        # q(00) = (0.9^2 + 0.1*0.9 + 0.1*0.1) / 3
        q = step_distribution(2, noise_p=0.1)
        assert abs(q[0] - 0.91 / 3) < 1e-12

    @pytest.mark.parametrize("n,p", [(1, 0.0), (2, 0.1), (3, 0.25), (4, 0.49)])
    def test_normalized(self, n, p):
        q = step_distribution(n, noise_p=p)
        assert q.shape == (2**n,)
        assert abs(q.sum() - 1.0) < 1e-12
        assert np.all(q >= 0)

    def test_noise_range_checked(self):
        with pytest.raises(ValueError):
            step_distribution(2, noise_p=0.5)


class TestStepFunctionState:
    def test_amplitudes_real_nonnegative(self):
        psi, _, _ = step_function_state(3)
        assert np.all(psi.real >= 0)
        assert np.allclose(psi.imag, 0.0)
        assert abs(np.vdot(psi, psi).real - 1.0) < 1e-12

    def test_povm_and_state_sets(self):
        psi, povm, states = step_function_state(2)
        assert isinstance(povm, PovmTrainingSet)
        assert np.allclose(povm.probabilities, [1.0, 0.0])
        proj = np.outer(psi, psi.conj())
        assert np.allclose(povm.elements[0], proj)
        assert np.allclose(povm.elements[0] + povm.elements[1], np.eye(4))
        assert isinstance(states, StateTrainingSet)
        assert np.allclose(states.rho, proj)

    def test_deterministic_without_rng(self):
        a = step_function_state(2, 0.1)[0]
        b = step_function_state(2, 0.1, rng=np.random.default_rng(9))[0]
        assert np.array_equal(a, b)


class TestHaar:
    def test_unitary(self, rng):
        u = haar_unitary(8, rng)
        assert np.linalg.norm(u.conj().T @ u - np.eye(8)) < 1e-12

    def test_seed_reproducible(self):
        a = haar_unitary(4, np.random.default_rng(5))
        b = haar_unitary(4, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_pure_state_basics(self, rng):
        s = haar_random_pure(2, rng)
        evals = np.linalg.eigvalsh(s.rho)
        assert abs(np.trace(s.rho).real - 1.0) < 1e-12
        assert evals[-2] < 1e-12  # rank one
        assert abs(np.trace(s.rho @ s.rho).real - 1.0) < 1e-12

    def test_first_moment(self, rng):
        # Haar average of |psi><psi| is the maximally mixed state
        acc = np.zeros((4, 4), dtype=complex)
        for _ in range(5000):
            acc += haar_random_pure(2, rng).rho
        assert np.linalg.norm(acc / 5000 - np.eye(4) / 4) < 0.02


class TestRandomMixed:
    def test_full_rank(self, rng):
        s = random_mixed(2, rng)
        assert np.linalg.eigvalsh(s.rho)[0] > 0

    def test_spectrum_is_normalized_uniform_weights(self):
        # replicate the construction: one Haar unitary, then dim uniforms
        seed = 77
        s = random_mixed(2, np.random.default_rng(seed))
        shadow = np.random.default_rng(seed)
        haar_unitary(4, shadow)
        w = shadow.uniform(size=4)
        w /= w.sum()
        assert np.allclose(np.linalg.eigvalsh(s.rho), np.sort(w), atol=1e-10)

    def test_mean_purity_single_qubit(self, rng):
        # E[Tr rho^2] = E[(u^2+v^2)/(u+v)^2] = 2 - 2 ln 2 for two iid uniforms
        acc = 0.0
        for _ in range(2000):
            rho = random_mixed(1, rng).rho
            acc += np.trace(rho @ rho).real
        assert abs(acc / 2000 - (2 - 2 * np.log(2))) < 0.02


class TestTiTeacher:
    def test_normalized_unit_spectral_norm(self, rng):
        model, theta, _ = random_ti_teacher(3, True, rng)
        assert abs(np.linalg.norm(assemble_hamiltonian(model, theta), 2) - 1.0) < 1e-10

    def test_parameter_count(self, rng):
        model, theta, _ = random_ti_teacher(2, False, rng)
        assert theta.size == 5

    def test_target_is_teacher_gibbs(self, rng):
        model, theta, target = random_ti_teacher(2, False, rng)
        rho, _ = gibbs_state(assemble_hamiltonian(model, theta))
        assert np.allclose(target.rho, rho, atol=1e-12)


class TestSplitSeeds:
    def test_deterministic_and_distinct(self):
        a = split_seeds(3, 4)
        b = split_seeds(3, 4)
        states = [np.random.default_rng(s).normal(size=3) for s in a]
        again = [np.random.default_rng(s).normal(size=3) for s in b]
        for x, y in zip(states, again):
            assert np.array_equal(x, y)
        assert len({tuple(x) for x in states}) == 4  # streams differ


class TestExperimentTarget:
    def test_kind_payload_consistency(self, rng):
        ExperimentTarget(kind="state_mixed", payload=random_mixed(1, rng), metadata={})
        with pytest.raises(TypeError):
            ExperimentTarget(kind="povm_pure", payload=random_mixed(1, rng), metadata={})

    def test_unknown_kind(self, rng):
        with pytest.raises(ValueError):
            ExperimentTarget(kind="classical", payload=random_mixed(1, rng), metadata={})

    def test_povm_target_round_trip(self, tmp_path):
        _, povm, _ = step_function_state(2, 0.1)
        t = ExperimentTarget(kind="povm_pure", payload=povm, metadata={"n_visible": 2, "noise_p": 0.1})
        path = tmp_path / "target.json"
        save_target(path, t, seed=11)
        back = load_target(path)
        assert back.kind == t.kind
        assert back.metadata["n_visible"] == 2
        assert np.allclose(back.payload.elements[0], povm.elements[0])
        assert np.allclose(back.payload.probabilities, povm.probabilities)

    def test_state_target_round_trip(self, rng, tmp_path):
        s = random_mixed(2, rng)
        t = ExperimentTarget(kind="state_mixed", payload=s, metadata={"n": 2})
        path = tmp_path / "state.json"
        save_target(path, t)
        back = load_target(path)
        assert np.allclose(back.payload.rho, s.rho, atol=1e-15)

    def test_serialization_deterministic(self, rng, tmp_path):
        s = random_mixed(2, np.random.default_rng(4))
        t = ExperimentTarget(kind="state_mixed", payload=s, metadata={"n": 2})
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_target(p1, t, seed=4)
        save_target(p2, t, seed=4)
        assert p1.read_bytes() == p2.read_bytes()
