"""Training-target generators.

Every experiment draws its data from one of four generators: an analytic
noisy step-function distribution encoded as a pure state, Haar-random pure
states, random full-rank mixed states, and random transverse-field Ising
teacher Hamiltonians whose Gibbs states serve as reconstruction targets.

All generators are pure functions of an ``numpy.random.Generator``; ensemble
code derives per-instance generators with :func:`split_seeds` so instances
can run in any order (or in parallel) without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .linalg import gibbs_state, validate_density_matrix
from .operators import (
    HamiltonianModel,
    assemble_hamiltonian,
    build_transverse_ising_complete,
)
from .training import PovmTrainingSet, StateTrainingSet

__all__ = [
    "ExperimentTarget",
    "haar_random_pure",
    "haar_unitary",
    "random_mixed",
    "random_ti_teacher",
    "split_seeds",
    "step_distribution",
    "step_function_state",
]

TARGET_KINDS = ("povm_pure", "state_pure", "state_mixed", "thermal_teacher")


@dataclass(frozen=True)
class ExperimentTarget:
    """A generated training target plus enough metadata to regenerate it.

    ``payload`` is a :class:`PovmTrainingSet` for measurement-statistics
    targets and a :class:`StateTrainingSet` for full-state targets.
    """

    kind: str
    payload: Union[PovmTrainingSet, StateTrainingSet]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        want_povm = self.kind == "povm_pure"
        is_povm = isinstance(self.payload, PovmTrainingSet)
        if want_povm != is_povm:
            raise TypeError(f"payload type does not match kind {self.kind!r}")


def split_seeds(seed: int, n: int) -> list:
    """Derive ``n`` independent child seed sequences from one root seed.

    Child ``i`` depends only on ``(seed, i)``, never on how many siblings
    exist or in which order they are consumed, so ensemble instances can be
    dispatched to worker processes in any order.
    """
    return [np.random.SeedSequence(seed, spawn_key=(i,)) for i in range(n)]


def step_distribution(n_visible: int, noise_p: float = 0.1) -> np.ndarray:
    """Noisy step-function distribution over n-bit strings.

    Uniform mixture of the ``n+1`` step vectors ``1^k 0^(n-k)``, each sent
    through an independent per-bit flip channel with flip probability
    ``noise_p``.  The channel is applied analytically, so the result is a
    deterministic function of ``(n_visible, noise_p)``.
    """
    if not 0 <= noise_p < 0.5:
        raise ValueError("noise_p must lie in [0, 0.5)")
    n = int(n_visible)
    dim = 2**n
    # Bit j of basis index x, qubit 0 leftmost.
    bits = (np.arange(dim)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    q = np.zeros(dim)
    for k in range(n + 1):
        step = np.concatenate([np.ones(k), np.zeros(n - k)])
        flips = bits != step[None, :]
        q += np.prod(np.where(flips, noise_p, 1.0 - noise_p), axis=1)
    q /= n + 1
    return q


def step_function_state(
    n_visible: int,
    noise_p: float = 0.1,
    rng: Optional[np.random.Generator] = None,
):
    """Step-function target as a pure state, a POVM set, and a state set.

    Encodes the classical distribution ``q`` from :func:`step_distribution`
    as the real nonnegative amplitude vector ``|psi> = sum_x sqrt(q_x)|x>``.
    The POVM is the two-outcome projector pair ``{|psi><psi|, 1 - |psi><psi|}``
    with target statistics ``(1, 0)``: maximizing the likelihood pulls the
    Gibbs state onto the target state.

    ``rng`` is accepted for interface symmetry with the other generators and
    ignored: the construction is fully analytic.

    Returns
    -------
    (amplitudes, PovmTrainingSet, StateTrainingSet)
    """
    del rng
    q = step_distribution(n_visible, noise_p)
    psi = np.sqrt(q).astype(complex)
    projector = np.outer(psi, psi.conj())
    dim = psi.size
    povm = PovmTrainingSet(
        elements=(projector, np.eye(dim) - projector),
        probabilities=np.array([1.0, 0.0]),
    )
    states = StateTrainingSet(rho=projector.copy())
    return psi, povm, states


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed random unitary via QR with phase-fixed diagonal."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    # Without this correction QR output is not Haar: numpy fixes the sign
    # convention of R's diagonal, biasing Q.
    return q * (d / np.abs(d))


def haar_random_pure(n: int, rng: np.random.Generator) -> StateTrainingSet:
    """Haar-random pure state on ``n`` qubits as a rank-1 density matrix."""
    dim = 2 ** int(n)
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    amps /= np.linalg.norm(amps)
    return StateTrainingSet(rho=np.outer(amps, amps.conj()))


def random_mixed(n: int, rng: np.random.Generator) -> StateTrainingSet:
    """Random full-rank mixed state on ``n`` qubits.

    Eigenvectors are the columns of a Haar-random unitary (drawn first);
    eigenvalues are ``2^n`` i.i.d. Uniform(0,1) weights normalized to sum
    one (drawn second).  Full rank with probability 1.
    """
    dim = 2 ** int(n)
    u = haar_unitary(dim, rng)
    w = rng.uniform(size=dim)
    w /= w.sum()
    rho = (u * w) @ u.conj().T
    validate_density_matrix(rho)
    return StateTrainingSet(rho=rho)


def random_ti_teacher(
    n: int,
    normalize: bool,
    rng: np.random.Generator,
):
    """Random transverse-field Ising teacher and its Gibbs-state target.

    Teacher parameters are i.i.d. standard Gaussians over the complete-graph
    transverse-field Ising terms; with ``normalize`` they are rescaled so the
    assembled Hamiltonian has unit spectral norm.

    Returns
    -------
    (HamiltonianModel, theta_true, StateTrainingSet)
    """
    model = build_transverse_ising_complete(int(n))
    theta = rng.standard_normal(model.n_terms)
    if normalize:
        theta = theta / np.linalg.norm(assemble_hamiltonian(model, theta), 2)
    rho, _ = gibbs_state(assemble_hamiltonian(model, theta))
    return model, theta, StateTrainingSet(rho=rho)
