"""Hamiltonian term families for quantum Boltzmann machines.

Models are ordered lists of Hermitian terms H_j with trainable weights
kept outside the model object: H(theta) = sum_j theta_j H_j. Qubit 0 is
the leftmost tensor factor; visible units come before hidden units.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import kron

__all__ = [
    "PAULI",
    "Term",
    "HamiltonianModel",
    "pauli_matrix",
    "complete_graph_edges",
    "build_classical_bm",
    "build_transverse_ising_complete",
    "build_complete_pauli_set",
    "build_mean_field",
    "build_fermionic_model",
    "build_model",
    "jordan_wigner_annihilator",
    "assemble_hamiltonian",
    "model_descriptor",
    "save_model",
    "load_model",
]

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

# Off-diagonal magnitude above which a term couples computational basis
# states and counts as quantum (subject to L2 regularization).
QUANTUM_OFFDIAG_TOL = 1e-12


def pauli_matrix(letters: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as "IXZ" (qubit 0 leftmost)."""
    if not letters:
        raise ValueError("empty Pauli string")
    out = None
    for ch in letters:
        if ch not in PAULI:
            raise ValueError(f"unknown Pauli letter {ch!r} in {letters!r}")
        out = PAULI[ch].copy() if out is None else np.kron(out, PAULI[ch])
    return out


def _offdiagonal_max(matrix: np.ndarray) -> float:
    off = matrix - np.diag(np.diag(matrix))
    return float(np.abs(off).max()) if off.size else 0.0


@dataclass(frozen=True)
class Term:
    """One Hermitian summand of a model Hamiltonian."""

    label: str
    matrix: np.ndarray
    is_quantum: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"term {self.label!r} matrix must be square")
        if np.abs(m - m.conj().T).max() > 1e-12:
            raise ValueError(f"term {self.label!r} is not Hermitian within 1e-12")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def make_term(label: str, matrix: np.ndarray) -> Term:
    """Build a Term, flagging it quantum iff any off-diagonal entry exceeds 1e-12."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    return Term(label, matrix, _offdiagonal_max(matrix) > QUANTUM_OFFDIAG_TOL)


@dataclass(frozen=True)
class HamiltonianModel:
    """Immutable parameterized Hamiltonian family.

    The weight vector theta lives outside the model (one real entry per
    term, passed to every operation that needs it), so instances can be
    shared freely across ensemble workers.
    """

    family: str
    n_visible: int
    n_hidden: int
    terms: tuple[Term, ...]
    edges: tuple[tuple[int, int], ...] | None = field(default=None)

    @property
    def n_qubits(self) -> int:
        return self.n_visible + self.n_hidden

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.terms)

    @cached_property
    def quantum_mask(self) -> np.ndarray:
        mask = np.array([t.is_quantum for t in self.terms], dtype=bool)
        mask.flags.writeable = False
        return mask

    @cached_property
    def matrix_stack(self) -> np.ndarray:
        """All term matrices as one (n_terms, dim, dim) array."""
        stack = np.stack([t.matrix for t in self.terms])
        stack.flags.writeable = False
        return stack


def _check_sizes(n_visible: int, n_hidden: int, cap: int, family: str) -> int:
    if n_visible < 1:
        raise ValueError(f"{family}: n_visible must be >= 1, got {n_visible}")
    if n_hidden < 0:
        raise ValueError(f"{family}: n_hidden must be >= 0, got {n_hidden}")
    n = n_visible + n_hidden
    if n > cap:
        raise ValueError(f"{family}: {n} qubits exceeds the dense-matrix cap of {cap}")
    return n


def _single_site(op: str, site: int, n: int) -> np.ndarray:
    return pauli_matrix("".join(op if k == site else "I" for k in range(n)))


def _number_operator(site: int, n: int) -> np.ndarray:
    # (I - Z_site)/2: occupation of the computational-basis excited state
    return (pauli_matrix("I" * n) - _single_site("Z", site, n)) / 2.0


def build_classical_bm(
    n_visible: int, n_hidden: int = 0, edges=()
) -> HamiltonianModel:
    """Classical Boltzmann machine: bias terms n_j plus coupling terms n_i n_j.

    All terms are diagonal. Edges connect distinct vertices (visible
    units first, hidden after); duplicates are rejected.
    """
    n = _check_sizes(n_visible, n_hidden, 12, "classical_bm")
    canon = []
    seen = set()
    for e in edges:
        if len(e) != 2:
            raise ValueError(f"edge {e!r} must have two endpoints")
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise ValueError(f"edge ({i},{j}) is a self-loop")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range for {n} vertices")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)
    terms = [make_term(f"n{j}", _number_operator(j, n)) for j in range(n)]
    for i, j in canon:
        terms.append(make_term(f"n{i}n{j}", _number_operator(i, n) @ _number_operator(j, n)))
    return HamiltonianModel("classical_bm", n_visible, n_hidden, tuple(terms), tuple(canon))


def complete_graph_edges(n: int) -> tuple[tuple[int, int], ...]:
    return tuple(itertools.combinations(range(n), 2))


def build_transverse_ising_complete(n: int) -> HamiltonianModel:
    """Transverse-field Ising family on the complete graph.

    Terms in order: Z on every qubit, X on every qubit, then ZZ on every
    pair lexicographically. n(n+3)/2 terms total, all visible.
    """
    _check_sizes(n, 0, 12, "ti_complete")
    terms = [make_term(f"Z{j}", _single_site("Z", j, n)) for j in range(n)]
    terms += [make_term(f"X{j}", _single_site("X", j, n)) for j in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        zz = _single_site("Z", i, n) @ _single_site("Z", j, n)
        terms.append(make_term(f"Z{i}Z{j}", zz))
    return HamiltonianModel("ti_complete", n, 0, tuple(terms))


def build_complete_pauli_set(n: int) -> HamiltonianModel:
    """All 4^n - 1 non-identity Pauli strings, lexicographically ordered."""
    _check_sizes(n, 0, 6, "pauli_complete")
    terms = []
    for letters in itertools.product("IXYZ", repeat=n):
        word = "".join(letters)
        if set(word) == {"I"}:
            continue
        terms.append(make_term(word, pauli_matrix(word)))
    return HamiltonianModel("pauli_complete", n, 0, tuple(terms))


def build_mean_field(n: int) -> HamiltonianModel:
    """Product-form family: X, Y and Z on each qubit separately (3n terms).

    Gibbs states factorize across qubits, so this is the natural
    uncorrelated approximation to any multi-qubit target.
    """
    _check_sizes(n, 0, 12, "mean_field")
    terms = []
    for j in range(n):
        for op in "XYZ":
            terms.append(make_term(f"{op}{j}", _single_site(op, j, n)))
    return HamiltonianModel("mean_field", n, 0, tuple(terms))


def jordan_wigner_annihilator(p: int, n: int) -> np.ndarray:
    """Fermionic annihilator a_p on n modes under the Jordan-Wigner encoding.

    a_p = Z^{(x)p} (x) (X + iY)/2 (x) I^{(x)(n-p-1)}, so a_p|1>_p = |0>_p
    with the parity string on the lower-indexed modes.
    """
    if not 0 <= p < n:
        raise ValueError(f"mode index {p} out of range for {n} modes")
    lower = (PAULI["X"] + 1j * PAULI["Y"]) / 2.0
    out = np.ones((1, 1), dtype=np.complex128)
    for k in range(n):
        if k < p:
            out = kron(out, PAULI["Z"])
        elif k == p:
            out = kron(out, lower)
        else:
            out = kron(out, PAULI["I"])
    return out


def build_fermionic_model(n_visible: int, n_hidden: int = 0) -> HamiltonianModel:
    """Fermionic QBM with one-mode, hopping and two-body interaction terms.

    Modes map to qubits by Jordan-Wigner (visible modes first). Terms:
      (i)   a_p + a_p^        for every mode p,
      (ii)  a_p^ a_q + a_q^ a_p   for p <= q; the diagonal p = q case is
            the number operator n_p,
      (iii) a_p^ a_q^ a_s a_r + h.c.  for p < q, r < s, (p,q) <= (r,s);
            the diagonal (p,q) = (r,s) case is n_p n_q.
    Zeroing every off-diagonal weight leaves exactly the classical
    Boltzmann machine on the complete graph.
    """
    n = _check_sizes(n_visible, n_hidden, 8, "fermionic")
    if n < 2:
        raise ValueError("fermionic model needs at least 2 modes")
    a = [jordan_wigner_annihilator(p, n) for p in range(n)]
    ad = [op.conj().T for op in a]
    terms = []
    for p in range(n):
        terms.append(make_term(f"a{p}+a{p}^", a[p] + ad[p]))
    for p in range(n):
        for q in range(p, n):
            if p == q:
                terms.append(make_term(f"n{p}", ad[p] @ a[p]))
            else:
                terms.append(make_term(f"hop({p},{q})", ad[p] @ a[q] + ad[q] @ a[p]))
    pairs = list(itertools.combinations(range(n), 2))
    for ip, (p, q) in enumerate(pairs):
        for r, s in pairs[ip:]:
            if (p, q) == (r, s):
                terms.append(make_term(f"n{p}n{q}", ad[p] @ a[p] @ ad[q] @ a[q]))
            else:
                body = ad[p] @ ad[q] @ a[s] @ a[r]
                terms.append(
                    make_term(f"int({p},{q};{r},{s})", body + body.conj().T)
                )
    return HamiltonianModel("fermionic", n_visible, n_hidden, tuple(terms))


def build_model(
    family: str,
    n_visible: int,
    n_hidden: int = 0,
    edges=None,
) -> HamiltonianModel:
    """Construct a model family by name (used by serialization and the CLI)."""
    if family == "classical_bm":
        if edges is None:
            edges = complete_graph_edges(n_visible + n_hidden)
        return build_classical_bm(n_visible, n_hidden, edges)
    if family == "fermionic":
        return build_fermionic_model(n_visible, n_hidden)
    if n_hidden:
        raise ValueError(f"family {family!r} has no hidden-unit variant")
    if family == "ti_complete":
        return build_transverse_ising_complete(n_visible)
    if family == "pauli_complete":
        return build_complete_pauli_set(n_visible)
    if family == "mean_field":
        return build_mean_field(n_visible)
    raise ValueError(f"unknown model family {family!r}")


def assemble_hamiltonian(model: HamiltonianModel, theta) -> np.ndarray:
    """H(theta) = sum_j theta_j H_j."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_terms,):
        raise ValueError(
            f"theta has shape {theta.shape}, model needs ({model.n_terms},)"
        )
    return np.tensordot(theta, model.matrix_stack, axes=1)


def model_descriptor(model: HamiltonianModel, theta=None) -> dict:
    """JSON-ready description: family, sizes, edges and the weight vector."""
    if theta is None:
        theta = np.zeros(model.n_terms)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_terms,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.n_terms},)")
    return {
        "family": model.family,
        "n_visible": model.n_visible,
        "n_hidden": model.n_hidden,
        "edges": None if model.edges is None else [list(e) for e in model.edges],
        "labels": list(model.labels),
        "theta": [float(x) for x in theta],
    }


def save_model(path, model: HamiltonianModel, theta=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_descriptor(model, theta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[HamiltonianModel, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        desc = json.load(fh)
    edges = desc.get("edges")
    model = build_model(
        desc["family"],
        int(desc["n_visible"]),
        int(desc["n_hidden"]),
        None if edges is None else [tuple(e) for e in edges],
    )
    theta = np.asarray(desc["theta"], dtype=np.float64)
    if list(model.labels) != list(desc["labels"]):
        raise ValueError("descriptor labels do not match the rebuilt model")
    return model, theta
