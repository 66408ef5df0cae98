"""Brute-force references for the subspace machinery.

These are slow on purpose: the Fock-space Hamiltonian is assembled from
explicit creation and annihilation matrices built with Kronecker products,
sharing nothing with the Slater-Condon evaluation it is used to check.
"""

from __future__ import annotations

from functools import reduce
from typing import List, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .determinants import Determinant, full_sector_basis, join
from .hamiltonian import HamiltonianSpec
from .slater_condon import build_subspace_hamiltonian

MAX_ORACLE_ORBITALS = 4

_IDENTITY = sp.identity(2, format="csr")
_PARITY = sp.csr_matrix(np.diag([1.0, -1.0]))
_LOWER = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))


def annihilation_operators(n_modes: int) -> List[sp.csr_matrix]:
    """``a_k`` on the ``2**n_modes`` occupation basis; state index bit ``k`` = mode ``k``."""

    operators = []
    for k in range(n_modes):
        # the leftmost Kronecker factor is the most significant bit
        factors = [
            _IDENTITY if m > k else (_LOWER if m == k else _PARITY)
            for m in range(n_modes - 1, -1, -1)
        ]
        operators.append(reduce(lambda left, right: sp.kron(left, right, format="csr"), factors))
    return operators


def fock_space_hamiltonian(spec: HamiltonianSpec) -> sp.csr_matrix:
    n = spec.n_orb
    if n > MAX_ORACLE_ORBITALS:
        raise ValueError(f"the Fock-space oracle is limited to {MAX_ORACLE_ORBITALS} orbitals")
    modes = 2 * n
    lower = annihilation_operators(modes)
    upper = [op.T.tocsr() for op in lower]
    dim = 2**modes
    hamiltonian = spec.core_energy * sp.identity(dim, format="csr")

    def spatial(k: int) -> int:
        return k % n

    def spin(k: int) -> int:
        return k // n

    for p in range(modes):
        for q in range(modes):
            if spin(p) == spin(q):
                value = spec.h[spatial(p), spatial(q)]
                if value:
                    hamiltonian = hamiltonian + value * (upper[p] @ lower[q])
    for p in range(modes):
        for q in range(modes):
            for r in range(modes):
                if spin(p) != spin(r):
                    continue
                for s in range(modes):
                    if spin(q) != spin(s):
                        continue
                    # <pq|rs> = (pr|qs)
                    value = spec.g[spatial(p), spatial(r), spatial(q), spatial(s)]
                    if value:
                        term = upper[p] @ upper[q] @ lower[s] @ lower[r]
                        hamiltonian = hamiltonian + 0.5 * value * term
    return hamiltonian.tocsr()


def oracle_subspace_matrix(basis: Sequence[Determinant], spec: HamiltonianSpec) -> np.ndarray:
    """Rows and columns of the Fock-space Hamiltonian picked out by ``basis``."""

    full = fock_space_hamiltonian(spec)
    index = [join(det, spec.n_orb) for det in basis]
    return full[index, :][:, index].toarray()


def full_sector_matrix(spec: HamiltonianSpec) -> np.ndarray:
    basis = full_sector_basis(spec.n_orb, spec.n_alpha, spec.n_beta)
    return build_subspace_hamiltonian(basis, spec).toarray()


def exact_ground_energy(spec: HamiltonianSpec) -> float:
    """Lowest eigenvalue over the whole particle-number sector."""

    matrix = full_sector_matrix(spec)
    return float(scipy.linalg.eigh(matrix, eigvals_only=True, subset_by_index=[0, 0])[0])


def dense_ground_energy(matrix: np.ndarray) -> float:
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    return float(np.linalg.eigvalsh(dense)[0])
