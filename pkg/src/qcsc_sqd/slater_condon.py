"""Projected Hamiltonian matrix elements between determinants.

Matrix elements are evaluated in spin-orbital form. Spin orbital ``k`` is
spatial orbital ``k % n_orb`` with spin ``k // n_orb`` (alpha first), which is
also the Jordan-Wigner ordering used for fermionic signs.
"""

from __future__ import annotations

import logging
from typing import Callable, List, Sequence

import numpy as np
import scipy.sparse as sp

from .determinants import Determinant, join, popcount, validate_basis
from .hamiltonian import HamiltonianSpec

LOG = logging.getLogger(__name__)

Phase = Callable[[int, int], int]


def jordan_wigner_phase(state: int, orbital: int) -> int:
    """Sign picked up by acting with ``a_k`` or ``a_k^+`` on ``state``."""

    return -1 if popcount(state & ((1 << orbital) - 1)) & 1 else 1


def _occupied(state: int) -> List[int]:
    out = []
    k = 0
    while state:
        if state & 1:
            out.append(k)
        state >>= 1
        k += 1
    return out


class _Integrals:
    def __init__(self, spec: HamiltonianSpec) -> None:
        self.n = spec.n_orb
        self.h = spec.h
        self.g = spec.g
        self.core = spec.core_energy

    def one(self, p: int, q: int) -> float:
        n = self.n
        if p // n != q // n:
            return 0.0
        return self.h[p % n, q % n]

    def two(self, p: int, q: int, r: int, s: int) -> float:
        """Physicist ``<pq|rs>`` over spin orbitals."""

        n = self.n
        if p // n != r // n or q // n != s // n:
            return 0.0
        return self.g[p % n, r % n, q % n, s % n]

    def anti(self, p: int, q: int, r: int, s: int) -> float:
        return self.two(p, q, r, s) - self.two(p, q, s, r)


def _diagonal(ints: _Integrals, occ: Sequence[int]) -> float:
    value = ints.core
    for i in occ:
        value += ints.one(i, i)
    two = 0.0
    for i in occ:
        for j in occ:
            two += ints.anti(i, j, i, j)
    return value + 0.5 * two


def _single(ints: _Integrals, ket: int, occ: Sequence[int], i: int, a: int, phase: Phase) -> float:
    sign = phase(ket, i)
    sign *= phase(ket ^ (1 << i), a)
    value = ints.one(a, i)
    for j in occ:
        value += ints.anti(a, j, i, j)
    return sign * value


def _double(ints: _Integrals, ket: int, i: int, j: int, a: int, b: int, phase: Phase) -> float:
    # <bra| = ket after a_i, a_j, a_b^+, a_a^+ applied in that order
    state = ket
    sign = phase(state, i)
    state ^= 1 << i
    sign *= phase(state, j)
    state ^= 1 << j
    sign *= phase(state, b)
    state ^= 1 << b
    sign *= phase(state, a)
    return sign * ints.anti(a, b, i, j)


def matrix_element(
    bra: int, ket: int, ints: _Integrals, phase: Phase = jordan_wigner_phase
) -> float:
    diff = bra ^ ket
    rank = popcount(diff)
    if rank == 0:
        return _diagonal(ints, _occupied(ket))
    if rank == 2:
        (i,) = _occupied(ket & diff)
        (a,) = _occupied(bra & diff)
        return _single(ints, ket, _occupied(ket), i, a, phase)
    if rank == 4:
        i, j = _occupied(ket & diff)
        a, b = _occupied(bra & diff)
        return _double(ints, ket, i, j, a, b, phase)
    return 0.0


def build_subspace_hamiltonian(
    basis: Sequence[Determinant],
    spec: HamiltonianSpec,
    *,
    phase: Phase = jordan_wigner_phase,
) -> sp.csr_matrix:
    """``H[a, b] = <x_a|H|x_b>`` over ``basis``, core energy included.

    Only the upper triangle is evaluated; the lower one is its mirror image,
    so the result is exactly symmetric.
    """

    basis = validate_basis(basis, spec.n_orb, spec.n_alpha, spec.n_beta)
    ints = _Integrals(spec)
    states = [join(det, spec.n_orb) for det in basis]
    size = len(states)
    rows: List[int] = []
    cols: List[int] = []
    values: List[float] = []
    for a in range(size):
        bra = states[a]
        for b in range(a, size):
            ket = states[b]
            if popcount(bra ^ ket) > 4:
                continue
            value = matrix_element(bra, ket, ints, phase)
            if value == 0.0:
                continue
            rows.append(a)
            cols.append(b)
            values.append(value)
            if a != b:
                rows.append(b)
                cols.append(a)
                values.append(value)
    matrix = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), (rows, cols)), shape=(size, size)
    )
    LOG.debug("subspace hamiltonian: dimension=%d nnz=%d", size, matrix.nnz)
    return matrix


def determinant_energy(det: Determinant, spec: HamiltonianSpec) -> float:
    ints = _Integrals(spec)
    return _diagonal(ints, _occupied(join(det, spec.n_orb)))
