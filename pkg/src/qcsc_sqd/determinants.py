"""Determinants as pairs of spin-sector occupation strings.

A full configuration string of width ``2 * n_orb`` keeps the alpha sector in
bits ``[0, n_orb)`` and the beta sector in bits ``[n_orb, 2 * n_orb)``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Iterable, List, NamedTuple, Tuple

import numpy as np

from qcsc_telemetry import BitstringSet

from .errors import SubspaceError


class Determinant(NamedTuple):
    alpha: int
    beta: int


def popcount(value: int) -> int:
    return int(value).bit_count()


@lru_cache(maxsize=None)
def _sector(n_orb: int, n_elec: int) -> Tuple[int, ...]:
    strings = (
        sum(1 << p for p in occupied) for occupied in itertools.combinations(range(n_orb), n_elec)
    )
    return tuple(sorted(strings))


def sector_strings(n_orb: int, n_elec: int) -> List[int]:
    """All width-``n_orb`` strings with ``n_elec`` ones, ascending."""

    if n_elec < 0 or n_elec > n_orb:
        raise SubspaceError(f"no strings with {n_elec} electrons in {n_orb} orbitals")
    return list(_sector(n_orb, n_elec))


def full_sector_basis(n_orb: int, n_alpha: int, n_beta: int) -> List[Determinant]:
    return [
        Determinant(alpha, beta)
        for alpha in sector_strings(n_orb, n_alpha)
        for beta in sector_strings(n_orb, n_beta)
    ]


def join(det: Determinant, n_orb: int) -> int:
    return det.alpha | (det.beta << n_orb)


def split(full: int, n_orb: int) -> Determinant:
    mask = (1 << n_orb) - 1
    return Determinant(full & mask, (full >> n_orb) & mask)


def split_spin_sectors(chi: BitstringSet) -> Tuple[BitstringSet, BitstringSet]:
    """Unique alpha and beta sector strings of a set of full strings."""

    if chi.num_bits % 2:
        raise SubspaceError(f"full strings must have even width, got {chi.num_bits}")
    n_orb = chi.num_bits // 2
    alphas = set()
    betas = set()
    for row in chi.rows:
        det = split(row, n_orb)
        alphas.add(det.alpha)
        betas.add(det.beta)
    return (
        BitstringSet(n_orb, tuple(sorted(alphas))),
        BitstringSet(n_orb, tuple(sorted(betas))),
    )


def occupations(det: Determinant, n_orb: int) -> np.ndarray:
    """Spatial-orbital occupation numbers (0, 1 or 2)."""

    bits = np.arange(n_orb)
    return ((det.alpha >> bits) & 1) + ((det.beta >> bits) & 1)


def validate_basis(basis: Iterable[Determinant], n_orb: int, n_alpha: int, n_beta: int) -> List[Determinant]:
    checked = []
    limit = 1 << n_orb
    for det in basis:
        det = Determinant(int(det[0]), int(det[1]))
        if not (0 <= det.alpha < limit and 0 <= det.beta < limit):
            raise SubspaceError(f"determinant {det} does not fit in {n_orb} orbitals")
        if popcount(det.alpha) != n_alpha or popcount(det.beta) != n_beta:
            raise SubspaceError(
                f"determinant {det} has the wrong electron count for {n_alpha} alpha / {n_beta} beta"
            )
        checked.append(det)
    return checked
