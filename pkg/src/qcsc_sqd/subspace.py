"""Subspace construction and diagonalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from qcsc_telemetry import BitstringSet

from .davidson import ground_state
from .determinants import Determinant
from .errors import SubspaceError
from .hamiltonian import HamiltonianSpec
from .slater_condon import build_subspace_hamiltonian

LOG = logging.getLogger(__name__)

NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SubspaceResult:
    energy: float
    amplitudes: np.ndarray
    basis: Sequence[Determinant]

    def __post_init__(self) -> None:
        amplitudes = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        if amplitudes.size != len(self.basis):
            raise SubspaceError("amplitude vector and basis differ in length")
        if abs(np.linalg.norm(amplitudes) - 1.0) > NORM_TOL:
            raise SubspaceError("ground-state amplitudes are not normalized")
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "basis", tuple(self.basis))

    @property
    def dimension(self) -> int:
        return len(self.basis)


def carryover_determinants(carryover: BitstringSet | None) -> List[Determinant]:
    """Closed-shell determinants spanned by the carryover strings."""

    if carryover is None or not len(carryover):
        return []
    strings = sorted(set(carryover.rows))
    return [Determinant(alpha, beta) for alpha in strings for beta in strings]


def _pair_order(n_alpha: int, n_beta: int):
    """Index pairs grown square by square, so any prefix is balanced."""

    for k in range(max(n_alpha, n_beta)):
        for j in range(min(k, n_beta)):
            if k < n_alpha:
                yield k, j
        for j in range(min(k + 1, n_alpha)):
            if k < n_beta:
                yield j, k


def build_subspace(
    alpha_strings: BitstringSet,
    beta_strings: BitstringSet,
    carryover: BitstringSet | None,
    d_max: int,
    rng: np.random.Generator,
) -> List[Determinant]:
    """Carryover determinants first, then subsampled alpha x beta pairs up to ``d_max``.

    Both sector orders are drawn up front from ``rng``, so for one seed a
    smaller ``d_max`` always yields a prefix of the larger basis.
    """

    seeded = carryover_determinants(carryover)
    if d_max < len(seeded):
        raise SubspaceError(
            f"d_max={d_max} is smaller than the {len(seeded)} carryover determinants"
        )
    alphas = sorted(set(alpha_strings.rows))
    betas = sorted(set(beta_strings.rows))
    alpha_order = [alphas[k] for k in rng.permutation(len(alphas))]
    beta_order = [betas[k] for k in rng.permutation(len(betas))]

    basis = list(seeded)
    seen = set(basis)
    if alpha_order and beta_order:
        for a, b in _pair_order(len(alpha_order), len(beta_order)):
            if len(basis) >= d_max:
                break
            det = Determinant(alpha_order[a], beta_order[b])
            if det not in seen:
                seen.add(det)
                basis.append(det)
    if not basis:
        raise SubspaceError("no determinant can be formed from the recovered strings")
    return basis


def solve_subspace(
    basis: Sequence[Determinant],
    spec: HamiltonianSpec,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> SubspaceResult:
    matrix = build_subspace_hamiltonian(basis, spec)
    energy, amplitudes = ground_state(matrix, tol=tol, max_iter=max_iter)
    LOG.debug("subspace of dimension %d: E=%.12f", len(basis), energy)
    return SubspaceResult(energy=energy, amplitudes=amplitudes, basis=basis)
