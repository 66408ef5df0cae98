"""Lowest eigenpair of a real symmetric matrix."""

from __future__ import annotations

import logging
from typing import Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DavidsonConvergenceError

LOG = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]

DENSE_LIMIT = 256
MAX_SUBSPACE = 20
_PRECOND_FLOOR = 1e-12


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(vector) > 1e-12)
    if nonzero.size and vector[nonzero[0]] < 0:
        return -vector
    return vector


def _dense(matrix: Matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)


def dense_ground_state(matrix: Matrix) -> Tuple[float, np.ndarray]:
    dense = _dense(matrix)
    energies, vectors = scipy.linalg.eigh(dense, subset_by_index=[0, 0])
    vector = vectors[:, 0]
    return float(energies[0]), _fix_sign(vector / np.linalg.norm(vector))


def ground_state(
    matrix: Matrix,
    tol: float = 1e-8,
    max_iter: int = 200,
    *,
    dense_limit: int = DENSE_LIMIT,
    max_subspace: int = MAX_SUBSPACE,
) -> Tuple[float, np.ndarray]:
    """Return ``(E, c)`` with ``||Hc - Ec|| <= tol``.

    Matrices up to ``dense_limit`` are diagonalized directly. Larger ones use
    Davidson iteration with a diagonal preconditioner, collapsing the search
    space onto the current Ritz vector once it exceeds ``max_subspace``.
    """

    size = matrix.shape[0]
    if size == 0 or matrix.shape != (size, size):
        raise ValueError(f"expected a non-empty square matrix, got shape {matrix.shape}")
    if size == 1:
        return float(_dense(matrix)[0, 0]), np.ones(1)
    if size <= dense_limit:
        return dense_ground_state(matrix)

    operator = matrix.tocsr() if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
    diagonal = np.asarray(operator.diagonal(), dtype=np.float64)

    guess = np.zeros(size)
    guess[int(np.argmin(diagonal))] = 1.0
    basis = guess[:, None]
    projected = (operator @ guess)[:, None]

    best_residual = np.inf
    best_energy = float(diagonal.min())
    for iteration in range(1, max_iter + 1):
        reduced = basis.T @ projected
        reduced = (reduced + reduced.T) / 2
        ritz_values, ritz_vectors = scipy.linalg.eigh(reduced)
        theta = float(ritz_values[0])
        coeffs = ritz_vectors[:, 0]
        ritz = basis @ coeffs
        applied = projected @ coeffs
        residual = applied - theta * ritz
        norm = float(np.linalg.norm(residual))
        if norm < best_residual:
            best_residual, best_energy = norm, theta
        LOG.debug("davidson iteration %d: E=%.12f residual=%.3e dim=%d", iteration, theta, norm, basis.shape[1])
        if norm <= tol:
            ritz /= np.linalg.norm(ritz)
            return theta, _fix_sign(ritz)

        if basis.shape[1] >= max_subspace:
            scale = np.linalg.norm(ritz)
            basis = (ritz / scale)[:, None]
            projected = (applied / scale)[:, None]

        denom = theta - diagonal
        denom = np.where(np.abs(denom) < _PRECOND_FLOOR, np.copysign(_PRECOND_FLOOR, denom), denom)
        correction = residual / denom
        for _ in range(2):
            correction -= basis @ (basis.T @ correction)
        length = np.linalg.norm(correction)
        if length < 1e-14:
            correction = residual - basis @ (basis.T @ residual)
            length = np.linalg.norm(correction)
            if length < 1e-14:
                break
        correction /= length
        basis = np.hstack([basis, correction[:, None]])
        projected = np.hstack([projected, (operator @ correction)[:, None]])

    raise DavidsonConvergenceError(best_residual, best_energy, max_iter)
