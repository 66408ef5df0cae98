"""Carryover selection from a subspace ground state."""

from __future__ import annotations

from typing import List

import numpy as np

from qcsc_telemetry import BitstringSet

from .subspace import SubspaceResult


def select_carryover(
    result: SubspaceResult, k_max: int = 256, amp_floor: float = 1e-6, *, n_orb: int
) -> BitstringSet:
    """Alpha strings of the heaviest determinants, at most ``k_max`` of them.

    Determinants below ``amp_floor`` in ``|c|^2`` are ignored. Equal weights
    rank by alpha string, then beta string, ascending.
    """

    weights = np.square(result.amplitudes)
    ranked = sorted(
        (
            (-float(weight), det.alpha, det.beta)
            for weight, det in zip(weights, result.basis)
            if weight >= amp_floor
        )
    )
    chosen: List[int] = []
    seen = set()
    for _, alpha, _ in ranked:
        if len(chosen) >= k_max:
            break
        if alpha not in seen:
            seen.add(alpha)
            chosen.append(alpha)
    return BitstringSet(n_orb, tuple(sorted(chosen)))
