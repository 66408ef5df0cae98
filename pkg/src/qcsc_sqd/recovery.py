"""Configuration recovery: repair noisy strings to the right particle number."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from qcsc_telemetry import BitstringSet

from .determinants import popcount


def rhf_prior(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Spin-orbital occupation prior of the RHF reference, alpha block first."""

    prior = np.zeros(2 * n_orb)
    prior[:n_alpha] = 1.0
    prior[n_orb : n_orb + n_beta] = 1.0
    return prior


def prior_from_occupancy(avg_occupancy: Sequence[float]) -> np.ndarray:
    """Spatial occupancies in [0, 2] to a per-spin-orbital prior in [0, 1]."""

    half = np.clip(np.asarray(avg_occupancy, dtype=np.float64) / 2.0, 0.0, 1.0)
    return np.concatenate([half, half])


def recover_sector(string: int, n_elec: int, prior: Sequence[float]) -> int:
    """Flip bits of one sector string until it holds ``n_elec`` electrons.

    Excess electrons leave the occupied orbitals with the lowest prior, missing
    ones go to the empty orbitals with the highest prior; ties go to the lowest
    orbital index.
    """

    width = len(prior)
    count = popcount(string)
    if count == n_elec:
        return string
    occupied = [p for p in range(width) if string >> p & 1]
    if count > n_elec:
        for p in sorted(occupied, key=lambda p: (prior[p], p))[: count - n_elec]:
            string &= ~(1 << p)
    else:
        empty = [p for p in range(width) if not string >> p & 1]
        for p in sorted(empty, key=lambda p: (-prior[p], p))[: n_elec - count]:
            string |= 1 << p
    return string


def recover_configurations(
    raw: BitstringSet,
    n_alpha: int,
    n_beta: int,
    occupancy_prior: Sequence[float],
) -> BitstringSet:
    """Recover every raw full string; multiplicities of merged strings add up."""

    if raw.num_bits % 2:
        raise ValueError("full strings must have even width")
    n_orb = raw.num_bits // 2
    prior = np.asarray(occupancy_prior, dtype=np.float64)
    if prior.shape != (2 * n_orb,):
        raise ValueError(f"occupancy prior must have {2 * n_orb} entries")
    if np.any(prior < 0) or np.any(prior > 1):
        raise ValueError("occupancy prior entries must lie in [0, 1]")
    alpha_prior = prior[:n_orb].tolist()
    beta_prior = prior[n_orb:].tolist()
    mask = (1 << n_orb) - 1

    merged: Counter = Counter()
    for row, count in zip(raw.rows, raw.multiplicities()):
        alpha = recover_sector(row & mask, n_alpha, alpha_prior)
        beta = recover_sector(row >> n_orb, n_beta, beta_prior)
        merged[alpha | (beta << n_orb)] += count
    rows = tuple(sorted(merged))
    counts = tuple(merged[row] for row in rows)
    if raw.counts is None and all(count == 1 for count in counts):
        return BitstringSet(raw.num_bits, rows)
    return BitstringSet(raw.num_bits, rows, counts)
