"""Synthetic parameterized sampler standing in for the quantum primitive.

Each spin sector string ``x`` is drawn from

    p(x | θ) ∝ exp(θ·φ(x) - β E(x))

over the strings with the right electron count, where ``φ(x)`` holds the
orbital occupations followed by adjacent-pair products (truncated or
zero-padded to ``len(θ)``) and ``E(x)`` is the sum of the occupied orbital
energies. Hardware noise is modelled by independent bit flips and
post-selection by keeping each shot with the retention probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from qcsc_telemetry import BitstringSet

from .determinants import sector_strings
from .errors import SubspaceError

LOG = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class SamplerModel:
    beta: float = 1.0
    bitflip: float = 0.01
    retention: float = 0.469
    shots: int = 10_000
    n_params: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.bitflip <= 1.0:
            raise ValueError("bitflip probability must lie in [0, 1]")
        if not 0.0 <= self.retention <= 1.0:
            raise ValueError("retention probability must lie in [0, 1]")
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if self.n_params is not None and self.n_params < 1:
            raise ValueError("n_params must be positive")

    def dimension(self, n_orb: int) -> int:
        return self.n_params if self.n_params is not None else 2 * n_orb - 1


@dataclass(frozen=True)
class SampleResult:
    raw: BitstringSet
    shots: int
    retained: int

    @property
    def retention(self) -> float:
        return self.retained / self.shots if self.shots else 0.0


def features(strings: Sequence[int], n_orb: int, dimension: int) -> np.ndarray:
    values = np.asarray(strings, dtype=np.int64)[:, None]
    occ = ((values >> np.arange(n_orb)) & 1).astype(np.float64)
    pairs = occ[:, :-1] * occ[:, 1:]
    phi = np.hstack([occ, pairs])
    if phi.shape[1] >= dimension:
        return phi[:, :dimension]
    return np.hstack([phi, np.zeros((phi.shape[0], dimension - phi.shape[1]))])


def sector_distribution(
    theta: np.ndarray, n_orb: int, n_elec: int, orbital_energies: np.ndarray, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Sector strings and their probabilities under ``theta``."""

    if n_elec > n_orb or n_elec < 0:
        raise SubspaceError(f"empty sector: {n_elec} electrons in {n_orb} orbitals")
    strings = np.asarray(sector_strings(n_orb, n_elec), dtype=np.int64)
    phi = features(strings, n_orb, theta.size)
    occ = ((strings[:, None] >> np.arange(n_orb)) & 1).astype(np.float64)
    logits = phi @ theta - beta * (occ @ orbital_energies)
    return strings, np.exp(logits - logsumexp(logits))


def sample_bitstrings(
    theta: Sequence[float],
    model: SamplerModel,
    seed: Seed,
    *,
    n_orb: int,
    n_alpha: int,
    n_beta: int,
    orbital_energies: Sequence[float],
) -> SampleResult:
    """Draw ``model.shots`` full strings (alpha in the low half) and post-select them.

    Deterministic in ``(theta, seed)``. The result is a multiset ordered by
    string value.
    """

    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    energies = np.asarray(orbital_energies, dtype=np.float64)
    if 2 * n_orb > 63:
        raise SubspaceError("full strings wider than 63 bits are not supported")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    alpha_strings, alpha_p = sector_distribution(theta, n_orb, n_alpha, energies, model.beta)
    beta_strings, beta_p = sector_distribution(theta, n_orb, n_beta, energies, model.beta)
    alphas = alpha_strings[rng.choice(alpha_strings.size, size=model.shots, p=alpha_p)]
    betas = beta_strings[rng.choice(beta_strings.size, size=model.shots, p=beta_p)]
    full = alphas | (betas << n_orb)

    width = 2 * n_orb
    flips = rng.random((model.shots, width)) < model.bitflip
    masks = (flips.astype(np.int64) << np.arange(width)).sum(axis=1)
    full = full ^ masks

    keep = rng.random(model.shots) < model.retention
    survivors = full[keep]
    values, counts = np.unique(survivors, return_counts=True)
    raw = BitstringSet(width, tuple(int(v) for v in values), tuple(int(c) for c in counts))
    LOG.debug(
        "sampled %d shots, %d retained, %d distinct strings", model.shots, int(keep.sum()), len(raw)
    )
    return SampleResult(raw=raw, shots=model.shots, retained=int(keep.sum()))
