"""Desk-scale model Hamiltonians."""

from __future__ import annotations

import itertools
import logging
from typing import Any, Mapping

import numpy as np

from .errors import HamiltonianError
from .hamiltonian import HamiltonianSpec

LOG = logging.getLogger(__name__)


def hubbard_spec(
    n_sites: int,
    *,
    u: float = 4.0,
    t: float = 1.0,
    n_alpha: int | None = None,
    n_beta: int | None = None,
) -> HamiltonianSpec:
    """Open Hubbard chain at half filling, rotated into its hopping eigenbasis.

    Orbitals come out ordered by one-electron energy, so the lowest ``n_alpha``
    orbitals are the RHF-like reference occupation.
    """

    if n_sites < 2:
        raise HamiltonianError("a Hubbard chain needs at least two sites")
    n_alpha = n_sites // 2 if n_alpha is None else n_alpha
    n_beta = n_alpha if n_beta is None else n_beta
    hopping = np.zeros((n_sites, n_sites))
    for site in range(n_sites - 1):
        hopping[site, site + 1] = hopping[site + 1, site] = -t
    energies, coeffs = np.linalg.eigh(hopping)
    # fix each orbital's sign so the integrals are reproducible across LAPACK builds
    for k in range(n_sites):
        pivot = np.flatnonzero(np.abs(coeffs[:, k]) > 1e-12)[0]
        if coeffs[pivot, k] < 0:
            coeffs[:, k] *= -1.0
    h = np.diag(energies)
    g = u * np.einsum("ip,iq,ir,is->pqrs", coeffs, coeffs, coeffs, coeffs)
    g = _symmetrize(g)
    return HamiltonianSpec(n_sites, n_alpha, n_beta, 0.0, h, g)


def random_spec(
    n_orb: int,
    n_alpha: int,
    n_beta: int | None = None,
    *,
    seed: int = 7,
    spread: float = 2.0,
    coupling: float = 0.1,
    two_body: float = 0.05,
) -> HamiltonianSpec:
    """Random integrals with an orbital-energy ladder and 8-fold symmetric ``g``."""

    rng = np.random.default_rng(seed)
    n_beta = n_alpha if n_beta is None else n_beta
    ladder = np.linspace(-spread, spread / 2, n_orb)
    noise = rng.normal(0.0, coupling, size=(n_orb, n_orb))
    h = np.diag(ladder) + (noise + noise.T) / 2
    g = _symmetrize(rng.normal(0.0, two_body, size=(n_orb,) * 4))
    # a positive Coulomb-like diagonal keeps the spectrum chemically plausible
    for p, q in itertools.product(range(n_orb), repeat=2):
        g[p, p, q, q] += 0.5 * two_body * 10
    g = _symmetrize(g)
    return HamiltonianSpec(n_orb, n_alpha, n_beta, float(rng.normal(0.0, 1.0)), h, g)


def _symmetrize(g: np.ndarray) -> np.ndarray:
    perms = (
        (0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2),
        (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0),
    )
    return sum(g.transpose(perm) for perm in perms) / len(perms)


def toy_spec(kind: str, **options: Any) -> HamiltonianSpec:
    """Build a named toy system: ``hubbard2``, ``hubbard6``, ``hubbard`` or ``random``."""

    kind = kind.lower()
    if kind == "hubbard2":
        return hubbard_spec(2, **options)
    if kind == "hubbard6":
        return hubbard_spec(6, **options)
    if kind == "hubbard":
        options = dict(options)
        return hubbard_spec(int(options.pop("n_sites", 6)), **options)
    if kind == "random":
        options = dict(options)
        n_orb = int(options.pop("n_orb", 4))
        n_alpha = int(options.pop("n_alpha", n_orb // 2))
        return random_spec(n_orb, n_alpha, **options)
    raise HamiltonianError(f"unknown toy system '{kind}'")


def toy_from_mapping(section: Mapping[str, Any]) -> HamiltonianSpec:
    options = {key: value for key, value in section.items() if key != "kind"}
    return toy_spec(str(section.get("kind", "hubbard6")), **options)
