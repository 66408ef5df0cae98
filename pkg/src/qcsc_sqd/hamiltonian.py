"""Molecular Hamiltonian in an orthonormal spatial-orbital basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HamiltonianError

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """One- and two-electron integrals, the latter in chemist notation ``(pq|rs)``."""

    n_orb: int
    n_alpha: int
    n_beta: int
    core_energy: float
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self) -> None:
        n = self.n_orb
        if n < 1:
            raise HamiltonianError("n_orb must be positive")
        for name in ("n_alpha", "n_beta"):
            count = getattr(self, name)
            if not 0 <= count <= n:
                raise HamiltonianError(f"{name}={count} does not fit in {n} orbitals")
        h = np.array(self.h, dtype=np.float64)
        g = np.array(self.g, dtype=np.float64)
        if h.shape != (n, n):
            raise HamiltonianError(f"one-electron integrals must be {n}x{n}, got {h.shape}")
        if g.shape != (n, n, n, n):
            raise HamiltonianError(f"two-electron integrals must be {n}^4, got {g.shape}")
        if not np.allclose(h, h.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise HamiltonianError("one-electron integrals are not symmetric")
        for label, perm in (
            ("pq<->qp", (1, 0, 2, 3)),
            ("rs<->sr", (0, 1, 3, 2)),
            ("pq<->rs", (2, 3, 0, 1)),
        ):
            if not np.allclose(g, g.transpose(perm), rtol=0.0, atol=SYMMETRY_TOL):
                raise HamiltonianError(f"two-electron integrals violate {label} symmetry")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "core_energy", float(self.core_energy))

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    @property
    def closed_shell(self) -> bool:
        return self.n_alpha == self.n_beta

    @property
    def orbital_energies(self) -> np.ndarray:
        """Diagonal of ``h``; the sampler's energy proxy."""

        return np.diag(self.h).copy()

    @property
    def rhf_alpha(self) -> int:
        return (1 << self.n_alpha) - 1

    @property
    def rhf_beta(self) -> int:
        return (1 << self.n_beta) - 1

    def summary(self) -> dict:
        return {
            "n_orb": self.n_orb,
            "n_alpha": self.n_alpha,
            "n_beta": self.n_beta,
            "core_energy": self.core_energy,
        }
