"""Errors raised by the SQD workload engine."""

from __future__ import annotations


class HamiltonianError(ValueError):
    """Integrals or electron counts are inconsistent."""


class FcidumpFormatError(HamiltonianError):
    """An integral file could not be parsed."""


class SubspaceError(ValueError):
    """Bitstrings or determinants cannot form a valid subspace."""


class NonFiniteEnergyError(ValueError):
    """An energy handed to selection is NaN or infinite."""


class DavidsonConvergenceError(RuntimeError):
    def __init__(self, residual: float, energy: float, iterations: int) -> None:
        super().__init__(
            f"Davidson did not converge after {iterations} iterations "
            f"(best residual {residual:.3e}, energy {energy:.12f})"
        )
        self.residual = residual
        self.energy = energy
        self.iterations = iterations
