"""Desk-scale sample-based quantum diagonalization workload.

The quantum sampler is a synthetic parameterized distribution; everything
downstream of it (recovery, subspace construction, Slater-Condon matrix
elements, Davidson diagonalization, carryover and differential evolution)
is the real algorithm at small scale.
"""

from .carryover import select_carryover  # noqa: F401
from .davidson import dense_ground_state, ground_state  # noqa: F401
from .de import (  # noqa: F401
    DEConfig,
    ParameterVector,
    best_index,
    de_crossover,
    de_mutate,
    de_select,
    initial_population,
)
from .determinants import Determinant, full_sector_basis, split_spin_sectors  # noqa: F401
from .errors import (  # noqa: F401
    DavidsonConvergenceError,
    FcidumpFormatError,
    HamiltonianError,
    NonFiniteEnergyError,
    SubspaceError,
)
from .fcidump import format_fcidump, parse_fcidump, read_fcidump, write_fcidump  # noqa: F401
from .hamiltonian import HamiltonianSpec  # noqa: F401
from .loop import ClosedLoopDriver, LoopResult, SubspaceSettings, run_closed_loop  # noqa: F401
from .recovery import prior_from_occupancy, recover_configurations, rhf_prior  # noqa: F401
from .sampler import SampleResult, SamplerModel, sample_bitstrings  # noqa: F401
from .slater_condon import build_subspace_hamiltonian, jordan_wigner_phase  # noqa: F401
from .streams import Purpose, StreamFactory  # noqa: F401
from .subspace import SubspaceResult, build_subspace, solve_subspace  # noqa: F401
from .toy import hubbard_spec, random_spec, toy_spec  # noqa: F401

__all__ = [
    "ClosedLoopDriver",
    "DEConfig",
    "DavidsonConvergenceError",
    "Determinant",
    "FcidumpFormatError",
    "HamiltonianError",
    "HamiltonianSpec",
    "LoopResult",
    "NonFiniteEnergyError",
    "ParameterVector",
    "Purpose",
    "SampleResult",
    "SamplerModel",
    "StreamFactory",
    "SubspaceError",
    "SubspaceResult",
    "SubspaceSettings",
    "best_index",
    "build_subspace",
    "build_subspace_hamiltonian",
    "de_crossover",
    "de_mutate",
    "de_select",
    "dense_ground_state",
    "format_fcidump",
    "full_sector_basis",
    "ground_state",
    "hubbard_spec",
    "initial_population",
    "jordan_wigner_phase",
    "parse_fcidump",
    "prior_from_occupancy",
    "random_spec",
    "read_fcidump",
    "recover_configurations",
    "rhf_prior",
    "run_closed_loop",
    "sample_bitstrings",
    "select_carryover",
    "solve_subspace",
    "split_spin_sectors",
    "toy_spec",
    "write_fcidump",
]
