"""Oracle suites behind ``qcsc verify``.

Each suite compares a production code path with an independent brute-force
reference and reports one :class:`CheckResult` per comparison.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from qcsc_etl import metrics
from qcsc_etl import oracles as metric_oracles
from qcsc_sqd import (
    DEConfig,
    de_mutate,
    full_sector_basis,
    ground_state,
    hubbard_spec,
    random_spec,
)
from qcsc_sqd import oracles as sqd_oracles
from qcsc_sqd.determinants import join
from qcsc_sqd.fcidump import format_fcidump, parse_fcidump
from qcsc_sqd.slater_condon import Phase, build_subspace_hamiltonian, jordan_wigner_phase
from qcsc_sqd.subspace import solve_subspace
from qcsc_telemetry import (
    BitstringSet,
    TelemetryLevel,
    TelemetryRecord,
    canonical_decode,
    canonical_encode,
    new_record_id,
    new_run_id,
    pack_bitstrings,
    pack_vector,
    unpack_bitstrings,
    unpack_vector,
    utcnow,
)

LOG = logging.getLogger(__name__)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyContext:
    seed: int = 0
    phase: Optional[Phase] = None
    instances: int = 1000

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    @property
    def slater_condon_phase(self) -> Phase:
        return self.phase or jordan_wigner_phase


@dataclass
class Suite:
    name: str
    description: str
    run: Callable[[VerifyContext], List[CheckResult]]


@dataclass
class SuiteReport:
    name: str
    results: List[CheckResult] = field(default_factory=list)
    elapsed_s: float = 0.0
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(result.passed for result in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [result for result in self.results if not result.passed]


# ----------------------------------------------------------------------
# Suites
# ----------------------------------------------------------------------
def _eigensolver(ctx: VerifyContext) -> List[CheckResult]:
    rng = ctx.rng(1)
    results = []
    for k in range(50):
        size = int(rng.integers(2, 501))
        noise = rng.normal(0.0, 0.1, size=(size, size))
        matrix = np.diag(np.sort(rng.uniform(-5.0, 5.0, size))) + (noise + noise.T) / 2
        energy, vector = ground_state(matrix, tol=1e-9, dense_limit=0)
        reference = sqd_oracles.dense_ground_energy(matrix)
        error = abs(energy - reference)
        results.append(
            CheckResult("eigensolver", f"random-{k}-d{size}", error <= 1e-8, f"|dE|={error:.2e}")
        )

    spec = hubbard_spec(6)
    exact = sqd_oracles.exact_ground_energy(spec)
    basis = full_sector_basis(spec.n_orb, spec.n_alpha, spec.n_beta)
    order = [basis[k] for k in rng.permutation(len(basis))]
    previous = np.inf
    for size in (10, 40, 100, 200, len(order)):
        energy = solve_subspace(order[:size], spec).energy
        bound = energy >= exact - 1e-9
        monotone = energy <= previous + 1e-10
        results.append(
            CheckResult(
                "eigensolver",
                f"hubbard6-nested-d{size}",
                bound and monotone,
                f"E={energy:.10f} exact={exact:.10f}",
            )
        )
        previous = energy
    return results


def _slater_condon(ctx: VerifyContext) -> List[CheckResult]:
    results = []
    for n_orb in (1, 2, 3, 4):
        spec = random_spec(n_orb, 0, 0, seed=ctx.seed + n_orb)
        fock = sqd_oracles.fock_space_hamiltonian(spec)
        for n_alpha in range(n_orb + 1):
            for n_beta in range(n_orb + 1):
                sector = random_spec(n_orb, n_alpha, n_beta, seed=ctx.seed + n_orb)
                basis = full_sector_basis(n_orb, n_alpha, n_beta)
                matrix = build_subspace_hamiltonian(
                    basis, sector, phase=ctx.slater_condon_phase
                ).toarray()
                index = [join(det, n_orb) for det in basis]
                reference = fock[index, :][:, index].toarray()
                error = float(np.max(np.abs(matrix - reference)))
                results.append(
                    CheckResult(
                        "slater-condon",
                        f"n_orb={n_orb} na={n_alpha} nb={n_beta}",
                        error <= 1e-10,
                        f"max|dH|={error:.2e}",
                    )
                )
    return results


def _random_set(rng: np.random.Generator, width: int, size: int) -> BitstringSet:
    rows = rng.integers(0, 1 << width, size=size)
    return BitstringSet(width, tuple(int(row) for row in rows))


def _set_metrics(ctx: VerifyContext) -> List[CheckResult]:
    rng = ctx.rng(3)
    mismatches: Dict[str, int] = {
        "carryover_acquisition": 0,
        "sample_preservation": 0,
        "hamming_to_rhf": 0,
        "parameter_convergence": 0,
    }
    for _ in range(ctx.instances):
        width = int(rng.integers(2, 13))
        prev = _random_set(rng, width, int(rng.integers(1, 60)))
        cur = _random_set(rng, width, int(rng.integers(1, 60)))
        if metrics.carryover_acquisition(prev, cur) != metric_oracles.carryover_acquisition_oracle(prev, cur):
            mismatches["carryover_acquisition"] += 1
        if metrics.sample_preservation(prev, cur) != metric_oracles.sample_preservation_oracle(prev, cur):
            mismatches["sample_preservation"] += 1
        n_e = int(rng.integers(0, width + 1))
        expected = metric_oracles.hamming_to_rhf_oracle(cur, n_e)
        if abs(metrics.hamming_to_rhf(cur, n_e) - expected) > 1e-12 * max(1.0, expected):
            mismatches["hamming_to_rhf"] += 1
        thetas = rng.normal(size=(int(rng.integers(2, 7)), int(rng.integers(1, 12))))
        expected = metric_oracles.parameter_convergence_oracle(thetas.tolist())
        if abs(metrics.parameter_convergence(thetas) - expected) > 1e-12 * max(1.0, expected):
            mismatches["parameter_convergence"] += 1
    return [
        CheckResult("set-metrics", name, count == 0, f"{count} of {ctx.instances} mismatched")
        for name, count in mismatches.items()
    ]


def _round_trips(ctx: VerifyContext) -> List[CheckResult]:
    rng = ctx.rng(4)
    results = []
    bitset = BitstringSet(
        12, tuple(int(v) for v in rng.integers(0, 1 << 12, 50)), tuple(int(v) for v in rng.integers(1, 9, 50))
    )
    results.append(
        CheckResult("round-trips", "bitset-container", unpack_bitstrings(pack_bitstrings(bitset)) == bitset)
    )
    vector = rng.normal(size=17)
    results.append(
        CheckResult(
            "round-trips", "vector-container", bool(np.array_equal(unpack_vector(pack_vector(vector)), vector))
        )
    )
    record = TelemetryRecord(
        record_id=new_record_id(),
        run_id=new_run_id(),
        task_name="verify",
        level=TelemetryLevel.L4,
        kind="check",
        timestamp=utcnow(),
        iteration=3,
        population=1,
        payload={"energy": -1.25, "label": "x"},
    )
    line = canonical_encode(record)
    results.append(
        CheckResult("round-trips", "canonical-record", canonical_encode(canonical_decode(line)) == line)
    )
    spec = random_spec(4, 2, 2, seed=ctx.seed)
    parsed = parse_fcidump(format_fcidump(spec))
    same = (
        np.allclose(parsed.h, spec.h, atol=1e-14)
        and np.allclose(parsed.g, spec.g, atol=1e-14)
        and parsed.core_energy == spec.core_energy
    )
    results.append(CheckResult("round-trips", "fcidump", bool(same)))
    return results


def _differential_evolution(ctx: VerifyContext) -> List[CheckResult]:
    # best (1,1); differences (2,0) - (0,0) + (1,1) - (1,0)
    population = [[1.0, 1.0], [2.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 0.0]]
    mutant = de_mutate(
        population,
        0,
        0,
        0.6,
        ctx.rng(5),
        indices=(1, 2, 3, 4),
    )
    defaults = DEConfig()
    return [
        CheckResult(
            "differential-evolution",
            "mutation-example",
            bool(np.allclose(mutant, [2.2, 1.6], atol=1e-12)),
            f"v={mutant.tolist()}",
        ),
        CheckResult(
            "differential-evolution",
            "defaults",
            defaults.F == 0.6 and defaults.Cr == 0.9 and defaults.n_pop == 4,
        ),
    ]


SUITES: Dict[str, Suite] = {
    suite.name: suite
    for suite in (
        Suite("eigensolver", "Davidson against dense eigensolver; variational bound", _eigensolver),
        Suite("slater-condon", "Subspace Hamiltonian against Fock-space operators, n_orb <= 4", _slater_condon),
        Suite("set-metrics", "Set and distance metrics against brute-force references", _set_metrics),
        Suite("round-trips", "Containers, canonical records and FCIDUMP files", _round_trips),
        Suite("differential-evolution", "Mutation arithmetic and optimizer defaults", _differential_evolution),
    )
}


def run_suites(
    names: Optional[Iterable[str]] = None, context: Optional[VerifyContext] = None
) -> List[SuiteReport]:
    context = context or VerifyContext()
    selected: Sequence[str] = list(names) if names else list(SUITES)
    unknown = [name for name in selected if name not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    reports = []
    for name in selected:
        report = SuiteReport(name)
        started = time.perf_counter()
        try:
            report.results = SUITES[name].run(context)
        except Exception as exc:
            LOG.exception("suite %s crashed", name)
            report.error = f"{type(exc).__name__}: {exc}"
        report.elapsed_s = time.perf_counter() - started
        LOG.info(
            "suite %s: %s (%d check(s), %.1fs)",
            name,
            "ok" if report.passed else "FAILED",
            len(report.results),
            report.elapsed_s,
        )
        reports.append(report)
    return reports
