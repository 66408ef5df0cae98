"""Closed-loop SQD workload.

Each generation mutates and crosses over the parameters of every population,
samples them as a simulated QPU primitive, recovers and splits the samples,
diagonalizes the Hamiltonian in the resulting subspace as a simulated HPC
job, and selects greedily. The carryover strings of the population with the
lowest energy seed every subspace of the next generation.

Numerical results depend only on the master seed: every draw comes from a
per-(generation, population, purpose) stream, and scheduler timing draws use
a stream of their own.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import List, Optional

import numpy as np

from qcsc_etl.metrics import avg_occupancy
from qcsc_obs_client import ClientSettings, RunHandle
from qcsc_sched import HpcJobRecord, JobScheduler, QpuJobRecord, SchedulerModel, qpu_row, qstat_row
from qcsc_telemetry import BitstringSet, new_run_id
from qcsc_telemetry.records import (
    HPC_JOB_KIND,
    PROBLEM_KIND,
    QPU_JOB_KIND,
    RESULT_KIND,
    SAMPLER_STATS_KIND,
    SELECTION_KIND,
)

from .carryover import select_carryover
from .de import DEConfig, ParameterVector, best_index, de_crossover, de_mutate, de_select, initial_population
from .determinants import split_spin_sectors
from .errors import HamiltonianError
from .hamiltonian import HamiltonianSpec
from .recovery import prior_from_occupancy, recover_configurations, rhf_prior
from .sampler import SampleResult, SamplerModel, sample_bitstrings
from .streams import Purpose, StreamFactory
from .subspace import SubspaceResult, build_subspace, carryover_determinants, solve_subspace

LOG = logging.getLogger(__name__)

RUN_PRIMITIVE = "run_primitive"
RECOVER_CONFIGURATIONS = "recover_configurations"
SOLVE_EIGENSTATE = "solve_eigenstate"


@dataclass(frozen=True)
class SubspaceSettings:
    d_max: int = 1000
    k_max: int = 256
    amp_floor: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self) -> None:
        if self.d_max < 1 or self.k_max < 1:
            raise ValueError("d_max and k_max must be positive")
        if self.amp_floor < 0:
            raise ValueError("amp_floor must be non-negative")

    @property
    def carryover_cap(self) -> int:
        """Largest carryover whose closed-shell determinants still fit in ``d_max``."""

        return max(1, min(self.k_max, math.isqrt(self.d_max)))


@dataclass
class PopulationOutcome:
    generation: int
    population: int
    trial: ParameterVector
    sample: SampleResult
    result: SubspaceResult
    qpu: QpuJobRecord
    hpc: HpcJobRecord

    @property
    def energy(self) -> float:
        return self.result.energy


@dataclass
class LoopState:
    """Mutable state carried from one generation to the next."""

    thetas: List[ParameterVector]
    energies: List[float]
    carryover: Optional[BitstringSet] = None
    prior: Optional[np.ndarray] = None
    accepted_history: List[List[float]] = field(default_factory=list)
    trial_history: List[List[float]] = field(default_factory=list)
    qpu_jobs: int = 0
    hpc_jobs: int = 0


@dataclass
class LoopResult:
    energies: List[float]
    thetas: List[np.ndarray]
    accepted_history: List[List[float]]
    trial_history: List[List[float]]
    carryover: Optional[BitstringSet]
    qpu_jobs: int
    hpc_jobs: int

    @property
    def best_population(self) -> int:
        return best_index(self.energies)

    @property
    def best_energy(self) -> float:
        return self.energies[self.best_population]


def _offline_handle() -> RunHandle:
    return RunHandle(new_run_id(), "offline", ClientSettings(enabled=False))


class ClosedLoopDriver:
    """Run differential evolution over SQD subspace energies."""

    def __init__(
        self,
        spec: HamiltonianSpec,
        de: DEConfig,
        sampler: SamplerModel,
        handle: Optional[RunHandle] = None,
        *,
        scheduler: Optional[JobScheduler] = None,
        subspace: Optional[SubspaceSettings] = None,
        max_workers: Optional[int] = None,
    ) -> None:
        if not spec.closed_shell:
            raise HamiltonianError(
                f"the closed loop needs a closed-shell system, got {spec.n_alpha} alpha "
                f"and {spec.n_beta} beta electrons"
            )
        self._spec = spec
        self._de = de
        self._sampler = sampler
        self._handle = handle or _offline_handle()
        self._scheduler = scheduler or JobScheduler(SchedulerModel())
        self._subspace = subspace or SubspaceSettings()
        self._max_workers = max_workers or de.n_pop
        self._streams = StreamFactory(de.master_seed)
        self._dimension = sampler.dimension(spec.n_orb)
        self._orbital_energies = spec.orbital_energies

    @property
    def handle(self) -> RunHandle:
        return self._handle

    def run(self) -> LoopResult:
        spec, de = self._spec, self._de
        self._emit_problem()
        state = LoopState(
            thetas=initial_population(de, self._dimension, self._streams),
            energies=[math.inf] * de.n_pop,
            prior=rhf_prior(spec.n_orb, spec.n_alpha, spec.n_beta),
        )
        for g in range(de.generations):
            self._generation(g, state)
        LOG.info(
            "closed loop finished after %d generation(s): best E=%.10f (population %d)",
            de.generations,
            min(state.energies),
            best_index(state.energies),
        )
        return LoopResult(
            energies=list(state.energies),
            thetas=[member.theta.copy() for member in state.thetas],
            accepted_history=state.accepted_history,
            trial_history=state.trial_history,
            carryover=state.carryover,
            qpu_jobs=state.qpu_jobs,
            hpc_jobs=state.hpc_jobs,
        )

    def _emit_problem(self) -> None:
        spec = self._spec
        self._handle.emit_event(
            PROBLEM_KIND,
            {
                "n_orb": spec.n_orb,
                "n_alpha": spec.n_alpha,
                "n_beta": spec.n_beta,
                "core_energy": spec.core_energy,
                "n_params": self._dimension,
                "n_pop": self._de.n_pop,
                "generations": self._de.generations,
                "F": self._de.F,
                "Cr": self._de.Cr,
                "master_seed": str(self._de.master_seed),
                "shots": self._sampler.shots,
                "d_max": self._subspace.d_max,
                "k_max": self._subspace.k_max,
            },
        )

    # ------------------------------------------------------------------
    # Generations
    # ------------------------------------------------------------------
    def _trials(self, g: int, state: LoopState) -> List[ParameterVector]:
        if g == 0:
            return list(state.thetas)
        best = best_index(state.energies)
        trials = []
        for i, target in enumerate(state.thetas):
            rng = self._streams.generator(g, i, Purpose.DE)
            mutant = de_mutate(state.thetas, best, i, self._de.F, rng)
            trial = de_crossover(target, mutant, self._de.Cr, rng)
            trials.append(ParameterVector(trial, population=i, generation=g))
        return trials

    def _generation(self, g: int, state: LoopState) -> None:
        trials = self._trials(g, state)
        submit_at = self._scheduler.clock.now()
        with ThreadPoolExecutor(max_workers=self._max_workers, thread_name_prefix=f"sqd-g{g}") as pool:
            futures = [
                pool.submit(self._evaluate, g, i, trial, state.carryover, state.prior, submit_at)
                for i, trial in enumerate(trials)
            ]
            outcomes = [future.result() for future in futures]
        state.qpu_jobs += len(outcomes)
        state.hpc_jobs += len(outcomes)

        # generation barrier: selection, then the shared carryover
        for outcome in outcomes:
            i = outcome.population
            if g == 0:
                theta, energy, accepted = outcome.trial.theta.copy(), outcome.energy, True
            else:
                theta, energy, accepted = de_select(
                    state.energies[i], outcome.energy, state.thetas[i], outcome.trial
                )
            state.thetas[i] = ParameterVector(theta, population=i, generation=g)
            state.energies[i] = energy
            self._handle.emit_event(
                SELECTION_KIND,
                {"accepted": accepted, "accepted_energy": energy, "trial_energy": outcome.energy},
                iteration=g,
                population=i,
            )
        state.accepted_history.append(list(state.energies))
        state.trial_history.append([outcome.energy for outcome in outcomes])

        winner = outcomes[best_index([outcome.energy for outcome in outcomes])]
        state.carryover = select_carryover(
            winner.result,
            self._subspace.carryover_cap,
            self._subspace.amp_floor,
            n_orb=self._spec.n_orb,
        )
        occupancy = avg_occupancy(
            [(det.alpha, det.beta) for det in winner.result.basis],
            winner.result.amplitudes,
            self._spec.n_orb,
        )
        state.prior = prior_from_occupancy(occupancy)
        self._handle.put_artifact("carryover", g, winner.population, state.carryover)
        self._handle.put_artifact("avg_occupancy", g, winner.population, occupancy)

        self._scheduler.clock.advance_to(max(outcome.hpc.ended_at for outcome in outcomes))
        LOG.info(
            "generation %d: best trial E=%.10f (population %d), %d carryover string(s)",
            g,
            winner.energy,
            winner.population,
            len(state.carryover),
        )

    # ------------------------------------------------------------------
    # One population
    # ------------------------------------------------------------------
    def _evaluate(
        self,
        g: int,
        i: int,
        trial: ParameterVector,
        carryover: Optional[BitstringSet],
        prior: np.ndarray,
        submit_at: datetime,
    ) -> PopulationOutcome:
        spec, handle = self._spec, self._handle
        timing_rng = self._streams.generator(g, i, Purpose.SCHEDULE)
        sample_seed = self._streams.seed(g, i, Purpose.SAMPLE)
        subspace_rng = self._streams.generator(g, i, Purpose.SUBSPACE)

        handle.put_artifact("ucj_parameter", g, i, trial.theta, task_name=RUN_PRIMITIVE)
        with handle.span(RUN_PRIMITIVE, iteration=g, population=i) as span:
            sample, qpu = self._scheduler.submit_qpu(
                lambda: sample_bitstrings(
                    trial.theta,
                    self._sampler,
                    sample_seed,
                    n_orb=spec.n_orb,
                    n_alpha=spec.n_alpha,
                    n_beta=spec.n_beta,
                    orbital_energies=self._orbital_energies,
                ),
                timing_rng,
                shots=self._sampler.shots,
                submit_at=submit_at,
                job_id=f"qpu-g{g:03d}-p{i}",
            )
            span.annotate(job_id=qpu.job_id, simulated_s=qpu.queueing_s + qpu.wall_clock_s)
        handle.log_job_table(
            QPU_JOB_KIND, qpu_row(qpu), task_name=RUN_PRIMITIVE, iteration=g, population=i
        )
        handle.put_artifact("raw_bitstrings", g, i, sample.raw, task_name=RUN_PRIMITIVE)
        handle.emit_event(
            SAMPLER_STATS_KIND,
            {
                "shots": sample.shots,
                "retained": sample.retained,
                "retention": sample.retention,
                "distinct": len(sample.raw),
            },
            task_name=RUN_PRIMITIVE,
            iteration=g,
            population=i,
        )

        with handle.span(RECOVER_CONFIGURATIONS, iteration=g, population=i):
            recovered = recover_configurations(sample.raw, spec.n_alpha, spec.n_beta, prior)
            alphas, betas = split_spin_sectors(recovered)
        handle.put_artifact("recovered_bitstrings", g, i, recovered, task_name=RECOVER_CONFIGURATIONS)
        handle.put_artifact("alphadets", g, i, alphas, task_name=RECOVER_CONFIGURATIONS)

        basis = build_subspace(alphas, betas, carryover, self._subspace.d_max, subspace_rng)
        with handle.span(SOLVE_EIGENSTATE, iteration=g, population=i) as span:
            result, hpc = self._scheduler.submit_hpc(
                lambda: solve_subspace(
                    basis, spec, tol=self._subspace.tol, max_iter=self._subspace.max_iter
                ),
                timing_rng,
                dimension=len(basis),
                submit_at=qpu.ended_at,
                job_id=f"hpc-g{g:03d}-p{i}",
            )
            span.annotate(
                job_id=hpc.job_id,
                dimension=len(basis),
                simulated_s=hpc.queueing_s + hpc.walltime,
            )
        handle.log_job_table(
            HPC_JOB_KIND, qstat_row(hpc), task_name=SOLVE_EIGENSTATE, iteration=g, population=i
        )
        handle.emit_event(
            RESULT_KIND,
            {
                "energy": result.energy,
                "dimension": result.dimension,
                "alpha_strings": len(alphas),
                "beta_strings": len(betas),
                "carryover_determinants": len(carryover_determinants(carryover)),
            },
            task_name=SOLVE_EIGENSTATE,
            iteration=g,
            population=i,
        )
        LOG.debug("g=%d i=%d: E=%.10f d=%d", g, i, result.energy, result.dimension)
        return PopulationOutcome(g, i, trial, sample, result, qpu, hpc)


def run_closed_loop(
    spec: HamiltonianSpec,
    de: DEConfig,
    sampler: SamplerModel,
    handle: Optional[RunHandle] = None,
    *,
    scheduler: Optional[JobScheduler] = None,
    subspace: Optional[SubspaceSettings] = None,
    max_workers: Optional[int] = None,
) -> LoopResult:
    """Run ``de.generations`` generations and return the final accepted energies."""

    driver = ClosedLoopDriver(
        spec,
        de,
        sampler,
        handle,
        scheduler=scheduler,
        subspace=subspace,
        max_workers=max_workers,
    )
    return driver.run()
