"""Differential evolution over sampler parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NonFiniteEnergyError
from .streams import MAX_SEED, Purpose, StreamFactory

VectorLike = Union["ParameterVector", np.ndarray, Sequence[float]]


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Parameters θ of population ``population`` at generation ``generation``."""

    theta: np.ndarray
    population: int = 0
    generation: int = 0

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameter vector entries must be finite")
        if self.population < 0 or self.generation < 0:
            raise ValueError("population and generation must be non-negative")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def dimension(self) -> int:
        return int(self.theta.size)


@dataclass(frozen=True)
class DEConfig:
    F: float = 0.6
    Cr: float = 0.9
    n_pop: int = 4
    generations: int = 20
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.F) or self.F < 0:
            raise ValueError("F must be a finite non-negative number")
        if not 0 < self.Cr <= 1:
            raise ValueError("Cr must lie in (0, 1]")
        if self.n_pop < 4:
            raise ValueError("differential evolution needs at least 4 populations")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 0 <= self.master_seed <= MAX_SEED:
            raise ValueError("master_seed must be an unsigned 64-bit integer")


def _vector(value: VectorLike) -> np.ndarray:
    if isinstance(value, ParameterVector):
        return value.theta
    return np.asarray(value, dtype=np.float64).reshape(-1)


def de_mutate(
    population: Sequence[VectorLike],
    best_index: int,
    i: int,
    F: float,
    rng: np.random.Generator,
    *,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Two-difference mutation around the current best member.

    ``v = θ_best + F (θ_i0 - θ_i1 + θ_i2 - θ_i3)`` with ``i0..i3`` distinct and
    drawn from all populations, the target ``i`` and the best included.
    """

    n_pop = len(population)
    if n_pop < 4:
        raise ValueError("de_mutate needs at least 4 populations")
    if not 0 <= i < n_pop or not 0 <= best_index < n_pop:
        raise IndexError("population index out of range")
    if indices is None:
        indices = rng.choice(n_pop, size=4, replace=False)
    i0, i1, i2, i3 = (int(k) for k in indices)
    if len({i0, i1, i2, i3}) != 4:
        raise ValueError("mutation indices must be distinct")
    vectors = [_vector(member) for member in population]
    return vectors[best_index] + F * (vectors[i0] - vectors[i1] + vectors[i2] - vectors[i3])


def de_crossover(
    target: VectorLike,
    mutant: VectorLike,
    Cr: float,
    rng: np.random.Generator,
    *,
    j_rand: Optional[int] = None,
) -> np.ndarray:
    """Binomial crossover; component ``j_rand`` always comes from the mutant."""

    theta = _vector(target)
    v = _vector(mutant)
    if theta.shape != v.shape:
        raise ValueError("target and mutant dimensions differ")
    size = theta.size
    if j_rand is None:
        j_rand = int(rng.integers(size))
    mask = rng.random(size) <= Cr
    mask[j_rand] = True
    return np.where(mask, v, theta)


def de_select(
    e_prev: float,
    e_trial: float,
    theta: VectorLike,
    trial: VectorLike,
) -> Tuple[np.ndarray, float, bool]:
    """Greedy selection against the last accepted energy; ties take the trial."""

    for name, value in (("accepted", e_prev), ("trial", e_trial)):
        if not math.isfinite(value):
            raise NonFiniteEnergyError(f"{name} energy is not finite: {value!r}")
    if e_trial <= e_prev:
        return _vector(trial).copy(), float(e_trial), True
    return _vector(theta).copy(), float(e_prev), False


def best_index(energies: Sequence[float]) -> int:
    """Index of the lowest energy, lowest index among ties."""

    return int(np.argmin(np.asarray(energies, dtype=np.float64)))


def initial_population(
    config: DEConfig, dimension: int, streams: StreamFactory, scale: float = 0.1
) -> List[ParameterVector]:
    """Population 0 at the origin, the others at small normal perturbations."""

    members = [ParameterVector(np.zeros(dimension), population=0, generation=0)]
    for i in range(1, config.n_pop):
        rng = streams.generator(0, i, Purpose.INIT)
        members.append(
            ParameterVector(rng.normal(0.0, scale, size=dimension), population=i, generation=0)
        )
    return members
