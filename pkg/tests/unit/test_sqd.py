import math
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from qcsc_sqd import (
    DEConfig,
    DavidsonConvergenceError,
    Determinant,
    FcidumpFormatError,
    HamiltonianError,
    HamiltonianSpec,
    Purpose,
    SamplerModel,
    StreamFactory,
    SubspaceError,
    SubspaceResult,
    best_index,
    build_subspace,
    build_subspace_hamiltonian,
    de_crossover,
    de_mutate,
    de_select,
    format_fcidump,
    full_sector_basis,
    ground_state,
    hubbard_spec,
    initial_population,
    parse_fcidump,
    random_spec,
    read_fcidump,
    recover_configurations,
    rhf_prior,
    sample_bitstrings,
    select_carryover,
    solve_subspace,
    split_spin_sectors,
    toy_spec,
    write_fcidump,
)
from qcsc_sqd import oracles
from qcsc_sqd.determinants import popcount, sector_strings
from qcsc_sqd.errors import NonFiniteEnergyError
from qcsc_sqd.recovery import recover_sector
from qcsc_sqd.slater_condon import determinant_energy
from qcsc_telemetry import BitstringSet

H2_FCIDUMP = """\
 &FCI NORB=2,NELEC=2,MS2=0,
  ORBSYM=1,1,
  ISYM=1,
 &END
  0.6744887663  1  1  1  1
  0.1812875334  2  1  2  1
  0.6636340479  2  2  1  1
  0.6973979494  2  2  2  2
 -1.2524635735  1  1  0  0
 -0.4759344611  2  2  0  0
  0.7137539936  0  0  0  0
"""


def build_population(*vectors):
    return [np.asarray(vector, dtype=float) for vector in vectors]


def build_sample(spec: HamiltonianSpec, seed: int = 3, **overrides):
    values = dict(beta=1.0, bitflip=0.0, retention=1.0, shots=2000)
    values.update(overrides)
    model = SamplerModel(**values)
    theta = np.zeros(model.dimension(spec.n_orb))
    return sample_bitstrings(
        theta,
        model,
        seed,
        n_orb=spec.n_orb,
        n_alpha=spec.n_alpha,
        n_beta=spec.n_beta,
        orbital_energies=spec.orbital_energies,
    )


def build_result(basis, amplitudes) -> SubspaceResult:
    amplitudes = np.asarray(amplitudes, dtype=float)
    return SubspaceResult(0.0, amplitudes / np.linalg.norm(amplitudes), basis)


# ----------------------------------------------------------------------
# Differential evolution
# ----------------------------------------------------------------------
def test_mutation_uses_two_differences_around_best():
    population = build_population((1, 1), (2, 0), (0, 0), (1, 0))

    mutant = de_mutate(population, 0, 1, 0.6, np.random.default_rng(0), indices=(1, 2, 0, 3))

    assert mutant.tolist() == pytest.approx([2.2, 1.6])


def test_mutation_degenerates_to_best():
    rng = np.random.default_rng(1)
    population = build_population((0.5, -1), (2, 0), (0, 3), (1, 0))
    identical = build_population(*([(0.3, 0.7)] * 4))

    assert de_mutate(population, 2, 0, 0.0, rng).tolist() == pytest.approx([0, 3])
    assert de_mutate(identical, 1, 3, 0.6, rng).tolist() == pytest.approx([0.3, 0.7])


def test_mutation_needs_four_distinct_members():
    rng = np.random.default_rng(2)

    with pytest.raises(ValueError):
        de_mutate(build_population((0,), (1,), (2,)), 0, 0, 0.6, rng)
    with pytest.raises(ValueError):
        de_mutate(build_population((0,), (1,), (2,), (3,)), 0, 0, 0.6, rng, indices=(0, 1, 1, 2))


def test_mutation_and_crossover_follow_translation():
    population = build_population((0.1, 0.2, 0.3), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1))
    shift = np.array([5.0, -2.0, 0.5])
    moved = [member + shift for member in population]

    mutant = de_mutate(population, 4, 2, 0.6, np.random.default_rng(7))
    moved_mutant = de_mutate(moved, 4, 2, 0.6, np.random.default_rng(7))
    trial = de_crossover(population[2], mutant, 0.5, np.random.default_rng(8))
    moved_trial = de_crossover(moved[2], moved_mutant, 0.5, np.random.default_rng(8))

    assert moved_mutant == pytest.approx(mutant + shift)
    assert moved_trial == pytest.approx(trial + shift)


def test_crossover_with_full_rate_takes_mutant():
    target = np.zeros(5)
    mutant = np.arange(1.0, 6.0)

    assert de_crossover(target, mutant, 1.0, np.random.default_rng(0)).tolist() == mutant.tolist()


def test_crossover_forced_component_comes_from_mutant():
    target = np.zeros(5)
    mutant = np.ones(5)

    trial = de_crossover(target, mutant, 1e-12, np.random.default_rng(4), j_rand=2)

    assert trial.tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]


@pytest.mark.parametrize("seed", range(20))
def test_crossover_always_changes_one_component(seed):
    target = np.zeros(8)
    mutant = np.full(8, 3.0)

    trial = de_crossover(target, mutant, 0.05, np.random.default_rng(seed))

    assert np.any(trial != target)


def test_selection_is_greedy_and_accepts_ties():
    theta, trial = np.zeros(2), np.ones(2)

    kept, energy, accepted = de_select(-1.0, -0.5, theta, trial)
    assert (kept.tolist(), energy, accepted) == ([0.0, 0.0], -1.0, False)

    taken, energy, accepted = de_select(-1.0, -1.0, theta, trial)
    assert (taken.tolist(), energy, accepted) == ([1.0, 1.0], -1.0, True)

    with pytest.raises(NonFiniteEnergyError):
        de_select(-1.0, float("nan"), theta, trial)


def test_best_index_prefers_lowest_index_on_ties():
    assert best_index([-1.0, -2.0, -2.0, 0.0]) == 1


def test_initial_population_starts_at_zero():
    config = DEConfig(master_seed=11)

    first = initial_population(config, 5, StreamFactory(11))
    second = initial_population(config, 5, StreamFactory(11))

    assert len(first) == 4
    assert first[0].theta.tolist() == [0.0] * 5
    assert all(np.any(member.theta != 0) for member in first[1:])
    assert [m.theta.tolist() for m in first] == [m.theta.tolist() for m in second]
    assert [m.population for m in first] == [0, 1, 2, 3]


@pytest.mark.parametrize(
    "overrides",
    [{"n_pop": 3}, {"Cr": 0.0}, {"Cr": 1.5}, {"generations": 0}, {"master_seed": -1}, {"F": math.inf}],
)
def test_de_config_validation(overrides):
    with pytest.raises(ValueError):
        DEConfig(**overrides)


def test_stream_factory_hands_each_key_out_once():
    streams = StreamFactory(42)

    first = streams.generator(3, 1, Purpose.SAMPLE).random()
    other = streams.generator(3, 2, Purpose.SAMPLE).random()

    assert first != other
    assert first == StreamFactory(42).generator(3, 1, Purpose.SAMPLE).random()
    assert streams.issued() == 2
    with pytest.raises(RuntimeError):
        streams.seed(3, 1, Purpose.SAMPLE)


def test_streams_do_not_collide_across_keys():
    streams = StreamFactory(0)

    draws = {
        int(streams.generator(g, i, purpose).integers(2**63))
        for g in range(20)
        for i in range(4)
        for purpose in Purpose
    }

    assert len(draws) == 20 * 4 * len(Purpose)


# ----------------------------------------------------------------------
# Sampling and recovery
# ----------------------------------------------------------------------
def test_noiseless_sampling_stays_in_sector():
    spec = hubbard_spec(6)

    sample = build_sample(spec)

    assert sample.retained == sample.shots == 2000
    assert sample.raw.total == 2000
    for row in sample.raw.rows:
        assert popcount(row & 0b111111) == 3
        assert popcount(row >> 6) == 3


def test_sampling_is_deterministic_in_seed():
    spec = hubbard_spec(6)

    first = build_sample(spec, seed=5, bitflip=0.05, retention=0.469)
    second = build_sample(spec, seed=5, bitflip=0.05, retention=0.469)
    other = build_sample(spec, seed=6, bitflip=0.05, retention=0.469)

    assert first == second
    assert first.raw != other.raw


def test_sampler_retention_matches_model():
    sample = build_sample(hubbard_spec(4), seed=9, retention=0.469, shots=50_000)

    assert sample.retention == pytest.approx(0.469, abs=0.01)
    assert sample.raw.total == sample.retained


def test_sampler_rejects_empty_sector_and_bad_model():
    spec = hubbard_spec(2)

    with pytest.raises(SubspaceError):
        sample_bitstrings(
            [0.0, 0.0, 0.0],
            SamplerModel(shots=10),
            0,
            n_orb=2,
            n_alpha=3,
            n_beta=1,
            orbital_energies=spec.orbital_energies,
        )
    with pytest.raises(ValueError):
        SamplerModel(bitflip=1.5)
    assert SamplerModel().dimension(6) == 11


def test_recover_sector_flips_lowest_prior_first():
    # orbitals 1, 2 and 3 occupied; orbital 2 has the lowest prior
    assert recover_sector(0b1110, 2, [0.9, 0.9, 0.1, 0.5]) == 0b1010
    # missing electron goes to the empty orbital with the highest prior
    assert recover_sector(0b0001, 2, [0.9, 0.2, 0.7, 0.7]) == 0b0101
    assert recover_sector(0b0110, 2, [0.0, 0.0, 0.0, 0.0]) == 0b0110


def test_recovery_merges_repaired_strings():
    raw = BitstringSet(4, (0b0101, 0b0111), (3, 2))

    recovered = recover_configurations(raw, 1, 1, rhf_prior(2, 1, 1))

    assert recovered == BitstringSet(4, (0b0101,), (5,))


def test_recovery_is_identity_on_correct_strings():
    sample = build_sample(hubbard_spec(6))

    recovered = recover_configurations(sample.raw, 3, 3, rhf_prior(6, 3, 3))

    assert recovered == sample.raw


def test_recovery_validates_prior():
    raw = BitstringSet(4, (0b0101,))

    with pytest.raises(ValueError):
        recover_configurations(raw, 1, 1, [0.5, 0.5])
    with pytest.raises(ValueError):
        recover_configurations(raw, 1, 1, [1.5, 0.0, 0.0, 0.0])


def test_split_spin_sectors_deduplicates():
    chi = BitstringSet(12, (0b000111_000111, 0b000111_000111, 0b001011_000111), (1, 2, 1))

    alphas, betas = split_spin_sectors(chi)

    assert alphas.rows == (0b000111,)
    assert betas.rows == (0b000111, 0b001011)
    assert alphas.num_bits == betas.num_bits == 6
    with pytest.raises(SubspaceError):
        split_spin_sectors(BitstringSet(5, (1,)))


# ----------------------------------------------------------------------
# Subspace construction
# ----------------------------------------------------------------------
def test_carryover_determinants_come_first():
    alphas = BitstringSet(3, tuple(sector_strings(3, 1)))
    carryover = BitstringSet(3, (0b001, 0b010))

    basis = build_subspace(alphas, alphas, carryover, 6, np.random.default_rng(0))
    exact = build_subspace(alphas, alphas, carryover, 4, np.random.default_rng(0))

    expected = [Determinant(a, b) for a in (0b001, 0b010) for b in (0b001, 0b010)]
    assert basis[:4] == expected
    assert len(basis) == 6 == len(set(basis))
    assert exact == expected
    with pytest.raises(SubspaceError):
        build_subspace(alphas, alphas, carryover, 3, np.random.default_rng(0))


def test_smaller_subspace_is_prefix_of_larger():
    alphas = BitstringSet(6, tuple(sector_strings(6, 3)))
    bases = {
        d_max: build_subspace(alphas, alphas, None, d_max, np.random.default_rng(21))
        for d_max in (10, 57, 200)
    }

    assert bases[57][:10] == bases[10]
    assert bases[200][:57] == bases[57]
    assert len(bases[200]) == 200


def test_subspace_needs_some_strings():
    empty = BitstringSet(3, ())

    with pytest.raises(SubspaceError):
        build_subspace(empty, BitstringSet(3, (0b001,)), None, 10, np.random.default_rng(0))


def test_carryover_selection_ranks_by_weight_then_string():
    alphas = sector_strings(5, 2)
    uniform = build_result([Determinant(alpha, 0b00011) for alpha in alphas], np.ones(10))
    single = build_result([Determinant(0b011, 0b011)], [1.0])
    floor = build_result(
        [Determinant(0b01, 0b01), Determinant(0b10, 0b10)], [1.0, 1e-4]
    )

    assert select_carryover(uniform, 4, n_orb=5).rows == tuple(alphas[:4])
    assert select_carryover(single, n_orb=3).rows == (0b011,)
    assert select_carryover(floor, 4, 1e-6, n_orb=2).rows == (0b01,)
    assert set(select_carryover(uniform, 256, n_orb=5).rows) <= {det.alpha for det in uniform.basis}


def test_subspace_result_requires_normalized_amplitudes():
    with pytest.raises(SubspaceError):
        SubspaceResult(0.0, np.array([1.0, 1.0]), [Determinant(1, 1), Determinant(2, 2)])
    with pytest.raises(SubspaceError):
        SubspaceResult(0.0, np.array([1.0]), [Determinant(1, 1), Determinant(2, 2)])


# ----------------------------------------------------------------------
# Hamiltonian matrix and eigensolver
# ----------------------------------------------------------------------
@pytest.mark.parametrize("n_orb,n_alpha,n_beta", [(2, 1, 1), (3, 2, 1), (3, 1, 1), (4, 2, 2), (4, 3, 1)])
def test_slater_condon_matches_operator_algebra(n_orb, n_alpha, n_beta):
    spec = random_spec(n_orb, n_alpha, n_beta, seed=n_orb * 10 + n_alpha)
    basis = full_sector_basis(n_orb, n_alpha, n_beta)
    shuffled = [basis[k] for k in np.random.default_rng(n_orb).permutation(len(basis))]

    matrix = build_subspace_hamiltonian(shuffled, spec)

    assert sp.issparse(matrix)
    assert (matrix != matrix.T).nnz == 0
    assert matrix.toarray() == pytest.approx(oracles.oracle_subspace_matrix(shuffled, spec), abs=1e-10)


def test_one_electron_diagonal_is_sum_of_occupied_levels():
    h = np.diag([-1.0, -0.5, 0.25])
    spec = HamiltonianSpec(3, 2, 2, 0.5, h, np.zeros((3, 3, 3, 3)))
    rhf = Determinant(0b011, 0b011)

    matrix = build_subspace_hamiltonian([rhf], spec).toarray()

    assert matrix[0, 0] == pytest.approx(2 * (-1.0 - 0.5) + 0.5)
    assert determinant_energy(rhf, spec) == pytest.approx(matrix[0, 0])


def test_hamiltonian_rejects_foreign_determinants():
    spec = hubbard_spec(2)

    with pytest.raises(SubspaceError):
        build_subspace_hamiltonian([Determinant(0b11, 0b01)], spec)
    with pytest.raises(SubspaceError):
        build_subspace_hamiltonian([Determinant(0b100, 0b01)], spec)


def test_two_site_hubbard_ground_energy():
    assert oracles.exact_ground_energy(hubbard_spec(2)) == pytest.approx(2 - 2 * math.sqrt(2), abs=1e-10)


def test_hubbard_chain_orbitals_are_energy_ordered():
    spec = toy_spec("hubbard6")

    assert (spec.n_orb, spec.n_alpha, spec.n_beta) == (6, 3, 3)
    assert spec.closed_shell
    assert np.all(np.diff(spec.orbital_energies) >= 0)
    with pytest.raises(HamiltonianError):
        toy_spec("benzene")
    with pytest.raises(HamiltonianError):
        hubbard_spec(1)


def test_single_element_matrix_needs_no_iteration():
    energy, vector = ground_state(np.array([[-3.5]]))

    assert energy == -3.5
    assert vector.tolist() == [1.0]


def test_davidson_matches_dense_solver():
    rng = np.random.default_rng(12)
    noise = rng.normal(0.0, 0.1, size=(500, 500))
    matrix = np.diag(np.sort(rng.uniform(-5.0, 5.0, 500))) + (noise + noise.T) / 2

    energy, vector = ground_state(matrix)

    assert energy == pytest.approx(oracles.dense_ground_energy(matrix), abs=1e-8)
    assert np.linalg.norm(vector) == pytest.approx(1.0)
    assert np.linalg.norm(matrix @ vector - energy * vector) <= 1e-7
    assert vector[np.flatnonzero(np.abs(vector) > 1e-12)[0]] > 0


def test_davidson_reports_best_residual_on_failure():
    rng = np.random.default_rng(13)
    noise = rng.normal(0.0, 0.5, size=(40, 40))
    matrix = np.diag(np.arange(40.0)) + (noise + noise.T) / 2

    with pytest.raises(DavidsonConvergenceError) as excinfo:
        ground_state(matrix, tol=1e-14, max_iter=1, dense_limit=0)

    assert excinfo.value.iterations == 1
    assert excinfo.value.residual > 1e-14
    with pytest.raises(ValueError):
        ground_state(np.zeros((2, 3)))


def test_nested_subspaces_lower_the_energy():
    spec = hubbard_spec(6)
    exact = oracles.exact_ground_energy(spec)
    basis = full_sector_basis(6, 3, 3)
    order = [basis[k] for k in np.random.default_rng(5).permutation(len(basis))]

    energies = [solve_subspace(order[:size], spec).energy for size in (20, 80, 300, 400)]

    assert all(later <= earlier + 1e-10 for earlier, later in zip(energies, energies[1:]))
    assert energies[-1] == pytest.approx(exact, abs=1e-8)
    assert min(energies) >= exact - 1e-9


# ----------------------------------------------------------------------
# FCIDUMP
# ----------------------------------------------------------------------
def test_parse_fcidump_fills_symmetric_integrals():
    spec = parse_fcidump(H2_FCIDUMP)

    assert (spec.n_orb, spec.n_alpha, spec.n_beta) == (2, 1, 1)
    assert spec.core_energy == pytest.approx(0.7137539936)
    assert spec.g[0, 0, 1, 1] == spec.g[1, 1, 0, 0] == pytest.approx(0.6636340479)
    assert spec.g[0, 1, 1, 0] == spec.g[1, 0, 0, 1] == pytest.approx(0.1812875334)
    assert oracles.exact_ground_energy(spec) == pytest.approx(-1.1373, abs=1e-3)


def test_fcidump_written_and_read_back(tmp_path: Path):
    spec = random_spec(4, 2, 2, seed=3)

    path = write_fcidump(spec, tmp_path / "nested" / "toy.fcidump")
    restored = read_fcidump(path)

    assert path.exists()
    assert restored.h == pytest.approx(spec.h, abs=1e-15)
    assert restored.g == pytest.approx(spec.g, abs=1e-15)
    assert restored.core_energy == spec.core_energy
    assert format_fcidump(restored) == format_fcidump(spec)


@pytest.mark.parametrize(
    "text",
    [
        " &FCI NORB=2,NELEC=2,\n 1.0 1 1 0 0\n",
        " &FCI NELEC=2 &END\n",
        " &FCI NORB=2,NELEC=3,MS2=0 &END\n",
        " &FCI NORB=2,NELEC=2 &END\n 1.0 1 1 0\n",
        " &FCI NORB=2,NELEC=2 &END\n 1.0 3 1 0 0\n",
        " &FCI NORB=2,NELEC=2 &END\n abc 1 1 0 0\n",
    ],
)
def test_malformed_fcidump_is_rejected(text):
    with pytest.raises(FcidumpFormatError):
        parse_fcidump(text)


def test_hamiltonian_spec_checks_symmetry():
    g = np.zeros((2, 2, 2, 2))
    bad_g = g.copy()
    bad_g[0, 1, 0, 0] = 1.0

    with pytest.raises(HamiltonianError):
        HamiltonianSpec(2, 1, 1, 0.0, np.array([[0.0, 1.0], [0.0, 0.0]]), g)
    with pytest.raises(HamiltonianError):
        HamiltonianSpec(2, 1, 1, 0.0, np.zeros((2, 2)), bad_g)
    with pytest.raises(HamiltonianError):
        HamiltonianSpec(2, 3, 1, 0.0, np.zeros((2, 2)), g)
