import math

import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from collapselab.errors import GridAdequacyError, StepConditionError, ZeroNormError
from collapselab.grw import (
    Grid,
    GrwParams,
    Propagator,
    apply_jump,
    evolve_trajectory,
    free_hamiltonian,
    gaussian_packet,
    gaussian_template,
    jump_density,
    jump_mass,
    localization_operator,
    position_distribution,
    position_mean,
    sample_jump_times,
    translate_state,
    two_peak_state,
    window_mass,
)
from collapselab.hilbert import StateVector, SubsystemShape, partial_trace, tensor_product
from collapselab.rng import stream

GRID = Grid(64, 1.0)
PARAMS = GrwParams(alpha=0.0625, lam=1.0, mass=10.0)  # localization width 4 spacings

WIDE_GRID = Grid(128, 1.0)
WIDE_PARAMS = GrwParams(alpha=0.01, lam=1.0)  # localization width 10 spacings


def direct_jump_table(psi, grid, alpha):
    """Direct-summation oracle for the jump law of a single-factor state."""
    w = np.abs(psi.amplitudes) ** 2
    m = grid.points
    table = np.zeros(m)
    for k in range(m):
        for q in range(m):
            d = min(abs(q - k), m - abs(q - k)) * grid.spacing
            g = (alpha / math.pi) ** 0.25 * math.exp(-0.5 * alpha * d * d)
            table[k] += g * g * w[q]
    return table * grid.spacing


# -- localization operator ------------------------------------------------------


def test_localization_entry_at_center():
    op = localization_operator(GRID, PARAMS.alpha, 10.0)
    assert abs(op.entries[10, 10] - (PARAMS.alpha / math.pi) ** 0.25) <= 1e-15


def test_localization_completeness_by_direct_summation():
    # oracle: independent double loop over centres and positions
    total = np.zeros(GRID.points)
    for k in range(GRID.points):
        diag = np.real(np.diag(localization_operator(GRID, PARAMS.alpha, float(k)).entries))
        total += diag * diag * GRID.spacing
    assert np.max(np.abs(total - 1.0)) <= 1e-6
    assert PARAMS.alpha * GRID.spacing**2 <= 0.1
    assert GRID.length >= 10.0 / math.sqrt(PARAMS.alpha)


def test_localization_symmetric_about_center():
    op = localization_operator(GRID, PARAMS.alpha, 20.0)
    diag = np.real(np.diag(op.entries))
    for offset in range(1, 30):
        assert abs(diag[(20 + offset) % 64] - diag[(20 - offset) % 64]) <= 1e-15


def test_localization_center_off_grid_rejected():
    with pytest.raises(ValueError):
        localization_operator(GRID, PARAMS.alpha, 10.3)


# -- jump density ----------------------------------------------------------------


def test_jump_density_peaked_state():
    psi = gaussian_packet(WIDE_GRID, 40.0, 1.0)  # width 1 << 10
    table = jump_density(psi, 0, WIDE_GRID, WIDE_PARAMS)
    oracle = direct_jump_table(psi, WIDE_GRID, WIDE_PARAMS.alpha)
    np.testing.assert_allclose(table, oracle / oracle.sum(), atol=1e-12)
    mean = float(np.dot(table, WIDE_GRID.coordinates()))
    assert abs(mean - 40.0) <= WIDE_GRID.spacing
    assert table[40] == table.max()


def test_jump_density_two_peaks_split_half():
    psi = two_peak_state(WIDE_GRID, (30.0, 90.0), (0.5, 0.5), 1.5)
    table = jump_density(psi, 0, WIDE_GRID, WIDE_PARAMS)
    oracle = direct_jump_table(psi, WIDE_GRID, WIDE_PARAMS.alpha)
    np.testing.assert_allclose(table, oracle / oracle.sum(), atol=1e-12)
    x = WIDE_GRID.coordinates()
    near_1 = table[np.abs(x - 30.0) <= 30.0].sum()
    assert abs(near_1 - 0.5) <= 1e-3


def test_jump_density_uniform_state():
    amps = np.ones(GRID.points, dtype=complex) / math.sqrt(GRID.points)
    psi = StateVector(SubsystemShape((GRID.points,)), amps)
    table = jump_density(psi, 0, GRID, PARAMS)
    assert np.max(np.abs(table - 1.0 / GRID.points)) <= 1e-9


def test_jump_mass_close_to_one_on_adequate_grid():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.5, 0.5), 2.0)
    assert abs(jump_mass(psi, 0, GRID, PARAMS) - 1.0) <= 1e-6


def test_jump_density_inadequate_grid_rejected():
    grid = Grid(8, 1.0)
    psi = gaussian_packet(grid, 4.0, 1.0)
    with pytest.raises(GridAdequacyError):
        jump_density(psi, 0, grid, GrwParams(alpha=0.001, lam=1.0))


def test_equivariant_and_fast_tables_agree():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.6, 0.4), 2.0)
    fast = jump_density(psi, 0, GRID, PARAMS)
    slow = jump_density(psi, 0, GRID, PARAMS, equivariant=True)
    np.testing.assert_allclose(fast, slow, atol=1e-14)


# -- applying jumps ---------------------------------------------------------------


def test_jump_on_narrow_packet_barely_disturbs_it():
    sigma = 1.0
    psi = gaussian_packet(WIDE_GRID, 64.0, sigma)
    out = apply_jump(psi, 0, 64.0, WIDE_GRID, WIDE_PARAMS)
    fidelity = abs(np.vdot(psi.amplitudes, out.amplitudes)) ** 2
    assert fidelity >= 1.0 - WIDE_PARAMS.alpha * sigma**2  # Gaussian product bound
    assert abs(out.norm() - 1.0) <= 1e-12


def test_jump_selects_branch_of_distant_superposition():
    # separation 48 >= 10 / sqrt(alpha) = 40
    grid = Grid(128, 1.0)
    params = GrwParams(alpha=0.0625, lam=1.0)
    psi = two_peak_state(grid, (32.0, 80.0), (0.5, 0.5), 2.0)
    out = apply_jump(psi, 0, 32.0, grid, params)
    assert window_mass(out, 0, grid, 32.0, 24.0) >= 1.0 - 1e-6


def test_jump_on_product_state_leaves_other_factor_unchanged():
    ga = gaussian_packet(Grid(16, 1.0), 8.0, 1.5)
    gb = gaussian_packet(Grid(16, 1.0), 4.0, 1.5)
    psi = tensor_product(ga, gb)
    out = apply_jump(psi, 0, 8.0, Grid(16, 1.0), GrwParams(alpha=0.25, lam=1.0))
    rho_b_before = partial_trace(psi.density_matrix(), keep=(1,))
    rho_b_after = partial_trace(out.density_matrix(), keep=(1,))
    np.testing.assert_allclose(rho_b_after.entries, rho_b_before.entries, atol=1e-12)


def test_jump_zero_probability_center_rejected():
    amps = np.zeros(GRID.points, dtype=complex)
    amps[10] = 1.0
    psi = StateVector(SubsystemShape((GRID.points,)), amps)
    with pytest.raises(ZeroNormError):
        apply_jump(psi, 0, float((10 + 32) % 64), GRID, GrwParams(alpha=4.0, lam=1.0))


# -- jump times --------------------------------------------------------------------


def test_zero_rate_gives_no_jumps():
    assert sample_jump_times(0.0, 3, 10.0, stream(0)) == []


def test_poisson_mean_count():
    rng = stream(100)
    runs = 10_000
    counts = [len(sample_jump_times(2.0, 1, 5.0, rng)) for _ in range(runs)]
    mean = np.mean(counts)
    sigma = math.sqrt(10.0) / math.sqrt(runs)
    assert abs(mean - 10.0) <= 3 * sigma


def test_merged_two_particle_counts_are_poisson():
    rng = stream(101)
    lam, horizon, runs = 1.5, 2.0, 4000
    counts = np.array([len(sample_jump_times(lam, 2, horizon, rng)) for _ in range(runs)])
    mu = 2 * lam * horizon
    top = int(counts.max())
    observed = np.bincount(counts, minlength=top + 1).astype(float)
    expected = scipy.stats.poisson.pmf(np.arange(top + 1), mu) * runs
    # fold the tail into the last bin so expectations stay > ~5
    cut = int(scipy.stats.poisson.ppf(0.999, mu))
    obs = np.append(observed[:cut], observed[cut:].sum())
    exp = np.append(expected[:cut], runs - expected[:cut].sum())
    _, p = scipy.stats.chisquare(obs, exp)
    assert p >= 0.01


def test_jump_times_sorted_within_horizon():
    events = sample_jump_times(3.0, 4, 2.0, stream(102))
    times = [t for t, _ in events]
    assert times == sorted(times)
    assert all(0.0 < t < 2.0 for t in times)
    assert all(0 <= p < 4 for _, p in events)


# -- propagation -------------------------------------------------------------------


def test_free_hamiltonian_is_hermitian_circulant():
    h = free_hamiltonian(GRID, mass=10.0)
    assert np.max(np.abs(h.entries - h.entries.conj().T)) == 0.0
    col = h.entries[:, 0]
    for q in range(GRID.points):
        np.testing.assert_allclose(h.entries[:, q], np.roll(col, q), atol=0)


def test_propagator_matches_expm_oracle():
    h = free_hamiltonian(GRID, mass=10.0)
    prop = Propagator(h, hbar=1.0)
    rng = np.random.default_rng(0)
    psi = (rng.normal(size=64) + 1j * rng.normal(size=64))
    psi /= np.linalg.norm(psi)
    for tau in (0.013, 0.4, 2.7):
        expected = scipy.linalg.expm(-1j * h.entries * tau) @ psi
        got = prop.advance(psi, tau)
        assert np.max(np.abs(got - expected)) <= 1e-9
        assert abs(np.linalg.norm(got) - 1.0) <= 1e-12


# -- trajectories -------------------------------------------------------------------


def test_trajectory_no_dynamics_is_constant():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.5, 0.5), 2.0)
    traj = evolve_trajectory(
        psi, None, GrwParams(alpha=PARAMS.alpha, lam=0.0), {0: GRID}, 1.0, 0.1, stream(1)
    )
    assert traj.jumps == ()
    for state in traj.states:
        np.testing.assert_allclose(state.amplitudes, psi.amplitudes, atol=0)


def test_trajectory_unitarity_with_hamiltonian():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.5, 0.5), 2.0)
    h = free_hamiltonian(GRID, mass=10.0)
    traj = evolve_trajectory(
        psi, h, GrwParams(alpha=PARAMS.alpha, lam=0.0, mass=10.0),
        {0: GRID}, 2.0, 0.02, stream(2),
    )
    for state in traj.states:
        assert abs(state.norm() - 1.0) <= 1e-10


def test_trajectory_norms_and_jump_record():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.6, 0.4), 2.0)
    traj = evolve_trajectory(psi, None, PARAMS, {0: GRID}, 5.0, 0.05, stream(3))
    for state in traj.states:
        assert abs(state.norm() - 1.0) <= 1e-9
    jump_times = [j.time for j in traj.jumps]
    assert jump_times == sorted(jump_times)
    assert all(0.0 < t < 5.0 for t in jump_times)
    for j in traj.jumps:
        GRID.index_of(j.center)  # centres are on the grid


def test_step_condition_enforced():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.5, 0.5), 2.0)
    h = free_hamiltonian(GRID, mass=1.0)  # max energy ~ pi^2/2
    with pytest.raises(StepConditionError):
        evolve_trajectory(psi, h, GrwParams(alpha=0.0625, lam=0.0), {0: GRID}, 1.0, 0.05, stream(4))


def test_localization_statistics_match_born_weights():
    # lam*T = 20 drives essentially every run into one branch
    weights = (0.6, 0.4)
    psi = two_peak_state(GRID, (24.0, 40.0), weights, 2.0)
    params = GrwParams(alpha=0.0625, lam=2.0)
    runs = 200
    picked = []
    for i in range(runs):
        traj = evolve_trajectory(
            psi, None, params, {0: GRID}, 10.0, 0.1, stream(200, i), sample_times=[10.0]
        )
        final = traj.states[-1]
        m1 = window_mass(final, 0, GRID, 24.0, 8.0)
        m2 = window_mass(final, 0, GRID, 40.0, 8.0)
        assert max(m1, m2) >= 0.99
        picked.append(0 if m1 > m2 else 1)
    freq_1 = picked.count(0) / runs
    sigma = math.sqrt(weights[0] * weights[1] / runs)
    assert abs(freq_1 - weights[0]) <= 3 * sigma


def test_seed_matched_translation_covariance_is_exact():
    psi = two_peak_state(GRID, (24.0, 40.0), (0.6, 0.4), 2.0)
    h = free_hamiltonian(GRID, mass=10.0)
    shift = 9
    times = [0.7, 1.4, 2.0]
    base = evolve_trajectory(
        psi, h, PARAMS, {0: GRID}, 2.0, 0.02, stream(5, 0),
        sample_times=times, equivariant=True,
    )
    translated = evolve_trajectory(
        translate_state(psi, 0, shift), h, PARAMS, {0: GRID}, 2.0, 0.02, stream(5, 0),
        sample_times=times, equivariant=True,
    )
    assert len(base.jumps) == len(translated.jumps) > 0
    for j1, j2 in zip(base.jumps, translated.jumps):
        assert j1.time == j2.time
        assert (GRID.index_of(j2.center) - GRID.index_of(j1.center)) % GRID.points == shift
    for s1, s2 in zip(base.states, translated.states):
        assert np.array_equal(np.roll(s1.amplitudes, shift), s2.amplitudes)


def test_rate_factors_scale_jump_counts():
    pointer = gaussian_packet(GRID, 16.0, 1.0)
    params = GrwParams(alpha=0.25, lam=0.2)
    counts = []
    for i in range(50):
        traj = evolve_trajectory(
            pointer, None, params, {0: GRID}, 5.0, 0.1, stream(6, i),
            sample_times=[5.0], rate_factors={0: 25.0},
        )
        counts.append(len(traj.jumps))
    mean = np.mean(counts)  # expect 0.2 * 25 * 5 = 25
    assert abs(mean - 25.0) <= 3 * math.sqrt(25.0 / 50)


def test_position_helpers():
    psi = gaussian_packet(GRID, 20.0, 2.0)
    w = position_distribution(psi, 0, GRID)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert abs(position_mean(psi, 0, GRID) - 20.0) <= 0.05
    assert window_mass(psi, 0, GRID, 20.0, 10.0) >= 1.0 - 1e-6


def test_params_validation():
    with pytest.raises(ValueError):
        GrwParams(alpha=0.0, lam=1.0)
    with pytest.raises(ValueError):
        GrwParams(alpha=1.0, lam=-0.1)
    with pytest.raises(ValueError):
        GrwParams(alpha=1.0, lam=0.0, hbar=0.0)
    with pytest.raises(ValueError):
        GrwParams(alpha=1.0, lam=0.0, mass=-1.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, 1.0)
    with pytest.raises(ValueError):
        Grid(16, 0.0)
