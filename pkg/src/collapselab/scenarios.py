"""End-to-end experiments: position EPR with a collapsing pointer, the
singlet measurement story, and trajectory-vs-oracle ensemble checks.

Every scenario is driven by a master seed; trial i uses the derived
stream (master_seed, i), so reports are bit-identical no matter how
trials are distributed over workers.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InvariantViolationError
from .grw import (
    Grid,
    GrwParams,
    Propagator,
    evolve_trajectory,
    free_hamiltonian,
    gaussian_packet,
    position_mean,
    two_peak_state,
    window_mass,
)
from .hilbert import StateVector, SubsystemShape, partial_trace, tensor_product
from .lindblad import LindbladConfig, ensemble_compare, integrate_with_snapshots
from .report import ExperimentReport
from .rng import stream
from .spin import (
    OrthoTriple,
    joint_probability_table,
    singlet_state,
    triple_measurement,
    zero_ket,
)

POINTER_BRANCH_THRESHOLD = 0.99  # below this on both branches a trial is inconclusive


def _map_indexed(fn: Callable[[int], dict], n: int, workers: int) -> list[dict]:
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        chunk = max(1, n // (workers * 8))
        return list(ex.map(fn, range(n), chunksize=chunk))


# -- position EPR with a collapsing pointer ----------------------------------


@dataclass(frozen=True)
class EprConfig:
    """Two entangled region qubits plus one pointer on a periodic grid.

    Particle a occupies region delta1 (qubit 0) or delta3 (qubit 1);
    particle b is correlated into delta2 or delta4.  The measurement
    couples a's region to the pointer by a conditional displacement of
    ``coupling_sites`` grid sites (a von Neumann interaction integrated
    exactly); localization jumps then act on the pointer alone at the
    amplified rate ``amplification * base_rate``.
    """

    delta1: float = -30.0
    delta2: float = -10.0
    delta3: float = 10.0
    delta4: float = 30.0
    packet_width: float = 1.0
    pointer_points: int = 64
    pointer_spacing: float = 1.0
    pointer_alpha: float = 0.25
    base_rate: float = 0.2
    amplification: int = 25
    coupling_sites: int = 24
    horizon: float = 5.0
    dt: float = 0.05
    trials: int = 1000
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        regions = (self.delta1, self.delta2, self.delta3, self.delta4)
        for i in range(4):
            for j in range(i + 1, 4):
                if abs(regions[i] - regions[j]) < 10.0 * self.packet_width:
                    raise ConfigError(
                        "regions must be pairwise separated by at least 10 packet widths"
                    )
        if self.amplification < 1:
            raise ConfigError("amplification must be at least 1")
        if self.amplification * self.base_rate * self.horizon < 20.0:
            raise ConfigError(
                "amplification * lambda * horizon must be >= 20 so the pointer "
                "collapses within the run"
            )
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.coupling_sites:
            shift = abs(self.coupling_sites) * self.pointer_spacing
            length = self.pointer_points * self.pointer_spacing
            if shift < 10.0 / math.sqrt(self.pointer_alpha):
                raise ConfigError(
                    "pointer displacement must exceed 10 localization widths"
                )
            if shift < 10.0 * self.packet_width or shift > length / 2.0:
                raise ConfigError("pointer displacement must resolve the two packets")

    def to_dict(self) -> dict:
        return {
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "delta4": self.delta4,
            "packet_width": self.packet_width,
            "pointer_points": self.pointer_points,
            "pointer_spacing": self.pointer_spacing,
            "pointer_alpha": self.pointer_alpha,
            "lambda": self.base_rate,
            "amplification": self.amplification,
            "coupling_sites": self.coupling_sites,
            "horizon": self.horizon,
            "dt": self.dt,
            "trials": self.trials,
        }


def _epr_initial_state(config: EprConfig) -> tuple[StateVector, Grid]:
    grid = Grid(config.pointer_points, config.pointer_spacing)
    ready = grid.origin + (config.pointer_points // 4) * config.pointer_spacing
    pointer = gaussian_packet(grid, ready, config.packet_width)
    region = StateVector(
        SubsystemShape((2, 2)),
        np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / math.sqrt(2.0),
    )
    psi = tensor_product(region, pointer)
    if config.coupling_sites:
        arr = np.array(psi.reshaped())
        arr[1] = np.roll(arr[1], config.coupling_sites, axis=-1)
        psi = StateVector(psi.shape, arr.reshape(-1))
    return psi, grid


def _epr_trial(config: EprConfig, index: int) -> dict:
    rng = stream(config.master_seed, index)
    psi, grid = _epr_initial_state(config)
    params = GrwParams(alpha=config.pointer_alpha, lam=config.base_rate)
    traj = evolve_trajectory(
        psi,
        None,
        params,
        {2: grid},
        config.horizon,
        config.dt,
        rng,
        sample_times=[config.horizon],
        rate_factors={2: float(config.amplification)},
        seed_label=(config.master_seed, index),
    )
    final = traj.states[-1]
    weights = np.abs(final.reshaped()) ** 2
    w1 = float(weights[0].sum())
    w3 = float(weights[1].sum())
    conclusive = max(w1, w3) >= POINTER_BRANCH_THRESHOLD
    outcome_a = None
    if conclusive:
        outcome_a = "delta1" if w1 > w3 else "delta3"
    prob_b_delta2 = float(weights[:, 0, :].sum())
    outcome_b = "delta2" if rng.random() < prob_b_delta2 else "delta4"
    return {
        "trial": index,
        "conclusive": conclusive,
        "outcome_a": outcome_a,
        "outcome_b": outcome_b,
        "weight_delta1": w1,
        "weight_delta3": w3,
        "prob_b_delta2": prob_b_delta2,
        "n_jumps": len(traj.jumps),
        "pointer_mean": position_mean(final, 2, grid),
    }


def _epr_oracle_b_marginal(config: EprConfig) -> tuple[float, float]:
    """Particle-b region populations from the deterministic ensemble law,
    on the identical discretization (pointer jumps at the amplified rate)."""
    psi, grid = _epr_initial_state(config)
    params = GrwParams(
        alpha=config.pointer_alpha, lam=config.base_rate * config.amplification
    )
    lconf = LindbladConfig(dt=min(config.dt, 0.05 / params.lam), horizon=config.horizon)
    rho_t, _ = integrate_with_snapshots(psi.density_matrix(), None, params, {2: grid}, lconf)
    rho_b = partial_trace(rho_t, keep=(1,))
    diag = np.real(np.diag(rho_b.entries))
    return float(diag[0]), float(diag[1])


def run_epr_position(config: EprConfig) -> ExperimentReport:
    """Measure particle a's region via the collapsing pointer; record the
    selected branch and the conditional location of particle b."""
    t0 = time.perf_counter()
    trials = _map_indexed(partial(_epr_trial, config), config.trials, config.workers)

    conclusive = [t for t in trials if t["conclusive"]]
    n_c = len(conclusive)
    a1 = sum(1 for t in conclusive if t["outcome_a"] == "delta1")
    b2 = sum(1 for t in trials if t["outcome_b"] == "delta2")
    cond_12 = [t for t in conclusive if t["outcome_a"] == "delta1"]
    cond_34 = [t for t in conclusive if t["outcome_a"] == "delta3"]
    good_12 = sum(1 for t in cond_12 if t["outcome_b"] == "delta2")
    good_34 = sum(1 for t in cond_34 if t["outcome_b"] == "delta4")
    oracle_b = _epr_oracle_b_marginal(config)

    aggregates = {
        "trials": config.trials,
        "conclusive_trials": n_c,
        "inconclusive_trials": config.trials - n_c,
        "freq_a_delta1": a1 / n_c if n_c else 0.0,
        "freq_a_delta3": (n_c - a1) / n_c if n_c else 0.0,
        "freq_b_delta2": b2 / config.trials,
        "freq_b_delta4": (config.trials - b2) / config.trials,
        "cond_b_delta2_given_a_delta1": good_12 / len(cond_12) if cond_12 else 0.0,
        "cond_b_delta4_given_a_delta3": good_34 / len(cond_34) if cond_34 else 0.0,
        "oracle_b_marginal_delta2": oracle_b[0],
        "oracle_b_marginal_delta4": oracle_b[1],
        "mean_jumps": float(np.mean([t["n_jumps"] for t in trials])),
    }
    return ExperimentReport(
        scenario="epr_position",
        config=config.to_dict(),
        master_seed=config.master_seed,
        aggregates=aggregates,
        trials=trials,
        wall_time_s=time.perf_counter() - t0,
    )


# -- singlet pair with spacelike ordering ------------------------------------


def _triple_as_lists(triple: OrthoTriple | None) -> list[list[float]] | None:
    if triple is None:
        return None
    return [list(d.components) for d in triple.axes]


def _singlet_trial(
    triple_b: OrthoTriple,
    triple_a: OrthoTriple | None,
    measure_b: bool,
    master_seed: int,
    index: int,
) -> dict:
    rng = stream(master_seed, index)
    psi = singlet_state()
    rec: dict = {"trial": index}
    if measure_b:
        out_b, psi = triple_measurement(psi, 1, triple_b, rng)
        direction = triple_b.axes[out_b.zero_axis]
        expected = np.kron(zero_ket(direction), zero_ket(direction))
        fidelity = abs(np.vdot(expected, psi.amplitudes)) ** 2
        if abs(fidelity - 1.0) > 1e-12:
            raise InvariantViolationError(
                f"post-measurement state is not the expected product (fid {fidelity})"
            )
        rec["b_values"] = "".join(str(v) for v in out_b.values)
        rec["b_zero_axis"] = out_b.zero_axis
        rec["product_fidelity"] = fidelity
    if triple_a is not None:
        out_a, psi = triple_measurement(psi, 0, triple_a, rng)
        rec["a_values"] = "".join(str(v) for v in out_a.values)
        rec["a_zero_axis"] = out_a.zero_axis
        if measure_b:
            rec["agree_all_axes"] = rec["a_values"] == rec["b_values"]
    return rec


def run_singlet_spacetime(
    triple_b: OrthoTriple,
    triple_a: OrthoTriple | None,
    trials: int,
    seed: int,
    *,
    measure_b: bool = True,
    workers: int = 1,
) -> ExperimentReport:
    """B measures first (collapsing the pair to a product of zero kets),
    then A; with equal triples the outcomes agree axis by axis in every
    trial.  Disable ``measure_b`` for the no-B control used by the
    parameter-independence comparison."""
    t0 = time.perf_counter()
    rows = _map_indexed(
        partial(_singlet_trial, triple_b, triple_a, measure_b, seed), trials, workers
    )
    aggregates: dict = {"trials": trials}
    if measure_b:
        counts_b = [0, 0, 0]
        for r in rows:
            counts_b[r["b_zero_axis"]] += 1
        aggregates["freq_b_zero_axis"] = [c / trials for c in counts_b]
    if triple_a is not None:
        counts_a = [0, 0, 0]
        for r in rows:
            counts_a[r["a_zero_axis"]] += 1
        aggregates["freq_a_zero_axis"] = [c / trials for c in counts_a]
    if triple_a is not None and measure_b:
        joint = np.zeros((3, 3))
        agree = 0
        for r in rows:
            joint[r["a_zero_axis"], r["b_zero_axis"]] += 1
            agree += bool(r["agree_all_axes"])
        aggregates["joint_zero_axis_freq"] = (joint / trials).tolist()
        aggregates["agreement_frequency"] = agree / trials
        aggregates["exact_joint_table"] = joint_probability_table(triple_a, triple_b).tolist()
    return ExperimentReport(
        scenario="singlet_spacetime",
        config={
            "triple_a": _triple_as_lists(triple_a),
            "triple_b": _triple_as_lists(triple_b),
            "measure_b": measure_b,
            "trials": trials,
        },
        master_seed=seed,
        aggregates=aggregates,
        trials=rows,
        wall_time_s=time.perf_counter() - t0,
    )


# -- trajectory ensemble vs deterministic oracle ------------------------------


@dataclass(frozen=True)
class OracleComparisonConfig:
    """Grid, localization parameters and initial packet layout shared by
    the trajectory ensemble and the deterministic oracle."""

    grid_points: int = 64
    grid_spacing: float = 1.0
    alpha: float = 0.0625  # localization width = 4 grid spacings
    rate: float = 1.0
    hbar: float = 1.0
    mass: float = 10.0
    hamiltonian: str = "none"  # "none" or "free"
    peak_centers: tuple[float, ...] = (24.0, 40.0)
    peak_weights: tuple[float, ...] = (0.5, 0.5)
    packet_width: float = 2.0
    horizon: float = 5.0
    dt: float = 0.01
    checkpoints: int = 4
    record_trials: bool = False

    def __post_init__(self) -> None:
        if self.hamiltonian not in ("none", "free"):
            raise ConfigError("hamiltonian must be 'none' or 'free'")
        if len(self.peak_centers) != len(self.peak_weights) or not self.peak_centers:
            raise ConfigError("peak centers and weights must match and be non-empty")
        if abs(sum(self.peak_weights) - 1.0) > 1e-9:
            raise ConfigError("peak weights must sum to 1")
        if self.checkpoints < 1:
            raise ConfigError("need at least one checkpoint")

    def to_dict(self) -> dict:
        return {
            "grid_points": self.grid_points,
            "grid_spacing": self.grid_spacing,
            "alpha": self.alpha,
            "lambda": self.rate,
            "hbar": self.hbar,
            "mass": self.mass,
            "hamiltonian": self.hamiltonian,
            "peak_centers": list(self.peak_centers),
            "peak_weights": list(self.peak_weights),
            "packet_width": self.packet_width,
            "horizon": self.horizon,
            "dt": self.dt,
            "checkpoints": self.checkpoints,
        }

    def grid(self) -> Grid:
        return Grid(self.grid_points, self.grid_spacing)

    def params(self) -> GrwParams:
        return GrwParams(alpha=self.alpha, lam=self.rate, hbar=self.hbar, mass=self.mass)

    def initial_state(self) -> StateVector:
        return two_peak_state(
            self.grid(), self.peak_centers, self.peak_weights, self.packet_width
        )

    def sample_times(self) -> list[float]:
        return [self.horizon * (i + 1) / self.checkpoints for i in range(self.checkpoints)]


_PROPAGATOR_CACHE: dict = {}


def _oracle_propagator(config: OracleComparisonConfig) -> Propagator | None:
    if config.hamiltonian == "none":
        return None
    key = (config.grid_points, config.grid_spacing, config.mass, config.hbar)
    if key not in _PROPAGATOR_CACHE:
        _PROPAGATOR_CACHE[key] = Propagator(
            free_hamiltonian(config.grid(), config.mass, config.hbar), config.hbar
        )
    return _PROPAGATOR_CACHE[key]


def _comparison_trajectory(config: OracleComparisonConfig, master_seed: int, index: int):
    return evolve_trajectory(
        config.initial_state(),
        None,
        config.params(),
        {0: config.grid()},
        config.horizon,
        config.dt,
        stream(master_seed, index),
        sample_times=config.sample_times(),
        propagator=_oracle_propagator(config),
        seed_label=(master_seed, index),
    )


def run_oracle_comparison(
    config: OracleComparisonConfig,
    ensemble_size: int,
    master_seed: int,
    workers: int = 1,
) -> ExperimentReport:
    """K stochastic trajectories against the deterministic ensemble law,
    compared by trace distance at the checkpoints (threshold 5/sqrt K)."""
    if ensemble_size < 100:
        raise ConfigError("ensemble size must be at least 100")
    t0 = time.perf_counter()
    grid = config.grid()
    params = config.params()
    hamiltonian = (
        free_hamiltonian(grid, config.mass, config.hbar)
        if config.hamiltonian == "free"
        else None
    )
    times = config.sample_times()

    trajectories = _map_indexed(
        partial(_comparison_trajectory, config, master_seed), ensemble_size, workers
    )

    rho0 = config.initial_state().density_matrix()
    lconf = LindbladConfig(dt=config.dt, horizon=config.horizon)
    _, snapshots = integrate_with_snapshots(
        rho0, hamiltonian, params, {0: grid}, lconf, snapshot_times=times
    )

    comparisons = [ensemble_compare(trajectories, snapshots[t], t) for t in times]
    aggregates = {
        "ensemble_size": ensemble_size,
        "times": times,
        "distances": [c.distance for c in comparisons],
        "threshold": comparisons[0].threshold,
        "within_threshold": [bool(c.within_threshold) for c in comparisons],
        "mean_jumps": float(np.mean([len(t.jumps) for t in trajectories])),
    }
    rows = None
    if config.record_trials:
        rows = [
            {
                "trial": i,
                "n_jumps": len(t.jumps),
                "final_mean_position": position_mean(t.states[-1], 0, grid),
            }
            for i, t in enumerate(trajectories)
        ]
    return ExperimentReport(
        scenario="oracle_comparison",
        config=config.to_dict(),
        master_seed=master_seed,
        aggregates=aggregates,
        trials=rows,
        wall_time_s=time.perf_counter() - t0,
    )


# -- plain trajectory ensembles (no oracle) ----------------------------------


def run_grw_ensemble(
    config: OracleComparisonConfig,
    ensemble_size: int,
    master_seed: int,
    workers: int = 1,
) -> ExperimentReport:
    """Trajectory ensemble summary: jump counts, branch selection and
    single-peak localization statistics for a multi-packet start."""
    t0 = time.perf_counter()
    grid = config.grid()
    trials = _map_indexed(
        partial(_grw_trial, config, master_seed), ensemble_size, workers
    )
    branch_counts = [0] * len(config.peak_centers)
    localized = 0
    for t in trials:
        if t["branch"] >= 0:
            branch_counts[t["branch"]] += 1
            localized += 1
    aggregates = {
        "trajectories": ensemble_size,
        "localized_trajectories": localized,
        "localized_fraction": localized / ensemble_size,
        "branch_frequencies": [c / ensemble_size for c in branch_counts],
        "expected_branch_weights": list(config.peak_weights),
        "mean_jumps": float(np.mean([t["n_jumps"] for t in trials])),
    }
    return ExperimentReport(
        scenario="grw_run",
        config=config.to_dict(),
        master_seed=master_seed,
        aggregates=aggregates,
        trials=trials,
        wall_time_s=time.perf_counter() - t0,
    )


def _grw_trial(config: OracleComparisonConfig, master_seed: int, index: int) -> dict:
    grid = config.grid()
    traj = _comparison_trajectory(config, master_seed, index)
    final = traj.states[-1]
    halfwidth = min(
        abs(grid.min_image(a - b))
        for i, a in enumerate(config.peak_centers)
        for b in config.peak_centers[i + 1 :]
    ) / 2.0 if len(config.peak_centers) > 1 else grid.length / 4.0
    masses = [window_mass(final, 0, grid, c, halfwidth) for c in config.peak_centers]
    best = int(np.argmax(masses))
    branch = best if masses[best] >= 0.99 else -1
    return {
        "trial": index,
        "n_jumps": len(traj.jumps),
        "branch": branch,
        "peak_masses": [float(m) for m in masses],
        "final_mean_position": position_mean(final, 0, grid),
    }
