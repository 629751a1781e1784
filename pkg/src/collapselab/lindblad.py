"""Deterministic ensemble dynamics for the localization model.

The statistical operator of a jump-unravelled ensemble obeys

    d rho / dt = -(i/hbar) [H, rho]
                 - lam * sum_n ( rho - sum_k L_n(x_k) rho L_n(x_k) dx )

with the sum over jump centres discretized on exactly the same grids
the trajectory engine uses (the two must discretize identically for
ensemble comparisons to mean anything).  Because every L is diagonal
in position, the centre sum acts entrywise: on a single grid factor

    (sum_k L_k rho L_k dx)[q, p] = C[q, p] * rho[q, p],
    C[q, p] = sum_k g(q - k) g(p - k) dx,

which for an adequate grid matches the closed form
exp(-alpha (x_q - x_p)^2 / 4); tests pin both routes against each
other and against the literal operator sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InvariantViolationError, StepConditionError
from .grw import Grid, GrwParams, gaussian_template
from .hilbert import DensityMatrix, Operator, SubsystemShape

STEP_BUDGET = 0.05
TRACE_TOL = 1e-8
HERMITICITY_TOL = 1e-8
POSITIVITY_FLOOR = -1e-6


@dataclass(frozen=True)
class LindbladConfig:
    """Fixed-step integration window: step dt, final time horizon."""

    dt: float
    horizon: float

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@lru_cache(maxsize=128)
def _overlap_kernel(points: int, spacing: float, alpha: float) -> np.ndarray:
    g = np.asarray(gaussian_template(Grid(points, spacing), alpha))
    cols = np.stack([np.roll(g, k) for k in range(points)], axis=1)  # cols[q, k]
    kernel = (cols @ cols.T) * spacing
    kernel.setflags(write=False)
    return kernel


def overlap_kernel(grid: Grid, alpha: float) -> np.ndarray:
    """C[q, p] = sum_k g(q-k) g(p-k) dx on the given grid."""
    return _overlap_kernel(grid.points, grid.spacing, alpha)


def dephasing_rate(params: GrwParams, x: float, xp: float) -> float:
    """Closed-form off-diagonal decay rate lam * (1 - exp(-alpha dx^2 / 4))."""
    return params.lam * (1.0 - math.exp(-params.alpha * (x - xp) ** 2 / 4.0))


def _kernel_views(
    shape: SubsystemShape, grids: Mapping[int, Grid], alpha: float
) -> list[np.ndarray]:
    """Per-particle overlap kernels broadcast to the reshaped rho layout."""
    dims = shape.dims
    n = len(dims)
    views = []
    for k in sorted(grids):
        shape.validate_index(k)
        grid = grids[k]
        if dims[k] != grid.points:
            raise ValueError(f"grid for subsystem {k} does not match its dimension")
        c = overlap_kernel(grid, alpha)
        full = [1] * (2 * n)
        full[k] = dims[k]
        full[n + k] = dims[k]
        views.append(c.reshape(full))
    return views


def _rhs(
    rho: np.ndarray,
    h: np.ndarray | None,
    lam: float,
    hbar: float,
    kernels: list[np.ndarray],
    dims: tuple[int, ...],
) -> np.ndarray:
    out = np.zeros_like(rho)
    if h is not None:
        out += (-1j / hbar) * (h @ rho - rho @ h)
    if lam != 0.0 and kernels:
        r = rho.reshape(dims + dims)
        damp = np.zeros_like(r)
        for c in kernels:
            damp += r * c
        out += lam * (damp.reshape(rho.shape) - len(kernels) * rho)
    return out


def lindblad_rhs(
    rho: DensityMatrix,
    hamiltonian: Operator | None,
    params: GrwParams,
    grids: Mapping[int, Grid],
) -> np.ndarray:
    """Time derivative of the statistical operator (Hermitian, traceless)."""
    kernels = _kernel_views(rho.shape, grids, params.alpha)
    h = hamiltonian.entries if hamiltonian is not None else None
    return _rhs(rho.entries, h, params.lam, params.hbar, kernels, rho.shape.dims)


def _check_step(
    config: LindbladConfig,
    params: GrwParams,
    n_particles: int,
    hamiltonian: Operator | None,
) -> None:
    h_scale = 0.0
    if hamiltonian is not None:
        h_scale = float(np.max(np.abs(np.linalg.eigvalsh(hamiltonian.entries)))) / params.hbar
    budget = config.dt * (params.lam * n_particles + h_scale)
    if budget > STEP_BUDGET * (1 + 1e-12):
        raise StepConditionError(
            f"dt*(lam*N + |H|/hbar) = {budget:.4f} exceeds the step budget {STEP_BUDGET}"
        )


def integrate_with_snapshots(
    rho0: DensityMatrix,
    hamiltonian: Operator | None,
    params: GrwParams,
    grids: Mapping[int, Grid],
    config: LindbladConfig,
    snapshot_times: Sequence[float] = (),
) -> tuple[DensityMatrix, dict[float, DensityMatrix]]:
    """Classical 4-stage fixed-step integration up to the horizon.

    Snapshot times must land on step boundaries (choose dt so that they
    divide the horizon); the final state is always returned.
    """
    _check_step(config, params, len(grids), hamiltonian)
    n_steps = max(1, int(math.ceil(config.horizon / config.dt - 1e-12)))
    h_step = config.horizon / n_steps

    wanted: dict[int, float] = {}
    for t in snapshot_times:
        steps = t / h_step
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError(
                f"snapshot time {t} does not land on an integrator step (dt={h_step})"
            )
        wanted[int(round(steps))] = float(t)

    kernels = _kernel_views(rho0.shape, grids, params.alpha)
    h = hamiltonian.entries if hamiltonian is not None else None
    dims = rho0.shape.dims
    rho = np.array(rho0.entries, dtype=complex)
    snapshots: dict[float, DensityMatrix] = {}
    if 0 in wanted:
        snapshots[wanted[0]] = DensityMatrix(rho0.shape, rho)

    for step in range(1, n_steps + 1):
        k1 = _rhs(rho, h, params.lam, params.hbar, kernels, dims)
        k2 = _rhs(rho + 0.5 * h_step * k1, h, params.lam, params.hbar, kernels, dims)
        k3 = _rhs(rho + 0.5 * h_step * k2, h, params.lam, params.hbar, kernels, dims)
        k4 = _rhs(rho + h_step * k3, h, params.lam, params.hbar, kernels, dims)
        rho = rho + (h_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step in wanted:
            snapshots[wanted[step]] = DensityMatrix(rho0.shape, rho)

    trace_defect = abs(complex(np.trace(rho)) - 1.0)
    if trace_defect > TRACE_TOL:
        raise InvariantViolationError(f"trace drifted by {trace_defect:.3e}")
    herm_defect = float(np.max(np.abs(rho - rho.conj().T)))
    if herm_defect > HERMITICITY_TOL:
        raise InvariantViolationError(f"hermiticity drifted by {herm_defect:.3e}")
    final = DensityMatrix(rho0.shape, rho)
    min_eig = final.min_eigenvalue()
    if min_eig < POSITIVITY_FLOOR:
        raise InvariantViolationError(f"minimum eigenvalue {min_eig:.3e} below floor")
    return final, snapshots


def integrate(
    rho0: DensityMatrix,
    hamiltonian: Operator | None,
    params: GrwParams,
    grids: Mapping[int, Grid],
    config: LindbladConfig,
) -> DensityMatrix:
    """Statistical operator at the horizon (see integrate_with_snapshots)."""
    final, _ = integrate_with_snapshots(rho0, hamiltonian, params, grids, config)
    return final


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2) ||a - b||_1 via the spectrum of the Hermitian difference."""
    w = np.linalg.eigvalsh(a.entries - b.entries)
    return 0.5 * float(np.sum(np.abs(w)))


@dataclass(frozen=True)
class EnsembleComparison:
    time: float
    size: int
    distance: float
    threshold: float

    @property
    def within_threshold(self) -> bool:
        return self.distance <= self.threshold


def ensemble_compare(
    trajectories: Sequence, rho_oracle: DensityMatrix, at: float
) -> EnsembleComparison:
    """Trace distance between the empirical trajectory mixture and the oracle.

    The threshold 5/sqrt(K) is the standard Monte Carlo error scale
    with an explicit safety factor.
    """
    if not trajectories:
        raise ValueError("ensemble is empty")
    d = rho_oracle.shape.total_dim
    acc = np.zeros((d, d), dtype=complex)
    for traj in trajectories:
        psi = traj.state_at(at)
        acc += np.outer(psi.amplitudes, psi.amplitudes.conj())
    acc /= len(trajectories)
    rho_mc = DensityMatrix(rho_oracle.shape, acc)
    return EnsembleComparison(
        time=at,
        size=len(trajectories),
        distance=trace_distance(rho_mc, rho_oracle),
        threshold=5.0 / math.sqrt(len(trajectories)),
    )
