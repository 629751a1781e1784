"""Stochastic localization dynamics on periodic 1D grids.

Each particle assigned to a grid undergoes Poisson-timed localization
jumps between stretches of exact unitary evolution.  The localization
operator centred at grid point x is diagonal in position with entries

    L(x)|q> = (alpha/pi)^(1/4) exp(-alpha/2 * d(q, x)^2) |q>

where d is the minimal-image periodic distance; the 1D prefactor makes
the completeness sum  sum_k L(x_k)^2 dx = 1  hold on an adequate grid
(alpha*dx^2 <= 0.1 and extent >= 10/sqrt(alpha)).

Jump centres are drawn from p(x_k) = ||L(x_k) psi||^2 dx, renormalized;
pre-normalization mass off by more than 1e-3 raises GridAdequacyError.

The engine has an ``equivariant`` mode where all state updates commute
bit-exactly with cyclic grid translations: norms and inner sums use
math.fsum (order-independent, correctly rounded), the propagator is
applied as an fsum circulant matvec, and jump centres come from a
cumulative table anchored at its argmax.  Translating the initial
state by s sites then reproduces the original trajectory translated by
s, for the same random stream.  The default mode uses fast vectorized
kernels with identical statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import GridAdequacyError, StepConditionError, ZeroNormError
from .hilbert import Operator, StateVector, SubsystemShape, hermitian_eig

TRAJECTORY_NORM_TOL = 1e-9
JUMP_MASS_HARD_LIMIT = 1e-3
ZERO_NORM_FLOOR = 1e-14


@dataclass(frozen=True)
class GrwParams:
    """Localization model parameters.

    alpha : inverse squared localization width (> 0)
    lam   : jump rate per particle (>= 0); desk-scale runs amplify this
            far above the physical magnitude, always explicitly
    hbar  : action unit
    mass  : particle mass for the free kinetic Hamiltonian
    """

    alpha: float
    lam: float
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic 1D grid (period = points * spacing)."""

    points: int
    spacing: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        if self.points < 8:
            raise ValueError("grid needs at least 8 points")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def length(self) -> float:
        return self.points * self.spacing

    def coordinates(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.points)

    def index_of(self, x: float) -> int:
        """Grid index of an on-grid coordinate (error if off-grid)."""
        r = (x - self.origin) / self.spacing
        k = int(round(r))
        if abs(r - k) > 1e-9:
            raise ValueError(f"coordinate {x} is not on the grid")
        return k % self.points

    def min_image(self, dx: float) -> float:
        """Minimal-image displacement for a coordinate difference."""
        return dx - self.length * round(dx / self.length)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    particle: int
    center: float


@dataclass(frozen=True)
class Trajectory:
    """One stochastic realization: sampled states plus its jump record."""

    sample_times: tuple[float, ...]
    states: tuple[StateVector, ...]
    jumps: tuple[JumpEvent, ...]
    seed: tuple[int, ...] | int | None

    def state_at(self, t: float, tol: float = 1e-9) -> StateVector:
        for st, s in zip(self.sample_times, self.states):
            if abs(st - t) <= tol:
                return s
        raise ValueError(f"trajectory was not sampled at t={t}")


# -- localization operators -------------------------------------------------


@lru_cache(maxsize=128)
def _template(points: int, spacing: float, alpha: float) -> np.ndarray:
    """Diagonal of L centred at site 0, by minimal-image distance."""
    j = np.arange(points)
    dist = np.minimum(j, points - j) * spacing
    g = (alpha / math.pi) ** 0.25 * np.exp(-0.5 * alpha * dist**2)
    g.setflags(write=False)
    return g


def gaussian_template(grid: Grid, alpha: float) -> np.ndarray:
    return _template(grid.points, grid.spacing, alpha)


@lru_cache(maxsize=128)
def _g2_circulant(points: int, spacing: float, alpha: float) -> np.ndarray:
    g2 = _template(points, spacing, alpha) ** 2
    m = scipy.linalg.circulant(g2)  # symmetric: the template is even
    m.setflags(write=False)
    return m


def localization_operator(grid: Grid, alpha: float, center: float) -> Operator:
    """Gaussian localization operator centred at an on-grid coordinate."""
    k = grid.index_of(center)
    return Operator(np.diag(np.roll(gaussian_template(grid, alpha), k)))


def completeness_sum(grid: Grid, alpha: float) -> float:
    """sum_k L(x_k)^2 dx evaluated at any site (it is site-independent)."""
    g = gaussian_template(grid, alpha)
    return float(math.fsum(g * g) * grid.spacing)


# -- equivariant kernels ----------------------------------------------------


def _abs2(arr: np.ndarray) -> np.ndarray:
    return arr.real**2 + arr.imag**2


def _fsum_norm(vec: np.ndarray) -> float:
    return math.sqrt(math.fsum(_abs2(vec)))


def _circulant_matvec_fsum(col: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """out[q] = sum_p col[(q - p) mod M] vec[p], order-independent sums."""
    m = vec.size
    idx = np.arange(m)
    out = np.empty(m, dtype=complex)
    for q in range(m):
        terms = col[(q - idx) % m] * vec
        out[q] = complex(math.fsum(terms.real), math.fsum(terms.imag))
    return out


# -- jump law ----------------------------------------------------------------


def _position_weights(psi: StateVector, particle: int, grid: Grid) -> np.ndarray:
    k = psi.shape.validate_index(particle)
    if psi.shape.dims[k] != grid.points:
        raise ValueError(
            f"factor {k} has dim {psi.shape.dims[k]}, grid has {grid.points} points"
        )
    t = _abs2(psi.reshaped())
    axes = tuple(i for i in range(len(psi.shape.dims)) if i != k)
    return t.sum(axis=axes) if axes else t


def _raw_jump_table(
    psi: StateVector, particle: int, grid: Grid, params: GrwParams, equivariant: bool
) -> tuple[np.ndarray, float]:
    w = _position_weights(psi, particle, grid)
    g2 = gaussian_template(grid, params.alpha) ** 2
    if equivariant:
        raw = np.array(
            [math.fsum(np.roll(g2, k) * w) for k in range(grid.points)]
        ) * grid.spacing
        total = math.fsum(raw)
    else:
        raw = (_g2_circulant(grid.points, grid.spacing, params.alpha) @ w) * grid.spacing
        total = float(raw.sum())
    return raw, total


def jump_mass(psi: StateVector, particle: int, grid: Grid, params: GrwParams) -> float:
    """Pre-normalization total jump probability; 1 on an adequate grid."""
    return _raw_jump_table(psi, particle, grid, params, equivariant=False)[1]


def jump_density(
    psi: StateVector,
    particle: int,
    grid: Grid,
    params: GrwParams,
    *,
    equivariant: bool = False,
) -> np.ndarray:
    """Probability table over grid points for the next jump centre."""
    raw, total = _raw_jump_table(psi, particle, grid, params, equivariant)
    if abs(total - 1.0) > JUMP_MASS_HARD_LIMIT:
        raise GridAdequacyError(
            f"jump probability mass {total:.6f} deviates from 1 by more than "
            f"{JUMP_MASS_HARD_LIMIT}; grid cannot resolve the localization width"
        )
    return raw / total


def _draw_index(table: np.ndarray, u: float) -> int:
    """Inverse-CDF draw with the cumulative sum anchored at the argmax.

    Anchoring makes the draw commute with cyclic translations of the
    table (for the same uniform u) whenever the maximum is unique.
    """
    anchor = int(np.argmax(table))
    order = (anchor + np.arange(table.size)) % table.size
    c = np.cumsum(table[order])
    pos = int(np.searchsorted(c, u * c[-1], side="right"))
    return int(order[min(pos, table.size - 1)])


def apply_jump(
    psi: StateVector,
    particle: int,
    center: float,
    grid: Grid,
    params: GrwParams,
    *,
    equivariant: bool = False,
) -> StateVector:
    """L(center) psi / ||L(center) psi||, acting on one particle only."""
    k = grid.index_of(center)
    gk = np.roll(gaussian_template(grid, params.alpha), k)
    axis = psi.shape.validate_index(particle)
    shape = [1] * len(psi.shape.dims)
    shape[axis] = grid.points
    arr = (psi.reshaped() * gk.reshape(shape)).reshape(-1)
    norm = _fsum_norm(arr) if equivariant else float(np.linalg.norm(arr))
    if norm < ZERO_NORM_FLOOR:
        raise ZeroNormError(f"jump at {center} hit a zero-probability centre")
    return StateVector(psi.shape, arr / norm)


def sample_jump_times(
    lam: float, n_particles: int, horizon: float, rng: np.random.Generator
) -> list[tuple[float, int]]:
    """Merged per-particle Poisson arrivals, sorted by time.

    Each particle's arrivals are an independent Poisson process of rate
    lam (exponential inter-arrival times); the streams are consumed in
    particle order, so the schedule is a deterministic function of the
    generator state.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    events: list[tuple[float, int]] = []
    if lam == 0:
        return events
    for p in range(n_particles):
        t = 0.0
        while True:
            t += rng.exponential(1.0 / lam)
            if t >= horizon:
                break
            events.append((t, p))
    events.sort()
    return events


# -- Hamiltonians and propagation -------------------------------------------


def free_hamiltonian(grid: Grid, mass: float, hbar: float = 1.0) -> Operator:
    """Kinetic energy p^2/2m on the periodic grid, exactly circulant."""
    m = grid.points
    k = 2.0 * math.pi * np.fft.fftfreq(m, d=grid.spacing)
    energy = (hbar * k) ** 2 / (2.0 * mass)
    col = np.real(np.fft.ifft(energy))
    col = 0.5 * (col + np.roll(col[::-1], 1))  # enforce exact evenness
    return Operator(scipy.linalg.circulant(col).astype(complex))


class Propagator:
    """Exact unitary advance exp(-i H tau / hbar) for arbitrary gaps tau.

    The eigendecomposition is computed once; each advance costs two
    matrix-vector products.  ``advance_equivariant`` instead applies the
    propagator as an fsum circulant matvec (valid for circulant H on a
    single-factor state), which commutes bit-exactly with translations.
    """

    def __init__(self, hamiltonian: Operator, hbar: float = 1.0):
        self.hbar = hbar
        self.eigenvalues, self._v = hermitian_eig(hamiltonian)
        self._vh = self._v.conj().T
        self.max_energy = float(np.max(np.abs(self.eigenvalues)))

    def advance(self, amplitudes: np.ndarray, tau: float) -> np.ndarray:
        phases = np.exp(-1j * self.eigenvalues * tau / self.hbar)
        return self._v @ (phases * (self._vh @ amplitudes))

    def column(self, tau: float) -> np.ndarray:
        phases = np.exp(-1j * self.eigenvalues * tau / self.hbar)
        return self._v @ (phases * self._vh[:, 0])

    def advance_equivariant(self, amplitudes: np.ndarray, tau: float) -> np.ndarray:
        return _circulant_matvec_fsum(self.column(tau), amplitudes)


def _validate_step(dt: float, propagator: Propagator | None, hbar: float) -> None:
    if dt <= 0:
        raise StepConditionError("dt must be positive")
    if propagator is not None and propagator.max_energy > 0:
        limit = 0.01 * hbar / propagator.max_energy
        if dt > limit * (1 + 1e-12):
            raise StepConditionError(
                f"dt={dt} exceeds 0.01*hbar/max|E| = {limit:.3e} for this Hamiltonian"
            )


def evolve_trajectory(
    psi0: StateVector,
    hamiltonian: Operator | None,
    params: GrwParams,
    grid_map: Mapping[int, Grid],
    horizon: float,
    dt: float,
    rng: np.random.Generator,
    *,
    sample_times: Sequence[float] | None = None,
    rate_factors: Mapping[int, float] | None = None,
    equivariant: bool = False,
    propagator: Propagator | None = None,
    seed_label: tuple[int, ...] | int | None = None,
) -> Trajectory:
    """Run one stochastic realization up to ``horizon``.

    Between events the state is advanced by the exact unitary
    propagator (eigendecomposition built once, reusable across calls
    via ``propagator``).  At each Poisson jump time a centre is drawn
    from the jump density of the affected particle and the localization
    applied.  Jumps occur only on subsystems present in ``grid_map``;
    ``rate_factors`` scales the base rate per particle (used for
    pointer amplification, always explicit).

    Random stream consumption order: all jump times first (particles in
    ascending index order), then one uniform per jump in time order.
    """
    if abs(psi0.norm() - 1.0) > TRAJECTORY_NORM_TOL:
        raise ValueError("initial state must be normalized")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    for k, grid in grid_map.items():
        psi0.shape.validate_index(k)
        if psi0.shape.dims[k] != grid.points:
            raise ValueError(f"grid for subsystem {k} does not match its dimension")
    if hamiltonian is not None and propagator is None:
        propagator = Propagator(hamiltonian, params.hbar)
    _validate_step(dt, propagator, params.hbar)

    if sample_times is None:
        n = max(1, int(math.ceil(horizon / dt - 1e-12)))
        times = list(np.linspace(0.0, horizon, n + 1))
    else:
        times = [float(t) for t in sample_times]
        if any(t < -1e-12 or t > horizon + 1e-12 for t in times) or sorted(times) != times:
            raise ValueError("sample times must be ascending within [0, horizon]")

    factors = dict(rate_factors or {})
    particles = sorted(grid_map)
    schedule: list[tuple[float, int, int]] = []  # (time, kind 0=sample/1=jump, payload)
    for p in particles:
        rate = params.lam * float(factors.get(p, 1.0))
        if rate == 0.0:
            continue
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= horizon:
                break
            schedule.append((t, 1, p))
    for t in times:
        schedule.append((t, 0, -1))
    schedule.sort(key=lambda e: (e[0], e[1]))

    single_factor = len(psi0.shape.dims) == 1
    amps = np.array(psi0.amplitudes, dtype=complex)
    now = 0.0
    jumps: list[JumpEvent] = []
    sampled: list[StateVector] = []

    def advance_to(t: float) -> None:
        nonlocal amps, now
        gap = t - now
        if propagator is not None and gap > 0:
            if equivariant and single_factor:
                amps = propagator.advance_equivariant(amps, gap)
            else:
                amps = propagator.advance(amps, gap)
        now = t

    for t, kind, payload in schedule:
        advance_to(t)
        if kind == 0:
            norm = _fsum_norm(amps) if equivariant else float(np.linalg.norm(amps))
            sampled.append(StateVector(psi0.shape, amps / norm))
        else:
            grid = grid_map[payload]
            state = StateVector(psi0.shape, amps)
            table = jump_density(state, payload, grid, params, equivariant=equivariant)
            k = _draw_index(table, rng.random())
            center = grid.origin + k * grid.spacing
            amps = np.array(
                apply_jump(
                    state, payload, center, grid, params, equivariant=equivariant
                ).amplitudes
            )
            jumps.append(JumpEvent(t, payload, center))

    return Trajectory(tuple(times), tuple(sampled), tuple(jumps), seed_label)


# -- state builders and diagnostics ------------------------------------------


def gaussian_packet(grid: Grid, center: float, width: float) -> StateVector:
    """Normalized packet with position spread ``width`` (minimal image)."""
    x = grid.coordinates()
    d = x - center
    d -= grid.length * np.round(d / grid.length)
    amps = np.exp(-(d**2) / (4.0 * width**2)).astype(complex)
    return StateVector(SubsystemShape((grid.points,)), amps).normalize()


def superpose(states: Sequence[StateVector], amplitudes: Sequence[complex]) -> StateVector:
    acc = np.zeros_like(states[0].amplitudes)
    for s, a in zip(states, amplitudes):
        acc = acc + a * s.amplitudes
    return StateVector(states[0].shape, acc).normalize()


def two_peak_state(
    grid: Grid, centers: Sequence[float], weights: Sequence[float], width: float
) -> StateVector:
    """Superposition of packets with given probability weights."""
    packets = [gaussian_packet(grid, c, width) for c in centers]
    return superpose(packets, [math.sqrt(w) for w in weights])


def translate_state(psi: StateVector, particle: int, sites: int) -> StateVector:
    """Cyclically shift one factor by an integer number of grid sites."""
    axis = psi.shape.validate_index(particle)
    return StateVector(psi.shape, np.roll(psi.reshaped(), sites, axis=axis).reshape(-1))


def position_distribution(psi: StateVector, particle: int, grid: Grid) -> np.ndarray:
    return _position_weights(psi, particle, grid)


def position_mean(psi: StateVector, particle: int, grid: Grid) -> float:
    w = _position_weights(psi, particle, grid)
    return float(np.dot(w, grid.coordinates()) / w.sum())


def window_mass(psi: StateVector, particle: int, grid: Grid, center: float, halfwidth: float) -> float:
    """Probability mass within a minimal-image window around ``center``."""
    w = _position_weights(psi, particle, grid)
    d = grid.coordinates() - center
    d -= grid.length * np.round(d / grid.length)
    return float(w[np.abs(d) <= halfwidth].sum())
