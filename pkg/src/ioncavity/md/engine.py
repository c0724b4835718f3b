"""Molecular dynamics of trapped ions: state, configuration, stepping, relaxation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ioncavity.constants import K_B
from ioncavity.crystal import ExtremeAnisotropyError, spheroid_from_count
from ioncavity.md import kernels
from ioncavity.species import CA40
from ioncavity.trap import (
    DriveVoltages,
    IonSpecies,
    StabilityFlag,
    TrapGeometry,
    crystal_density,
    mathieu_q,
    radial_frequency,
)

log = logging.getLogger(__name__)

MAX_RELAX_IONS = 2048
_AXES = {"x": 0, "y": 1, "z": 2}


class SimulationError(RuntimeError):
    pass


class CollisionError(SimulationError):
    pass


class NotCrystallizedError(SimulationError):
    def __init__(self, msg, diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SimConfig:
    """Simulation inputs.

    ``beta`` is the linear cooling friction (kg/s) acting along ``cooling_axes``
    on the species listed in ``cooled_species`` (all when None). The default
    cools along the trap axis only; radial degrees of freedom then cool
    sympathetically through the Coulomb interaction. ``recoil_velocity`` is the
    standard deviation (m/s) of a random velocity kick per step and cooled axis.
    """

    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    voltages: DriveVoltages = field(default_factory=lambda: DriveVoltages(130.0, 3.9))
    species: tuple[IonSpecies, ...] = (CA40,)
    ion_counts: tuple[int, ...] = (1,)
    timestep: float = 2.5e-9
    duration: float = 1e-3
    beta: float = 0.0
    cooling_axes: str = "z"
    cooled_species: tuple[int, ...] | None = None
    recoil_velocity: float = 0.0
    force_model: str = "rf"
    temperature_threshold: float = 1e-5  # K, secular kinetic temperature for "crystallized"
    seed: int = 0

    def __post_init__(self):
        if self.timestep <= 0 or self.duration <= 0:
            raise ValueError("timestep and duration must be positive")
        if self.timestep > self.geometry.rf_period / 100.0 * (1 + 1e-12):
            raise ValueError(
                f"timestep {self.timestep:.3e} s exceeds rf period/100 = {self.geometry.rf_period / 100:.3e} s"
            )
        if self.force_model not in ("rf", "pseudo"):
            raise ValueError(f"force_model must be 'rf' or 'pseudo', got {self.force_model!r}")
        if len(self.species) != len(self.ion_counts):
            raise ValueError("species and ion_counts must have equal length")
        if self.beta < 0 or self.recoil_velocity < 0:
            raise ValueError("beta and recoil_velocity must be non-negative")
        if any(c not in _AXES for c in self.cooling_axes):
            raise ValueError(f"cooling_axes must be drawn from 'xyz', got {self.cooling_axes!r}")

    @property
    def n_ions(self) -> int:
        return int(sum(self.ion_counts))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.timestep))

    @property
    def steps_per_rf_period(self) -> int:
        return max(1, int(round(self.geometry.rf_period / self.timestep)))


@dataclass
class SimState:
    time: float
    positions: np.ndarray
    velocities: np.ndarray
    species_index: np.ndarray
    rng_seed: int = 0
    rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        self.species_index = np.asarray(self.species_index, dtype=np.int64)
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3) or self.species_index.shape != (n,):
            raise ValueError("positions/velocities must be (N, 3) and species_index (N,)")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("non-finite coordinates in state")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    @property
    def n_ions(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "SimState":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return SimState(self.time, self.positions.copy(), self.velocities.copy(), self.species_index.copy(),
                        self.rng_seed, rng)


def _check_species(state: SimState, config: SimConfig):
    if state.n_ions and (state.species_index.min() < 0 or state.species_index.max() >= len(config.species)):
        raise ValueError("species index out of range for config.species")


def _per_ion(state: SimState, config: SimConfig):
    masses = np.array([s.mass for s in config.species])[state.species_index]
    charges = np.array([s.charge for s in config.species])[state.species_index]
    friction = np.zeros((state.n_ions, 3))
    if config.beta > 0:
        cooled = np.ones(state.n_ions, dtype=bool)
        if config.cooled_species is not None:
            cooled = np.isin(state.species_index, config.cooled_species)
        for c in set(config.cooling_axes):
            friction[cooled, _AXES[c]] = config.beta
    return masses, charges, friction


def _trap_args(config: SimConfig):
    g, v = config.geometry, config.voltages
    model = kernels.MODEL_RF if config.force_model == "rf" else kernels.MODEL_PSEUDO
    return model, v.u_rf, v.u_end, g.r0, g.z_half, g.eta, g.omega_rf


def forces(state: SimState, config: SimConfig, time: float | None = None) -> np.ndarray:
    """Total force on each ion (N, 3) in newtons."""
    masses, charges, _ = _per_ion(state, config)
    out = np.zeros((state.n_ions, 3))
    t = state.time if time is None else time
    kernels.total_force(state.positions, charges, masses, t, *_trap_args(config), out)
    return out


def coulomb_forces(positions, charges) -> np.ndarray:
    out = np.zeros((len(positions), 3))
    kernels.coulomb_forces(np.ascontiguousarray(positions, dtype=float), np.asarray(charges, dtype=float), out)
    return out


def _raise_status(status, state):
    if status == kernels.STATUS_COLLISION:
        raise CollisionError(f"collision: ion separation below {kernels.MIN_SEPARATION} m at t = {state.time:.6e} s")
    if status == kernels.STATUS_NONFINITE:
        raise SimulationError(f"non-finite coordinates at t = {state.time:.6e} s")


def run(state: SimState, config: SimConfig, n_steps: int, record_every: int = 0):
    """Advance ``n_steps`` steps; returns (new_state, recorded_positions, recorded_velocities).

    The input state is not modified. Recorded arrays have shape
    (n_steps // record_every, N, 3) and are empty when ``record_every`` is 0.
    """
    _check_species(state, config)
    new = state.copy()
    masses, charges, friction = _per_ion(new, config)
    args = _trap_args(config)
    force = np.zeros((new.n_ions, 3))
    min_r = kernels.total_force(new.positions, charges, masses, new.time, *args, force)
    if new.n_ions > 1 and min_r < kernels.MIN_SEPARATION:
        _raise_status(kernels.STATUS_COLLISION, new)
    n_rec = n_steps // record_every if record_every > 0 else 0
    rec_pos = np.empty((n_rec, new.n_ions, 3))
    rec_vel = np.empty((n_rec, new.n_ions, 3))

    chunk = n_steps
    if config.recoil_velocity > 0:
        chunk = record_every * max(1, 1024 // record_every) if record_every > 0 else 1024
    done = 0
    rec_done = 0
    t0 = new.time
    no_kicks = np.zeros((0, new.n_ions, 3))
    while done < n_steps:
        m = min(chunk, n_steps - done)
        kicks = no_kicks
        if config.recoil_velocity > 0:
            kicks = new.rng.normal(0.0, config.recoil_velocity, size=(m, new.n_ions, 3))
            kicks *= (friction > 0)[None, :, :]
        status, steps, nr = kernels.advance(
            new.positions, new.velocities, force, masses, charges, friction,
            t0, done, config.timestep, m, *args, kicks,
            record_every if record_every > 0 else 0,
            rec_pos[rec_done:], rec_vel[rec_done:],
        )
        new.time = t0 + (done + steps) * config.timestep
        _raise_status(status, new)
        done += m
        rec_done += nr
    return new, rec_pos[:rec_done], rec_vel[:rec_done]


def step(state: SimState, config: SimConfig) -> SimState:
    """One velocity-Verlet timestep."""
    return run(state, config, 1)[0]


def energy(state: SimState, config: SimConfig) -> float:
    """Kinetic + Coulomb + pseudopotential energy (J).

    Conserved only for the pseudopotential force model without friction.
    """
    masses, charges, _ = _per_ion(state, config)
    _, u_rf, u_end, r0, z_half, eta, omega_rf = _trap_args(config)
    kinetic = 0.5 * np.sum(masses[:, None] * state.velocities**2)
    return float(
        kinetic
        + kernels.coulomb_energy(state.positions, charges)
        + kernels.pseudo_trap_energy(state.positions, charges, masses, u_rf, u_end, r0, z_half, eta, omega_rf)
    )


def initial_state(config: SimConfig, scale: float = 1.5) -> SimState:
    """Ions placed uniformly at random in a spheroid ``scale`` times the cold crystal size, at rest.

    The center of mass is moved to the trap center.
    """
    rng = np.random.default_rng(config.seed)
    species_index = np.repeat(np.arange(len(config.species)), config.ion_counts)
    n = len(species_index)
    g, v = config.geometry, config.voltages
    lightest = min(config.species, key=lambda s: s.mass_to_charge)
    try:
        crystal = spheroid_from_count(g, v, lightest, max(n, 2))
        a, r = crystal.half_length, crystal.radius
    except ExtremeAnisotropyError:
        a = r = (3 * n / (4 * math.pi * crystal_density(g, v, lightest))) ** (1 / 3)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= rng.uniform(size=(n, 1)) ** (1 / 3)
    pos = pts * scale * np.array([r, r, a])
    if n > 1:
        pos -= pos.mean(axis=0)
    return SimState(0.0, pos, np.zeros((n, 3)), species_index, rng_seed=config.seed, rng=rng)


def secular_averages(state: SimState, config: SimConfig):
    """Positions and velocities averaged over one rf period (removes micromotion).

    Returns (state_after, mean_positions, mean_velocities). For the
    pseudopotential model the averages are over the same time span.
    """
    n = config.steps_per_rf_period
    new, rp, rv = run(state, config, n, record_every=1)
    return new, rp.mean(axis=0), (new.positions - state.positions) / (n * config.timestep)


def secular_temperature(velocities, masses) -> float:
    """Mean kinetic temperature per degree of freedom (K) from secular velocities."""
    if len(velocities) == 0:
        return 0.0
    return float(np.sum(np.asarray(masses)[:, None] * velocities**2) / (3 * len(velocities) * K_B))


def _check_trap(config: SimConfig):
    g, v = config.geometry, config.voltages
    for s in config.species:
        if mathieu_q(g, v, s).flag is StabilityFlag.UNSTABLE:
            raise SimulationError(f"rf drive unstable for {s.isotope_label}")
        radial_frequency(g, v, s)
    if v.u_end <= 0:
        raise SimulationError("no axial confinement (u_end = 0)")


def relax_to_crystal(config: SimConfig, state: SimState | None = None, check_every: int | None = None) -> SimState:
    """Cool a random cloud until the secular temperature drops below the threshold.

    Convergence is tested every ``check_every`` steps (default 20 rf periods)
    on rf-period-averaged velocities. Raises NotCrystallizedError when
    ``config.duration`` elapses first.
    """
    if config.n_ions > MAX_RELAX_IONS:
        raise ValueError(f"relax_to_crystal is limited to {MAX_RELAX_IONS} ions")
    _check_trap(config)
    if state is None:
        state = initial_state(config)
    masses, _, _ = _per_ion(state, config)
    period = config.steps_per_rf_period
    check_every = check_every or 20 * period
    total = config.n_steps
    done = 0
    history = []
    while done < total:
        state, _, _ = run(state, config, check_every)
        state, _, v_sec = secular_averages(state, config)
        done += check_every + period
        temp = secular_temperature(v_sec, masses)
        history.append((state.time, temp))
        log.debug("t = %.3e s  T_secular = %.3e K", state.time, temp)
        if temp < config.temperature_threshold:
            return state
    raise NotCrystallizedError(
        f"not crystallized: secular temperature {history[-1][1]:.3e} K after {state.time:.3e} s "
        f"(threshold {config.temperature_threshold:.3e} K)",
        {"temperature_history": history, "final_state": state},
    )


def with_voltages(config: SimConfig, u_rf: float, u_end: float) -> SimConfig:
    return replace(config, voltages=DriveVoltages(u_rf, u_end))
