"""Linear Paul trap: geometry, drive voltages, species and the pseudopotential model.

Axial confinement comes from the static end-electrode voltage,

    omega_z**2 = 2 * eta * Q * U_end / (M * z_half**2)

and radial confinement from the rf pseudopotential minus the end-cap defocusing,

    omega_r**2 = Q**2 U_rf**2 / (2 M**2 r0**4 Omega**2) - eta Q U_end / (M z_half**2).

The zero-temperature crystal density is fixed by the rf amplitude alone,
rho = eps0 U_rf**2 / (M r0**4 Omega**2).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ioncavity.constants import C, EPSILON_0, TWO_PI

# single-ion stability edge of the a=0 Mathieu equation
Q_UNSTABLE = 0.908
# above this the secular/micromotion separation gets poor
Q_WARN = 0.5


class RadiallyDeconfinedError(ValueError):
    """End-cap defocusing exceeds the rf confinement (omega_r**2 <= 0)."""


@dataclass(frozen=True)
class TrapGeometry:
    """Electrode geometry and rf drive.

    ``z_half`` is half the center-electrode length. The apparatus has a 5.0 mm
    center electrode, and the axial frequency formula reproduces the measured
    secular frequencies only with the 2.5 mm half-length.
    """

    z_half: float = 2.5e-3
    r0: float = 2.35e-3
    eta: float = 0.342
    omega_rf: float = TWO_PI * 4.0e6

    def __post_init__(self):
        if not (self.z_half > 0 and self.r0 > 0 and self.omega_rf > 0):
            raise ValueError("z_half, r0 and omega_rf must be positive")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")

    @classmethod
    def from_center_electrode_length(cls, z0: float, **kwargs) -> "TrapGeometry":
        return cls(z_half=z0 / 2.0, **kwargs)

    @property
    def rf_period(self) -> float:
        return TWO_PI / self.omega_rf


@dataclass(frozen=True)
class DriveVoltages:
    u_rf: float
    u_end: float

    def __post_init__(self):
        if self.u_rf < 0 or self.u_end < 0:
            raise ValueError(f"voltages must be non-negative, got u_rf={self.u_rf}, u_end={self.u_end}")


@dataclass(frozen=True)
class TransitionData:
    """Optical transition coupled to the cavity.

    ``gamma`` is the atomic dipole decay rate (half the excited-state decay
    rate) in rad/s. ``isotope_shift`` is the line shift relative to 40Ca+ in Hz,
    or None when unknown.
    """

    dipole_moment: float
    wavelength: float
    gamma: float
    isotope_shift: float | None = None

    def __post_init__(self):
        if self.dipole_moment <= 0 or self.wavelength <= 0 or self.gamma <= 0:
            raise ValueError("dipole moment, wavelength and gamma must be positive")

    @property
    def omega(self) -> float:
        return TWO_PI * C / self.wavelength


@dataclass(frozen=True)
class IonSpecies:
    mass: float
    charge: float
    isotope_label: str
    transition: TransitionData = field(repr=False)

    def __post_init__(self):
        if self.mass <= 0 or self.charge <= 0:
            raise ValueError("mass and charge must be positive")

    @property
    def mass_to_charge(self) -> float:
        return self.mass / self.charge


class StabilityFlag(str, enum.Enum):
    OK = "OK"
    WARN = "WARN"
    UNSTABLE = "UNSTABLE"


class MathieuQ(NamedTuple):
    q: float
    flag: StabilityFlag


def _endcap_term(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    return geom.eta * ion.charge * v.u_end / (ion.mass * geom.z_half**2)


def _rf_term(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    return (ion.charge * v.u_rf) ** 2 / (2.0 * ion.mass**2 * geom.r0**4 * geom.omega_rf**2)


def axial_frequency(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    """Axial secular angular frequency (rad/s); zero when ``u_end`` is zero."""
    return math.sqrt(2.0 * _endcap_term(geom, v, ion))


def radial_frequency_squared(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    """Signed omega_r**2; negative when the trap is radially deconfined."""
    return _rf_term(geom, v, ion) - _endcap_term(geom, v, ion)


def radial_frequency(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    """Radial secular angular frequency (rad/s) in the pseudopotential approximation.

    Raises
    ------
    RadiallyDeconfinedError
        If the end-cap defocusing is at least as strong as the rf confinement.
    """
    w2 = radial_frequency_squared(geom, v, ion)
    if w2 <= 0:
        raise RadiallyDeconfinedError(
            f"radially deconfined: omega_r^2 = {w2:.3e} rad^2/s^2 at U_rf={v.u_rf} V, U_end={v.u_end} V"
        )
    return math.sqrt(w2)


def stability_flag(q: float) -> StabilityFlag:
    if q >= Q_UNSTABLE:
        return StabilityFlag.UNSTABLE
    if q >= Q_WARN:
        return StabilityFlag.WARN
    return StabilityFlag.OK


def mathieu_q(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> MathieuQ:
    """Mathieu q = 2 Q U_rf / (M r0**2 Omega**2) with a pseudopotential validity flag."""
    q = 2.0 * ion.charge * v.u_rf / (ion.mass * geom.r0**2 * geom.omega_rf**2)
    return MathieuQ(q, stability_flag(q))


def crystal_density(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies) -> float:
    """Zero-temperature ion number density (m^-3); independent of ``u_end``."""
    if v.u_rf <= 0:
        raise ValueError("crystal density requires u_rf > 0")
    return EPSILON_0 * v.u_rf**2 / (ion.mass * geom.r0**4 * geom.omega_rf**2)


def pseudo_potential(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies, position) -> float | np.ndarray:
    """Pseudopotential energy (J) at ``position`` (shape (3,) or (N, 3), metres)."""
    wz = axial_frequency(geom, v, ion)
    wr = radial_frequency(geom, v, ion)
    p = np.asarray(position, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    energy = 0.5 * ion.mass * (wr**2 * (x**2 + y**2) + wz**2 * z**2)
    return float(energy) if np.ndim(energy) == 0 else energy


def plasma_frequency_squared(density: float, ion: IonSpecies) -> float:
    return density * ion.charge**2 / (EPSILON_0 * ion.mass)
