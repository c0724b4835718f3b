"""Cold charged-liquid model of ion Coulomb crystals.

A zero-temperature crystal in a harmonic trap is a uniformly charged
spheroid. Its density follows from the rf amplitude and its aspect ratio
alpha = a / R (axial over radial semi-axis) from the trap anisotropy through

    omega_z**2 / omega_r**2 = 2 n_z(alpha) / (1 - n_z(alpha)),

where n_z is the axial depolarization factor of the spheroid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy.optimize import bisect

from ioncavity.trap import (
    DriveVoltages,
    IonSpecies,
    TrapGeometry,
    axial_frequency,
    crystal_density,
    radial_frequency,
)

ALPHA_MIN = 1e-3
ALPHA_MAX = 1e3
_ALPHA_RTOL = 1e-9


class ExtremeAnisotropyError(ValueError):
    """No aspect ratio in [1e-3, 1e3] matches the trap anisotropy."""


class NoSeparationError(ValueError):
    """Two species with equal mass-to-charge ratio do not separate radially."""


@dataclass(frozen=True)
class CrystalSpec:
    ion_count: float
    density: float
    half_length: float
    radius: float
    species: IonSpecies

    def __post_init__(self):
        if self.half_length == 0 and self.radius == 0:
            return  # point crystal
        if self.half_length <= 0 or self.radius <= 0:
            raise ValueError("crystal semi-axes must be positive")
        implied = self.volume * self.density
        if abs(implied - self.ion_count) > 1e-6 * self.ion_count:
            raise ValueError(f"volume*density = {implied:.6g} does not match ion_count = {self.ion_count:.6g}")

    @property
    def length(self) -> float:
        return 2.0 * self.half_length

    @property
    def aspect_ratio(self) -> float:
        return self.half_length / self.radius

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**2 * self.half_length


@dataclass(frozen=True)
class TwoComponentCrystal:
    """Radially separated two-species crystal.

    ``inner`` describes the core cylinder (its half_length/radius are the
    cylinder's, so its volume identity is that of a cylinder, not a spheroid);
    ``outer`` is the enclosing spheroid holding all ions of both species at the
    outer species' density.
    """

    inner_species: IonSpecies
    outer_species: IonSpecies
    inner_count: float
    outer_count: float
    inner_density: float
    outer_density: float
    boundary_radius: float
    half_length: float
    radius: float

    @property
    def consistent(self) -> bool:
        """Core fits inside the outer spheroid's radius."""
        return self.boundary_radius <= self.radius


def axial_depolarization(alpha: float) -> float:
    """Axial depolarization factor n_z of a spheroid with aspect ratio ``alpha``."""
    if alpha <= 0:
        raise ValueError("aspect ratio must be positive")
    if alpha > 1.0:
        e = math.sqrt(1.0 - 1.0 / alpha**2)
        if e < 1e-3:
            e2 = e * e
            return (1.0 - e2) * (1.0 / 3.0 + e2 / 5.0 + e2 * e2 / 7.0)
        return (1.0 - e * e) / e**3 * (math.atanh(e) - e)
    if alpha < 1.0:
        e = math.sqrt(1.0 / alpha**2 - 1.0)
        if e < 1e-3:
            e2 = e * e
            return (1.0 + e2) * (1.0 / 3.0 - e2 / 5.0 + e2 * e2 / 7.0)
        return (1.0 + e * e) / e**3 * (e - math.atan(e))
    return 1.0 / 3.0


def anisotropy_ratio(alpha: float) -> float:
    """omega_z**2 / omega_r**2 supporting a spheroid of aspect ratio ``alpha``."""
    nz = axial_depolarization(alpha)
    return 2.0 * nz / (1.0 - nz)


def aspect_ratio(omega_z: float, omega_r: float) -> float:
    """Solve the cold-fluid closure for alpha = a/R by bisection in log(alpha)."""
    target = (omega_z / omega_r) ** 2

    def residual(log_alpha):
        return anisotropy_ratio(math.exp(log_alpha)) - target

    lo, hi = math.log(ALPHA_MIN), math.log(ALPHA_MAX)
    if residual(lo) * residual(hi) > 0:
        raise ExtremeAnisotropyError(
            f"extreme anisotropy: omega_z/omega_r = {omega_z / omega_r:.4g} has no aspect ratio in "
            f"[{ALPHA_MIN}, {ALPHA_MAX}]"
        )
    return math.exp(bisect(residual, lo, hi, xtol=_ALPHA_RTOL, rtol=4 * 2.3e-16, maxiter=200))


def _trap_aspect(geom, v, ion) -> float:
    wz = axial_frequency(geom, v, ion)
    if wz == 0:
        raise ExtremeAnisotropyError("extreme anisotropy: no axial confinement (u_end = 0)")
    return aspect_ratio(wz, radial_frequency(geom, v, ion))


def _spheroid(n: float, density: float, alpha: float, ion: IonSpecies) -> CrystalSpec:
    volume = n / density
    half_length = (3.0 * volume * alpha**2 / (4.0 * math.pi)) ** (1.0 / 3.0)
    return CrystalSpec(n, density, half_length, half_length / alpha, ion)


def spheroid_from_count(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies, n: float) -> CrystalSpec:
    """Spheroidal crystal of ``n`` ions at the trap's zero-temperature density."""
    if n < 1:
        raise ValueError("ion count must be >= 1")
    density = crystal_density(geom, v, ion)
    if n == 1:
        warnings.warn("single ion: returning a point crystal", stacklevel=2)
        return CrystalSpec(1.0, density, 0.0, 0.0, ion)
    return _spheroid(float(n), density, _trap_aspect(geom, v, ion), ion)


def count_from_length(geom: TrapGeometry, v: DriveVoltages, ion: IonSpecies, total_length: float) -> float:
    """Number of ions in a crystal of the given total axial length (inverse of spheroid_from_count)."""
    if total_length <= 0:
        raise ValueError("total_length must be positive")
    density = crystal_density(geom, v, ion)
    alpha = _trap_aspect(geom, v, ion)
    a = total_length / 2.0
    return density * 4.0 * math.pi * a**3 / (3.0 * alpha**2)


def two_component_structure(
    geom: TrapGeometry,
    v: DriveVoltages,
    species_a: IonSpecies,
    species_b: IonSpecies,
    n_a: float,
    n_b: float,
) -> TwoComponentCrystal:
    """Radial structure of a two-species crystal.

    The species with the smaller mass-to-charge ratio feels the stiffer
    pseudopotential and forms the core. The outer boundary is the spheroid
    set by the outer species' trap anisotropy, with the total volume of both
    components at their own densities. The core is a cylinder spanning the
    crystal length with radius fixed by the inner ion count at its density,
    a long-crystal approximation.
    """
    if math.isclose(species_a.mass_to_charge, species_b.mass_to_charge, rel_tol=1e-9):
        raise NoSeparationError("no separation: species have equal mass-to-charge ratio")
    if species_a.mass_to_charge < species_b.mass_to_charge:
        inner, outer, n_in, n_out = species_a, species_b, n_a, n_b
    else:
        inner, outer, n_in, n_out = species_b, species_a, n_b, n_a
    # both must be radially confined
    radial_frequency(geom, v, inner)
    alpha = _trap_aspect(geom, v, outer)

    rho_in = crystal_density(geom, v, inner)
    rho_out = crystal_density(geom, v, outer)
    volume = n_in / rho_in + n_out / rho_out
    half_length = (3.0 * volume * alpha**2 / (4.0 * math.pi)) ** (1.0 / 3.0)
    boundary = math.sqrt(n_in / (rho_in * math.pi * 2.0 * half_length))
    return TwoComponentCrystal(
        inner_species=inner,
        outer_species=outer,
        inner_count=float(n_in),
        outer_count=float(n_out),
        inner_density=rho_in,
        outer_density=rho_out,
        boundary_radius=boundary,
        half_length=half_length,
        radius=half_length / alpha,
    )
