"""Optical cavity characterization and ion-cavity coupling.

Conventions
-----------
* kappa is the angular half-width of the resonance, ``2*pi*fwhm/2``.
* The standing-wave TEM00 mode function is
  ``Psi = w0/w(z) * exp(-r**2/w(z)**2) * sin(k z)``, so that the effective
  number of ions ``rho * integral(Psi**2)`` over a crystal of length ``l``
  reduces to ``rho * pi * w0**2 * l / 4`` when the crystal is much wider than
  the beam.
* Strong collective coupling means ``g0*sqrt(N) > max(gamma, kappa)``, strictly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ioncavity.constants import C, EPSILON_0, HBAR, TWO_PI
from ioncavity.crystal import CrystalSpec
from ioncavity.trap import IonSpecies


class UnstableResonatorError(ValueError):
    pass


@dataclass(frozen=True)
class CavitySpec:
    length: float = 11.8e-3
    mirror_roc: float = 10e-3
    transmission_in: float = 1500e-6
    transmission_out: float = 5e-6
    intracavity_loss: float = 350e-6
    wavelength: float = 866e-9

    def __post_init__(self):
        if self.length <= 0 or self.mirror_roc <= 0 or self.wavelength <= 0:
            raise ValueError("length, mirror_roc and wavelength must be positive")
        for name in ("transmission_in", "transmission_out", "intracavity_loss"):
            val = getattr(self, name)
            if not 0 <= val < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {val}")

    @property
    def stable(self) -> bool:
        return 0 < self.length < 2 * self.mirror_roc

    @property
    def total_loss(self) -> float:
        return self.transmission_in + self.transmission_out + self.intracavity_loss


@dataclass(frozen=True)
class ModeGeometry:
    waist: float
    rayleigh_range: float
    wavenumber: float
    mode_volume: float
    wavelength: float
    cavity_length: float

    def beam_radius(self, z):
        """w(z) for distance ``z`` from the waist."""
        return self.waist * np.sqrt(1.0 + (np.asarray(z) / self.rayleigh_range) ** 2)

    @classmethod
    def from_waist(cls, waist: float, wavelength: float, cavity_length: float) -> "ModeGeometry":
        return cls(
            waist=waist,
            rayleigh_range=math.pi * waist**2 / wavelength,
            wavenumber=TWO_PI / wavelength,
            mode_volume=math.pi * waist**2 * cavity_length / 4.0,
            wavelength=wavelength,
            cavity_length=cavity_length,
        )


def free_spectral_range(cavity: CavitySpec) -> float:
    """c / 2L in Hz."""
    return C / (2.0 * cavity.length)


def length_from_fsr(fsr: float) -> float:
    return C / (2.0 * fsr)


def finesse_from_linewidth(fsr: float, linewidth_fwhm: float) -> float:
    if fsr <= 0 or linewidth_fwhm <= 0:
        raise ValueError("fsr and linewidth must be positive")
    return fsr / linewidth_fwhm


def finesse_from_losses(cavity: CavitySpec) -> float:
    """2*pi over the total round-trip loss (both transmissions plus intracavity loss)."""
    loss = cavity.total_loss
    if loss <= 0:
        raise ValueError("total round-trip loss must be positive")
    return TWO_PI / loss


def linewidth_from_finesse(fsr: float, finesse: float) -> float:
    return fsr / finesse


def cavity_decay_rate(linewidth_fwhm: float) -> float:
    """Field decay rate kappa (rad/s): angular half width at half maximum."""
    if linewidth_fwhm < 0:
        raise ValueError("linewidth must be non-negative")
    return TWO_PI * linewidth_fwhm / 2.0


def waist_from_geometry(cavity: CavitySpec) -> ModeGeometry:
    """TEM00 waist of a symmetric two-mirror resonator.

    w0**2 = (lambda / 2 pi) * sqrt(L (2 R - L))
    """
    if not cavity.stable:
        raise UnstableResonatorError(
            f"unstable resonator: L = {cavity.length} m outside (0, 2*ROC = {2 * cavity.mirror_roc} m)"
        )
    L, R = cavity.length, cavity.mirror_roc
    w0 = math.sqrt(cavity.wavelength / TWO_PI * math.sqrt(L * (2.0 * R - L)))
    return ModeGeometry.from_waist(w0, cavity.wavelength, L)


def single_ion_coupling(ion: IonSpecies, mode: ModeGeometry) -> float:
    """g0 (rad/s) at the waist and a field antinode."""
    tr = ion.transition
    return tr.dipole_moment / HBAR * math.sqrt(HBAR * tr.omega / (2.0 * EPSILON_0 * mode.mode_volume))


def dipole_for_coupling(g0: float, ion: IonSpecies, mode: ModeGeometry) -> float:
    """Dipole moment (C m) that yields coupling ``g0`` in ``mode``."""
    return g0 * HBAR / math.sqrt(HBAR * ion.transition.omega / (2.0 * EPSILON_0 * mode.mode_volume))


def ions_in_mode_closed_form(density: float, waist: float, length: float) -> float:
    return density * math.pi * waist**2 * length / 4.0


def mode_overlap_quadrature(
    density: float,
    mode: ModeGeometry,
    length: float,
    radius: float,
    shape: str = "cylinder",
    points_per_period: int = 16,
    radial_nodes: int = 48,
) -> float:
    """Numerical ``rho * integral(Psi**2 dV)`` over the crystal.

    The crystal is centered on the waist with its axis on the cavity axis.
    ``shape="cylinder"`` integrates out to ``radius`` over the full length;
    ``shape="spheroid"`` truncates at the local radius
    ``radius * sqrt(1 - (2z/length)**2)``.

    The axial integral is a composite Simpson rule resolving every sin(kz)
    oscillation; the radial one is Gauss-Legendre in r.
    """
    if length <= 0 or radius <= 0:
        return 0.0
    half = length / 2.0
    n_periods = length / (mode.wavelength / 2.0)
    nz = int(max(64, points_per_period * n_periods))
    nz += nz % 2  # Simpson needs an even number of intervals
    z = np.linspace(-half, half, nz + 1)
    w = mode.beam_radius(z)
    if shape == "cylinder":
        r_max = np.full_like(z, radius)
    elif shape == "spheroid":
        r_max = radius * np.sqrt(np.clip(1.0 - (z / half) ** 2, 0.0, None))
    else:
        raise ValueError(f"unknown crystal shape {shape!r}")

    nodes, weights = np.polynomial.legendre.leggauss(radial_nodes)
    # map [-1, 1] -> [0, r_max(z)]
    r = 0.5 * (nodes[None, :] + 1.0) * r_max[:, None]
    jac = 0.5 * r_max[:, None]
    integrand_r = (mode.waist / w[:, None]) ** 2 * np.exp(-2.0 * r**2 / w[:, None] ** 2) * 2.0 * math.pi * r
    transverse = np.sum(integrand_r * weights[None, :] * jac, axis=1)
    integrand_z = transverse * np.sin(mode.wavenumber * z) ** 2

    h = length / nz
    simpson = integrand_z[0] + integrand_z[-1] + 4.0 * integrand_z[1:-1:2].sum() + 2.0 * integrand_z[2:-1:2].sum()
    return density * simpson * h / 3.0


@dataclass(frozen=True)
class ModeOverlap:
    n_closed_form: float
    n_quadrature: float
    relative_difference: float
    collective_coupling: float
    radial_truncation_significant: bool


def ions_in_mode(
    crystal: CrystalSpec,
    mode: ModeGeometry,
    g0: float | None = None,
    shape: str = "cylinder",
) -> ModeOverlap:
    """Effective number of ions in the cavity mode and the collective coupling.

    ``collective_coupling`` is g0*sqrt(N) from the closed form; when ``g0`` is
    not given it is computed from the crystal species and ``mode``.
    """
    length = crystal.length
    n_cf = ions_in_mode_closed_form(crystal.density, mode.waist, length)
    n_q = mode_overlap_quadrature(crystal.density, mode, length, crystal.radius, shape=shape)
    rel = abs(n_q - n_cf) / n_cf if n_cf > 0 else 0.0
    if g0 is None:
        g0 = single_ion_coupling(crystal.species, mode)
    truncated = length > 0 and crystal.radius < 2.0 * float(mode.beam_radius(length / 2.0))
    return ModeOverlap(n_cf, n_q, rel, g0 * math.sqrt(n_cf), bool(truncated))


def strong_coupling_threshold(gamma: float, kappa: float, g0: float) -> int:
    """Smallest integer N with g0*sqrt(N) strictly above max(gamma, kappa)."""
    if g0 <= 0:
        raise ValueError("g0 must be positive")
    ratio = (max(gamma, kappa) / g0) ** 2
    n = math.floor(ratio) + 1
    # guard against floor() landing one below an exact boundary through rounding
    while g0 * math.sqrt(n - 1) > max(gamma, kappa) and n > 1:
        n -= 1
    return n
