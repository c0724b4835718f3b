"""Calcium ion species table.

Masses are atomic masses of the neutral isotopes (AME2016) minus one
electron. The 866 nm D3/2 -> P1/2 dipole moment is chosen so that a single
40Ca+ ion at the waist and antinode of the default cavity couples with
g0 = 2*pi x 0.53 MHz.
"""
from __future__ import annotations

from ioncavity.constants import AMU, E_CHARGE, TWO_PI
from ioncavity.trap import IonSpecies, TransitionData

ELECTRON_MASS_U = 5.48579909065e-4

ATOMIC_MASS_U = {
    "40Ca+": 39.962590866,
    "42Ca+": 41.95861783,
    "43Ca+": 42.95876644,
    "44Ca+": 43.9554816,
    "48Ca+": 47.95252276,
}

# 866 nm line shift relative to 40Ca+, Hz
ISOTOPE_SHIFT_866 = {
    "40Ca+": 0.0,
    "42Ca+": None,
    "43Ca+": None,
    "44Ca+": 4.5e9,
    "48Ca+": 8.3e9,
}

DIPOLE_866 = 1.0938e-29  # C m
WAVELENGTH_866 = 866e-9
GAMMA_866 = TWO_PI * 11e6  # dipole decay, Gamma/2


def _calcium(label: str) -> IonSpecies:
    mass = (ATOMIC_MASS_U[label] - ELECTRON_MASS_U) * AMU
    transition = TransitionData(
        dipole_moment=DIPOLE_866,
        wavelength=WAVELENGTH_866,
        gamma=GAMMA_866,
        isotope_shift=ISOTOPE_SHIFT_866[label],
    )
    return IonSpecies(mass=mass, charge=E_CHARGE, isotope_label=label, transition=transition)


SPECIES = {label: _calcium(label) for label in ATOMIC_MASS_U}
CA40 = SPECIES["40Ca+"]
CA44 = SPECIES["44Ca+"]


def get_species(label: str) -> IonSpecies:
    try:
        return SPECIES[label]
    except KeyError:
        raise KeyError(f"unknown species {label!r}; known: {sorted(SPECIES)}") from None


def isotope_shift(label: str) -> float | None:
    """866 nm isotope shift (Hz) of ``label`` relative to 40Ca+."""
    return get_species(label).transition.isotope_shift
