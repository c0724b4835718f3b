"""Design and validation toolkit for a linear Paul trap with an integrated optical cavity."""
from ioncavity.trap import (
    DriveVoltages,
    IonSpecies,
    RadiallyDeconfinedError,
    StabilityFlag,
    TransitionData,
    TrapGeometry,
    axial_frequency,
    crystal_density,
    mathieu_q,
    pseudo_potential,
    radial_frequency,
)
from ioncavity.species import CA40, CA44, SPECIES, get_species

__version__ = "0.1.0"
