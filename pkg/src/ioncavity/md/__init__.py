"""Molecular-dynamics validation engine (direct-sum Coulomb, time-dependent rf trap)."""
from ioncavity.md.engine import (
    CollisionError,
    NotCrystallizedError,
    SimConfig,
    SimState,
    SimulationError,
    energy,
    forces,
    initial_state,
    relax_to_crystal,
    run,
    secular_averages,
    step,
)
