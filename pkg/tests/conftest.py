import pytest

from ioncavity.cavity import CavitySpec, waist_from_geometry
from ioncavity.species import CA40, CA44
from ioncavity.trap import DriveVoltages, TrapGeometry


@pytest.fixture
def geom():
    return TrapGeometry()


@pytest.fixture
def ca40():
    return CA40


@pytest.fixture
def ca44():
    return CA44


@pytest.fixture
def loading_voltages():
    return DriveVoltages(130.0, 3.9)


@pytest.fixture
def cavity():
    return CavitySpec()


@pytest.fixture
def mode(cavity):
    return waist_from_geometry(cavity)
