import pytest

from transmon_lattice.fileio import load_bundled_device


@pytest.fixture(scope="session")
def device():
    return load_bundled_device()
