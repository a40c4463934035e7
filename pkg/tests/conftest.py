import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from ifsmlab.examples import (cantor_mixture_model, cantor_model,
                              cantor_thermo_model, gifs_skew_model,
                              h4_violating_model, sierpinski_model,
                              single_map_model)


@pytest.fixture(scope="session")
def cantor():
    return cantor_model()


@pytest.fixture(scope="session")
def sierpinski():
    return sierpinski_model()


@pytest.fixture(scope="session")
def mixture():
    return cantor_mixture_model()


@pytest.fixture(scope="session")
def thermo():
    return cantor_thermo_model()


@pytest.fixture(scope="session")
def gifs():
    return gifs_skew_model()


@pytest.fixture(scope="session")
def halver():
    return single_map_model(0.5)


@pytest.fixture(scope="session")
def h4_violator():
    return h4_violating_model()
