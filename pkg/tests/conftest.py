import pytest

from a2glos.environment import get_scenario
from a2glos.fit import train_pair
from a2glos.geometry import FresnelSpec, wavelength_from_frequency


@pytest.fixture(scope="session")
def urban_models():
    """Retrained (d1, d2) network pair for the urban preset at 28 GHz.

    Training takes a few seconds; shared across the tests that probe the
    retrained-model behaviour.
    """
    env = get_scenario("urban").env
    spec = FresnelSpec(wavelength_from_frequency(28e9))
    mlp_d1, mlp_d2, ds = train_pair(env, spec)
    return mlp_d1, mlp_d2, ds
