import numpy as np
import pytest

from k41lab.noise import make_isotropic_spec, shell_profile
from k41lab.spectral import build_lattice, random_divergence_free


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lat3():
    return build_lattice(3, 1.0, 4)


@pytest.fixture
def lat2():
    return build_lattice(2, 1.0, 6)


@pytest.fixture
def field3(lat3, rng):
    return random_divergence_free(lat3, rng)


def single_shell_spec(lattice, amp=1.0, k_f=1):
    return make_isotropic_spec(lattice, shell_profile(lattice, k_f=k_f), amp=amp)
