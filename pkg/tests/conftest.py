import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2.0 * math.pi


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def three_tone_field():
    from optisense import Multitone
    return Multitone((0.45, 0.43, 0.12), (77e3, 96e3, 141e3))


@pytest.fixture
def mono_field():
    from optisense import Multitone
    return Multitone.single(20.5e3)


@pytest.fixture
def lobe_noise():
    from optisense import GaussianMixture
    return GaussianMixture([3.0e4], [TWO_PI * 25e3], [TWO_PI * 3e3])
