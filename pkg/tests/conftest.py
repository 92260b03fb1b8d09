import math

import numpy as np
import pytest
from hypothesis import settings

from synricci import ModelManifold, build_witten, discretize

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# acceptance lines keyed by criterion number, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def weighted_circle():
    return ModelManifold.circle(1.0, cos={1: 0.5})


@pytest.fixture(scope="session")
def uniform_circle():
    return ModelManifold.circle(1.0)


@pytest.fixture(scope="session")
def circle64(weighted_circle):
    space = discretize(weighted_circle, 64)
    return space, build_witten(space)


@pytest.fixture(scope="session")
def sphere8():
    model = ModelManifold.sphere(1.0, poly={1: 0.3, 2: -0.2})
    space = discretize(model, 8)
    return model, space, build_witten(space)


def model_corpus():
    """Small models used by property tests (model, resolution)."""
    return [
        (ModelManifold.circle(1.0), 32),
        (ModelManifold.circle(1.0, cos={1: 0.5}), 48),
        (ModelManifold.circle(2.0, cos={2: 0.3}, sin={1: -0.2}), 40),
        (ModelManifold.sphere(1.0), 8),
        (ModelManifold.sphere(1.5, poly={1: 0.4, 3: 0.1}), 10),
        (ModelManifold.torus(1.0, 1.0), 8),
        (ModelManifold.torus(1.0, 2.0, cos={(1, 0): 0.3}, sin={(0, 1): 0.2}), (6, 10)),
    ]


def random_space(rng, n, dim=2):
    """Random Euclidean point cloud with random positive weights."""
    pts = rng.normal(size=(n, dim))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    from synricci import FiniteMMS

    return FiniteMMS(dist=dist, weight=rng.uniform(0.5, 2.0, n))


def angle_index(space, angle):
    th = space.labels[:, 0]
    dt = np.abs(th - angle) % (2 * math.pi)
    return int(np.argmin(np.minimum(dt, 2 * math.pi - dt)))
