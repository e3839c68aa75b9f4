import math

import pytest

from geocover.config import Settings
from geocover.models.schemas import Surface, SurfaceKind, UhpPoint
from geocover.service.analytics import AnalyticsService
from geocover.service.cover import CoverService
from geocover.service.fuchsian import FuchsianService
from geocover.service.sampling import PointSampler

MODULAR = Surface(kind=SurfaceKind.MODULAR)
PLANE = Surface(kind=SurfaceKind.PLANE)
GENUS2 = Surface(kind=SurfaceKind.GENUS, genus=2)

LN2 = math.log(2.0)
I = UhpPoint(x=0.0, y=1.0)


@pytest.fixture(scope="session")
def settings():
    return Settings(_env_file=None)


@pytest.fixture(scope="session")
def fuchsian(settings):
    return FuchsianService(settings)


@pytest.fixture(scope="session")
def sampler(settings, fuchsian):
    return PointSampler(settings, fuchsian)


@pytest.fixture(scope="session")
def covers(settings, fuchsian, sampler):
    return CoverService(settings, fuchsian, sampler)


@pytest.fixture(scope="session")
def analytics(settings, covers):
    return AnalyticsService(settings, covers)


@pytest.fixture(scope="session")
def modular(fuchsian):
    return fuchsian.build_modular()


@pytest.fixture(scope="session")
def genus2(fuchsian):
    return fuchsian.build_regular_genus(2)


@pytest.fixture(scope="session")
def modular_cover(covers):
    return covers.modular_cover_paper()


@pytest.fixture(scope="session")
def genus2_cover(covers):
    return covers.build_cover_genus(2)
