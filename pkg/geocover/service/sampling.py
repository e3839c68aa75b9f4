"""Seeded point generation on the plane, the modular surface and the regular genus surfaces."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geocover.config import Settings, get_settings
from geocover.errors import DomainError, InvariantError, PointCollisionError
from geocover.models.schemas import (
    FuchsianGroup,
    Isometry,
    Membership,
    PointKind,
    PointSet,
    Surface,
    SurfaceKind,
    UhpPoint,
)
from geocover.service import hyperbolic as hyp
from geocover.service.fuchsian import FuchsianService, get_fuchsian_service

logger = logging.getLogger(__name__)

PLANE_SAMPLE_RADIUS = 3.0
COLLISION_TOL = 1e-9
SQRT3_2 = math.sqrt(3.0) / 2.0


class PointSampler:

    def __init__(self, settings: Optional[Settings] = None, fuchsian: Optional[FuchsianService] = None):
        self.settings = settings or get_settings()
        self.fuchsian = fuchsian or FuchsianService(self.settings)

    def area_uniform_one(self, surface: Surface, rng: np.random.Generator, boundary: bool = False) -> UhpPoint:
        if surface.kind == SurfaceKind.PLANE:
            return self._plane_uniform(rng)
        if surface.kind == SurfaceKind.MODULAR:
            return self._modular_boundary(rng) if boundary else self._modular_uniform(rng)
        grp = self.fuchsian.build_regular_genus(surface.genus)
        return self._polygon_boundary(grp, rng) if boundary else self._polygon_uniform(grp, rng)

    def area_uniform(
        self, surface: Surface, count: int, rng: np.random.Generator, boundary_bias: bool = False
    ) -> List[UhpPoint]:
        """Area-uniform points of F.

        With `boundary_bias` a `boundary_fraction` share is pushed within `boundary_band`
        of the boundary.
        """
        if not boundary_bias or surface.kind == SurfaceKind.PLANE:
            return [self.area_uniform_one(surface, rng) for _ in range(count)]
        fraction = self.settings.boundary_fraction
        return [self.area_uniform_one(surface, rng, boundary=rng.random() < fraction) for _ in range(count)]

    def sample_pairs(
        self, surface: Surface, count: int, seed: int, boundary_bias: bool = True
    ) -> List[Tuple[UhpPoint, UhpPoint]]:
        rng = np.random.default_rng(seed)
        pts = self.area_uniform(surface, 2 * count, rng, boundary_bias=boundary_bias)
        return [(pts[2 * i], pts[2 * i + 1]) for i in range(count)]

    def _plane_uniform(self, rng: np.random.Generator) -> UhpPoint:
        # hyperbolic disk of radius PLANE_SAMPLE_RADIUS about i
        r = hyp.stable_acosh(1.0 + rng.random() * (math.cosh(PLANE_SAMPLE_RADIUS) - 1.0))
        return hyp.disk_uhp(hyp.disk_point_at(r, 2.0 * math.pi * rng.random()))

    def _modular_y(self, rng: np.random.Generator) -> float:
        lo, hi = 1.0 / SQRT3_2, 1.0 / self.settings.modular_y_max
        return 1.0 / (lo - rng.random() * (lo - hi))

    def _modular_uniform(self, rng: np.random.Generator) -> UhpPoint:
        while True:
            x = rng.random() - 0.5
            y = self._modular_y(rng)
            if x * x + y * y > 1.0:
                return UhpPoint(x=x, y=y)

    def _modular_boundary(self, rng: np.random.Generator) -> UhpPoint:
        band = self.settings.boundary_band
        while True:
            delta = rng.random() * band
            which = int(rng.integers(3))
            if which < 2:
                x = (0.5 - delta) * (1 if which else -1)
                y = self._modular_y(rng)
            else:
                theta = math.pi / 3 + rng.random() * math.pi / 3
                x, y = (1.0 + delta) * math.cos(theta), (1.0 + delta) * math.sin(theta)
            if abs(x) <= 0.5 and x * x + y * y > 1.0 and y <= self.settings.modular_y_max:
                return UhpPoint(x=x, y=y)

    def _polygon_uniform(self, grp: FuchsianGroup, rng: np.random.Generator) -> UhpPoint:
        poly = grp.polygon
        cosh_max = math.cosh(poly.vertex_radius)
        while True:
            r = hyp.stable_acosh(1.0 + rng.random() * (cosh_max - 1.0))
            p = hyp.disk_uhp(hyp.disk_point_at(r, 2.0 * math.pi * rng.random()))
            if self.fuchsian.in_fundamental_polygon(p, poly) == Membership.INTERIOR:
                return p

    def _polygon_boundary(self, grp: FuchsianGroup, rng: np.random.Generator) -> UhpPoint:
        poly = grp.polygon
        n = poly.n_sides
        k = int(rng.integers(n))
        a = hyp.disk_uhp(poly.vertices[k])
        b = hyp.disk_uhp(poly.vertices[(k + 1) % n])
        on_side = hyp.uhp_disk(hyp.point_on_segment(a, b, rng.random())).to_complex()
        # slide toward the centre along the radial geodesic
        depth = 2.0 * math.atanh(abs(on_side)) - rng.random() * self.settings.boundary_band
        w = math.tanh(max(depth, 0.0) / 2.0) * on_side / abs(on_side)
        p = hyp.disk_uhp(hyp.disk_point_at(2.0 * math.atanh(abs(w)), math.atan2(w.imag, w.real)))
        if self.fuchsian.in_fundamental_polygon(p, poly) == Membership.OUTSIDE:
            raise InvariantError(f"boundary sample {p!r} left the polygon")
        return p

    def generate_points(
        self,
        kind: PointKind,
        surface: Surface,
        count: int,
        seed: int,
        h: float = math.log(2.0),
        z0: Optional[UhpPoint] = None,
        elements: Optional[Sequence[Isometry]] = None,
        orbit_radius: float = 4.0,
    ) -> PointSet:
        if count < 0:
            raise DomainError("count must be non-negative")
        label = f"{kind.value}:{surface.label}:n={count}:seed={seed}"
        grp = None if surface.kind == SurfaceKind.PLANE else self.fuchsian.group_for(surface)

        if kind == PointKind.AREA_UNIFORM:
            points = self.area_uniform(surface, count, np.random.default_rng(seed))
            self._check_distinct(points)
        elif kind == PointKind.GEODESIC_PROGRESSION:
            points = [UhpPoint(x=0.0, y=math.exp(k * h)) for k in range(count)]
            if grp is not None:
                points = [self.fuchsian.reduce_to_fundamental(p, grp)[0] for p in points]
            self._check_distinct(points)
        elif kind == PointKind.ORBIT_SAMPLE:
            if grp is None:
                raise DomainError("orbit samples need a surface group")
            z0 = z0 or UhpPoint(x=0.1, y=1.3)
            if elements is None:
                elements = self.fuchsian.enumerate_ball(grp, orbit_radius).elements
            points = []
            for gamma in list(elements)[:count]:
                img = self.fuchsian.reduce_to_fundamental(hyp.apply(gamma, z0), grp)[0]
                if all(hyp.distance_uhp(img, other) > COLLISION_TOL for other in points):
                    points.append(img)
        else:
            raise DomainError(f"unknown point kind {kind!r}")

        logger.info("generated %d points (%s)", len(points), label)
        return PointSet(surface=surface, points=points, label=label)

    @staticmethod
    def _check_distinct(points: Sequence[UhpPoint]) -> None:
        if len(points) < 2:
            return
        z = np.array([p.to_complex() for p in points])
        dist = hyp.distance_arrays(z[:, None], z[None, :])
        np.fill_diagonal(dist, np.inf)
        if float(dist.min()) <= COLLISION_TOL:
            i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
            raise PointCollisionError(f"points {i} and {j} collide after reduction")


_point_sampler: Optional[PointSampler] = None


def get_point_sampler() -> PointSampler:
    global _point_sampler
    if _point_sampler is None:
        _point_sampler = PointSampler(fuchsian=get_fuchsian_service())
    return _point_sampler
