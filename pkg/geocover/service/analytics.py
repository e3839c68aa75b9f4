"""Distinct-distance statistics and the packing / scaling experiments built on them."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geocover.config import Settings, get_settings
from geocover.errors import DomainError, PointCollisionError, PreconditionError, SurfaceMismatchError
from geocover.models.schemas import (
    CoverGrowthRow,
    CrossStats,
    DistanceStats,
    EquilateralReport,
    GeodesicCover,
    LiftedStats,
    Membership,
    PointKind,
    PointSet,
    QpRow,
    Surface,
    SurfaceKind,
    UhpPoint,
)
from geocover.service import hyperbolic as hyp
from geocover.service.cover import CoverService, get_cover_service

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-9
PACKING_SLACK = 1e-9


def cluster_sorted(values: np.ndarray, eps: float) -> Tuple[List[float], List[int]]:
    """Group a sorted array by adjacent gap < eps; returns (smallest member, size) per cluster."""
    reps: List[float] = []
    counts: List[int] = []
    prev = None
    for v in values.tolist():
        if prev is None or v - prev >= eps:
            reps.append(v)
            counts.append(1)
        else:
            counts[-1] += 1
        prev = v
    return reps, counts


class AnalyticsService:

    def __init__(self, settings: Optional[Settings] = None, covers: Optional[CoverService] = None):
        self.settings = settings or get_settings()
        self.covers = covers or CoverService(self.settings)
        self.fuchsian = self.covers.fuchsian
        self.sampler = self.covers.sampler

    def _check_cover(self, surface: Surface, cover: Optional[GeodesicCover]) -> None:
        if surface.kind == SurfaceKind.PLANE:
            if cover is not None:
                raise PreconditionError("plane point sets take no cover")
            return
        if cover is None:
            raise PreconditionError(f"a geodesic cover is required for {surface.label}")
        if cover.surface != surface:
            raise SurfaceMismatchError(f"cover is for {cover.surface.label}, points are on {surface.label}")

    def _check_reduced(self, points: PointSet) -> None:
        if points.surface.kind == SurfaceKind.PLANE:
            return
        grp = self.fuchsian.group_for(points.surface)
        for idx, p in enumerate(points.points):
            if self.fuchsian.classify(p, grp) == Membership.OUTSIDE:
                raise PreconditionError(f"point {idx} of {points.label!r} is outside the fundamental domain")

    def distance_matrix(
        self, a: Sequence[UhpPoint], b: Sequence[UhpPoint], cover: Optional[GeodesicCover]
    ) -> np.ndarray:
        if cover is not None:
            return self.covers.distance_matrix(a, b, cover)
        za = np.array([p.to_complex() for p in a], dtype=complex)
        zb = np.array([p.to_complex() for p in b], dtype=complex)
        return hyp.distance_arrays(za[:, None], zb[None, :])

    def distance_stats(
        self, points: PointSet, cover: Optional[GeodesicCover] = None, eps_eq: Optional[float] = None
    ) -> DistanceStats:
        eps = self.settings.eps_eq if eps_eq is None else eps_eq
        if eps <= 0:
            raise DomainError("eps_eq must be positive")
        n = points.size
        if n < 2:
            raise DomainError(f"distance statistics need at least 2 points, got {n}")
        self._check_cover(points.surface, cover)
        self._check_reduced(points)

        dist = self.distance_matrix(points.points, points.points, cover)
        upper = np.sort(dist[np.triu_indices(n, 1)])
        if upper[0] <= ZERO_TOL:
            raise PointCollisionError(f"two points of {points.label!r} coincide")
        values, counts = cluster_sorted(upper, eps)
        multiplicities = [2 * c for c in counts]
        quadruples = sum(k * k for k in multiplicities)

        thm_bound = None
        if cover is not None:
            k = cover.size
            thm_bound = n / (k ** 3 * math.log(k * n)) if k * n > 1 else None
        logger.info("distance stats %s: N=%d m=%d Q=%d", points.label or points.surface.label, n, len(values), quadruples)
        return DistanceStats(
            n=n,
            m=len(values),
            values=values,
            multiplicities=multiplicities,
            quadruples=quadruples,
            cs_lower_bound=(n ** 4 - 2 * n ** 3) / quadruples,
            thm_bound=thm_bound,
            eps_eq=eps,
        )

    def cross_stats(
        self,
        p1: PointSet,
        p2: PointSet,
        cover: Optional[GeodesicCover] = None,
        eps_eq: Optional[float] = None,
    ) -> CrossStats:
        eps = self.settings.eps_eq if eps_eq is None else eps_eq
        if eps <= 0:
            raise DomainError("eps_eq must be positive")
        if p1.surface != p2.surface:
            raise SurfaceMismatchError(f"point sets live on {p1.surface.label} and {p2.surface.label}")
        self._check_cover(p1.surface, cover)
        self._check_reduced(p1)
        self._check_reduced(p2)

        dist = self.distance_matrix(p1.points, p2.points, cover)
        zero = dist <= ZERO_TOL
        intersection = int(zero.sum())
        values, counts = cluster_sorted(np.sort(dist[~zero]), eps)
        union = p1.size + p2.size - intersection
        bound = None
        if union >= 2:
            bound = p1.size ** 2 * p2.size ** 2 / (union ** 3 * math.log(union))
        return CrossStats(
            size1=p1.size,
            size2=p2.size,
            intersection=intersection,
            m_cross=len(values),
            values=values,
            multiplicities=counts,
            quadruples_cross=sum(k * k for k in counts),
            bound=bound,
        )

    def lift(self, points: PointSet, cover: GeodesicCover) -> PointSet:
        """The plane set of all cover translates of the points, distinct up to 1e-9."""
        stack = self.covers.stack_for(cover)
        z = np.array([p.to_complex() for p in points.points], dtype=complex)
        images = hyp.apply_stack(stack, z).ravel()
        dist = hyp.distance_arrays(images[:, None], images[None, :])
        dropped = np.zeros(len(images), dtype=bool)
        kept = []
        for i in range(len(images)):
            if dropped[i]:
                continue
            kept.append(i)
            dropped |= dist[i] <= ZERO_TOL
        lifted = [UhpPoint.from_complex(complex(images[i])) for i in kept]
        return PointSet(surface=Surface(kind=SurfaceKind.PLANE), points=lifted, label=f"lift:{points.label}")

    def lifted_stats(self, points: PointSet, cover: GeodesicCover, eps_eq: Optional[float] = None) -> LiftedStats:
        surface = self.distance_stats(points, cover, eps_eq)
        lifted = self.lift(points, cover)
        plane = self.distance_stats(lifted, None, eps_eq)
        return LiftedStats(
            n=points.size,
            cover_size=cover.size,
            lifted_size=lifted.size,
            surface_quadruples=surface.quadruples,
            lifted_quadruples=plane.quadruples,
        )

    def equilateral_greedy(
        self,
        g: int,
        r: float,
        attempts: int,
        seed: int,
        cover: Optional[GeodesicCover] = None,
    ) -> EquilateralReport:
        if r <= 0:
            raise DomainError("target distance must be positive")
        if attempts < 1:
            raise DomainError("at least one attempt is needed")
        grp = self.fuchsian.build_regular_genus(g)
        surface = grp.surface
        alpha_min = hyp.chord_half_angle(r, r)
        circle_cap = math.floor(2.0 * math.pi / alpha_min + 1e-9)
        rng = np.random.default_rng(seed)

        def report(found: int, circle_found: int, points: List[UhpPoint]) -> EquilateralReport:
            return EquilateralReport(
                g=g, r=r, found=found, circle_found=circle_found, alpha_min=alpha_min,
                circle_cap=circle_cap, attempts=attempts, seed=seed, points=points,
            )

        if r > grp.polygon.diam_bound + PACKING_SLACK:
            # no two points of the surface are that far apart
            return report(1, 0, [self.sampler.area_uniform_one(surface, rng)])

        cover = cover or self.covers.build_threshold_cover(g, r)
        stack = self.covers.stack_for(cover)
        threshold = r - PACKING_SLACK

        def fits(candidate: UhpPoint, kept: List[complex]) -> bool:
            images = hyp.apply_stack(stack, candidate.to_complex())
            dist = hyp.distance_arrays(np.array(kept)[:, None], images[None, :])
            return bool(dist.min(axis=1).min() >= threshold)

        best = None
        for attempt in range(attempts):
            seed_point = self.sampler.area_uniform_one(surface, rng)
            to_seed = hyp.point_to_isometry(seed_point)
            kept_points = [seed_point]
            kept = [seed_point.to_complex()]
            circle_found = 0
            for theta in rng.random(self.settings.equilateral_circle_candidates) * 2.0 * math.pi:
                on_circle = hyp.apply(to_seed, hyp.disk_uhp(hyp.disk_point_at(r, float(theta))))
                candidate = self.fuchsian.reduce_to_fundamental(on_circle, grp)[0]
                if fits(candidate, kept):
                    kept_points.append(candidate)
                    kept.append(candidate.to_complex())
                    circle_found += 1
            for _ in range(self.settings.equilateral_general_candidates):
                candidate = self.sampler.area_uniform_one(surface, rng)
                if fits(candidate, kept):
                    kept_points.append(candidate)
                    kept.append(candidate.to_complex())
            logger.debug("equilateral g=%d r=%.6g attempt %d: %d points", g, r, attempt, len(kept_points))
            if best is None or len(kept_points) > best[0]:
                best = (len(kept_points), circle_found, kept_points)

        logger.info("equilateral g=%d r=%.6g: best %d points, circle cap %d", g, r, best[0], circle_cap)
        return report(*best)

    def qp_scaling_experiment(self, n_values: Sequence[int], seed: int) -> List[QpRow]:
        n_values = list(n_values)
        if any(b < a for a, b in zip(n_values, n_values[1:])):
            raise DomainError("N values must be ascending")
        if any(n < 2 for n in n_values):
            raise DomainError("every N must be at least 2")
        surface = Surface(kind=SurfaceKind.MODULAR)
        cover = self.covers.modular_cover_paper()
        rows = []
        for n in n_values:
            points = self.sampler.generate_points(PointKind.AREA_UNIFORM, surface, n, seed)
            stats = self.distance_stats(points, cover)
            rows.append(QpRow(
                n=n,
                quadruples=stats.quadruples,
                ratio=stats.quadruples / (n ** 3 * math.log(n)),
                m=stats.m,
                cs_lower_bound=stats.cs_lower_bound,
            ))
        return rows

    def cover_growth_table(self, g_values: Sequence[int]) -> List[CoverGrowthRow]:
        rows = []
        for g in g_values:
            cover = self.covers.build_cover_genus(g)
            rows.append(CoverGrowthRow(
                g=g, normsq_cap=cover.bound_used.normsq_cap, size=cover.size, ratio=cover.size / g ** 6,
            ))
        return rows

    @staticmethod
    def genus_bound(n: int, g: int) -> float:
        """Shape-only N / (g^18 (ln N + ln g)) with the absolute constant set to 1."""
        if n < 2 or g < 2:
            raise DomainError("genus bound needs N >= 2 and g >= 2")
        return n / (g ** 18 * (math.log(n) + math.log(g)))


_analytics_service: Optional[AnalyticsService] = None


def get_analytics_service() -> AnalyticsService:
    global _analytics_service
    if _analytics_service is None:
        covers = get_cover_service()
        _analytics_service = AnalyticsService(covers.settings, covers)
    return _analytics_service
