"""Geodesic covers: construction, surface distances through them, and oracle verification."""

import logging
import math
import multiprocessing
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geocover.config import Settings, get_settings
from geocover.errors import DomainError, InvariantError, PreconditionError
from geocover.models.schemas import (
    CoverMethod,
    CoverSearchBounds,
    DistanceResult,
    FuchsianGroup,
    GeodesicCover,
    Isometry,
    Membership,
    PointPair,
    Surface,
    SurfaceKind,
    UhpPoint,
    VerifyReport,
)
from geocover.service import hyperbolic as hyp
from geocover.service.fuchsian import FuchsianService, get_fuchsian_service
from geocover.service.sampling import PointSampler

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9
VERIFY_CHUNK = 256

MODULAR_TEN = [
    (1, 0, 0, 1),
    (1, 1, 0, 1),
    (1, -1, 0, 1),
    (1, 0, 1, 1),
    (1, 0, -1, 1),
    (0, -1, 1, 1),
    (0, -1, 1, -1),
    (1, -1, 1, 0),
    (-1, -1, 1, 0),
    (0, -1, 1, 0),
]
MODULAR_RADICAL = [(1, 0, 0, 1), (1, 1, 0, 1), (1, 0, 1, 1), (0, -1, 1, 0)]


def _sorted_unique(elements: Sequence[Isometry]) -> List[Isometry]:
    unique: Dict[Tuple, Isometry] = {}
    for e in elements:
        unique.setdefault(e.key(), e)
    return sorted(unique.values(), key=lambda e: (hyp.norm_sq(e), e.entries))


def _image_distance(z1: complex, z2: complex, a, b, c, d) -> float:
    w = (a * z2 + b) / (c * z2 + d)
    dz = z1 - w
    t = (dz.real * dz.real + dz.imag * dz.imag) / (2.0 * z1.imag * w.imag)
    return math.log1p(t + math.sqrt(t * (t + 2.0)))


def _modular_minimum(z1: complex, z2: complex, margin: float) -> Tuple[float, Tuple[int, int, int, int]]:
    """Exact minimum of d(z1, gamma z2) over PSL2(Z) by norm-pruned enumeration.

    With z_k = x_k + i y_k the norm^2 of the normalised product splits into
    (a - x1 c)^2 y2/y1 + (a x2 + b - x1 c x2 - x1 d)^2/(y1 y2) + c^2 y1 y2 + (c x2 + d)^2 y1/y2,
    so every term bounds one entry once the cap margin * 2cosh(d(z1, z2)) is fixed.
    """
    x1, y1, x2, y2 = z1.real, z1.imag, z2.real, z2.imag
    best_d = _image_distance(z1, z2, 1, 0, 0, 1)
    best = (1, 0, 0, 1)
    cap = margin * 2.0 * math.cosh(best_d)

    def consider(a: int, b: int, c: int, d: int) -> None:
        nonlocal best_d, best
        dist = _image_distance(z1, z2, a, b, c, d)
        if dist < best_d:
            best_d, best = dist, (a, b, c, d)

    s = math.sqrt(cap * y1 * y2)
    for b in range(math.ceil(x1 - x2 - s), math.floor(x1 - x2 + s) + 1):
        if b != 0:
            consider(1, b, 0, 1)

    a_span = math.sqrt(cap * y1 / y2)
    d_span = math.sqrt(cap * y2 / y1)
    for c in range(1, math.floor(math.sqrt(cap / (y1 * y2))) + 1):
        a_range = range(math.ceil(x1 * c - a_span), math.floor(x1 * c + a_span) + 1)
        d_range = range(math.ceil(-x2 * c - d_span), math.floor(-x2 * c + d_span) + 1)
        for a in a_range:
            for d in d_range:
                num = a * d - 1
                if num % c == 0:
                    consider(a, num // c, c, d)
    return best_d, best


def _stack_minimum(stack: np.ndarray, z1: complex, z2: complex) -> np.ndarray:
    return hyp.distance_arrays(z1, hyp.apply_stack(stack, z2))


def _verify_chunk(job: Tuple) -> List[Tuple[float, float, Tuple[int, ...]]]:
    """Worker body: cover distance, oracle distance and argmin indices per pair."""
    cover_stack, oracle_stack, margin, pairs = job
    out = []
    for z1, z2 in pairs:
        dists = _stack_minimum(cover_stack, z1, z2)
        cover_d = float(dists.min())
        ties = tuple(int(i) for i in np.flatnonzero(dists <= cover_d + TIE_TOL))
        if oracle_stack is None:
            oracle_d = _modular_minimum(z1, z2, margin)[0]
        else:
            oracle_d = float(_stack_minimum(oracle_stack, z1, z2).min())
        out.append((cover_d, oracle_d, ties))
    return out


class CoverService:

    def __init__(
        self,
        settings: Optional[Settings] = None,
        fuchsian: Optional[FuchsianService] = None,
        sampler: Optional[PointSampler] = None,
    ):
        self.settings = settings or get_settings()
        self.fuchsian = fuchsian or FuchsianService(self.settings)
        self.sampler = sampler or PointSampler(self.settings, self.fuchsian)
        self._covers: Dict[Tuple, GeodesicCover] = {}
        self._stacks: Dict[int, Tuple[object, np.ndarray]] = {}

    # construction

    def radical_product(self, radical: Sequence[Isometry], two_sided: bool = False) -> List[Isometry]:
        products = [hyp.compose(hyp.inverse(g1), g2) for g1 in radical for g2 in radical]
        if two_sided:
            products += [hyp.compose(g1, hyp.inverse(g2)) for g1 in radical for g2 in radical]
        return _sorted_unique(products)

    def radical_shortfall(self, cover: GeodesicCover) -> List[Isometry]:
        """Elements of gamma0 missing from the one-sided product of its radical."""
        if not cover.radical:
            return []
        keys = {e.key() for e in self.radical_product(cover.radical)}
        return [e for e in cover.gamma0 if e.key() not in keys]

    def modular_cover_paper(self) -> GeodesicCover:
        cache_key = ("modular", "ten")
        if cache_key in self._covers:
            return self._covers[cache_key]
        gamma0 = [Isometry.of(*t) for t in MODULAR_TEN]
        radical = [Isometry.of(*t) for t in MODULAR_RADICAL]
        cover = GeodesicCover(
            surface=Surface(kind=SurfaceKind.MODULAR),
            gamma0=gamma0,
            method=CoverMethod.PAPER_MODULAR_TEN,
            radical=radical,
        )
        product_keys = {e.key() for e in self.radical_product(radical, two_sided=True)}
        missing = [e for e in gamma0 if e.key() not in product_keys]
        if missing:
            raise InvariantError(f"radical products miss {len(missing)} cover elements")
        shortfall = self.radical_shortfall(cover)
        logger.info(
            "modular cover: %d elements, radical %d, one-sided radical product misses %d",
            cover.size, len(radical), len(shortfall),
        )
        self._covers[cache_key] = cover
        return cover

    def _genus_cover(self, g: int, normsq_cap: float, target: Optional[float], cache_key: Tuple) -> GeodesicCover:
        if cache_key in self._covers:
            return self._covers[cache_key]
        grp = self.fuchsian.build_regular_genus(g)
        ball = self.fuchsian.enumerate_ball(grp, math.sqrt(normsq_cap))
        cover = GeodesicCover(
            surface=grp.surface,
            gamma0=ball.elements,
            method=CoverMethod.BALL_RADIUS_BOUND,
            bound_used=CoverSearchBounds(normsq_cap=normsq_cap, target_distance=target),
        )
        logger.info("genus-%d cover: normsq cap %.6g, %d elements", g, normsq_cap, cover.size)
        self._covers[cache_key] = cover
        return cover

    def build_cover_genus(self, g: int) -> GeodesicCover:
        if not 2 <= g <= self.settings.max_cover_genus:
            raise DomainError(f"genus cover needs 2 <= g <= {self.settings.max_cover_genus}, got {g}")
        poly = self.fuchsian.build_regular_genus(g).polygon
        cap = hyp.depth_to_normsq(2.0 * poly.vertex_radius + poly.diam_bound)
        return self._genus_cover(g, cap, None, ("genus", g, "diam"))

    def build_threshold_cover(self, g: int, r: float) -> GeodesicCover:
        """Ball cover that decides d_Y(p, q) < r exactly; larger distances may be overestimated."""
        if r <= 0:
            raise DomainError("threshold distance must be positive")
        poly = self.fuchsian.build_regular_genus(g).polygon
        cap = hyp.depth_to_normsq(2.0 * poly.vertex_radius + min(r, poly.diam_bound))
        return self._genus_cover(g, cap, r, ("genus", g, "threshold", round(r, 12)))

    def explicit_cover(self, surface: Surface, elements: Sequence[Isometry]) -> GeodesicCover:
        return GeodesicCover(surface=surface, gamma0=list(elements), method=CoverMethod.EXPLICIT)

    def identity_cover(self, surface: Surface) -> GeodesicCover:
        return self.explicit_cover(surface, [Isometry.identity(exact=surface.kind == SurfaceKind.MODULAR)])

    # distances

    def stack_for(self, cover) -> np.ndarray:
        """Float stack of a cover or ball, cached by identity of the object."""
        entry = self._stacks.get(id(cover))
        if entry is None or entry[0] is not cover:
            elements = cover.gamma0 if isinstance(cover, GeodesicCover) else cover.elements
            entry = (cover, hyp.isometry_stack(elements))
            self._stacks[id(cover)] = entry
        return entry[1]

    def _require_reduced(self, p: UhpPoint, grp: FuchsianGroup) -> None:
        if self.fuchsian.classify(p, grp) == Membership.OUTSIDE:
            raise PreconditionError(f"point {p!r} is not reduced to the fundamental domain")

    def surface_distance(self, p: UhpPoint, q: UhpPoint, cover: GeodesicCover) -> float:
        grp = self.fuchsian.group_for(cover.surface)
        self._require_reduced(p, grp)
        self._require_reduced(q, grp)
        return float(_stack_minimum(self.stack_for(cover), p.to_complex(), q.to_complex()).min())

    def surface_distance_with_argmin(self, p: UhpPoint, q: UhpPoint, cover: GeodesicCover) -> DistanceResult:
        grp = self.fuchsian.group_for(cover.surface)
        self._require_reduced(p, grp)
        self._require_reduced(q, grp)
        dists = _stack_minimum(self.stack_for(cover), p.to_complex(), q.to_complex())
        best = int(np.argmin(dists))
        ties = [cover.gamma0[i] for i in np.flatnonzero(dists <= dists[best] + TIE_TOL)]
        return DistanceResult(distance=float(dists[best]), argmin=cover.gamma0[best], ties=ties)

    def distance_matrix(
        self, points_a: Sequence[UhpPoint], points_b: Sequence[UhpPoint], cover: GeodesicCover
    ) -> np.ndarray:
        """Surface distances between two reduced point lists, shape (len(a), len(b))."""
        za = np.array([p.to_complex() for p in points_a], dtype=complex)
        zb = np.array([p.to_complex() for p in points_b], dtype=complex)
        result = np.full((len(za), len(zb)), np.inf)
        if len(za) == 0 or len(zb) == 0:
            return result
        stack = self.stack_for(cover)
        for row in stack:
            images = (row[0, 0] * zb + row[0, 1]) / (row[1, 0] * zb + row[1, 1])
            np.minimum(result, hyp.distance_arrays(za[:, None], images[None, :]), out=result)
        return result

    # oracles

    def brute_force_modular(self, p: UhpPoint, q: UhpPoint) -> Tuple[float, Isometry]:
        grp = self.fuchsian.build_modular()
        self._require_reduced(p, grp)
        self._require_reduced(q, grp)
        dist, entries = _modular_minimum(p.to_complex(), q.to_complex(), self.settings.modular_margin)
        return dist, Isometry.of(*entries, exact=True)

    def oracle_ball(self, grp: FuchsianGroup, inflate: Optional[float] = None):
        inflate = self.settings.oracle_inflate if inflate is None else inflate
        if inflate < 1.0:
            raise DomainError("oracle inflation must be at least 1")
        poly = grp.polygon
        cap = inflate * hyp.depth_to_normsq(2.0 * poly.vertex_radius + poly.diam_bound)
        return self.fuchsian.enumerate_ball(grp, math.sqrt(cap))

    def brute_force_ball(
        self, p: UhpPoint, q: UhpPoint, grp: FuchsianGroup, inflate: Optional[float] = None
    ) -> float:
        if grp.polygon is None:
            raise PreconditionError("ball oracle needs a regular genus group")
        self._require_reduced(p, grp)
        self._require_reduced(q, grp)
        ball = self.oracle_ball(grp, inflate)
        return float(_stack_minimum(self.stack_for(ball), p.to_complex(), q.to_complex()).min())

    # verification

    def verify_cover(self, cover: GeodesicCover, n_samples: int, seed: int) -> VerifyReport:
        settings = self.settings
        modular = cover.surface.kind == SurfaceKind.MODULAR
        tolerance = settings.verify_gap_tol if modular else settings.genus_verify_gap_tol
        if n_samples <= 0:
            logger.warning("verify_cover called with %d samples; nothing verified", n_samples)
            return VerifyReport(
                surface=cover.surface.label, method=cover.method, cover_size=cover.size,
                n_samples=0, seed=seed, tolerance=tolerance, max_abs_gap=0.0,
            )

        grp = self.fuchsian.group_for(cover.surface)
        oracle_stack = None if modular else self.stack_for(self.oracle_ball(grp))
        pairs = self.sampler.sample_pairs(cover.surface, n_samples, seed, boundary_bias=True)
        zpairs = [(p.to_complex(), q.to_complex()) for p, q in pairs]
        cover_stack = self.stack_for(cover)
        jobs = [
            (cover_stack, oracle_stack, settings.modular_margin, zpairs[i:i + VERIFY_CHUNK])
            for i in range(0, len(zpairs), VERIFY_CHUNK)
        ]
        if settings.threads > 1 and len(jobs) > 1:
            with multiprocessing.Pool(processes=min(settings.threads, len(jobs))) as pool:
                chunks = pool.map(_verify_chunk, jobs)
        else:
            chunks = [_verify_chunk(job) for job in jobs]
        results = [row for chunk in chunks for row in chunk]

        usage = [0] * cover.size
        max_gap, worst = 0.0, None
        for idx, (cover_d, oracle_d, ties) in enumerate(results):
            gap = abs(cover_d - oracle_d)
            if gap > max_gap:
                max_gap, worst = gap, idx
            for i in ties:
                usage[i] += 1
        used = [i for i in range(cover.size) if usage[i] > 0]
        report = VerifyReport(
            surface=cover.surface.label,
            method=cover.method,
            cover_size=cover.size,
            n_samples=n_samples,
            seed=seed,
            tolerance=tolerance,
            max_abs_gap=max_gap,
            worst_pair=None if worst is None else PointPair(p=pairs[worst][0], q=pairs[worst][1]),
            used_elements=[cover.gamma0[i] for i in used],
            usage_counts=[usage[i] for i in used],
        )
        log = logger.info if report.passed else logger.warning
        log(
            "verified %s cover (%d elements) on %d pairs: max gap %.3g, %d elements used",
            cover.surface.label, cover.size, n_samples, max_gap, len(used),
        )
        return report


_cover_service: Optional[CoverService] = None


def get_cover_service() -> CoverService:
    global _cover_service
    if _cover_service is None:
        fuchsian = get_fuchsian_service()
        _cover_service = CoverService(fuchsian.settings, fuchsian)
    return _cover_service
