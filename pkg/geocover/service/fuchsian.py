import bisect
import itertools
import logging
import math
from collections import deque
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from geocover.config import Settings, get_settings
from geocover.errors import (
    CapExceededError,
    DomainError,
    IntegerOverflowError,
    InvariantError,
    NonTerminationError,
)
from geocover.models.schemas import (
    BallEnumeration,
    FuchsianGroup,
    GroupKind,
    Isometry,
    LatticeRow,
    Membership,
    PolygonData,
    Surface,
    SurfaceKind,
    UhpPoint,
)
from geocover.service import hyperbolic as hyp

logger = logging.getLogger(__name__)

T = Isometry.of(1, 1, 0, 1)
T_INV = Isometry.of(1, -1, 0, 1)
S = Isometry.of(0, -1, 1, 0)
L = Isometry.of(1, 0, 1, 1)

I_POINT = UhpPoint(x=0.0, y=1.0)

RELATOR_TOL = 1e-8
ANGLE_TOL = 1e-9
PAIRING_TOL = 1e-9
NORM_SLACK = 1e-9


def _mul(g: Tuple, h: Tuple) -> Tuple:
    a, b, c, d = g
    e, f, k, m = h
    return (a * e + b * k, a * f + b * m, c * e + d * k, c * f + d * m)


def _sign_normalize(t: Tuple) -> Tuple:
    for v in t:
        if abs(v) > 1e-12:
            if v < 0:
                return tuple(-x for x in t)
            break
    return t


def _normsq(t: Tuple) -> float:
    return t[0] * t[0] + t[1] * t[1] + t[2] * t[2] + t[3] * t[3]


def _probe_keys(t: Tuple, tol: float) -> Iterable[Tuple]:
    """Grid cell of t plus the neighbouring cells a rounding boundary could split it into."""
    choices = []
    for v in t:
        s = v / tol
        k = round(s)
        frac = s - k
        if frac > 0.25:
            choices.append((k, k + 1))
        elif frac < -0.25:
            choices.append((k, k - 1))
        else:
            choices.append((k,))
    return itertools.product(*choices)


class FuchsianService:

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self._groups: Dict[str, FuchsianGroup] = {}
        self._balls: Dict[Tuple, BallEnumeration] = {}

    def build_modular(self) -> FuchsianGroup:
        if "modular" not in self._groups:
            grp = FuchsianGroup(kind=GroupKind.MODULAR, generators=[T, T_INV, S])
            self._groups["modular"] = grp
            logger.info("built modular group with %d generators", len(grp.generators))
        return self._groups["modular"]

    def build_regular_genus(self, g: int) -> FuchsianGroup:
        label = f"genus:{g}"
        if label in self._groups:
            return self._groups[label]
        if not 2 <= g <= self.settings.max_regular_genus:
            raise DomainError(f"genus must lie in [2, {self.settings.max_regular_genus}], got {g}")

        n = 4 * g
        beta = math.pi / n
        cot = 1.0 / math.tan(beta)
        vertex_radius = hyp.right_triangle_hyp(beta)
        edge_radius = hyp.right_triangle_leg(beta)
        diam_bound = hyp.stable_acosh(2.0 * cot * cot - 1.0)
        vertices = [hyp.disk_point_at(vertex_radius, 2.0 * math.pi * k / n) for k in range(n)]
        pairing = [_paired_side(k) for k in range(n)]
        uhp = [hyp.disk_uhp(v) for v in vertices]

        pair_maps = []
        for k in range(n):
            if k % 4 not in (0, 1):
                continue
            s = pairing[k]
            pair_maps.append(hyp.isometry_from_segments(uhp[k], uhp[(k + 1) % n], uhp[(s + 1) % n], uhp[s]))

        generators = []
        for pm in pair_maps:
            generators.extend([pm, hyp.inverse(pm)])

        poly = PolygonData(
            g=g,
            beta=beta,
            vertex_radius=vertex_radius,
            edge_radius=edge_radius,
            diam_bound=diam_bound,
            vertices=vertices,
            pairing=pairing,
            pair_maps=pair_maps,
        )
        grp = FuchsianGroup(kind=GroupKind.REGULAR_GENUS, genus=g, generators=generators, polygon=poly)
        self._verify_polygon(grp)
        self._groups[label] = grp
        logger.info(
            "built genus-%d group: beta=%.6g vertex_radius=%.9g edge_radius=%.9g diam_bound=%.9g",
            g, beta, vertex_radius, edge_radius, diam_bound,
        )
        return grp

    def group_for(self, surface: Surface) -> FuchsianGroup:
        if surface.kind == SurfaceKind.MODULAR:
            return self.build_modular()
        if surface.kind == SurfaceKind.GENUS:
            return self.build_regular_genus(surface.genus)
        raise DomainError("the plane has no Fuchsian group")

    def _verify_polygon(self, grp: FuchsianGroup) -> None:
        poly = grp.polygon
        n = poly.n_sides
        if abs(poly.diam_bound - 2.0 * poly.edge_radius) > 1e-12 * max(1.0, poly.diam_bound):
            raise InvariantError("diameter bound differs from twice the edge radius")
        if any(poly.pairing[poly.pairing[k]] != k or poly.pairing[k] == k for k in range(n)):
            raise InvariantError("side pairing is not a fixed-point-free involution")

        uhp = [hyp.disk_uhp(v) for v in poly.vertices]
        for k, pm in zip(poly.paired_sides, poly.pair_maps):
            s = poly.pairing[k]
            if (hyp.distance_uhp(hyp.apply(pm, uhp[k]), uhp[(s + 1) % n]) > PAIRING_TOL
                    or hyp.distance_uhp(hyp.apply(pm, uhp[(k + 1) % n]), uhp[s]) > PAIRING_TOL):
                raise InvariantError(f"pair map of side {k} misses side {s}")

        target = math.pi / (2 * poly.g)
        for k in range(n):
            angle = hyp.interior_angle(uhp[k - 1], uhp[k], uhp[(k + 1) % n])
            if abs(angle - target) > ANGLE_TOL:
                raise InvariantError(f"interior angle {angle!r} at vertex {k} is not pi/(2g)")

        tol = relator_tolerance(poly)
        defect = self.relator_defect(grp)
        if defect > tol:
            raise InvariantError(f"commutator relator is {defect!r} away from the identity")
        cycle_defect, visited = self._walk_vertex_cycle(grp)
        if cycle_defect > tol or visited != n:
            raise InvariantError(
                f"vertex cycle does not close (defect {cycle_defect!r}, {visited} of {n} vertices)"
            )

    def side_map(self, poly: PolygonData, k: int) -> Isometry:
        """The generator pairing side sigma(k) onto side k; it carries F across side k."""
        if k % 4 in (0, 1):
            return hyp.inverse(poly.pair_maps[poly.paired_sides.index(k)])
        return poly.pair_maps[poly.paired_sides.index(poly.pairing[k])]

    def relator_defect(self, grp: FuchsianGroup) -> float:
        poly = grp.polygon
        factors = []
        for m in range(poly.g):
            a = self.side_map(poly, 4 * m)
            b = self.side_map(poly, 4 * m + 3)
            factors.extend([a, b, hyp.inverse(a), hyp.inverse(b)])
        return hyp.frobenius_distance(hyp.compose_all(factors), Isometry.identity(exact=False))

    def vertex_cycle_defect(self, grp: FuchsianGroup) -> float:
        return self._walk_vertex_cycle(grp)[0]

    def _walk_vertex_cycle(self, grp: FuchsianGroup) -> Tuple[float, int]:
        """Walk the copies of F around vertex 0; returns (defect, distinct vertices met)."""
        poly = grp.polygon
        n = poly.n_sides
        vertex, side = 0, 0
        acc = Isometry.identity(exact=False)
        visited = set()
        for _ in range(n):
            visited.add(vertex)
            acc = hyp.compose(acc, self.side_map(poly, side))
            partner = poly.pairing[side]
            vertex = (partner + 1) % n if vertex == side else partner
            shared = partner
            side = vertex if (vertex - 1) % n == shared else (vertex - 1) % n
        if vertex != 0:
            return math.inf, len(visited)
        return hyp.frobenius_distance(acc, Isometry.identity(exact=False)), len(visited)

    def side_circles(self, poly: PolygonData) -> List[Tuple[complex, float]]:
        """Euclidean circles (centre, radius) carrying the sides in the disk."""
        n = poly.n_sides
        t = math.tanh(poly.edge_radius / 2.0)
        dist = (t + 1.0 / t) / 2.0
        radius = (1.0 / t - t) / 2.0
        return [
            (dist * complex(math.cos(2 * math.pi * (k + 0.5) / n), math.sin(2 * math.pi * (k + 0.5) / n)), radius)
            for k in range(n)
        ]

    def in_fundamental_modular(self, p: UhpPoint) -> Membership:
        tol = self.settings.boundary_tol
        edge = abs(p.x) - 0.5
        arc = p.x * p.x + p.y * p.y - 1.0
        if edge > tol or arc < -tol:
            return Membership.OUTSIDE
        if edge < -tol and arc > tol:
            return Membership.INTERIOR
        return Membership.BOUNDARY

    def in_fundamental_polygon(self, p: UhpPoint, poly: PolygonData) -> Membership:
        tol = self.settings.boundary_tol
        w = hyp.uhp_disk(p).to_complex()
        margins = [abs(w - centre) - radius for centre, radius in self.side_circles(poly)]
        low = min(margins)
        if low < -tol:
            return Membership.OUTSIDE
        if low > tol:
            return Membership.INTERIOR
        return Membership.BOUNDARY

    def classify(self, p: UhpPoint, grp: FuchsianGroup) -> Membership:
        if grp.kind == GroupKind.MODULAR:
            return self.in_fundamental_modular(p)
        return self.in_fundamental_polygon(p, grp.polygon)

    def reduce_to_fundamental(self, p: UhpPoint, grp: FuchsianGroup) -> Tuple[UhpPoint, Isometry]:
        if grp.kind == GroupKind.MODULAR:
            return self._reduce_modular(p)
        return self._reduce_polygon(p, grp)

    def _reduce_modular(self, p: UhpPoint) -> Tuple[UhpPoint, Isometry]:
        tol = self.settings.boundary_tol
        x, y = p.x, p.y
        a, b, c, d = 1, 0, 0, 1
        for _ in range(self.settings.reduce_max_iter):
            shift = math.floor(x + 0.5)
            if shift:
                x -= shift
                a, b = a - shift * c, b - shift * d
            r2 = x * x + y * y
            if r2 < 1.0 - tol:
                x, y = -x / r2, y / r2
                a, b, c, d = -c, -d, a, b
                continue
            break
        else:
            raise NonTerminationError(f"modular reduction of {p!r} did not terminate")

        # boundary representatives: x = -1/2 on the edges, x <= 0 on the arc
        if abs(x - 0.5) <= tol:
            x -= 1.0
            a, b = a - c, b - d
        if abs(x * x + y * y - 1.0) <= tol and x > tol:
            r2 = x * x + y * y
            x, y = -x / r2, y / r2
            a, b, c, d = -c, -d, a, b
        return UhpPoint(x=x, y=y), Isometry.of(a, b, c, d, exact=True)

    def _reduce_polygon(self, p: UhpPoint, grp: FuchsianGroup) -> Tuple[UhpPoint, Isometry]:
        poly = grp.polygon
        stack = hyp.isometry_stack(grp.generators)
        z = p
        gamma = Isometry.identity(exact=False)
        for _ in range(self.settings.reduce_max_iter):
            if self.in_fundamental_polygon(z, poly) != Membership.OUTSIDE:
                break
            images = hyp.apply_stack(stack, z.to_complex())
            best = int(np.argmin(hyp.distance_arrays(images, 1j)))
            z = UhpPoint.from_complex(complex(images[best]))
            gamma = hyp.compose(grp.generators[best], gamma)
        else:
            raise NonTerminationError(f"polygon reduction of {p!r} stalled on a boundary")

        if self.in_fundamental_polygon(z, poly) == Membership.BOUNDARY:
            z, gamma = self._boundary_representative(z, gamma, grp)
        return z, gamma

    def _boundary_representative(
        self, z: UhpPoint, gamma: Isometry, grp: FuchsianGroup
    ) -> Tuple[UhpPoint, Isometry]:
        """Among the boundary points equivalent to z, the lexicographically smallest (x, y)."""
        poly = grp.polygon

        def rank(pt: UhpPoint) -> Tuple[float, float]:
            return (round(pt.x, 9), round(pt.y, 9))

        best = (z, gamma)
        seen = {rank(z)}
        queue = deque([(z, gamma)])
        while queue and len(seen) <= poly.n_sides:
            cur, cur_gamma = queue.popleft()
            for gen in grp.generators:
                img = hyp.apply(gen, cur)
                key = rank(img)
                if key in seen or self.in_fundamental_polygon(img, poly) != Membership.BOUNDARY:
                    continue
                seen.add(key)
                entry = (img, hyp.compose(gen, cur_gamma))
                queue.append(entry)
                if key < rank(best[0]):
                    best = entry
        return best

    def enumerate_ball(
        self, grp: FuchsianGroup, radius: float, frontier_factor: Optional[float] = None
    ) -> BallEnumeration:
        settings = self.settings
        if radius * radius < 2.0 - NORM_SLACK:
            raise DomainError(f"ball radius must be at least sqrt(2), got {radius!r}")
        if radius * radius > settings.ball_normsq_cap:
            raise CapExceededError(
                f"ball norm^2 {radius * radius:.6g} exceeds the desk cap {settings.ball_normsq_cap:.6g}"
            )
        if frontier_factor is None:
            if grp.exact:
                frontier_factor = max(math.sqrt(hyp.norm_sq(gen)) for gen in grp.generators) * settings.frontier_safety
            else:
                # the polygon is the Dirichlet domain at i: some generator always shortens a non-identity element
                frontier_factor = settings.frontier_safety
        cache_key = (grp.surface.label, round(radius, 12), round(frontier_factor, 12))
        if cache_key in self._balls:
            return self._balls[cache_key]

        cap = radius * radius + NORM_SLACK
        frontier_cap = (radius * frontier_factor) ** 2 + NORM_SLACK
        gens = [tuple(gen.entries) for gen in grp.generators]
        limit = settings.int64_limit
        tol = settings.dedup_tol

        identity = (1, 0, 0, 1) if grp.exact else (1.0, 0.0, 0.0, 1.0)
        seen: Dict[Tuple, Tuple] = {}
        seen[self._key(identity, grp.exact, tol)] = identity
        queue = deque([identity])
        while queue:
            current = queue.popleft()
            for gen in gens:
                prod = _mul(current, gen)
                if grp.exact:
                    if any(abs(v) > limit for v in prod):
                        raise IntegerOverflowError(f"64-bit overflow multiplying {current} by {gen}")
                else:
                    prod = hyp.unimodular(*prod)
                if _normsq(prod) > frontier_cap:
                    continue
                prod = _sign_normalize(prod)
                if self._lookup(seen, prod, grp.exact, tol) is not None:
                    continue
                seen[self._key(prod, grp.exact, tol)] = prod
                queue.append(prod)
            if len(seen) > settings.max_ball_elements:
                raise CapExceededError(f"ball enumeration exceeded {settings.max_ball_elements} elements")

        members = sorted((t for t in seen.values() if _normsq(t) <= cap), key=lambda t: (_normsq(t), t))
        elements = [Isometry.of(*t, exact=grp.exact) for t in members]
        ball = BallEnumeration(
            radius=radius,
            depth=hyp.normsq_to_depth(radius * radius),
            elements=elements,
            exact=grp.exact,
        )
        self._balls[cache_key] = ball
        logger.info(
            "enumerated %s ball R^2=%.6g: %d elements (%d explored, frontier factor %.4g)",
            grp.surface.label, radius * radius, len(elements), len(seen), frontier_factor,
        )
        if not grp.exact and len(elements) > 1:
            gap = self.dedup_gap(ball)
            if gap < settings.dedup_gap_guard:
                logger.warning(
                    "nearest distinct ball elements are %.3g apart, below the guard %.3g; dedup tolerance suspect",
                    gap, settings.dedup_gap_guard,
                )
        return ball

    @staticmethod
    def _key(t: Tuple, exact: bool, tol: float) -> Tuple:
        if exact:
            return t
        return tuple(round(v / tol) for v in t)

    @staticmethod
    def _lookup(seen: Dict[Tuple, Tuple], t: Tuple, exact: bool, tol: float) -> Optional[Tuple]:
        if exact:
            return seen.get(t)
        for key in _probe_keys(t, tol):
            if key in seen:
                return seen[key]
        return None

    def dedup_gap(self, ball: BallEnumeration) -> float:
        """Smallest Frobenius distance between two distinct ball elements."""
        if len(ball.elements) < 2:
            return math.inf
        flat = hyp.isometry_stack(ball.elements).reshape(-1, 4)
        norms = np.sqrt((flat * flat).sum(axis=1))
        order = np.argsort(norms, kind="stable")
        flat, norms = flat[order], norms[order]
        best = math.inf
        for i in range(len(flat) - 1):
            # ||e - f|| >= | ||e|| - ||f|| |, so only a norm window can beat `best`
            stop = int(np.searchsorted(norms, norms[i] + best, side="left"))
            if stop <= i + 1:
                continue
            diffs = flat[i + 1:stop] - flat[i]
            best = min(best, float(np.sqrt((diffs * diffs).sum(axis=1)).min()))
        return best

    def lattice_count_table(self, grp: FuchsianGroup, radii: Sequence[float]) -> List[LatticeRow]:
        radii = list(radii)
        if any(r2 < r1 for r1, r2 in zip(radii, radii[1:])):
            raise DomainError("radii must be ascending")
        if not radii:
            return []
        ball = self.enumerate_ball(grp, radii[-1])
        normsqs = [hyp.norm_sq(e) for e in ball.elements]
        rows = []
        for r in radii:
            count = bisect.bisect_right(normsqs, r * r + NORM_SLACK)
            rows.append(LatticeRow(radius=r, count=count, ratio=count / (r * r)))
        return rows

    def lattice_count_by_depth(self, grp: FuchsianGroup, depths: Sequence[float]) -> List[LatticeRow]:
        """Circle-problem counts #{gamma : d(i, gamma i) <= Q} for each depth Q."""
        return self.lattice_count_table(grp, [math.sqrt(hyp.depth_to_normsq(q)) for q in depths])


def relator_tolerance(poly: PolygonData) -> float:
    """Allowed relator and vertex-cycle defect.

    Partial products of the 4g-letter words reach norm^2 about 4 cot^4 beta, and rounding
    in the product grows with it; the tolerance is RELATOR_TOL up to cot^4 beta = 100.
    """
    return RELATOR_TOL * max(1.0, math.cosh(poly.vertex_radius) ** 2 / 100.0)


def _paired_side(k: int) -> int:
    return {0: k + 2, 1: k + 2, 2: k - 2, 3: k - 2}[k % 4]


_fuchsian_service: Optional[FuchsianService] = None


def get_fuchsian_service() -> FuchsianService:
    global _fuchsian_service
    if _fuchsian_service is None:
        _fuchsian_service = FuchsianService()
    return _fuchsian_service
