"""Hyperbolic-plane kernel.

Points live in the upper half-plane; the Poincare disk only appears for the
regular polygon construction. The Cayley transform used throughout is
w = i(z - i)/(z + i), sending i to the disk centre and 2i to i/3.
"""

import math
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from geocover.errors import DomainError, InvariantError, PreconditionError
from geocover.models.schemas import DiskPoint, Isometry, UhpPoint

SEGMENT_TOL = 1e-9


def stable_acosh(x: float) -> float:
    """acosh(1 + t) as log1p(t + sqrt(t(t + 2))), accurate near 1."""
    t = x - 1.0
    if t < 0.0:
        if t < -1e-12:
            raise DomainError(f"acosh argument {x!r} below 1")
        t = 0.0
    return math.log1p(t + math.sqrt(t * (t + 2.0)))


def _acosh_from_excess(t: float) -> float:
    return math.log1p(t + math.sqrt(t * (t + 2.0)))


def apply(iso: Isometry, p: UhpPoint) -> UhpPoint:
    z = p.to_complex()
    w = (iso.a * z + iso.b) / (iso.c * z + iso.d)
    if not w.imag > 0.0:
        raise InvariantError(f"Mobius image {w!r} left the upper half-plane")
    return UhpPoint(x=w.real, y=w.imag)


def unimodular(a: float, b: float, c: float, d: float) -> Tuple[float, float, float, float]:
    """Rescale a float matrix by 1/sqrt(det) so long products stay in SL2(R)."""
    det = a * d - b * c
    if not det > 0.0:
        raise InvariantError(f"matrix product has determinant {det!r}")
    s = 1.0 / math.sqrt(det)
    return a * s, b * s, c * s, d * s


def compose(g: Isometry, h: Isometry) -> Isometry:
    entries = (
        g.a * h.a + g.b * h.c,
        g.a * h.b + g.b * h.d,
        g.c * h.a + g.d * h.c,
        g.c * h.b + g.d * h.d,
    )
    if g.exact and h.exact:
        return Isometry.of(*entries, exact=True)
    return Isometry.of(*unimodular(*entries), exact=False)


def compose_all(isos: Iterable[Isometry]) -> Isometry:
    result = None
    for iso in isos:
        result = iso if result is None else compose(result, iso)
    return result if result is not None else Isometry.identity()


def inverse(g: Isometry) -> Isometry:
    return Isometry.of(g.d, -g.b, -g.c, g.a, exact=g.exact)


def norm_sq(iso: Isometry) -> float:
    return iso.a * iso.a + iso.b * iso.b + iso.c * iso.c + iso.d * iso.d


def frobenius_distance(g: Isometry, h: Isometry) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(g.entries, h.entries)))


def distance_uhp(p: UhpPoint, q: UhpPoint) -> float:
    dx = p.x - q.x
    dy = p.y - q.y
    t = (dx * dx + dy * dy) / (2.0 * p.y * q.y)
    return _acosh_from_excess(t)


def point_to_isometry(p: UhpPoint) -> Isometry:
    s = math.sqrt(p.y)
    return Isometry.of(s, p.x / s, 0.0, 1.0 / s, exact=False)


def distance_via_norms(g1: Isometry, g: Isometry, g2: Isometry) -> float:
    """acosh(||g1^-1 g g2||^2 / 2), the distance d(g1 i, g g2 i)."""
    return stable_acosh(norm_sq(compose(inverse(g1), compose(g, g2))) / 2.0)


def uhp_disk(p: UhpPoint) -> DiskPoint:
    z = p.to_complex()
    w = 1j * (z - 1j) / (z + 1j)
    return DiskPoint(u=w.real, v=w.imag)


def disk_uhp(p: DiskPoint) -> UhpPoint:
    w = p.to_complex()
    z = (1 - 1j * w) / (w - 1j)
    return UhpPoint(x=z.real, y=z.imag)


def distance_disk(p: DiskPoint, q: DiskPoint) -> float:
    w1, w2 = p.to_complex(), q.to_complex()
    t = 2.0 * abs(w1 - w2) ** 2 / ((1.0 - abs(w1) ** 2) * (1.0 - abs(w2) ** 2))
    return _acosh_from_excess(t)


def disk_point_at(radius: float, angle: float) -> DiskPoint:
    """Disk point at hyperbolic distance `radius` from the centre."""
    rho = math.tanh(radius / 2.0)
    return DiskPoint(u=rho * math.cos(angle), v=rho * math.sin(angle))


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= math.pi / 4 + 1e-15:
        raise DomainError(f"beta must lie in (0, pi/4], got {beta!r}")


def right_triangle_leg(beta: float) -> float:
    """acosh(cot beta): centre-to-edge distance of the regular polygon."""
    _check_beta(beta)
    return stable_acosh(max(1.0, 1.0 / math.tan(beta)))


def right_triangle_hyp(beta: float) -> float:
    """acosh(cot^2 beta): centre-to-vertex distance of the regular polygon."""
    _check_beta(beta)
    return stable_acosh(max(1.0, 1.0 / math.tan(beta) ** 2))


def disk_area(r: float) -> float:
    if r < 0:
        raise DomainError(f"radius must be non-negative, got {r!r}")
    # 2pi(cosh r - 1) written without the cancellation near 0
    return 4.0 * math.pi * math.sinh(r / 2.0) ** 2


def chord_half_angle(dist: float, r: float) -> float:
    """Central angle alpha of a chord: sin(alpha/2) = sinh(dist/2) / sinh(r)."""
    if dist <= 0 or r <= 0:
        raise DomainError("chord length and radius must be positive")
    ratio = math.sinh(dist / 2.0) / math.sinh(r)
    if ratio > 1.0 + 1e-12:
        raise DomainError(f"chord {dist!r} is longer than the diameter {2 * r!r}")
    return 2.0 * math.asin(min(ratio, 1.0))


def interior_angle(prev: UhpPoint, vertex: UhpPoint, nxt: UhpPoint) -> float:
    a = distance_uhp(vertex, prev)
    c = distance_uhp(vertex, nxt)
    b = distance_uhp(prev, nxt)
    cos_angle = (math.cosh(a) * math.cosh(c) - math.cosh(b)) / (math.sinh(a) * math.sinh(c))
    return math.acos(max(-1.0, min(1.0, cos_angle)))


def rotation_about_i(theta: float) -> Isometry:
    """Elliptic element fixing i; acts on the disk as w -> exp(2i theta) w."""
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    return Isometry.of(cos_t, sin_t, -sin_t, cos_t, exact=False)


def standard_position(a: UhpPoint, b: UhpPoint) -> Isometry:
    """Isometry sending a to i and b onto the imaginary axis above i."""
    to_i = inverse(point_to_isometry(a))
    w = uhp_disk(apply(to_i, b)).to_complex()
    if abs(w) < 1e-300:
        return to_i
    psi = math.atan2(w.imag, w.real)
    return compose(rotation_about_i((math.pi / 2 - psi) / 2.0), to_i)


def isometry_from_segments(a: UhpPoint, b: UhpPoint, c: UhpPoint, d: UhpPoint) -> Isometry:
    """The orientation-preserving isometry with a -> c and b -> d."""
    ab, cd = distance_uhp(a, b), distance_uhp(c, d)
    if abs(ab - cd) > SEGMENT_TOL:
        raise PreconditionError(f"segments differ in length: {ab!r} vs {cd!r}")
    result = compose(inverse(standard_position(c, d)), standard_position(a, b))
    if distance_uhp(apply(result, a), c) > SEGMENT_TOL or distance_uhp(apply(result, b), d) > SEGMENT_TOL:
        raise InvariantError("segment isometry misses its target endpoints")
    return result


def point_on_segment(a: UhpPoint, b: UhpPoint, t: float) -> UhpPoint:
    """Point at hyperbolic fraction t of the way from a to b."""
    length = distance_uhp(a, b)
    std = standard_position(a, b)
    return apply(inverse(std), UhpPoint(x=0.0, y=math.exp(t * length)))


def isometry_stack(isos: Sequence[Isometry]) -> np.ndarray:
    """Float array of shape (n, 2, 2)."""
    return np.array([[[e.a, e.b], [e.c, e.d]] for e in isos], dtype=float).reshape(-1, 2, 2)


def apply_stack(stack: np.ndarray, z: Union[complex, np.ndarray]) -> np.ndarray:
    """Apply every matrix of the stack to z (broadcast over a trailing axis when z is an array)."""
    a, b, c, d = stack[:, 0, 0], stack[:, 0, 1], stack[:, 1, 0], stack[:, 1, 1]
    if isinstance(z, np.ndarray):
        a, b, c, d = (v[:, None] for v in (a, b, c, d))
        z = z[None, :]
    return (a * z + b) / (c * z + d)


def distance_arrays(z: Union[complex, np.ndarray], w: Union[complex, np.ndarray]) -> np.ndarray:
    """Vectorised distance_uhp on complex arrays (broadcasting)."""
    t = np.abs(z - w) ** 2 / (2.0 * np.imag(z) * np.imag(w))
    return np.log1p(t + np.sqrt(t * (t + 2.0)))


def normsq_to_depth(normsq: float) -> float:
    return stable_acosh(normsq / 2.0)


def depth_to_normsq(depth: float) -> float:
    return 2.0 * math.cosh(depth)
