import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geocover.errors import CapExceededError, DomainError
from geocover.models.schemas import Isometry, Membership, UhpPoint
from geocover.service import hyperbolic as hyp
from geocover.service.fuchsian import S, T, T_INV, relator_tolerance
from tests.conftest import GENUS2, I


class TestModularGroup:

    def test_generators_are_exact(self, modular):
        assert modular.exact
        assert [g.entries for g in modular.generators] == [T.entries, T_INV.entries, S.entries]

    def test_relations(self):
        assert hyp.compose(S, S).is_identity()
        st3 = hyp.compose_all([S, T] * 3)
        assert st3.exact and st3.is_identity()

    @pytest.mark.parametrize("point,expected", [
        ((0.0, 2.0), Membership.INTERIOR),
        ((0.5, 2.0), Membership.BOUNDARY),
        ((-0.5, 2.0), Membership.BOUNDARY),
        ((0.0, 1.0), Membership.BOUNDARY),
        ((0.3, 0.5), Membership.OUTSIDE),
        ((0.7, 3.0), Membership.OUTSIDE),
    ])
    def test_membership(self, fuchsian, point, expected):
        assert fuchsian.in_fundamental_modular(UhpPoint(x=point[0], y=point[1])) == expected

    def test_reduce_fixed_point(self, fuchsian, modular):
        p, gamma = fuchsian.reduce_to_fundamental(UhpPoint(x=0.0, y=2.0), modular)
        assert p == UhpPoint(x=0.0, y=2.0)
        assert gamma.entries == (1, 0, 0, 1)

    def test_reduce_worked_example(self, fuchsian, modular):
        z = UhpPoint(x=5.3, y=0.2)
        p, gamma = fuchsian.reduce_to_fundamental(z, modular)
        assert gamma.entries == (2, -11, 1, -5)
        assert gamma.key() == hyp.compose_all([T, T, S] + [T_INV] * 5).key()
        assert p.x == pytest.approx(-4 / 13, abs=1e-12)
        assert p.y == pytest.approx(20 / 13, abs=1e-12)
        image = hyp.apply(gamma, z)
        assert image.x == pytest.approx(p.x, abs=1e-12) and image.y == pytest.approx(p.y, abs=1e-12)

    def test_boundary_representatives(self, fuchsian, modular):
        right_edge, _ = fuchsian.reduce_to_fundamental(UhpPoint(x=0.5, y=3.0), modular)
        assert right_edge.x == pytest.approx(-0.5, abs=1e-12)
        arc, _ = fuchsian.reduce_to_fundamental(UhpPoint(x=0.3, y=math.sqrt(0.91)), modular)
        assert arc.x == pytest.approx(-0.3, abs=1e-12) and arc.y == pytest.approx(math.sqrt(0.91), abs=1e-12)
        corner, _ = fuchsian.reduce_to_fundamental(UhpPoint(x=0.5, y=math.sqrt(0.75)), modular)
        assert corner.x == pytest.approx(-0.5, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(min_value=-50, max_value=50), st.floats(min_value=1e-3, max_value=50))
    def test_reduction_lands_in_domain(self, fuchsian, modular, x, y):
        z = UhpPoint(x=x, y=y)
        p, gamma = fuchsian.reduce_to_fundamental(z, modular)
        assert gamma.exact
        assert fuchsian.in_fundamental_modular(p) != Membership.OUTSIDE
        image = hyp.apply(gamma, z)
        assert hyp.distance_uhp(image, p) <= 1e-9


class TestRegularGenusGroup:

    def test_genus_two_constants(self, genus2):
        poly = genus2.polygon
        assert poly.beta == pytest.approx(math.pi / 8)
        assert math.cosh(poly.vertex_radius) == pytest.approx((1 + math.sqrt(2)) ** 2, abs=1e-12)
        assert poly.vertex_radius == pytest.approx(2.448452, abs=1e-6)
        assert poly.edge_radius == pytest.approx(1.528571, abs=1e-6)
        assert poly.diam_bound == pytest.approx(3.057142, abs=1e-6)
        assert len(poly.vertices) == 8
        assert len(genus2.generators) == 8

    @pytest.mark.parametrize("g", range(2, 9))
    def test_polygon_constants(self, fuchsian, g):
        poly = fuchsian.build_regular_genus(g).polygon
        cot = 1.0 / math.tan(math.pi / (4 * g))
        assert abs(math.cosh(poly.vertex_radius) - cot * cot) <= 1e-12 * max(1.0, cot * cot)
        assert abs(math.cosh(poly.edge_radius) - cot) <= 1e-12 * max(1.0, cot)
        assert abs(poly.diam_bound - 2 * poly.edge_radius) <= 1e-12

    def test_closed_form_cap(self, genus2):
        poly = genus2.polygon
        direct = hyp.depth_to_normsq(2 * poly.vertex_radius + poly.diam_bound)
        assert direct == pytest.approx(2 * math.cosh(2 * poly.vertex_radius + poly.diam_bound), rel=1e-12)
        assert poly.closed_form_cap == pytest.approx(direct, rel=1e-10)
        assert direct == pytest.approx(2847.073369, rel=1e-9)

    @pytest.mark.parametrize("g", [3, 5, 8])
    def test_closed_form_cap_other_genera(self, fuchsian, g):
        poly = fuchsian.build_regular_genus(g).polygon
        assert poly.closed_form_cap == pytest.approx(
            2 * math.cosh(2 * poly.vertex_radius + poly.diam_bound), rel=1e-10)

    @pytest.mark.parametrize("g", range(2, 9))
    def test_relator_and_angles(self, fuchsian, g):
        grp = fuchsian.build_regular_genus(g)
        poly = grp.polygon
        tol = 1e-8 if g <= 3 else relator_tolerance(poly)
        assert fuchsian.relator_defect(grp) <= tol
        assert fuchsian.vertex_cycle_defect(grp) <= tol
        uhp = [hyp.disk_uhp(v) for v in poly.vertices]
        n = poly.n_sides
        for k in range(n):
            angle = hyp.interior_angle(uhp[k - 1], uhp[k], uhp[(k + 1) % n])
            assert angle == pytest.approx(math.pi / (2 * g), abs=1e-9)
        for gen in grp.generators:
            assert abs(gen.a * gen.d - gen.b * gen.c - 1.0) <= 1e-12

    @pytest.mark.slow
    @pytest.mark.parametrize("g", [12, 16])
    def test_large_genus_builds(self, fuchsian, g):
        grp = fuchsian.build_regular_genus(g)
        assert len(grp.generators) == 4 * g
        assert fuchsian.relator_defect(grp) <= relator_tolerance(grp.polygon)

    def test_relator_tolerance_grows_with_genus(self, fuchsian):
        tols = [relator_tolerance(fuchsian.build_regular_genus(g).polygon) for g in (2, 3, 8)]
        assert tols[0] == 1e-8
        assert tols == sorted(tols)

    def test_pairing_is_an_involution(self, genus2):
        pairing = genus2.polygon.pairing
        assert pairing == [2, 3, 0, 1, 6, 7, 4, 5]
        assert all(pairing[pairing[k]] == k for k in range(8))

    @pytest.mark.parametrize("g", [1, 17])
    def test_genus_out_of_range(self, fuchsian, g):
        with pytest.raises(DomainError):
            fuchsian.build_regular_genus(g)

    def test_group_is_cached(self, fuchsian):
        assert fuchsian.build_regular_genus(2) is fuchsian.build_regular_genus(2)

    def test_polygon_membership(self, fuchsian, genus2):
        poly = genus2.polygon
        assert fuchsian.in_fundamental_polygon(I, poly) == Membership.INTERIOR
        for v in poly.vertices:
            assert fuchsian.in_fundamental_polygon(hyp.disk_uhp(v), poly) == Membership.BOUNDARY
        moved = hyp.apply(poly.pair_maps[0], I)
        assert fuchsian.in_fundamental_polygon(moved, poly) == Membership.OUTSIDE

    def test_reduce_image_of_centre(self, fuchsian, genus2):
        pm = genus2.polygon.pair_maps[0]
        p, gamma = fuchsian.reduce_to_fundamental(hyp.apply(pm, I), genus2)
        assert hyp.distance_uhp(p, I) <= 1e-9
        assert hyp.frobenius_distance(gamma, hyp.inverse(pm)) <= 1e-9

    def test_reduction_of_random_points(self, fuchsian, genus2):
        rng = np.random.default_rng(11)
        for _ in range(200):
            z = hyp.disk_uhp(hyp.disk_point_at(float(rng.uniform(0, 6)), float(rng.uniform(0, 2 * math.pi))))
            p, gamma = fuchsian.reduce_to_fundamental(z, genus2)
            assert fuchsian.in_fundamental_polygon(p, genus2.polygon) != Membership.OUTSIDE
            assert hyp.distance_uhp(hyp.apply(gamma, z), p) <= 1e-8

    @pytest.mark.parametrize("g", [2, pytest.param(3, marks=pytest.mark.slow)])
    def test_translates_are_interior_disjoint(self, fuchsian, sampler, g):
        grp = fuchsian.build_regular_genus(g)
        ball = fuchsian.enumerate_ball(grp, 40.0)
        nonidentity = [e for e in ball.elements if not e.is_identity()][:100]
        assert len(nonidentity) == 100
        stack = hyp.isometry_stack(nonidentity)
        rng = np.random.default_rng(5)
        for _ in range(500):
            p = sampler.area_uniform_one(grp.surface, rng)
            for w in hyp.apply_stack(stack, p.to_complex()):
                image = UhpPoint.from_complex(complex(w))
                assert fuchsian.in_fundamental_polygon(image, grp.polygon) == Membership.OUTSIDE


class TestBallEnumeration:

    def test_small_modular_balls(self, fuchsian, modular):
        smallest = fuchsian.enumerate_ball(modular, math.sqrt(2))
        assert sorted(e.entries for e in smallest.elements) == sorted([S.entries, (1, 0, 0, 1)])
        ball = fuchsian.enumerate_ball(modular, math.sqrt(3))
        assert ball.count == 10
        assert ball.exact
        assert all(abs(x) <= 1 for e in ball.elements for x in e.entries)

    def test_genus_two_smallest_ball(self, fuchsian, genus2):
        ball = fuchsian.enumerate_ball(genus2, math.sqrt(2))
        assert ball.count == 1
        assert ball.elements[0].is_identity()

    def test_ball_is_sorted_and_inverse_closed(self, fuchsian, genus2):
        ball = fuchsian.enumerate_ball(genus2, 25.0)
        norms = [hyp.norm_sq(e) for e in ball.elements]
        assert norms == sorted(norms)
        flat = hyp.isometry_stack(ball.elements).reshape(-1, 4)
        for e in ball.elements:
            inv = np.array(hyp.inverse(e).entries, dtype=float)
            assert np.sqrt(((flat - inv) ** 2).sum(axis=1)).min() <= 1e-6

    @pytest.mark.parametrize("surface_g, radius", [(None, 12.0), (2, 25.0), (3, 40.0)])
    def test_ball_is_closed_under_generators(self, fuchsian, surface_g, radius):
        grp = fuchsian.build_modular() if surface_g is None else fuchsian.build_regular_genus(surface_g)
        ball = fuchsian.enumerate_ball(grp, radius)
        flat = hyp.isometry_stack(ball.elements).reshape(-1, 4)
        keys = {e.key() for e in ball.elements}
        inside = 0
        for e in ball.elements:
            for h in grp.generators:
                prod = hyp.compose(e, h)
                if hyp.norm_sq(prod) > radius * radius - 1e-6:
                    continue
                inside += 1
                if grp.exact:
                    assert prod.key() in keys
                else:
                    target = np.array(prod.entries, dtype=float)
                    assert np.sqrt(((flat - target) ** 2).sum(axis=1)).min() <= 1e-6
        assert inside > ball.count

    def test_modular_ball_matches_exhaustive_count(self, fuchsian, modular):
        radius = 4.0
        count = 0
        span = range(-4, 5)
        for a in span:
            for b in span:
                for c in span:
                    for d in span:
                        if a * d - b * c == 1 and a * a + b * b + c * c + d * d <= radius ** 2:
                            count += 1
        # every PSL2 class has two SL2 representatives
        assert fuchsian.enumerate_ball(modular, radius).count == count // 2

    def test_dedup_gap_is_comfortable(self, fuchsian, genus2):
        ball = fuchsian.enumerate_ball(genus2, 25.0)
        assert fuchsian.dedup_gap(ball) > 1e-3

    def test_domain_and_caps(self, fuchsian, modular, genus2):
        with pytest.raises(DomainError):
            fuchsian.enumerate_ball(modular, 1.0)
        with pytest.raises(CapExceededError):
            fuchsian.enumerate_ball(genus2, 1e4)

    def test_lattice_table(self, fuchsian, modular):
        rows = fuchsian.lattice_count_table(modular, [math.sqrt(2), math.sqrt(3), 5.0])
        assert rows[0].count == 2
        assert rows[0].ratio == pytest.approx(1.0)
        assert rows[1].count == 10
        counts = [row.count for row in rows]
        assert counts == sorted(counts)
        with pytest.raises(DomainError):
            fuchsian.lattice_count_table(modular, [5.0, 2.0])

    def test_modular_circle_problem_constant(self, fuchsian, modular):
        row = fuchsian.lattice_count_table(modular, [30.0])[0]
        assert abs(row.ratio - 3.0) <= 0.15 * 3.0

    def test_lattice_count_by_depth(self, fuchsian, modular):
        by_depth = fuchsian.lattice_count_by_depth(modular, [0.0, math.acosh(1.5)])
        assert [row.count for row in by_depth] == [2, 10]

    def test_genus_ratios_share_one_constant(self, fuchsian):
        grid = [math.sqrt(2), 5.0, 10.0, 20.0, 40.0]
        ratios = []
        for g in (2, 3, 4, 5):
            rows = fuchsian.lattice_count_table(fuchsian.build_regular_genus(g), grid)
            ratios.extend(row.ratio for row in rows)
            counts = [row.count for row in rows]
            assert counts == sorted(counts)
        assert max(ratios) <= 1.0

    @pytest.mark.slow
    def test_genus_ratios_up_to_cover_caps(self, fuchsian, settings):
        grid = [math.sqrt(2), 5.0, 10.0, 20.0, 40.0, 100.0, 200.0, 400.0, 800.0]
        for g in (2, 3, 4, 5):
            grp = fuchsian.build_regular_genus(g)
            cap = grp.polygon.closed_form_cap
            assert cap <= settings.ball_normsq_cap
            radii = [r for r in grid if r * r < cap] + [math.sqrt(cap)]
            rows = fuchsian.lattice_count_table(grp, radii)
            assert max(row.ratio for row in rows) <= 1.0
            # the count settles near area(B) / area(F) = R^2 / (4(g - 1))
            assert 0.5 <= rows[-1].ratio * 4 * (g - 1) <= 2.0

    def test_genus_surface_group(self, fuchsian):
        assert fuchsian.group_for(GENUS2).genus == 2


def test_exact_isometry_rejects_bad_determinant():
    with pytest.raises(ValueError):
        Isometry.of(1, 1, 1, 1)
