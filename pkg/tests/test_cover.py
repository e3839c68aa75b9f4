import logging
import math

import numpy as np
import pytest

from geocover.config import Settings
from geocover.errors import DomainError, PreconditionError
from geocover.models.schemas import CoverMethod, Isometry, UhpPoint
from geocover.service import hyperbolic as hyp
from geocover.service.cover import CoverService
from geocover.service.fuchsian import FuchsianService, S
from tests.conftest import GENUS2, I, LN2, MODULAR

P_LEFT = UhpPoint(x=-0.4, y=1.0)
Q_RIGHT = UhpPoint(x=0.45, y=0.9)


@pytest.fixture(scope="module")
def lattice_matrices():
    """Every PSL2(Z) element with entries bounded by 12, one representative per class."""
    span = np.arange(-12, 13)
    a, b, c, d = np.meshgrid(span, span, span, span, indexing="ij")
    a, b, c, d = a.ravel(), b.ravel(), c.ravel(), d.ravel()
    keep = (a * d - b * c == 1) & ((c > 0) | ((c == 0) & (a > 0)))
    return np.stack([a[keep], b[keep], c[keep], d[keep]], axis=1).reshape(-1, 2, 2).astype(float)


class TestModularTenCover:

    def test_ten_exact_elements(self, modular_cover):
        assert modular_cover.size == 10
        assert modular_cover.method == CoverMethod.PAPER_MODULAR_TEN
        for e in modular_cover.gamma0:
            assert e.exact
            assert e.a * e.d - e.b * e.c == 1
        assert any(e.is_identity() for e in modular_cover.gamma0)

    def test_cover_is_inverse_closed(self, modular_cover):
        keys = {e.key() for e in modular_cover.gamma0}
        assert all(hyp.inverse(e).key() in keys for e in modular_cover.gamma0)

    def test_radical_products(self, covers, modular_cover):
        assert len(modular_cover.radical) == 4
        keys = {e.key() for e in covers.radical_product(modular_cover.radical, two_sided=True)}
        assert {e.key() for e in modular_cover.gamma0} <= keys
        shortfall = {e.key() for e in covers.radical_shortfall(modular_cover)}
        assert shortfall == {Isometry.of(0, -1, 1, -1).key(), Isometry.of(1, -1, 1, 0).key()}
        assert len(covers.radical_product(modular_cover.radical)) == 8

    def test_cover_is_cached(self, covers, modular_cover):
        assert covers.modular_cover_paper() is modular_cover


class TestGenusCover:

    def test_genus_two_cover(self, genus2, genus2_cover):
        cap = genus2_cover.bound_used.normsq_cap
        assert cap == pytest.approx(2847.073369, rel=1e-9)
        assert cap == pytest.approx(genus2.polygon.closed_form_cap, rel=1e-10)
        assert 100 <= genus2_cover.size <= 10_000
        assert genus2_cover.gamma0[0].is_identity()
        assert genus2_cover.surface == GENUS2

    def test_genus_four_cover(self, covers, fuchsian, genus2_cover):
        cover = covers.build_cover_genus(4)
        poly = fuchsian.build_regular_genus(4).polygon
        assert cover.bound_used.normsq_cap == pytest.approx(poly.closed_form_cap, rel=1e-10)
        assert cover.gamma0[0].is_identity()
        assert cover.size > genus2_cover.size
        assert all(abs(e.a * e.d - e.b * e.c - 1.0) <= 1e-9 for e in cover.gamma0)

    @pytest.mark.slow
    @pytest.mark.parametrize("g", [4, 5])
    def test_higher_genus_covers_verify(self, covers, g):
        report = covers.verify_cover(covers.build_cover_genus(g), 200, seed=g)
        assert report.max_abs_gap <= 1e-8

    @pytest.mark.parametrize("g", [1, 6])
    def test_genus_out_of_range(self, covers, g):
        with pytest.raises(DomainError):
            covers.build_cover_genus(g)

    def test_threshold_cover_is_a_sub_ball(self, covers, genus2_cover):
        threshold = covers.build_threshold_cover(2, 1.0)
        assert threshold.bound_used.target_distance == 1.0
        assert threshold.size < genus2_cover.size
        with pytest.raises(DomainError):
            covers.build_threshold_cover(2, 0.0)


class TestSurfaceDistance:

    def test_examples(self, covers, modular_cover):
        assert covers.surface_distance(UhpPoint(x=0.0, y=2.0), UhpPoint(x=0.0, y=2.0), modular_cover) == 0.0
        assert covers.surface_distance(I, UhpPoint(x=0.0, y=2.0), modular_cover) == pytest.approx(LN2, abs=1e-12)
        direct = hyp.distance_uhp(P_LEFT, Q_RIGHT)
        assert direct == pytest.approx(0.874060, abs=1e-6)
        result = covers.surface_distance_with_argmin(P_LEFT, Q_RIGHT, modular_cover)
        assert result.distance == pytest.approx(0.1268445, abs=1e-6)
        assert result.argmin.entries == (0, 1, -1, 0)
        assert result.distance == pytest.approx(hyp.distance_uhp(P_LEFT, hyp.apply(S, Q_RIGHT)), abs=1e-12)
        # the translate by T^-1 is close but not the minimum
        via_t_inv = hyp.distance_uhp(P_LEFT, hyp.apply(Isometry.of(1, -1, 0, 1), Q_RIGHT))
        assert via_t_inv == pytest.approx(0.1897445, abs=1e-6)

    def test_ties_are_reported(self, covers, modular_cover):
        result = covers.surface_distance_with_argmin(I, UhpPoint(x=0.0, y=2.0), modular_cover)
        tie_keys = {e.key() for e in result.ties}
        assert Isometry.identity().key() in tie_keys
        assert Isometry.of(0, -1, 1, 0).key() in tie_keys

    def test_unreduced_input(self, covers, modular_cover):
        with pytest.raises(PreconditionError):
            covers.surface_distance(UhpPoint(x=0.9, y=0.3), I, modular_cover)

    def test_symmetric_and_monotone(self, covers, sampler, modular_cover):
        identity_only = covers.identity_cover(MODULAR)
        for p, q in sampler.sample_pairs(MODULAR, 300, seed=3):
            d_pq = covers.surface_distance(p, q, modular_cover)
            assert abs(d_pq - covers.surface_distance(q, p, modular_cover)) <= 1e-10
            assert covers.surface_distance(p, q, identity_only) >= d_pq

    def test_modular_cover_beats_translations(self, covers, sampler, modular_cover):
        translations = [Isometry.of(1, b, 0, 1) for b in (-1, 0, 1)]
        for p, q in sampler.sample_pairs(MODULAR, 200, seed=4):
            c0 = min(hyp.distance_uhp(p, hyp.apply(t, q)) for t in translations)
            assert covers.surface_distance(p, q, modular_cover) <= c0 + 1e-12

    def test_distance_matrix_matches_pairwise(self, covers, sampler, modular_cover):
        pts = [p for pair in sampler.sample_pairs(MODULAR, 5, seed=9) for p in pair]
        matrix = covers.distance_matrix(pts, pts, modular_cover)
        for i, p in enumerate(pts):
            for j, q in enumerate(pts):
                assert matrix[i, j] == pytest.approx(covers.surface_distance(p, q, modular_cover), abs=1e-12)


class TestOracles:

    def test_modular_examples(self, covers):
        d, gamma = covers.brute_force_modular(I, UhpPoint(x=0.0, y=2.0))
        assert d == pytest.approx(LN2, abs=1e-12)
        assert gamma.key() in {Isometry.identity().key(), Isometry.of(0, -1, 1, 0).key()}
        d, gamma = covers.brute_force_modular(P_LEFT, Q_RIGHT)
        assert d == pytest.approx(0.12684449849545679, abs=1e-12)
        assert gamma.entries == (0, 1, -1, 0)
        d, gamma = covers.brute_force_modular(Q_RIGHT, Q_RIGHT)
        assert d == 0.0
        assert gamma.is_identity()

    def test_pruning_agrees_with_unpruned_enumeration(self, covers, sampler, lattice_matrices):
        for p, q in sampler.sample_pairs(MODULAR, 1000, seed=17):
            pruned, _ = covers.brute_force_modular(p, q)
            full = hyp.distance_arrays(p.to_complex(), hyp.apply_stack(lattice_matrices, q.to_complex())).min()
            assert abs(pruned - full) <= 1e-12

    def test_ball_oracle(self, covers, genus2):
        assert covers.brute_force_ball(I, I, genus2) == 0.0
        vertex = hyp.disk_uhp(genus2.polygon.vertices[0])
        assert covers.brute_force_ball(I, vertex, genus2) <= genus2.polygon.vertex_radius + 1e-9
        p, q = UhpPoint(x=0.2, y=1.1), UhpPoint(x=-0.3, y=0.7)
        assert covers.brute_force_ball(p, q, genus2) <= hyp.distance_uhp(p, q) + 1e-15

    def test_ball_oracle_needs_genus_group(self, covers, modular):
        with pytest.raises(PreconditionError):
            covers.brute_force_ball(I, I, modular)


class TestVerifyCover:

    def test_modular_cover_passes(self, covers, modular_cover):
        report = covers.verify_cover(modular_cover, 1000, seed=1)
        assert report.passed
        assert report.max_abs_gap <= 1e-9
        assert report.n_samples == 1000
        assert sum(report.usage_counts) >= 1000
        assert len(report.used_elements) <= modular_cover.size

    @pytest.mark.slow
    def test_modular_cover_passes_at_scale(self, covers, modular_cover):
        report = covers.verify_cover(modular_cover, 5000, seed=20240101)
        assert report.max_abs_gap <= 1e-9

    def test_identity_cover_fails(self, covers):
        report = covers.verify_cover(covers.identity_cover(MODULAR), 5000, seed=1)
        assert not report.passed
        assert report.max_abs_gap >= 0.5
        assert report.worst_pair is not None

    def test_documented_gap(self, covers, lattice_matrices):
        identity_only = covers.identity_cover(MODULAR)
        oracle = covers.brute_force_modular(P_LEFT, Q_RIGHT)[0]
        full = hyp.distance_arrays(P_LEFT.to_complex(), hyp.apply_stack(lattice_matrices, Q_RIGHT.to_complex())).min()
        assert oracle == pytest.approx(full, abs=1e-12)
        gap = covers.surface_distance(P_LEFT, Q_RIGHT, identity_only) - oracle
        assert gap == pytest.approx(0.874060 - 0.1268445, abs=1e-5)
        assert gap >= 0.5

    def test_no_samples(self, covers, modular_cover, caplog):
        with caplog.at_level(logging.WARNING, logger="geocover.service.cover"):
            report = covers.verify_cover(modular_cover, 0, seed=1)
        assert report.max_abs_gap == 0.0
        assert report.worst_pair is None
        assert "nothing verified" in caplog.text

    def test_deterministic(self, covers, modular_cover):
        first = covers.verify_cover(modular_cover, 300, seed=8)
        second = covers.verify_cover(modular_cover, 300, seed=8)
        assert first == second

    def test_genus_two_cover_passes(self, covers, genus2_cover):
        report = covers.verify_cover(genus2_cover, 1000, seed=2)
        assert report.max_abs_gap <= 1e-8
        assert report.n_samples == 1000

    @pytest.mark.slow
    def test_genus_three_cover_passes(self, covers):
        report = covers.verify_cover(covers.build_cover_genus(3), 1000, seed=3)
        assert report.max_abs_gap <= 1e-8

    @pytest.mark.slow
    def test_worker_pool_matches_single_process(self, modular_cover):
        pooled = CoverService(Settings(_env_file=None, threads=2))
        single = CoverService(Settings(_env_file=None, threads=1))
        assert pooled.verify_cover(modular_cover, 1200, seed=5) == single.verify_cover(modular_cover, 1200, seed=5)


def test_singleton_service_shares_settings():
    from geocover.service.cover import get_cover_service

    service = get_cover_service()
    assert service is get_cover_service()
    assert isinstance(service.fuchsian, FuchsianService)
    assert math.isclose(service.settings.oracle_inflate, 1.5)
