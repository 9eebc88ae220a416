from __future__ import annotations

import numpy as np
import pytest

from minkgauss.chart import ChartGrid
from minkgauss.frames import (GaussCodazziError, GaussTarget, PullbackMismatchError, TabulatedFrameData,
                              align_to_gauss_map, corrupted_frame_data, flat_frame_data, frame_data_from_graph,
                              frame_data_from_map, holonomy_residual, integrate_frame, rigid_align, sigma_first_form,
                              sigma_normal)
from minkgauss.graphs import (bumped_hyperboloid, first_fundamental_form, gauss_map_from_gradient, graph_frame,
                              hyperboloid, shape_operator)
from minkgauss.harmonic import gauss_map_chart, gauss_map_pair, sheared
from minkgauss.lorentz import LorentzIsometry

GRID = ChartGrid.square(1.0, 0.05)


def graph_points(s, grid):
    p = grid.points()
    return np.concatenate([p, s.value(p)[..., None]], axis=-1)


def reconstruct(s, grid=GRID, **kw):
    base = graph_frame(s, grid.points()[grid.center_node()])
    return integrate_frame(frame_data_from_graph(s), grid, base=base, **kw)


class TestFlat:
    def test_plane(self):
        r = integrate_frame(flat_frame_data(), GRID)
        p = GRID.points()
        np.testing.assert_allclose(r.sigma, np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], -1), atol=1e-14)
        np.testing.assert_allclose(r.nu, np.broadcast_to([0.0, 0.0, 1.0], r.nu.shape), atol=1e-14)


class TestGraphRoundTrip:
    @pytest.mark.parametrize("s", [hyperboloid(), bumped_hyperboloid(0.1)], ids=["hyperboloid", "bumped"])
    def test_recovers_graph(self, s):
        r = reconstruct(s, holonomy=True)
        assert np.max(np.abs(r.sigma - graph_points(s, GRID))) < 1e-7
        assert r.holonomy_residual < 1e-7
        np.testing.assert_allclose(r.nu, gauss_map_from_gradient(s.grad(GRID.points())), atol=1e-7)

    def test_first_form_and_normal(self):
        s = bumped_hyperboloid(0.1)
        r = reconstruct(s)
        mask = GRID.interior_mask(2)
        g = first_fundamental_form(s, GRID).values
        assert np.max(np.abs(sigma_first_form(r, order=4) - g)[mask]) < 1e-5
        assert np.max(np.abs(sigma_normal(r, order=4) - r.nu)[mask]) < 1e-5

    def test_tabulated_second_order(self):
        s = bumped_hyperboloid(0.1)
        errs = []
        for h in (0.1, 0.05):
            grid = ChartGrid.square(1.0, h)
            data = TabulatedFrameData(first_fundamental_form(s, grid), shape_operator(s, grid), order=4)
            base = graph_frame(s, grid.points()[grid.center_node()])
            # interpolated coefficients drift at O(h^2), so the degeneration guard is loosened
            r = integrate_frame(data, grid, base=base, enforce_gc=False, tol_frame=1e-4)
            errs.append(np.max(np.abs(r.sigma - graph_points(s, grid))))
        assert 1.6 < np.log2(errs[0] / errs[1]) < 2.4

    def test_from_map_matches_graph(self):
        s = bumped_hyperboloid(0.1)
        grid = ChartGrid.square(0.8, 0.1)
        a = integrate_frame(frame_data_from_map(gauss_map_pair(s)), grid)
        b = integrate_frame(frame_data_from_graph(s), grid)
        assert np.max(np.abs(a.sigma - b.sigma)) < 1e-7


class TestRejection:
    def test_corrupted(self):
        with pytest.raises(GaussCodazziError):
            integrate_frame(corrupted_frame_data(), GRID)

    def test_corrupted_holonomy_large(self):
        assert holonomy_residual(corrupted_frame_data(), GRID, enforce_gc=False) > 0.1

    def test_pullback_mismatch(self):
        s = hyperboloid()
        r = reconstruct(s)
        wrong = GaussTarget.from_klein_map(sheared(gauss_map_pair(s)).F, GRID)
        with pytest.raises(PullbackMismatchError):
            align_to_gauss_map(r, wrong)


class TestAlignment:
    def test_self_alignment_identity(self):
        r = reconstruct(bumped_hyperboloid(0.1))
        al = align_to_gauss_map(r, GaussTarget.from_reconstruction(r))
        np.testing.assert_allclose(al.isometry.m, np.eye(3), atol=1e-12)

    def test_recovers_isometry_from_klein_target(self):
        s = bumped_hyperboloid(0.1)
        a0 = LorentzIsometry.random(np.random.default_rng(5), max_rapidity=1.0)
        r = reconstruct(s)
        target = GaussTarget.from_klein_map(gauss_map_chart(s).compose(a0.act_klein), GRID)
        al = align_to_gauss_map(r, target)
        assert np.max(np.abs(al.isometry.m - a0.m)) < 1e-8
        # hyperbolic distance resolves only about sqrt(machine epsilon)
        assert al.gauss_residual < 1e-7
        assert al.isometry_variation <= 1e-6

    def test_rigid_align(self):
        r = integrate_frame(frame_data_from_graph(hyperboloid()), GRID)
        target = graph_frame(hyperboloid(), GRID.points()[GRID.center_node()])
        _, t, moved = rigid_align(r, target)
        assert np.max(np.abs(moved - graph_points(hyperboloid(), GRID))) < 1e-7
        np.testing.assert_allclose(t, [0.0, 0.0, 1.0], atol=1e-12)
