from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minkgauss.chart import ChartGrid
from minkgauss.graphs import affine, bumped_hyperboloid, half_disc_graph, hyperboloid, three_point_graph
from minkgauss.hull import DegenerateHullError
from minkgauss.legendre import (DELTA_MARGIN, N_ANGLES, essential_domain_probe, essential_hull, finiteness_sweep,
                                finiteness_test, gradient_image, injectivity_audit, legendre_profile,
                                legendre_transform, region_hausdorff, theorem_check)

disc_point = st.tuples(st.floats(0, 0.9), st.floats(0, 2 * np.pi)).map(
    lambda p: p[0] * np.array([np.cos(p[1]), np.sin(p[1])]))
TRIANGLE = np.array([0.0, 0.75 * np.pi, 1.25 * np.pi])


@pytest.fixture(scope="module")
def half_disc():
    return half_disc_graph(0.1)


class TestTransform:
    def test_hyperboloid_examples(self):
        v = legendre_transform(hyperboloid(), np.array([[0.5, 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(v.value, [-np.sqrt(3) / 2, -1.0], atol=1e-12)
        np.testing.assert_allclose(v.maximiser[0], [1 / np.sqrt(3), 0.0], atol=1e-8)
        assert np.all(v.certified)
        assert v.flag[0] == "interior-certified"

    def test_hyperboloid_closed_form(self):
        rng = np.random.default_rng(0)
        r = 0.9 * np.sqrt(rng.uniform(size=300))
        t = rng.uniform(0, 2 * np.pi, 300)
        y = np.stack([r * np.cos(t), r * np.sin(t)], -1)
        v = legendre_transform(hyperboloid(), y)
        assert np.max(np.abs(v.value + np.sqrt(1 - r * r))) <= 2e-2

    def test_affine(self):
        s = affine((0.3, 0.1))
        v = legendre_transform(s, np.array([[0.3, 0.1], [0.5, 0.1]]))
        assert v.value[0] == pytest.approx(0.0, abs=1e-12)
        assert v.certified[0]
        assert not v.certified[1]
        assert v.flag[1] == "possibly +inf / truncation-limited"
        # growth is linear in the truncation radius
        w = legendre_transform(s, np.array([0.5, 0.1]), R=100.0)
        assert w.value == pytest.approx(2 * v.value[1], rel=1e-6)

    def test_probe(self):
        probe = essential_domain_probe(affine((0.3, 0.1)), np.array([[0.3, 0.1], [0.0, 0.0]]))
        assert probe.tolist() == [True, False]

    @given(disc_point, disc_point)
    def test_midpoint_convex(self, a, b):
        s = bumped_hyperboloid(0.1)
        v = legendre_transform(s, np.stack([a, b, 0.5 * (a + b)])).value
        assert v[2] <= 0.5 * (v[0] + v[1]) + 1e-8

    @given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)).map(np.array), disc_point)
    def test_fenchel_young(self, x, y):
        s = bumped_hyperboloid(0.1)
        fx = s.value(x)
        assert fx + legendre_transform(s, y).value >= x @ y - 1e-8
        y_eq = s.grad(x)
        assert fx + legendre_transform(s, y_eq).value == pytest.approx(x @ y_eq, abs=1e-8)


class TestFiniteness:
    def test_slopes_bounded(self, half_disc):
        for s in (hyperboloid(), affine((0.5, 0.0)), half_disc):
            prof = legendre_profile(s, 256)
            assert np.all(np.abs(prof.slope) <= 1 + 1e-12)
            assert np.all(np.abs(prof.slope_far) <= 1 + 1e-12)

    def test_hyperboloid_all_finite(self):
        fs = finiteness_sweep(hyperboloid())
        assert np.all(fs.states == "finite")
        assert essential_hull(hyperboloid()).is_full_disc

    def test_affine_none_finite(self):
        fs = finiteness_sweep(affine((0.5, 0.0)))
        assert np.all(fs.states == "infinite")
        with pytest.raises(DegenerateHullError):
            essential_hull(affine((0.5, 0.0)))

    def test_half_disc_points(self, half_disc):
        assert finiteness_test(half_disc, np.pi).state == "infinite"
        assert finiteness_test(half_disc, 0.0).state == "finite"
        assert finiteness_test(half_disc, np.pi / 2).state == "finite"

    def test_half_disc_arc(self, half_disc):
        fs = finiteness_sweep(half_disc)
        cos_t = np.cos(fs.thetas)
        assert np.all(fs.states[cos_t > 1e-9] == "finite")
        assert np.all(fs.states[cos_t < -1e-9] != "finite")
        d = essential_hull(half_disc, sweep=fs)
        assert len(d.chords()) == 1
        np.testing.assert_allclose(sorted(p[1] for p in d.chords()[0]), [-1.0, 1.0], atol=1e-9)

    def test_three_point_vertices(self):
        fs = finiteness_sweep(three_point_graph())
        finite = fs.thetas[fs.finite]
        np.testing.assert_allclose(np.sort(finite), TRIANGLE, atol=1e-12)

    def test_margin_lipschitz(self, half_disc):
        fs = finiteness_sweep(half_disc)
        dtheta = 2 * np.pi / N_ANGLES
        for m in (fs.margins, fs.margins_far, fs.extrapolated):
            jumps = np.abs(np.diff(np.r_[m, m[:1]]))
            assert np.max(jumps) <= 2 * dtheta

    def test_undecided_band(self):
        # a margin just beyond the slack is neither finite nor infinite
        from minkgauss.legendre import _decide, angular_slack
        slack = max(DELTA_MARGIN, angular_slack(N_ANGLES))
        states = _decide(np.array([0.0, -slack, -slack - 0.5 * DELTA_MARGIN, -slack - DELTA_MARGIN]),
                         DELTA_MARGIN, N_ANGLES)
        assert states.tolist() == ["finite", "finite", "undecided", "infinite"]


class TestGradientImage:
    def test_hyperboloid_radius(self):
        chart = ChartGrid.square(3.0, 0.1)
        img = gradient_image(hyperboloid(), chart)
        r = np.linalg.norm(img.nodes, axis=-1)
        assert np.max(r) == pytest.approx(3 * np.sqrt(2) / np.sqrt(19), rel=1e-12)

    def test_affine_single_point(self):
        img = gradient_image(affine((0.3, 0.1)), ChartGrid.square(2.0, 0.5))
        np.testing.assert_allclose(np.unique(img.points(), axis=0), [[0.3, 0.1]])

    @pytest.mark.parametrize("make", [hyperboloid, lambda: bumped_hyperboloid(0.2), lambda: half_disc_graph(0.1),
                                      three_point_graph], ids=["hyperboloid", "bumped", "half-disc", "three-point"])
    def test_inside_hull(self, make):
        s = make()
        d = essential_hull(s)
        img = gradient_image(s, ChartGrid.square(4.0, 0.1))
        assert np.max(d.distance_to(img.points())) <= 1e-6

    def test_injective(self):
        _, df, hess = hyperboloid().derivatives(ChartGrid.square(2.0, 0.1))
        assert injectivity_audit(df, hess).ok
        flat = np.zeros_like(df)
        assert not injectivity_audit(flat, np.zeros_like(hess)).ok


class TestTheorem:
    def test_hyperboloid_distances(self):
        from minkgauss.hull import full_disc
        for e, exact in [(3.0, 1 - 3 / np.sqrt(10)), (6.0, 1 - 6 / np.sqrt(37))]:
            img = gradient_image(hyperboloid(), ChartGrid.square(e, 2 * e / 300))
            assert region_hausdorff(img, full_disc()) == pytest.approx(exact, abs=1e-6)
        assert 1 - 3 / np.sqrt(10) == pytest.approx(0.051, abs=5e-4)

    @pytest.mark.slow
    def test_hyperboloid_report(self):
        r = theorem_check(hyperboloid(), extents=(3.0, 6.0, 12.0))
        assert r.verdict == "consistent with Theorem"
        np.testing.assert_allclose(r.hausdorff_by_extent, [0.051, 0.0137, 0.0035], atol=5e-4)
        js = r.to_json()
        assert js["pinching"] == "asserted beyond chart"
        assert js["injectivity"]["result"] == "pass"

    def test_affine_precondition(self):
        r = theorem_check(affine((0.5, 0.0)), extents=(1.0, 2.0), nodes=41)
        assert r.verdict == "precondition failure"
        assert "curvature not pinched negative" in r.notes
