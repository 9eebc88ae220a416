from __future__ import annotations

import json

import numpy as np
import pytest

from minkgauss import cli
from minkgauss.chart import ChartGrid, ScalarField
from minkgauss.figure import boundary_polyline, klein_to_poincare, render_svg
from minkgauss.graphs import hyperboloid
from minkgauss.hull import full_disc, hull_of_circle_subset
from minkgauss.pipeline import canonical
from minkgauss.scenario import BUILTIN, ScenarioError, load_scenario, scenario_from_dict

SMALL = {
    "name": "small",
    "surface": {"family": "bumped-hyperboloid", "params": {"eps": 0.1}},
    "chart": {"extent": 0.5, "spacing": 0.1},
    "analyses": {"reconstruct": True, "legendre": True, "theorem_check": True},
    "legendre": {"angles": 256},
    "theorem": {"extents": [1, 2], "nodes": 101},
    "reconstruct": {"spacing": 0.05},
}


def write(tmp_path, doc, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestScenario:
    def test_builtins_load(self):
        for name in BUILTIN:
            sc = load_scenario(name)
            assert sc.name == name

    @pytest.mark.parametrize("patch, fragment", [
        ({"chart": {"extent": -1.0}}, "positive"),
        ({"surface": {"family": "paraboloid"}}, "unknown surface family"),
        ({"order": 3}, "order"),
        ({"colour": "red"}, "unknown scenario keys"),
        ({"legendre": {"angles": 4}}, "legendre angles"),
        ({"theorem": {"extents": [2]}}, "at least two"),
        ({"reconstruct": {"spacing": 1e-4}}, "at least"),
        ({"tolerances": {"holonomy": 0}}, "positive"),
    ])
    def test_invalid(self, patch, fragment):
        with pytest.raises(ScenarioError, match=fragment):
            scenario_from_dict(dict(SMALL, **patch))

    def test_bad_family_params(self):
        sc = scenario_from_dict(dict(SMALL, surface={"family": "hyperboloid", "params": {"scale": 2}}))
        with pytest.raises(ScenarioError):
            sc.surface_graph()

    def test_sampled_csv(self, tmp_path):
        grid = ChartGrid.square(0.5, 0.1)
        ScalarField(grid, hyperboloid().value(grid.points())).to_csv(tmp_path / "f.csv")
        sc = scenario_from_dict({"surface": {"samples": "f.csv"}}, tmp_path)
        assert sc.chart == grid
        f = sc.surface_graph()
        np.testing.assert_allclose(f.field.values, hyperboloid().value(grid.points()), rtol=1e-11)

    def test_missing_samples(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot load"):
            scenario_from_dict({"surface": {"samples": "nope.csv"}}, tmp_path)

    def test_canonical_floats(self):
        assert canonical({"a": [1 / 3, np.float64(2.0)], "b": np.int64(3)}) == {"a": [0.333333333333, 2.0], "b": 3}


class TestCli:
    def test_invalid_config_exit_2(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = write(tmp_path, dict(SMALL, chart={"extent": -1}))
        assert cli.main(["analyze", "--config", path, "--out", str(out)]) == 2
        assert not out.exists()
        assert "configuration error" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert cli.main(["analyze", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_negative_seed(self, tmp_path):
        assert cli.main(["analyze", "--config", write(tmp_path, SMALL), "--seed", "-1",
                         "--out", str(tmp_path / "o")]) == 2

    def test_affine_precondition(self, tmp_path, capsys):
        assert cli.main(["theorem", "--config", "affine-theorem", "--out", str(tmp_path / "o")]) == 1
        assert "curvature not pinched negative" in capsys.readouterr().out
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["analyses"]["theorem_check"]["status"] == "precondition failure"
        assert report["exit_status"] == 1

    def test_analyze_pass_and_deterministic(self, tmp_path):
        path = write(tmp_path, SMALL)
        assert cli.main(["analyze", "--config", path, "--out", str(tmp_path / "a")]) == 0
        assert cli.main(["analyze", "--config", path, "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "report.json").read_bytes()
        assert a == (tmp_path / "b" / "report.json").read_bytes()
        report = json.loads(a)
        assert set(report) == {"analyses", "artifacts", "exit_status", "scenario"}
        assert all(e["status"] == "pass" for e in report["analyses"].values())
        assert (tmp_path / "a" / "timings.json").exists()
        assert "fundamental_forms" not in report["analyses"]

    def test_subcommand_restricts(self, tmp_path):
        assert cli.main(["legendre", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert list(report["analyses"]) == ["legendre"]

    def test_figure(self, tmp_path):
        assert cli.main(["figure", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "o"),
                         "--poincare"]) == 0
        svg = (tmp_path / "o" / "figure.svg").read_text()
        assert svg.startswith("<svg") and "steelblue" in svg


class TestFigure:
    def test_full_disc_circle_only(self):
        svg = render_svg([full_disc()])
        assert svg.count("<path") == 0
        assert svg.count("<circle") == 1

    def test_triangle_three_chords(self):
        d = hull_of_circle_subset(points=[0.0, 0.75 * np.pi, 1.25 * np.pi])
        klein = boundary_polyline(d)
        assert len(klein) == 6
        assert render_svg([d]).count("<path") == 1
        # each Poincare geodesic bulges toward the origin
        poin = boundary_polyline(d, poincare=True)
        assert len(poin) > 6
        assert np.all(np.linalg.norm(poin, axis=-1) <= 1 + 1e-12)

    def test_poincare_map(self):
        np.testing.assert_allclose(klein_to_poincare([0.0, 0.0]), [0.0, 0.0])
        np.testing.assert_allclose(klein_to_poincare([1.0, 0.0]), [1.0, 0.0])
        # Poincare radius r sits at Klein radius 2r / (1 + r^2)
        r = 0.4
        np.testing.assert_allclose(klein_to_poincare([2 * r / (1 + r * r), 0.0]), [r, 0.0])

    def test_thinning(self):
        pts = np.random.default_rng(0).uniform(-0.5, 0.5, size=(10_000, 2))
        assert render_svg(point_sets=[pts]).count("steelblue") <= 2000
