"""Scenario documents: parsing, validation and the built-in scenarios.

A scenario is one JSON object::

    {
      "name": "hyperboloid-full",
      "surface": {"family": "hyperboloid", "params": {}},     # or {"samples": "f.csv"}
      "chart": {"extent": 1.0, "spacing": 0.05},              # or {"bounds": [u0, u1, v0, v1], ...}
      "analyses": {"fundamental_forms": true, "codazzi": true, "energy_variation": true,
                   "reconstruct": true, "legendre": true, "theorem_check": true},
      "order": 2,
      "seed": 0,
      "tolerances": {"gauss_equation": 5e-3},
      "legendre": {"R": 50, "angles": 1024},
      "theorem": {"extents": [1.5, 3, 6, 12], "nodes": 601},
      "variation": {"bumps": 20, "t_step": 1e-3, "spacing": 0.025},
      "reconstruct": {"spacing": 0.01},
      "figure": {"poincare": false},
      "output": "runs/hyperboloid"
    }

Every key but ``surface`` is optional.  A sampled surface is a CSV of
heights with columns ``u, v, f`` on a uniform grid, which then defines the
chart (a ``chart`` entry, if present, must agree), or a ``.npy`` array of
heights on the scenario chart.  Paths are resolved relative to the config.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chart import ChartGrid, ScalarField, read_csv_field
from .graphs import FAMILIES, SampledGraph, SpacelikeGraph, make_family

ANALYSES = ("fundamental_forms", "codazzi", "energy_variation", "reconstruct", "legendre", "theorem_check")
MIN_SPACING = 1e-3
MAX_NODES = 2001
MAX_ANGLES = 16384
MAX_THEOREM_NODES = 1201

DEFAULT_TOLERANCES = {
    "gauss_equation": 5e-3,
    "order_target": 1.8,
    "first_variation": 1e-3,
    "position": 1e-6,
    "holonomy": 1e-6,
    "tol_frame": 1e-6,
    "gauss_alignment": 1e-6,
    "fenchel_young": 1e-8,
    "delta_margin": 1e-3,
}

_SECTIONS = {
    "legendre": {"R": 50.0, "angles": 1024},
    "theorem": {"extents": [1.5, 3.0, 6.0, 12.0], "nodes": 601},
    "variation": {"bumps": 20, "t_step": 1e-3, "spacing": 0.025},
    "reconstruct": {"spacing": 0.01},
    "figure": {"poincare": False},
}

_KEYS = {"name", "surface", "chart", "analyses", "order", "seed", "tolerances", "output", *_SECTIONS}


class ScenarioError(ValueError):
    """An invalid scenario document (exit status 2)."""


@dataclass
class Scenario:
    name: str
    surface: dict
    chart: ChartGrid
    analyses: dict[str, bool]
    order: int = 2
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    legendre: dict = field(default_factory=lambda: dict(_SECTIONS["legendre"]))
    theorem: dict = field(default_factory=lambda: dict(_SECTIONS["theorem"]))
    variation: dict = field(default_factory=lambda: dict(_SECTIONS["variation"]))
    reconstruct: dict = field(default_factory=lambda: dict(_SECTIONS["reconstruct"]))
    figure: dict = field(default_factory=lambda: dict(_SECTIONS["figure"]))
    output: str | None = None
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    @property
    def enabled(self) -> list[str]:
        return [a for a in ANALYSES if self.analyses.get(a)]

    def surface_graph(self) -> SpacelikeGraph:
        if "family" in self.surface:
            try:
                return make_family(self.surface["family"], self.surface.get("params"))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"bad parameters for {self.surface['family']!r}: {exc}") from None
        _, values = _load_samples(self.surface["samples"], self.base_dir, self.chart)
        out = SampledGraph(ScalarField(self.chart, values))
        out.params = {"samples": str(self.surface["samples"])}
        return out

    def echo(self) -> dict:
        """The effective configuration, as recorded in the run report."""
        return {
            "name": self.name, "surface": self.surface, "chart": self.chart.to_json(),
            "analyses": {a: bool(self.analyses.get(a)) for a in ANALYSES},
            "order": self.order, "seed": self.seed, "tolerances": dict(sorted(self.tolerances.items())),
            "legendre": self.legendre, "theorem": self.theorem, "variation": self.variation,
            "reconstruct": self.reconstruct, "figure": self.figure,
        }


def _positive(value, what: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what} must be a number, got {value!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise ScenarioError(f"{what} must be positive, got {value!r}")
    return v


def _integer(value, what: str, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ScenarioError(f"{what} must be an integer, got {value!r}")
    if not lo <= int(value) <= hi:
        raise ScenarioError(f"{what} must lie in [{lo}, {hi}], got {value!r}")
    return int(value)


def _parse_chart(doc) -> ChartGrid:
    if not isinstance(doc, dict):
        raise ScenarioError("chart must be an object")
    h = _positive(doc.get("spacing", 0.05), "chart spacing")
    if h < MIN_SPACING:
        raise ScenarioError(f"chart spacing must be at least {MIN_SPACING}")
    if "bounds" in doc:
        b = doc["bounds"]
        if not isinstance(b, list) or len(b) != 4:
            raise ScenarioError("chart bounds must be [u_min, u_max, v_min, v_max]")
        u0, u1, v0, v1 = (float(x) for x in b)
        if not (u1 > u0 and v1 > v0):
            raise ScenarioError("chart bounds must be increasing")
    else:
        e = _positive(doc.get("extent", 1.0), "chart extent")
        u0, u1, v0, v1 = -e, e, -e, e
    n_u = int(round((u1 - u0) / h)) + 1
    n_v = int(round((v1 - v0) / h)) + 1
    if max(n_u, n_v) > MAX_NODES or min(n_u, n_v) < 5:
        raise ScenarioError(f"chart resolution {n_u} x {n_v} outside [5, {MAX_NODES}] nodes per axis")
    return ChartGrid(u0, u1, v0, v1, n_u, n_v)


def _parse_surface(doc) -> dict:
    if not isinstance(doc, dict) or ("family" in doc) == ("samples" in doc):
        raise ScenarioError("surface must give exactly one of 'family' or 'samples'")
    if "family" in doc:
        if doc["family"] not in FAMILIES:
            raise ScenarioError(f"unknown surface family {doc['family']!r}; known: {sorted(FAMILIES)}")
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise ScenarioError("surface params must be an object")
        return {"family": doc["family"], "params": params}
    return {"samples": str(doc["samples"])}


def _load_samples(name: str, base_dir: Path, chart: ChartGrid | None):
    """Heights from a CSV (grid from the file) or a ``.npy`` array (grid from ``chart``)."""
    path = Path(name)
    if not path.is_absolute():
        path = base_dir / path
    try:
        if path.suffix == ".npy":
            if chart is None:
                raise ScenarioError("a .npy surface needs an explicit chart")
            values, grid = np.load(path), chart
        else:
            grid, values = read_csv_field(path)
            if values.shape[2] != 1:
                raise ScenarioError("surface CSV must have exactly one value column")
            values = values[..., 0]
    except (OSError, ValueError) as exc:
        raise ScenarioError(f"cannot load sampled surface {path}: {exc}") from None
    if chart is not None and (values.shape != chart.shape or grid != chart):
        raise ScenarioError(f"sampled surface grid {values.shape} does not match the chart {chart.shape}")
    return grid, values


def _section(data: dict, key: str) -> dict:
    out = copy.deepcopy(_SECTIONS[key])
    given = data.get(key, {})
    if not isinstance(given, dict):
        raise ScenarioError(f"{key} must be an object")
    unknown = set(given) - set(out)
    if unknown:
        raise ScenarioError(f"unknown {key} keys: {sorted(unknown)}")
    out.update(given)
    return out


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    """Validate a scenario document.

    Raises
    ------
    ScenarioError
        On unknown keys or families, non-positive extents, or resolutions out of bounds.
    """
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(data) - _KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    if "surface" not in data:
        raise ScenarioError("scenario needs a surface")
    surface = _parse_surface(data["surface"])
    base_dir = base_dir or Path.cwd()
    if "samples" in surface:
        chart = _parse_chart(data["chart"]) if "chart" in data else None
        chart, _ = _load_samples(surface["samples"], base_dir, chart)
    else:
        chart = _parse_chart(data.get("chart", {}))
    analyses = data.get("analyses", {a: True for a in ANALYSES})
    if not isinstance(analyses, dict) or set(analyses) - set(ANALYSES):
        raise ScenarioError(f"analyses must be an object with keys among {list(ANALYSES)}")
    order = data.get("order", 2)
    if order not in (2, 4) or isinstance(order, bool):
        raise ScenarioError(f"order must be 2 or 4, got {order!r}")
    seed = _integer(data.get("seed", 0), "seed", 0, 2**32 - 1)
    tolerances = dict(DEFAULT_TOLERANCES)
    given = data.get("tolerances", {})
    if not isinstance(given, dict) or set(given) - set(DEFAULT_TOLERANCES):
        raise ScenarioError(f"tolerances must be an object with keys among {sorted(DEFAULT_TOLERANCES)}")
    tolerances.update({k: _positive(v, f"tolerance {k}") for k, v in given.items()})
    sections = {k: _section(data, k) for k in _SECTIONS}
    _positive(sections["legendre"]["R"], "legendre R")
    _integer(sections["legendre"]["angles"], "legendre angles", 16, MAX_ANGLES)
    extents = sections["theorem"]["extents"]
    if not isinstance(extents, list) or len(extents) < 2:
        raise ScenarioError("theorem extents must list at least two chart extents")
    sections["theorem"]["extents"] = [_positive(e, "theorem extent") for e in extents]
    _integer(sections["theorem"]["nodes"], "theorem nodes", 11, MAX_THEOREM_NODES)
    _integer(sections["variation"]["bumps"], "variation bumps", 1, 1000)
    _positive(sections["variation"]["t_step"], "variation t_step")
    for key in ("variation", "reconstruct"):
        if _positive(sections[key]["spacing"], f"{key} spacing") < MIN_SPACING:
            raise ScenarioError(f"{key} spacing must be at least {MIN_SPACING}")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ScenarioError("output must be a path string")
    return Scenario(str(data.get("name", "scenario")), surface, chart, {a: bool(analyses.get(a)) for a in ANALYSES},
                    int(order), seed, tolerances, output=output, base_dir=base_dir, **sections)


BUILTIN = {
    "hyperboloid-full": {
        "name": "hyperboloid-full",
        "surface": {"family": "hyperboloid"},
        "chart": {"extent": 1.0, "spacing": 0.05},
        "analyses": {a: True for a in ANALYSES},
    },
    "half-disc": {
        "name": "half-disc",
        "surface": {"family": "half-disc"},
        "chart": {"extent": 1.0, "spacing": 0.05},
        "analyses": {"legendre": True, "theorem_check": True},
    },
    "affine-theorem": {
        "name": "affine-theorem",
        "surface": {"family": "affine", "params": {"a": [0.5, 0.0]}},
        "chart": {"extent": 1.0, "spacing": 0.05},
        "analyses": {"theorem_check": True},
    },
}


def load_scenario(source) -> Scenario:
    """A built-in scenario by name, or a JSON file path.

    Raises
    ------
    ScenarioError
        If the file is missing, is not valid JSON, or fails validation.
    """
    if isinstance(source, str) and source in BUILTIN:
        return scenario_from_dict(copy.deepcopy(BUILTIN[source]))
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {source}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {source} is not valid JSON: {exc}") from None
    return scenario_from_dict(data, path.resolve().parent)
