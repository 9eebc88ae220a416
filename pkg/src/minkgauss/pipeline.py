"""Scenario execution: analyses in dependency order, serialized outputs and the run report."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chart import ChartGrid, _det2
from .figure import emit_klein_figure
from .frames import (FrameDegenerationError, GaussCodazziError, GaussTarget, PullbackMismatchError,
                     TabulatedFrameData, align_to_gauss_map, frame_data_from_graph, integrate_frame, rigid_align)
from .graphs import (SampledGraph, SpacelikeError, brioschi_curvature, entire_spacelike_check,
                     first_fundamental_form, gauss_map_from_gradient, graph_frame, shape_operator)
from .harmonic import (NotLocalDiffeomorphismError, codazzi_verdict, gauss_map_chart, gauss_map_pair,
                       observed_order, variation_ensemble)
from .hull import DegenerateHullError
from .legendre import essential_hull, finiteness_sweep, legendre_transform, theorem_check
from .lorentz import FrameState
from .scenario import ANALYSES, Scenario

log = logging.getLogger(__name__)

SIG_DIGITS = 12
PASS, FAIL, PRECONDITION = "pass", "fail", "precondition failure"
FIGURE_NODES = 61


class PreconditionFailure(Exception):
    """An analysis whose inputs violate its hypotheses; reported, never raised to the caller."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


def canonical(obj):
    """JSON-ready copy with floats rounded to 12 significant digits and non-finite values as strings."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        x = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if x == 0 else x
    return obj


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunReport:
    scenario: dict
    analyses: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def exit_status(self) -> int:
        return 0 if all(a["status"] == PASS for a in self.analyses.values()) else 1

    def to_json(self) -> dict:
        # wall-clock timings live in timings.json so that reports are reproducible byte for byte
        return {"scenario": self.scenario, "analyses": self.analyses, "artifacts": sorted(self.artifacts),
                "exit_status": self.exit_status}


def _closed_form(s) -> None:
    if isinstance(s, SampledGraph):
        raise PreconditionFailure("sampled surface: this analysis needs a closed-form family")


def _with_order(coarse: float, fine: float, target: float) -> tuple[float, bool]:
    p = observed_order(coarse, fine)
    return p, bool((coarse <= 1e-10 and fine <= 1e-10) or p >= target)


def fundamental_forms(sc: Scenario, s, out: Path) -> dict:
    chart, order, tol = sc.chart, sc.order, sc.tolerances
    audit = entire_spacelike_check(s, chart, order)
    if not audit.spacelike:
        raise PreconditionFailure("graph is not spacelike on the chart", audit.to_json())
    grids = [chart] if isinstance(s, SampledGraph) else [chart, chart.refined()]
    res = []
    for grid in grids:
        g = first_fundamental_form(s, grid, order)
        K = brioschi_curvature(s, grid, order).values
        B = shape_operator(s, grid, order).values
        mask = grid.interior_mask(2)
        res.append(float(np.max(np.abs(K + _det2(B))[mask])))
        if grid is chart:
            rows = np.column_stack([chart.points().reshape(-1, 2), g.values.reshape(-1, 4)[:, [0, 1, 3]],
                                    K.reshape(-1), (-_det2(B)).reshape(-1)])
            np.savetxt(out / "fundamental_forms.csv", rows, delimiter=",", fmt="%.12g", comments="",
                       header="u,v,g11,g12,g22,K_intrinsic,K_shape")
    entry = {"spacelike": audit.to_json(), "gauss_equation_residual": res[0], "tolerance": tol["gauss_equation"],
             "artifacts": ["fundamental_forms.csv"]}
    ok = res[0] <= tol["gauss_equation"]
    if len(res) == 2:
        p, conv = _with_order(res[0], res[1], tol["order_target"])
        entry.update(refined_residual=res[1], convergence_order=p)
        ok = ok and conv
    else:
        entry["convergence_order"] = None
    entry["status"] = PASS if ok else FAIL
    return entry


def codazzi(sc: Scenario, s, out: Path) -> dict:
    _closed_form(s)
    v = codazzi_verdict(gauss_map_pair(s), sc.chart, sc.order)
    return {**v.to_json(), "status": PASS if v.verdict else FAIL}


def energy_variation(sc: Scenario, s, out: Path) -> dict:
    _closed_form(s)
    c = sc.chart
    cfg = sc.variation
    chart = ChartGrid(c.u_min, c.u_max, c.v_min, c.v_max, int(round((c.u_max - c.u_min) / cfg["spacing"])) + 1,
                      int(round((c.v_max - c.v_min) / cfg["spacing"])) + 1)
    r = variation_ensemble(gauss_map_pair(s), chart, sc.seed, int(cfg["bumps"]), float(cfg["t_step"]), sc.order)
    lim = sc.tolerances["first_variation"]
    return {**r.to_json(), "tolerance": lim, "grid": chart.to_json(),
            "status": PASS if r.max_abs <= lim else FAIL}


def reconstruct(sc: Scenario, s, out: Path) -> dict:
    tol = sc.tolerances
    c = sc.chart
    if isinstance(s, SampledGraph):
        chart = c
        data = TabulatedFrameData(first_fundamental_form(s, chart, sc.order), shape_operator(s, chart, sc.order),
                                  sc.order)
        heights, df, _ = s.derivatives(chart, sc.order)
        i0 = chart.center_node()
        frame = graph_frame_from(chart.points()[i0], heights[i0], df[i0])
    else:
        h = float(sc.reconstruct["spacing"])
        chart = ChartGrid(c.u_min, c.u_max, c.v_min, c.v_max, int(round((c.u_max - c.u_min) / h)) + 1,
                          int(round((c.v_max - c.v_min) / h)) + 1)
        data = frame_data_from_graph(s)
        heights = s.value(chart.points())
        frame = graph_frame(s, chart.points()[chart.center_node()])
    r = integrate_frame(data, chart, order=sc.order, holonomy=True, tol_frame=tol["tol_frame"])
    _, _, sigma = rigid_align(r, frame)
    exact = np.concatenate([chart.points(), heights[..., None]], axis=-1)
    position = float(np.max(np.abs(sigma - exact)))
    entry = {**r.report(), "position_error": position,
             "tolerances": {"position": tol["position"], "holonomy": tol["holonomy"]}}
    ok = position <= tol["position"] and r.holonomy_residual <= tol["holonomy"]
    if not isinstance(s, SampledGraph):
        al = align_to_gauss_map(r, GaussTarget.from_klein_map(gauss_map_chart(s), chart, sc.order))
        entry["alignment"] = al.report()
        ok = ok and al.gauss_residual <= tol["gauss_alignment"]
    rows = np.concatenate([chart.points().reshape(-1, 2), sigma.reshape(-1, 3)], axis=1)
    np.savetxt(out / "sigma.csv", rows, delimiter=",", header="u,v,x1,x2,x3", comments="", fmt="%.12g")
    entry["artifacts"] = ["sigma.csv"]
    entry["status"] = PASS if ok else FAIL
    return entry


def graph_frame_from(x, height, df) -> FrameState:
    """Graph frame above ``x`` from a sampled height and gradient."""
    return FrameState(np.array([x[0], x[1], float(height)]), np.array([1.0, 0.0, df[0]]),
                      np.array([0.0, 1.0, df[1]]), gauss_map_from_gradient(np.asarray(df)))


def gradient_cloud(s, extent: float) -> np.ndarray:
    return s.grad(ChartGrid.square(extent, 2 * extent / (FIGURE_NODES - 1)).points()).reshape(-1, 2)


def legendre(sc: Scenario, s, out: Path) -> dict:
    _closed_form(s)
    cfg = sc.legendre
    delta = sc.tolerances["delta_margin"]
    sweep = finiteness_sweep(s, int(cfg["angles"]), float(cfg["R"]), delta)
    with open(out / "finiteness.csv", "w") as fh:
        fh.write("theta,margin,state\n")
        for t, m, state in sweep.csv_rows():
            fh.write(f"{t:.12g},{m:.12g},{state}\n")
    entry = {"finiteness": sweep.to_json(), "R": cfg["R"], "angles": cfg["angles"], "delta_margin": delta,
             "artifacts": ["finiteness.csv"]}
    try:
        hull = essential_hull(s, sweep=sweep)
        entry["hull"] = hull.to_json()
    except DegenerateHullError as exc:
        hull = None
        entry["hull"] = None
        entry["hull_note"] = str(exc)
    # Fenchel-Young on seeded pairs, half of them equality cases y = Df(x)
    rng = np.random.default_rng(sc.seed)
    x = rng.uniform(-5.0, 5.0, size=(1000, 2))
    r = np.sqrt(rng.uniform(size=500))
    t = rng.uniform(0.0, 2 * np.pi, size=500)
    y = np.concatenate([np.stack([r * np.cos(t), r * np.sin(t)], axis=-1), s.grad(x[500:])], axis=0)
    val = legendre_transform(s, y, float(cfg["R"])).value
    fin = np.isfinite(val)
    gap = float(np.min(s.value(x[fin]) + val[fin] - np.sum(x[fin] * y[fin], axis=-1))) if np.any(fin) else 0.0
    entry["fenchel_young"] = {"pairs": int(np.sum(fin)), "min_gap": gap, "tolerance": sc.tolerances["fenchel_young"]}
    emit_klein_figure(out / "legendre.svg", [hull] if hull is not None else [], [gradient_cloud(s, sc.chart.u_max)],
                      poincare=bool(sc.figure["poincare"]))
    entry["artifacts"].append("legendre.svg")
    undecided = int(np.sum(sweep.states == "undecided"))
    ok = undecided == 0 and gap >= -sc.tolerances["fenchel_young"]
    entry["status"] = PASS if ok else FAIL
    return entry


def theorem(sc: Scenario, s, out: Path) -> dict:
    _closed_form(s)
    cfg = sc.theorem
    rep = theorem_check(s, extents=tuple(cfg["extents"]), nodes=int(cfg["nodes"]),
                        n_angles=int(sc.legendre["angles"]), R=float(sc.legendre["R"]),
                        delta=sc.tolerances["delta_margin"])
    (out / "theorem.json").write_text(dumps(rep.to_json()))
    entry = {"report": rep.to_json(), "artifacts": ["theorem.json"]}
    if rep.verdict == "precondition failure":
        raise PreconditionFailure("; ".join(rep.notes) or "precondition failure", entry)
    if rep.finiteness is not None:
        with open(out / "theorem_finiteness.csv", "w") as fh:
            fh.write("theta,margin,state\n")
            for t, m, state in rep.finiteness.csv_rows():
                fh.write(f"{t:.12g},{m:.12g},{state}\n")
        entry["artifacts"].append("theorem_finiteness.csv")
    if rep.hull is not None:
        emit_klein_figure(out / "theorem.svg", [rep.hull], [gradient_cloud(s, max(rep.extents))],
                          poincare=bool(sc.figure["poincare"]))
        entry["artifacts"].append("theorem.svg")
    entry["status"] = PASS if rep.verdict == "consistent with Theorem" else FAIL
    return entry


STEPS = {
    "fundamental_forms": fundamental_forms,
    "codazzi": codazzi,
    "energy_variation": energy_variation,
    "reconstruct": reconstruct,
    "legendre": legendre,
    "theorem_check": theorem,
}

_PRECONDITION_ERRORS = (PreconditionFailure, SpacelikeError, GaussCodazziError, FrameDegenerationError,
                        PullbackMismatchError, NotLocalDiffeomorphismError)


def run(sc: Scenario, out_dir) -> RunReport:
    """Run the enabled analyses in dependency order, writing outputs under ``out_dir``.

    Precondition failures become report entries; the report is written as
    ``report.json`` and the wall-clock timings as ``timings.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    surface = sc.surface_graph()
    report = RunReport(sc.echo())
    for name in ANALYSES:
        if not sc.analyses.get(name):
            continue
        log.info("running %s", name)
        t0 = time.perf_counter()
        try:
            entry = STEPS[name](sc, surface, out)
        except _PRECONDITION_ERRORS as exc:
            details = getattr(exc, "details", {})
            entry = {**details, "status": PRECONDITION, "message": str(exc)}
        report.timings[name] = time.perf_counter() - t0
        report.artifacts.extend(entry.get("artifacts", []))
        report.analyses[name] = entry
        log.info("%s: %s", name, entry["status"])
    (out / "report.json").write_text(dumps(report.to_json()))
    (out / "timings.json").write_text(json.dumps({k: round(v, 3) for k, v in report.timings.items()}, indent=2))
    return report
