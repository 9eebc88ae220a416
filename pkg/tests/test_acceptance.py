"""Acceptance suite: one pass/fail line per criterion, measured by the ``selftest`` subcommand.

Criteria 1 to 7 are read from the first run's ``selftest.json``; criterion 8
compares the bytes of two runs with the same seed.
"""

from __future__ import annotations

import json

import pytest

from minkgauss import cli

SEED = 7


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = []
    for k in range(2):
        d = tmp_path_factory.mktemp(f"selftest{k}")
        status = cli.main(["selftest", "--seed", str(SEED), "--out", str(d)])
        out.append((status, (d / "selftest.json").read_bytes()))
    return out


@pytest.fixture(scope="module")
def criteria(runs):
    return {c["criterion"]: c for c in json.loads(runs[0][1])["criteria"]}


def _fmt(x):
    return f"{x:.3g}" if isinstance(x, float) else str(x)


def _order(entry: dict, value: str, order: str) -> str:
    # exact data leave only rounding error, which has no convergence order
    if entry[value] <= 1e-10:
        return "noise floor"
    return f"order {_fmt(entry[order])}"


def _summary(c: dict) -> str:
    n = c["criterion"]
    if n == 1:
        return "; ".join(f"{k} {_fmt(c[k]['h0.05'])} (<= {_fmt(c[k]['limit'])}, {_order(c[k], 'h0.05', 'order')})"
                         for k in ("curvature", "shape", "gauss_equation"))
    if n == 2:
        parts = [f"{k} residual {_fmt(c[k]['residual'])} {_order(c[k], 'residual', 'convergence_order')}"
                 for k in ("hyperboloid", "bumped-hyperboloid")]
        parts += [f"{k} ratio {_fmt(c[k]['ratio'])}" for k in ("sheared-hyperboloid", "sheared-bumped-hyperboloid")]
        return "; ".join(parts)
    if n == 3:
        return (f"max |fv| {_fmt(c['hyperboloid']['max_abs'])} (<= 1e-3); "
                f"sheared/critical {_fmt(c['ratio'])} (>= 10)")
    if n == 4:
        return (f"position {_fmt(c['position_error'])}; holonomy {_fmt(c['holonomy_residual'])}; "
                f"isometry {_fmt(c['isometry_error'])}; corrupted rejected {c['corrupted']['rejected']}")
    if n == 5:
        return (f"hyperboloid error {_fmt(c['hyperboloid_error'])} (<= 2e-2); "
                f"Fenchel-Young min gap {_fmt(c['fenchel_young_min_gap'])}; affine single point "
                f"{c['affine_single_point']}")
    if n == 6:
        hyp = c["hyperboloid"]["hausdorff_by_extent"]
        half = c["half_disc"]["hausdorff_by_extent"]
        return (f"hyperboloid {', '.join(map(_fmt, hyp))}; half-disc {', '.join(map(_fmt, half))}; "
                f"three-point vertices within two samples {c['three_point']['within_two_samples']}")
    if n == 7:
        return "; ".join(f"{k} {_fmt(c[k]['h0.05'])} {_order(c[k], 'h0.05', 'order')}"
                         for k in ("hyperboloid", "half-disc"))
    return ""


def _report(capsys, n: int, name: str, passed: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if passed else 'FAIL'}  {name}  [{detail}]")


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 8))
def test_criterion(criteria, capsys, n):
    c = criteria[n]
    _report(capsys, n, c["name"], c["passed"], _summary(c))
    assert c["passed"], json.dumps(c, indent=1)[:4000]


@pytest.mark.slow
def test_criterion_8_determinism(runs, capsys):
    (s0, a), (s1, b) = runs
    same = a == b
    _report(capsys, 8, "determinism", same, f"seed {SEED}, {len(a)} bytes, identical {same}, exit {s0}/{s1}")
    assert same
