import csv
import json
import math
import os

import numpy as np
import pytest

from wpdiag.cli import (
    BETA_COLUMNS, CHECK_COLUMNS, EPS_COLUMNS, HALF_COLUMNS, SUM_COLUMNS, RunConfig, build_parser,
    classify, emit_figures, figure_data, main, run_diagnostics,
)


def _run(tmp_path, spec, depth=8, jobs=1, fmt="csv", name=None):
    out = tmp_path / (name or spec.replace(":", "_").replace(";", "_").replace(",", "_"))
    cfg = RunConfig(spec, [0.0, math.pi / 3, -math.pi / 3], depth=depth, out=str(out),
                    jobs=jobs, format=fmt)
    return run_diagnostics(cfg), out


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_classify():
    assert classify({"beta": "converging", "epsilon": "converging", "h_half": "converging"}) == \
        ("WP-consistent", None)
    assert classify({"beta": "diverging", "epsilon": "diverging", "h_half": "diverging"}) == \
        ("non-WP-consistent", None)
    assert classify({"beta": "converging", "epsilon": "diverging", "h_half": "converging"}) == \
        ("inconclusive", "epsilon")


def test_rotation_run(tmp_path):
    s, out = _run(tmp_path, "rot:0.5", depth=6)
    assert s["classification"] == "WP-consistent"
    assert all(v == 0 for r in s["beta"] for v in r["per_depth"])
    assert all(v == 0 for r in s["epsilon"] for v in r["per_depth"])
    assert s["h_half"]["value"] == 0
    for name, cols in [("beta", BETA_COLUMNS), ("epsilon", EPS_COLUMNS), ("sums", SUM_COLUMNS),
                       ("halfnorm", HALF_COLUMNS), ("checks", CHECK_COLUMNS)]:
        rows = _read(out / f"{name}.csv")
        assert rows[0] == cols
    assert len(_read(out / "beta.csv")) == 1 + 3 * (2 ** 7 - 1)
    assert json.loads((out / "summary.json").read_text())["classification"] == "WP-consistent"


# trig:0.3 still shows pre-asymptotic epsilon tail ratios at depth 9
@pytest.mark.parametrize("spec,label,depth", [("trig:0.3", "WP-consistent", 10),
                                              ("pwl:;1.5,0.5", "non-WP-consistent", 9)])
def test_zoo_classification(tmp_path, spec, label, depth):
    s, _ = _run(tmp_path, spec, depth=depth)
    assert s["classification"] == label, s["verdicts"]
    assert s["check_violations"] == 0


def test_parallel_matches_serial(tmp_path):
    _, a = _run(tmp_path, "trig:0.2", depth=6, jobs=1, name="serial")
    _, b = _run(tmp_path, "trig:0.2", depth=6, jobs=2, name="parallel")
    for name in ("beta.csv", "epsilon.csv", "sums.csv", "halfnorm.csv", "checks.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_floats_round_trip(tmp_path):
    _, out = _run(tmp_path, "trig:0.2", depth=4)
    rows = _read(out / "beta.csv")
    for r in rows[1:20]:
        for v in r[3:]:
            assert repr(float(v)) == v


def test_json_format(tmp_path):
    _, out = _run(tmp_path, "rot:0.1", depth=3, fmt="json")
    rows = json.loads((out / "beta.json").read_text())
    assert set(rows[0]) == set(BETA_COLUMNS)


def test_config_errors():
    with pytest.raises(ValueError):
        RunConfig("rot:0", [0.0], depth=40).validate()
    with pytest.raises(ValueError):
        RunConfig("rot:0", [0.0], mult=0.5).validate()


def test_main_run_multiple(tmp_path, capsys):
    code = main(["run", "--homeo", "rot:0.5", "--homeo", "mobius:2,1,0.5,0.75", "--bases", "0,pi/3",
                 "--depth", "5", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "rot_0.5" / "summary.json").exists()
    assert (tmp_path / "mobius_2_1_0.5_0.75" / "summary.json").exists()
    assert "rot:0.5: WP-consistent" in capsys.readouterr().out
    assert main(["run", "--homeo", "rot:0", "--bases", "zz", "--out", str(tmp_path)]) == 2


def test_parser_defaults():
    a = build_parser().parse_args(["run", "--homeo", "trig:0.3"])
    assert (a.mult, a.depth, a.eta, a.format, a.jobs) == (3.0, 10, 0.5, "csv", 1)
    assert a.bases == "0,pi/3,-pi/3"


def test_figures():
    d = figure_data(homeo="trig:0.3", hyperbolas=[(1.0, 1.0, 1.0)], depth=2)
    hyp = d["circles"][0]
    assert hyp["kind"] == "hyperbola" and hyp["center"] == pytest.approx([1.0, -1.0])
    assert len(d["diamonds"]) == 4
    ld = d["limiting_domain"]
    assert 0 < ld["r"] < 1 and len(ld["caps"]) == 6
    diag = figure_data()["circles"][0]
    assert diag["kind"] == "line" and diag["params"] == [1.0, 0.0]
    pen = np.array(diag["penrose"])
    assert np.allclose(pen[:, 0], pen[:, 1])
    assert [0.0, 0.0] in pen.tolist()
    assert np.any(np.all(np.isclose(pen, 1.0), axis=1))


def test_figures_cli(tmp_path):
    path = tmp_path / "fig.json"
    assert main(["figures", "--mobius", "2,1,0.5,0.75", "--samples", "64", "--out", str(path)]) == 0
    d = json.loads(path.read_text())
    assert d["circles"][0]["kind"] == "hyperbola"


def test_emit_figures_from_config():
    d = emit_figures({"hyperbolas": [(1.0, 1.0, 1.0)], "homeo": None})
    assert d["circles"][0]["kind"] == "hyperbola" and "diamonds" not in d
    ns = build_parser().parse_args(["figures", "--homeo", "rot:0.2", "--depth", "1"])
    d = emit_figures({"homeo": ns.homeo, "depth": ns.depth})
    assert len(d["diamonds"]) == 2
