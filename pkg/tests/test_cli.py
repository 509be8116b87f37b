from __future__ import annotations

import csv
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armlab.cli import (CSV_HEADER, ConfigError, ResultRecord, emit_report, load_records, main,
                        read_config, run_experiment, validate)


def _run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def test_cardy_json(capsys):
    rc, out, _ = _run(capsys, "cardy", "m=0.5,0.25")
    assert rc == 0
    rec = json.loads(out)
    assert rec["engine"] == "cardy"
    vals = {v["m"]: v["value"] for v in rec["estimates"]["values"]}
    assert vals[0.5] == pytest.approx(0.5, abs=1e-11)
    assert vals[0.25] == pytest.approx(0.373548791334, abs=1e-11)
    assert set(rec) == {"engine", "parameters", "estimates", "fits", "wallClock", "seed", "version"}


def test_eigen1d_csv(capsys):
    rc, out, _ = _run(capsys, "eigen1d", "n=255", "--format", "csv")
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 4
    assert float(rows[-1][5]) == pytest.approx(5 / 48, abs=1e-5)


def test_backbone_plotdata(capsys):
    rc, out, _ = _run(capsys, "backbone", "meshes=16,32,64", "--format", "plotdata")
    assert rc == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert [l.split()[0] for l in lines] == ["16", "32", "64"]


def test_percolation_fit_and_workers(capsys):
    args = ["percolation", "event=oneArm", "trials=2000", "scales=2,4,8,16", "--seed", "5"]
    rc, out1, _ = _run(capsys, *args)
    assert rc == 0
    rc, out2, _ = _run(capsys, *args, "--workers", "2")
    assert rc == 0
    a, b = json.loads(out1), json.loads(out2)
    a.pop("wallClock"), b.pop("wallClock")
    assert a == b
    pts = a["estimates"]["points"]
    assert [p["scale"] for p in pts] == [2, 4, 8, 16]
    assert all(x["pHat"] >= y["pHat"] for x, y in zip(pts, pts[1:]))
    assert a["fits"]["powerLaw"]["exponent"] > 0


def test_config_file_and_prefixes(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# shared file\ncardy.m = 0.3\neigen1d.n = 127\n")
    rc, out, _ = _run(capsys, "cardy", "--config", str(cfg))
    assert rc == 0
    assert json.loads(out)["parameters"]["m"] == [0.3]


def test_config_errors_exit_1(capsys):
    for argv in (["cardy", "bogus=1"], ["cardy", "m=2"], ["eigen1d", "n=abc"], ["report"],
                 ["cardy", "--config", "/nonexistent/file"], ["cardy", "--seed", "-1"], ["nosuchengine"]):
        rc, _, err = _run(capsys, *argv)
        assert rc == 1, argv
        if argv[0] != "nosuchengine":
            assert json.loads(err.splitlines()[-1])["error"] == "config"


def test_numerical_failure_exit_2(capsys):
    # a steep edge exponent on coarse meshes gives an inconsistent mesh trace
    rc, _, err = _run(capsys, "backbone", "form=alphaBeta", "meshes=16,32,64", "edgeExponent=5")
    assert rc == 2
    assert json.loads(err)["error"] == "numerical"


def test_out_file_and_report_roundtrip(tmp_path, capsys):
    prefix = str(tmp_path / "cardy")
    assert _run(capsys, "cardy", "m=0.1,0.9", "--out", prefix, "--seed", "3")[0] == 0
    path = prefix + ".jsonl"
    rc, out, _ = _run(capsys, "report", f"inputs={path}", "--format", "csv")
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[1][:3] == ["cardy", "3", "0.1"]
    recs = load_records([path])
    again = emit_report(recs, "json")
    with open(path) as fh:
        assert again == fh.read()
    # nothing is written when the run fails
    assert _run(capsys, "cardy", "m=7", "--out", str(tmp_path / "bad"))[0] == 1
    assert not (tmp_path / "bad.jsonl").exists()


def test_record_roundtrip_and_rounding():
    rec = run_experiment("cardy", validate("cardy", {"m": "0.5"}), seed=1)
    d = rec.to_dict()
    assert ResultRecord.from_dict(d).to_dict() == d
    assert "-0.0" not in json.dumps(d)


def test_read_config_syntax():
    assert read_config("a=1\n\n# c\n b = x y \n") == {"a": "1", "b": "x y"}
    with pytest.raises(ConfigError):
        read_config("no equals sign")


def test_validate_foreign_prefix_ignored():
    p = validate("cardy", {"backbone.meshes": "1,2", "cardy.m": "0.2"})
    assert p["m"] == [0.2]
    with pytest.raises(ConfigError):
        validate("cardy", {"foo.m": "0.2"})


@settings(max_examples=25, deadline=None)
@given(ms=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5))
def test_cardy_engine_any_valid_list(ms):
    p = validate("cardy", {"m": ",".join(repr(m) for m in ms)})
    rec = run_experiment("cardy", p, seed=0).to_dict()
    vals = [v["value"] for v in rec["estimates"]["values"]]
    assert len(vals) == len(ms) and all(0.0 <= v <= 1.0 for v in vals)
