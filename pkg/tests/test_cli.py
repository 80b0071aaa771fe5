import csv
import json
import math

import pytest

from blochlab.cli import main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_construct_transform_round_trip(tmp_path, capsys):
    dump = tmp_path / "atom.json"
    assert main(["construct", "atom", "--depth", "6", "--out", str(dump)]) == 0
    pts = tmp_path / "pts.csv"
    pts.write_text("re,im\n0.5,0\n0,0\n")
    res = tmp_path / "h.csv"
    assert main(["transform", "--measure", str(dump), "--kind", "H", "--points", str(pts), "--out", str(res)]) == 0
    rows = list(csv.DictReader(res.open()))
    assert list(rows[0]) == ["re_z", "im_z", "re_val", "im_val", "err_bound"]
    # (1 + z) / (1 - z) at 1/2 and 0
    assert abs(float(rows[0]["re_val"]) - 3) <= float(rows[0]["err_bound"])
    assert abs(float(rows[1]["re_val"]) - 1) <= float(rows[1]["err_bound"])


def test_transform_singular_inner(tmp_path):
    dump = tmp_path / "atom.json"
    main(["construct", "atom", "--out", str(dump)])
    pts = tmp_path / "pts.csv"
    pts.write_text("0.5,0\n")
    res = tmp_path / "s.csv"
    assert main(["transform", "--measure", str(dump), "--kind", "S", "--points", str(pts), "--out", str(res)]) == 0
    row = next(csv.DictReader(res.open()))
    assert abs(float(row["re_val"]) - math.exp(-3)) <= float(row["err_bound"]) + 1e-15


def test_check_zygmund_and_carleson(tmp_path, capsys):
    dump = tmp_path / "atom.json"
    main(["construct", "atom", "--out", str(dump)])
    capsys.readouterr()
    code, out, _ = _run(["check", "zygmund", "--measure", str(dump), "--depth", "5"], capsys)
    assert code == 0
    assert "per_level" in json.loads(out)
    code, _, _ = _run(["check", "carleson", "--set", "points:1/3", "--depth", "8", "--out-dir", str(tmp_path / "c")],
                      capsys)
    assert code == 0
    assert (tmp_path / "c" / "carleson.csv").exists()
    code, _, _ = _run(["check", "carleson", "--set", "half:8"], capsys)
    assert code == 1


def test_check_depth_beyond_set_is_usage_error(capsys):
    code, _, err = _run(["check", "carleson", "--set", "half:6", "--depth", "9"], capsys)
    assert code == 2
    assert "depth" in err


def test_check_moc_failure_exit(tmp_path, capsys):
    dump = tmp_path / "atom.json"
    main(["construct", "atom", "--out", str(dump)])
    code, _, _ = _run(["check", "moc", "--measure", str(dump), "--depth", "4"], capsys)
    assert code == 1


def test_run_empty_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing here\n")
    code, _, err = _run(["run", "--config", str(cfg)], capsys)
    assert code == 2
    assert err


def test_run_unknown_key_named(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("recipe = atom-baseline\nwobble = 3\n")
    code, _, err = _run(["run", "--config", str(cfg)], capsys)
    assert code == 2
    assert "wobble" in err


def test_run_bad_value_named(capsys):
    code, _, err = _run(["run", "--recipe", "atom-baseline", "--quad", "many"], capsys)
    assert code == 2
    assert "quad" in err


def test_run_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    out = tmp_path / "out"
    cfg.write_text(f"recipe = atom-baseline\npoints = 7\nout-dir = {out}\n")
    code, _, _ = _run(["run", "--config", str(cfg), "--points", "5"], capsys)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["points"] == 5
    assert summary["passed"]
    rows = (out / "comparison.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 5


def test_run_riesz_reports_failure(tmp_path, capsys):
    code, out, _ = _run(["run", "--recipe", "riesz-lemma53", "--out-dir", str(tmp_path)], capsys)
    assert code == 1
    assert "FAIL" in out
    assert (tmp_path / "witnesses.csv").exists()


def test_unknown_subcommand_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_run_custom_pipeline(tmp_path, capsys):
    code, out, _ = _run(["run", "--recipe", "custom:nosupp:carleson,zygmund", "--set", "points:0,1/3",
                         "--depth", "8", "--points", "4", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [i["name"] for i in summary["items"]] == ["carleson", "zygmund", "transform_certified"]
    rows = (tmp_path / "transform_sample.csv").read_text().strip().splitlines()
    assert len(rows) == 5


def test_run_custom_pipeline_rejects_unknown_check(capsys):
    code, _, err = _run(["run", "--recipe", "custom:atom:wobble"], capsys)
    assert code == 2
    assert "recipe" in err
