import json

import pytest
from click.testing import CliRunner

from dyadic_rep import __version__
from dyadic_rep.cli import config_hash, main


def _run(args, env=None):
    return CliRunner().invoke(main, args, env=env or {})


def _rows(output):
    lines = [l for l in output.splitlines() if l and not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def test_dini_row():
    r = _run(["dini", "--omega", "power:1", "--alpha", "1"])
    assert r.exit_code == 0, r.output
    (row,) = _rows(r.output)
    assert float(row["dini_norm"]) == pytest.approx(2.0, abs=1e-6)
    assert float(row["dyadic_sum"]) == pytest.approx(2.0, abs=1e-12)
    assert row["comparison_holds"] == "true"


def test_header_carries_version_and_hash():
    r = _run(["dini", "--omega", "power:0.5"])
    head = r.output.splitlines()[0]
    assert head.startswith(f"# dyadic-rep {__version__} command=dini config=")
    h = head.rsplit("=", 1)[1]
    assert len(h) == 16 and int(h, 16) >= 0
    assert config_hash("dini", {"a": 1}) != config_hash("dini", {"a": 2})


def test_deterministic_output():
    args = ["decompose-verify", "--n", "1", "--k", "1-2", "--depth", "5", "--count", "2"]
    a, b = _run(args), _run(args)
    assert a.exit_code == 0 and a.output == b.output


def test_workers_env_keeps_order():
    args = ["norm-growth", "--k", "0-4", "--depth", "8"]
    serial = _run(args)
    parallel = _run(args, env={"DYADIC_REP_WORKERS": "2"})
    assert serial.exit_code == 0 and serial.output == parallel.output


def test_malformed_config_lists_every_problem(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 1\nno equals sign\nbogus = 3\ndepth = eight\n")
    r = _run(["--config", str(cfg), "decompose-verify"])
    assert r.exit_code == 2
    for piece in ("line 2", "bogus", "depth"):
        assert piece in r.output


def test_config_values_apply_and_cli_wins(tmp_path):
    cfg = tmp_path / "ok.cfg"
    cfg.write_text("# sweep\nk = 1-2\ndepth = 5\ncount = 1\n")
    r = _run(["--config", str(cfg), "decompose-verify", "--count", "2"])
    assert r.exit_code == 0, r.output
    assert len(_rows(r.output)) == 4


def test_out_of_range_is_a_config_error():
    r = _run(["decompose-verify", "--k", "9", "--depth", "5"])
    assert r.exit_code == 2


def test_threshold_failure_exits_3():
    r = _run(["norm-growth", "--k", "0-4", "--depth", "8", "--max-spread", "1.0"])
    assert r.exit_code == 3


def test_out_directory(tmp_path):
    r = _run(["--out", str(tmp_path), "weights-audit", "--weight", "power:0.3", "--depth", "6"])
    assert r.exit_code == 0, r.output
    data = json.loads((tmp_path / "weights-audit.json").read_text())
    assert data["command"] == "weights-audit" and data["ok"] and data["version"] == __version__
    csv = (tmp_path / "weights-audit.csv").read_text()
    assert data["config_hash"] in csv.splitlines()[0]


def test_rep_verify_small():
    r = _run(["rep-verify", "--n", "1", "--depth", "4"])
    assert r.exit_code == 0, r.output
    rows = _rows(r.output)
    assert rows[0]["band"] == "total"
    assert float(rows[0]["residual"]) < 1e-12


def test_biparam_weights_audit():
    r = _run(["weights-audit", "--biparam", "--count", "5", "--depth", "3"])
    assert r.exit_code == 0, r.output
    rows = _rows(r.output)
    assert len(rows) == 5 and all(row["slice_bound_holds"] == "true" for row in rows)


def test_commutator_growth_small():
    r = _run(["commutator-growth", "--complexities", "0-3", "--depth", "7"])
    assert r.exit_code == 0, r.output
    assert len(_rows(r.output)) == 4
