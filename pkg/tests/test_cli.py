import csv
import json
import subprocess
import sys

import pytest

from hkcollapse import cli
from hkcollapse.io import MANIFEST_NAME, OUTCOME_COLUMNS, TRACE_COLUMNS, dumps, load_config, read_json


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_epr_small(capsys, tmp_path):
    code, out, err = run(capsys, "epr", "--trials", "200", "--seed", "42", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    for key in cli.SUMMARY_KEYS:
        assert key in summary
    assert summary["anticorrelation_rate"] == 1.0
    assert summary["frame_invariance"] == "pass"
    assert "invariant: PASS" in err
    assert (tmp_path / "summary.json").read_text() == out
    manifest = read_json(tmp_path / MANIFEST_NAME)
    assert manifest["seed"] == 42 and manifest["scenario"] == "epr_singlet"
    assert "summary.json" in manifest["outputs"]


def test_manifest_reproduces(capsys, tmp_path):
    first = tmp_path / "a"
    _, out1, _ = run(capsys, "epr", "--trials", "60", "--seed", "5", "--out", str(first))
    code, out2, _ = run(capsys, "epr", "--config", str(first / MANIFEST_NAME))
    assert code == 0
    assert out1 == out2
    cfg, _ = load_config(first / MANIFEST_NAME)
    assert cfg.trials == 60


def test_summaries_byte_identical(capsys):
    _, a, _ = run(capsys, "epr", "--trials", "50", "--seed", "3")
    _, b, _ = run(capsys, "epr", "--trials", "50", "--seed", "3")
    assert a == b
    _, c, _ = run(capsys, "epr", "--trials", "50", "--seed", "4")
    assert a != c


def test_boost_passes(capsys):
    code, out, err = run(capsys, "epr", "--trials", "60", "--boost", "0.6,0,0")
    assert code == 0
    summary = json.loads(out)
    assert summary["frame_invariance"] == "pass"
    assert summary["boosted_run"]["pass"]
    assert "invariant: PASS" in err


@pytest.mark.parametrize("bad", ["1.2,0,0", "0.8,0.8,0", "x"])
def test_bad_boost_rejected(capsys, bad):
    with pytest.raises(SystemExit) as exc:
        cli.main(["epr", "--trials", "5", "--boost", bad])
    assert exc.value.code != 0


def test_bad_config_exit_code(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "single_capture"}))
    code, _, err = run(capsys, "epr", "--config", str(cfg))
    assert code == 2 and "error" in err
    cfg.write_text(json.dumps({"name": "epr_singlet", "bogus": 1}))
    assert run(capsys, "epr", "--config", str(cfg))[0] == 2


def test_capture_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "capture", "--trials", "100", "--format", "csv", "--out", str(tmp_path))
    assert code == 0
    with (tmp_path / "outcomes.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == OUTCOME_COLUMNS and len(rows) == 101
    with (tmp_path / "trials.csv").open() as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == TRACE_COLUMNS
    assert json.loads(out)["capture_fraction"] is not None


def test_conservation(capsys, tmp_path):
    code, out, _ = run(capsys, "conservation", "--format", "csv", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["conservation_residual"] <= 1e-10
    assert (tmp_path / "trajectory.csv").exists()


def test_landscape_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "landscape", "--svg", "--report", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["influence_limited"] is True
    for name in ("landscape.json", "landscape.svg", "landscape.png"):
        assert (tmp_path / name).stat().st_size > 0
    first = (tmp_path / "landscape.svg").read_bytes()
    run(capsys, "landscape", "--svg", "--out", str(tmp_path / "again"))
    assert (tmp_path / "again" / "landscape.svg").read_bytes() == first


def test_svg_needs_out(capsys):
    assert run(capsys, "landscape", "--svg")[0] == 2


def test_verify_quick(capsys):
    code, out, _ = run(capsys, "verify", "--quick")
    assert code == 0
    assert "FAIL" not in out


def test_verify_detects_injected_fault(capsys):
    code, out, _ = run(capsys, "verify", "--quick", "--inject-nonhermitian")
    assert code != 0
    lines = [ln for ln in out.splitlines() if "conservation" in ln]
    assert lines and all("FAIL" in ln for ln in lines)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hkcollapse", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()


def test_dumps_canonical():
    assert dumps({"b": 1, "a": float("nan")}) == '{\n  "a": null,\n  "b": 1\n}\n'
