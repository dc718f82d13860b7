"""Command-line interface: exit codes, artifacts and determinism."""
import csv
import io
import json
import re

import numpy as np
import pytest

from hele_shaw.cli import CSV_HELP, OUT_ENV, main
from hele_shaw.gallery import HUNTINGFORD_T0


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _emit(capsys, name, t):
    code, out, _ = _run(capsys, "gallery", "emit", name, "--t", repr(t))
    assert code == 0
    return json.loads(out)


def _config(tmp_path, name="cfg.json", **body):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


# -- gallery -------------------------------------------------------------------------

def test_gallery_emit_huntingford(capsys):
    spec = _emit(capsys, "huntingford", 0)
    np.testing.assert_allclose(spec["taylor"], [[1, 0], [0.8, 0], [0.2, 0]], atol=1e-14)


def test_gallery_emit_offcenter(capsys):
    spec = _emit(capsys, "offcenter", 2)
    from hele_shaw import eval_f, map_from_spec
    rd = map_from_spec(spec)
    z = np.array([0.3, -0.4j])
    np.testing.assert_allclose(eval_f(rd, z), 3 * z / (2 - z), atol=1e-12)


def test_gallery_unknown(capsys):
    code, _, err = _run(capsys, "gallery", "emit", "nope", "--t", "0")
    assert code == 1 and "nope" in err


def test_gallery_list(capsys):
    code, out, _ = _run(capsys, "gallery", "list")
    assert code == 0
    assert [ln.split("\t")[0] for ln in out.splitlines()] == ["cardioid", "disk", "huntingford", "offcenter"]


# -- simulate ------------------------------------------------------------------------------

def test_simulate_disk(tmp_path, capsys):
    cfg = _config(tmp_path, map={"zeros": [], "poles": [], "b": [1.0, 0.0]},
                  q_mode={"constant": 1.0}, t_span=[0, 1], sample_dt=0.1)
    code, out, _ = _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "o" / "trajectory.csv").read_text())))
    M00 = float(rows[0]["M0_re"])
    for r in rows:
        assert abs(float(r["M0_re"]) - M00 - 2 * float(r["Q"])) <= 1e-8
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "completed"


def test_simulate_huntingford_stops_at_cusp(tmp_path, capsys):
    t0 = HUNTINGFORD_T0 + 1e-3
    spec = _emit(capsys, "huntingford", t0)
    cfg = _config(tmp_path, map=spec, t_span=[t0, 1.0], sample_dt=0.01,
                  collision_continuation=True, cusp_continuation=False)
    code, _, _ = _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))
    assert code == 2
    events = [json.loads(ln) for ln in (tmp_path / "o" / "events.jsonl").read_text().splitlines()]
    assert [e["kind"] for e in events] == ["Collision", "Cusp"]


def test_simulate_huntingford_stops_at_collision(tmp_path, capsys):
    t0 = HUNTINGFORD_T0 + 1e-3
    spec = _emit(capsys, "huntingford", t0)
    cfg = _config(tmp_path, map=spec, t_span=[t0, 1.0], sample_dt=0.01)
    code, _, _ = _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))
    assert code == 2


def test_simulate_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"map": {"zeros": [}')
    code, _, err = _run(capsys, "simulate", str(path), "--out", str(tmp_path / "o"))
    assert code == 1 and "line 1" in err


def test_simulate_bad_field(tmp_path, capsys):
    cfg = _config(tmp_path, map={"zeros": [], "poles": [], "b": [1.0, 0.0]}, t_span=[1, 0])
    code, _, err = _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))
    assert code == 1 and "t_span" in err


def test_simulate_uses_env_out_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env_out"))
    cfg = _config(tmp_path, map={"zeros": [], "poles": [], "b": [1.0, 0.0]}, t_span=[0, 0.2],
                  sample_dt=0.1)
    assert _run(capsys, "simulate", cfg)[0] == 0
    assert (tmp_path / "env_out" / "trajectory.csv").exists()


def test_simulate_is_deterministic(tmp_path, capsys):
    spec = _emit(capsys, "cardioid", 0)
    cfg = _config(tmp_path, map=spec, t_span=[0, 0.5], sample_dt=0.05)
    for d in ("a", "b"):
        assert _run(capsys, "simulate", cfg, "--out", str(tmp_path / d))[0] == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_simulate_both_engines(tmp_path, capsys):
    spec = _emit(capsys, "cardioid", 0)
    cfg = _config(tmp_path, map=spec, t_span=[0, 0.3], sample_dt=0.05, engine="both")
    assert _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))[0] == 0
    assert json.loads((tmp_path / "o" / "cross.json").read_text())["passed"]
    assert (tmp_path / "o" / "oracle.csv").exists()


def test_oracle_run(tmp_path, capsys):
    spec = _emit(capsys, "cardioid", 0)
    cfg = _config(tmp_path, map=spec, t_span=[0, 0.2], sample_dt=0.1)
    assert _run(capsys, "oracle", "run", cfg, "--out", str(tmp_path / "o"))[0] == 0
    assert (tmp_path / "o" / "oracle.csv").read_text().startswith("t,Q,")


# -- verify ----------------------------------------------------------------------------------

def test_verify_identities(capsys, tmp_path):
    code, out, _ = _run(capsys, "verify", "identities", "--count", "100",
                        "--report", str(tmp_path / "r.json"))
    assert code == 0
    body = json.loads(out)
    assert body["passed"] and body["checks"]["reflection"]["max_residual"] <= 1e-10
    assert json.loads((tmp_path / "r.json").read_text()) == body


@pytest.fixture
def huntingford_csv(tmp_path, capsys):
    spec = _emit(capsys, "huntingford", 0.5)
    cfg = _config(tmp_path, map=spec, t_span=[0.5, 1.0], sample_dt=0.01)
    assert _run(capsys, "simulate", cfg, "--out", str(tmp_path / "h"))[0] == 0
    return tmp_path / "h" / "trajectory.csv"


def test_verify_moments(huntingford_csv, capsys):
    code, out, _ = _run(capsys, "verify", "moments", str(huntingford_csv))
    assert code == 0 and json.loads(out)["passed"]


def test_verify_moments_corrupted(huntingford_csv, tmp_path, capsys):
    rows = list(csv.reader(io.StringIO(huntingford_csv.read_text())))
    col = rows[0].index("M1_re")
    rows[len(rows) // 2][col] = repr(float(rows[len(rows) // 2][col]) + 1e-4)
    bad = tmp_path / "bad.csv"
    with bad.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    code, out, _ = _run(capsys, "verify", "moments", str(bad))
    assert code != 0
    assert not json.loads(out)["checks"]["moment_conservation"]["passed"]


def test_verify_asymptotics(huntingford_csv, capsys):
    code, out, _ = _run(capsys, "verify", "asymptotics", str(huntingford_csv))
    body = json.loads(out)
    assert body["target"] == "asymptotics" and "convergence" in body
    assert code == (0 if body["passed"] else 1)


def test_verify_cross(tmp_path, capsys):
    spec = _emit(capsys, "cardioid", 0)
    cfg = _config(tmp_path, map=spec, t_span=[0, 0.5], sample_dt=0.05)
    assert _run(capsys, "simulate", cfg, "--out", str(tmp_path / "r"))[0] == 0
    assert _run(capsys, "oracle", "run", cfg, "--out", str(tmp_path / "s"))[0] == 0
    code, out, _ = _run(capsys, "verify", "cross", str(tmp_path / "r" / "trajectory.csv"),
                        str(tmp_path / "s" / "oracle.csv"), "--tol", "1e-6")
    assert code == 0
    assert json.loads(out)["max_coeff_diff"] <= 1e-6


def test_verify_missing_inputs(capsys):
    assert _run(capsys, "verify", "cross")[0] == 1


# -- help ----------------------------------------------------------------------------------------

def test_help_lists_every_csv_column(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["simulate", "--help"])
    text = capsys.readouterr().out
    assert CSV_HELP.splitlines()[0] in text
    spec = _emit(capsys, "offcenter", 3.0)
    cfg = _config(tmp_path, map=spec, t_span=[0, 0.1], sample_dt=0.05)
    _run(capsys, "simulate", cfg, "--out", str(tmp_path / "o"))
    header = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert any(c.startswith("ze") for c in header)
    for col in header:
        if col in ("a1", "N0"):
            assert col in text
            continue
        patterns = [re.sub(r"\d+", k, col) for k in ("{k}", "{j}")]
        assert any(re.search(r"(^|[ ,])" + re.escape(p) + r"($|[ ,])", text, re.M) for p in patterns), col
