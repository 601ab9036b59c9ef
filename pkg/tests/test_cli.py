import json

import pytest

from dsk.cli import run
from dsk.grid import GridSet
from dsk.measures import GridMeasure


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_energy_singleton(tmp_path, capsys):
    f = write(tmp_path / "s.json", GridSet(1, 3, [[2]]).to_dict())
    assert run(["energy", "--input", f]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["quadruples"] == "1"
    assert out["manifest"]["config"]["input"] == f


def test_missing_field_exit_1(tmp_path, capsys):
    f = write(tmp_path / "bad.json", {"d": 1, "m": 3})
    assert run(["energy", "--input", f]) == 1
    assert "points" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{"d": 1,\n  "m": }')
    assert run(["energy", "--input", str(f)]) == 1
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_missing_input_exit_1(tmp_path):
    assert run(["energy", "--input", str(tmp_path / "nope.json")]) == 1


def test_pipeline_verify(tmp_path):
    f, u, r = (str(tmp_path / n) for n in ("f.json", "u.json", "r.json"))
    assert run(["generate", "--family", "flat", "--dim", "2", "-m", "6", "-k", "1", "--output", f]) == 0
    assert run(["uniformize", "--input", f, "-L", "3", "--output", u]) == 0
    assert run(["analyze", "--input", u, "-L", "3", "--net-res", "8", "--output", r]) == 0
    assert run(["verify", "--theorem", "2", "--input", u, "--report", r, "--original", f, "-L", "3"]) == 0
    manifest = json.loads((tmp_path / "u.json.manifest.json").read_text())
    assert manifest["manifest"]["config"]["L"] == 3
    assert manifest["result"]["guarantee"]


def test_verify_failure_exit_2(tmp_path, capsys):
    f, u, r = (str(tmp_path / n) for n in ("f.json", "u.json", "r.json"))
    run(["generate", "--family", "flat", "--dim", "2", "-m", "6", "-k", "1", "--output", f])
    run(["uniformize", "--input", f, "-L", "3", "--output", u])
    run(["analyze", "--input", u, "-L", "3", "--net-res", "8", "--output", r])
    rep = json.loads(open(r).read())
    for sc in rep["scales"]:
        sc["k"] = 2
    write(tmp_path / "r.json", rep)
    capsys.readouterr()
    assert run(["verify", "--theorem", "2", "--input", u, "--report", r, "-L", "3"]) == 2
    assert json.loads(capsys.readouterr().err)["clause"] == "iii"


def test_verify_theorem1(tmp_path):
    line = GridSet(2, 4, [[i, 0] for i in range(16)])
    mu = GridMeasure.uniform(line)
    a = write(tmp_path / "mu.json", mu.to_dict())
    wit = {
        "ks": [1, 1],
        "W": [{"k": 1, "frame": [[0.0, 1.0]], "offset": [0.0, 0.0]}] * 2,
        "V": [{"k": 1, "frame": [[1.0, 0.0]], "offset": [0.0, 0.0]}] * 2,
    }
    w = write(tmp_path / "w.json", wit)
    # clause C fails for a line through the origin
    assert run(["verify", "--theorem", "1", "--input", a, "--input2", a, "--witness", w, "-L", "2"]) == 2
    del wit["ks"]
    w = write(tmp_path / "w.json", wit)
    assert run(["verify", "--theorem", "1", "--input", a, "--input2", a, "--witness", w, "-L", "2"]) == 1


def test_pr_verify(tmp_path, capsys):
    f = write(tmp_path / "a.json", GridSet(1, 5, [[i] for i in range(7)]).to_dict())
    assert run(["verify", "--theorem", "pr", "--input", f, "-k", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["sizes"]["4"] == 25


@pytest.mark.parametrize("mode", ["plain", "valuefn", "subspace", "collapse"])
def test_uniformize_modes(tmp_path, mode):
    f = str(tmp_path / "c.json")
    run(["generate", "--family", "cantor_dyadic", "-m", "6", "--output", f])
    assert run(["uniformize", "--input", f, "-L", "2", "--mode", mode, "--scales", "1", "--output", str(tmp_path / "o.json")]) == 0


def test_uniformize_center(tmp_path):
    f = write(tmp_path / "a.json", GridSet(1, 4, [[i] for i in range(6, 11)]).to_dict())
    assert run(["uniformize", "--input", f, "-L", "2", "--mode", "center", "--output", str(tmp_path / "o.json")]) == 0
    # L = 1 cannot centre at consecutive scales
    assert run(["uniformize", "--input", f, "-L", "1", "--mode", "center", "--output", str(tmp_path / "p.json")]) == 2


def test_fup_csv(tmp_path):
    out = tmp_path / "fup.csv"
    assert run(["fup", "--family", "cantor_dyadic", "--h-exp", "4", "6", "--sigma", "0.2", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("h,d,size_x")
    assert len(lines) == 3
    assert (tmp_path / "fup.csv.manifest.json").exists()


def test_doubling_and_sumset(tmp_path, capsys):
    f = write(tmp_path / "a.json", GridSet(1, 4, [[0], [1], [2], [3]]).to_dict())
    assert run(["doubling", "--input", f]) == 0
    assert json.loads(capsys.readouterr().out)["K"] == "7/4"
    o = str(tmp_path / "s.json")
    assert run(["sumset", "--input", f, "-k", "3", "--output", o]) == 0
    assert len(GridSet.from_json(open(o).read())) == 10


def test_energy_experiment(tmp_path, capsys):
    f = write(tmp_path / "a.json", GridSet(1, 4, [[i] for i in range(16)]).to_dict())
    assert run(["energy-experiment", "--input", f, "-L", "2", "--sigma", "0.5", "--net-res", "8"]) == 0
    assert json.loads(capsys.readouterr().out)["semantics"] == "empirical"


def test_corpus_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert run(["generate", "--corpus", "--seed", "5", "--output", str(tmp_path / name)]) == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in a:
        da = (tmp_path / "a" / n).read_bytes()
        db = (tmp_path / "b" / n).read_bytes()
        if n == "manifest.json":
            da = da.replace(b'"' + str(tmp_path / "a").encode() + b'"', b"")
            db = db.replace(b'"' + str(tmp_path / "b").encode() + b'"', b"")
        assert da == db


def test_backend_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("DSK_DEFAULT_BACKEND", "float")
    f = write(tmp_path / "s.json", GridSet(1, 3, [[2]]).to_dict())
    assert run(["energy", "--input", f]) == 0
    assert json.loads(capsys.readouterr().out)["manifest"]["config"]["backend"] == "float"


def test_missing_required_param(tmp_path):
    f = write(tmp_path / "s.json", GridSet(1, 4, [[2]]).to_dict())
    assert run(["analyze", "--input", f]) == 1
