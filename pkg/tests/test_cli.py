import json
from pathlib import Path

import pytest

from greenlab.cli import main
from greenlab.experiments import strip_metadata

MAPS = Path(__file__).resolve().parents[1] / "maps"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_degrees_cremona(tmp_path, capsys):
    code, out, _ = run(capsys, "degrees", "--map", MAPS / "cremona.json", "--N", 4, "--out", tmp_path)
    assert code == 0
    assert "degrees: [2, 1, 2, 1]" in out
    assert "1-regular: false(n=2)" in out
    assert len(list(tmp_path.glob("degrees-*.csv"))) == 1


def test_degrees_squaring(tmp_path, capsys):
    code, out, _ = run(capsys, "degrees", "--map", MAPS / "squaring.json", "--N", 5, "--out", tmp_path)
    assert code == 0
    assert "degrees: [2, 4, 8, 16, 32]" in out
    assert "lambda1: 2\n" in out and "d_top: 2" in out


def test_degrees_monomial(tmp_path, capsys):
    code, out, _ = run(capsys, "degrees", "--map", MAPS / "monomial21.json", "--N", 5, "--out", tmp_path)
    assert code == 0
    summary = json.loads(next(tmp_path.glob("degrees-*.json")).read_text())
    assert abs(summary["lambda1"] - 2.618033988749895) < 1e-12
    assert summary["d_top"] == 1 and summary["lambda1_vs_dtop"] == "greater"


def test_degrees_bad_map(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "degrees", "--map", bad, "--out", tmp_path)[0] == 2
    assert run(capsys, "degrees", "--map", tmp_path / "missing.json", "--out", tmp_path)[0] == 2


def test_degrees_resource_cap(tmp_path, capsys):
    c = cfg(tmp_path, {"monomial_cap": 3})
    code, _, err = run(capsys, "degrees", "--map", MAPS / "basilica.json", "--N", 8, "--config", c,
                       "--out", tmp_path)
    assert code == 3
    assert "resource" in err


def test_usage_errors(capsys, tmp_path):
    assert run(capsys)[0] == 2
    assert run(capsys, "degrees", "--map", MAPS / "squaring.json", "--seed", -1)[0] == 2
    assert run(capsys, "degrees", "--map", MAPS / "squaring.json", "--threads", 0)[0] == 2


def test_green_squaring(tmp_path, capsys):
    code, out, _ = run(capsys, "green", "--map", MAPS / "squaring.json", "--out", tmp_path)
    assert code == 0
    assert "converged: True" in out
    res = float(out.split("invariance residual: ")[1].split()[0])
    assert res < 1e-6
    assert len(list(tmp_path.glob("green-*.trace.json"))) == 1


def test_green_p2(tmp_path, capsys):
    code, out, _ = run(capsys, "green", "--map", MAPS / "p2squaring.json", "--out", tmp_path)
    assert code == 0
    n = int(out.split("after ")[1].split()[0])
    assert n <= 40


def test_green_lambda_one(tmp_path, capsys):
    assert run(capsys, "green", "--map", MAPS / "lambda-one.json", "--out", tmp_path)[0] == 2


def test_green_not_converged(tmp_path, capsys):
    c = cfg(tmp_path, {"n_max": 3, "resolution": 64})
    assert run(capsys, "green", "--map", MAPS / "squaring.json", "--config", c, "--out", tmp_path)[0] == 4


def test_green_unknown_config_key(tmp_path, capsys):
    c = cfg(tmp_path, {"bogus": 1})
    assert run(capsys, "green", "--map", MAPS / "squaring.json", "--config", c, "--out", tmp_path)[0] == 2


def test_experiment_volume_contraction(tmp_path, capsys):
    code, out, _ = run(capsys, "experiment", "volume_contraction", "--map", MAPS / "squaring.json",
                       "--out", tmp_path)
    assert code == 0
    assert "verdict: consistent" in out
    assert len(list(tmp_path.glob("volume_contraction-*.json"))) == 1
    assert len(list(tmp_path.glob("volume_contraction-*.csv"))) == 1


def test_experiment_point_current(tmp_path, capsys):
    c = cfg(tmp_path, {"current": {"type": "log_point", "point": [1, 0]}, "n_max": 12, "resolution": 128})
    code, out, _ = run(capsys, "experiment", "equidistribute_current", "--map", MAPS / "squaring.json",
                       "--config", c, "--out", tmp_path)
    assert code == 5
    assert "hypothesis violated: Lelong" in out


def test_experiment_bounded_skoda(tmp_path, capsys):
    c = cfg(tmp_path, {"phi": {"type": "bump", "center": [1, 1]}})
    code, out, _ = run(capsys, "experiment", "skoda_tail", "--config", c, "--out", tmp_path)
    assert code == 6


def test_experiment_errors(tmp_path, capsys):
    assert run(capsys, "experiment", "nope", "--out", tmp_path)[0] == 2
    c = cfg(tmp_path, {"n_max": -2})
    assert run(capsys, "experiment", "volume_contraction", "--map", MAPS / "squaring.json",
               "--config", c, "--out", tmp_path)[0] == 2
    c = cfg(tmp_path, [1, 2], "list.json")
    assert run(capsys, "experiment", "skoda_tail", "--config", c, "--out", tmp_path)[0] == 2


def test_experiment_report_deterministic_across_threads(tmp_path, capsys):
    c = cfg(tmp_path, {"m": 1, "n_max": 6, "trials": 4, "resolution": 64})
    texts = []
    for t in (1, 4, 8):
        out = tmp_path / f"t{t}"
        code, _, _ = run(capsys, "experiment", "random_section_zeros", "--map", MAPS / "squaring.json",
                         "--config", c, "--seed", 99, "--threads", t, "--out", out)
        assert code == 0
        texts.append(strip_metadata(next(out.glob("*.json")).read_text()))
    assert texts[0] == texts[1] == texts[2]


def test_config_echoed_verbatim(tmp_path, capsys):
    data = {"phi": {"type": "log_point", "point": [1, 0], "weight": 2}, "t_grid": [1, 2, 3, 4]}
    c = cfg(tmp_path, data)
    run(capsys, "experiment", "skoda_tail", "--config", c, "--out", tmp_path)
    rep = json.loads(next(tmp_path.glob("skoda_tail-*.json")).read_text())
    assert rep["config"]["input"] == data
    assert "timestamp" in rep["metadata"]
