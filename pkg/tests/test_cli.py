import json
import subprocess
import sys

import numpy as np
import pytest

from entf import io as tio
from entf.cli import main
from entf.evaluation import evaluate_unmixing
from entf.synth import snr_db


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def last_error(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def scene(tmp_path, capsys):
    d = tmp_path / "scene"
    code, _, _ = run(capsys, "gen", "--bands", 16, "--width", 12, "--height", 12, "--endmembers", 3, "--out", d)
    assert code == 0
    return d


def test_gen_files_and_snr(tmp_path, capsys):
    d = tmp_path / "g"
    code, _, _ = run(capsys, "gen", "--bands", 16, "--width", 12, "--height", 12, "--endmembers", 3,
                     "--snr", 40, "--seed", 2, "--out", d)
    assert code == 0
    assert len(list(d.glob("*.etnsr"))) == 4
    man = json.loads((d / "manifest.json").read_text())
    assert abs(man["realized_snr_db"] - 40) < 0.1
    t = tio.load_scene_tensors(d)
    assert snr_db(t["clean"], t["noisy"]) == pytest.approx(man["realized_snr_db"], abs=1e-9)
    assert json.loads((d / "config.json").read_text())["scene"]["snr"] == 40


def test_gen_is_deterministic(tmp_path, capsys):
    args = ["gen", "--bands", 8, "--width", 5, "--height", 6, "--endmembers", 3, "--snr", 30, "--seed", 9]
    run(capsys, *args, "--out", tmp_path / "a")
    run(capsys, *args, "--out", tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_gen_rejects_bad_dims(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--bands", 0, "--width", 3, "--height", 3, "--endmembers", 2,
                       "--out", tmp_path / "x")
    assert code != 0 and last_error(err)["error"] == "invalid"


def test_factorize_entf_and_tet(tmp_path, capsys, scene):
    cube = scene / "clean.etnsr"
    code, _, _ = run(capsys, "factorize", "--in", cube, "--endmembers", 3, "--out", tmp_path / "f")
    assert code == 0
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["converged"] is True and man["relative_error"] <= 1e-3
    a = tio.read_tensor(cube)
    x = tio.read_tensor(tmp_path / "f" / "x.etnsr")
    y = tio.read_tensor(tmp_path / "f" / "y.etnsr")
    assert np.linalg.norm(a - np.tensordot(x, y, 1)) / np.linalg.norm(a) <= 1e-3
    header = (tmp_path / "f" / "trace.csv").read_text().splitlines()[0]
    assert header == "iter,objective,rel_change_x,rel_change_y"

    code, _, _ = run(capsys, "factorize", "--in", cube, "--endmembers", 3, "--method", "entf-tet",
                     "--out", tmp_path / "t")
    assert code == 0
    tman = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert tman["iterations"] <= man["iterations"]
    assert (tmp_path / "t" / "cycles.csv").exists()


def test_factorize_config_and_override(tmp_path, capsys, scene):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"method": "entf-rre", "solver": {"r": 3, "max_iter": 50, "lambda_x": 0.1},
                               "extrapolation": {"order": 4}}))
    code, _, err = run(capsys, "factorize", "--in", scene / "clean.etnsr", "--config", cfg,
                       "--max-iter", 30, "--out", tmp_path / "o")
    assert code == 0, err
    resolved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert resolved["method"] == "entf-rre"
    assert resolved["solver"]["max_iter"] == 30
    assert resolved["solver"]["lambda_x"] == 0.1
    assert resolved["extrapolation"]["order"] == 4
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["iterations"] <= 30

    # the persisted config replays the run
    code, _, _ = run(capsys, "factorize", "--in", scene / "clean.etnsr", "--config", tmp_path / "o" / "config.json",
                     "--out", tmp_path / "o2")
    assert code == 0
    assert (tmp_path / "o" / "x.etnsr").read_bytes() == (tmp_path / "o2" / "x.etnsr").read_bytes()


def test_factorize_errors(tmp_path, capsys, scene):
    code, _, err = run(capsys, "factorize", "--in", scene / "clean.etnsr", "--method", "nmf", "--out", tmp_path)
    assert code == 2 and last_error(err)["error"] == "usage"
    code, _, err = run(capsys, "factorize", "--in", scene / "clean.etnsr", "--out", tmp_path / "o")
    assert code == 1 and last_error(err)["error"] == "config"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"solver": {"r": 3, "speed": 2}}))
    code, _, err = run(capsys, "factorize", "--in", scene / "clean.etnsr", "--config", bad, "--out", tmp_path / "o")
    assert code == 1 and "speed" in last_error(err)["message"]
    junk = tmp_path / "junk.etnsr"
    junk.write_bytes(b"hello world")
    code, _, err = run(capsys, "factorize", "--in", junk, "--endmembers", 2, "--out", tmp_path / "o")
    assert code == 1 and last_error(err)["error"] == "BadMagicError"
    neg = tmp_path / "neg.etnsr"
    tio.write_tensor(neg, -np.ones((3, 2, 2)))
    code, _, err = run(capsys, "factorize", "--in", neg, "--endmembers", 2, "--out", tmp_path / "o")
    assert code == 1 and "nonnegative" in last_error(err)["message"]


def test_evaluate_truth_against_itself(tmp_path, capsys, scene):
    est = tmp_path / "est"
    est.mkdir()
    t = tio.load_scene_tensors(scene)
    perm = [2, 0, 1]
    tio.write_tensor(est / "x.etnsr", t["endmembers"][:, perm])
    tio.write_tensor(est / "y.etnsr", t["abundances"][perm])
    out = tmp_path / "rep" / "report.csv"
    code, _, err = run(capsys, "evaluate", "--truth", scene, "--est", est, "--out", out)
    assert code == 0, err
    rep = json.loads(out.with_suffix(".json").read_text())
    assert rep["mse"] == pytest.approx(0.0, abs=1e-15)
    assert rep["sam_mean"] == pytest.approx(0.0, abs=1e-7)
    # report maps each true column to its estimate, the inverse shuffle
    assert rep["permutation"] == list(np.argsort(perm))


def test_evaluate_matches_in_process(tmp_path, capsys, scene):
    run(capsys, "factorize", "--in", scene / "clean.etnsr", "--endmembers", 3, "--max-iter", 100,
        "--out", tmp_path / "f")
    out = tmp_path / "r.csv"
    assert run(capsys, "evaluate", "--truth", scene, "--est", tmp_path / "f", "--out", out)[0] == 0
    t = tio.load_scene_tensors(scene)
    x = tio.read_tensor(tmp_path / "f" / "x.etnsr")
    y = tio.read_tensor(tmp_path / "f" / "y.etnsr")
    want = evaluate_unmixing(t["clean"], t["endmembers"], t["abundances"], x, y)
    assert out.read_text() == want.to_csv()


def test_evaluate_shape_mismatch_names_files(tmp_path, capsys, scene):
    est = tmp_path / "est"
    est.mkdir()
    tio.write_tensor(est / "x.etnsr", np.ones((16, 2)))
    tio.write_tensor(est / "y.etnsr", np.ones((2, 12, 12)))
    code, _, err = run(capsys, "evaluate", "--truth", scene, "--est", est, "--out", tmp_path / "r.csv")
    e = last_error(err)
    assert code == 1 and e["error"] == "shape"
    assert "x.etnsr" in e["message"] and "endmembers.etnsr" in e["message"]


def test_export_maps(tmp_path, capsys, scene):
    code, _, _ = run(capsys, "export-maps", "--abundances", scene / "abundances.etnsr", "--out", tmp_path / "maps")
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "maps").glob("*.pgm")) == ["map_0.pgm", "map_1.pgm", "map_2.pgm"]
    assert (tmp_path / "maps" / "config.json").exists()


def test_trace_compare(tmp_path, capsys):
    tio.write_trace_csv(tmp_path / "a.csv", [(1, 3.0, 0.5, 0.5), (2, 2.0, 0.1, 0.1)])
    tio.write_trace_csv(tmp_path / "b.csv", [(1, 2.0, 0.01, 0.02)])
    code, out, _ = run(capsys, "trace-compare", "--traces", tmp_path / "a.csv", tmp_path / "b.csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("trace,iterations")
    assert lines[2].split(",")[1:3] == ["1", "2.0"]
    assert lines[2].endswith(",0.5")


def test_missing_subcommand(capsys):
    code, _, err = run(capsys)
    assert code == 2 and last_error(err)["error"] == "usage"


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "entf", "factorize", "--in", str(tmp_path / "none.etnsr"), "--endmembers", "2",
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip())["error"] == "io"
