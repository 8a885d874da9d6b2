import csv
import json
import subprocess
import sys

import pytest

from fracmap import __version__
from fracmap.cli import main
from fracmap.config import DEFAULTS, resolve
from fracmap.energy import get_num_threads, set_num_threads
from fracmap.mesh import load_field


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


def test_grad_check_default(tmp_path):
    code, out = run(tmp_path, "grad-check", "--no-figures")
    assert code == 0
    rep = report(out)
    assert rep["results"]["max_rel_error"] < 1e-6
    assert rep["config"]["mesh.resolution"] == 32
    rows = list(csv.reader(open(out / "gradcheck.csv")))
    assert rows[0] == ["t", "seed", "rel_error"] and len(rows) == 41


def test_missing_config_exit_two(tmp_path, capsys):
    code, _ = run(tmp_path, "minimize", "--config", str(tmp_path / "nowhere.cfg"))
    assert code == 2
    assert "nowhere.cfg" in capsys.readouterr().err


@pytest.mark.parametrize(
    "override, key",
    [("optimizer.speed=3", "optimizer.speed"), ("s=1.5", "n, s, t"), ("mesh.resolution=4", "mesh.resolution"),
     ("experiment.delta=0.3", "experiment.delta")],
)
def test_invalid_values_exit_two_and_name_key(tmp_path, capsys, override, key):
    command = "glue-check" if "delta" in override else "minimize"
    code, _ = run(tmp_path, command, "--set", override, "--no-figures")
    assert code == 2
    assert key in capsys.readouterr().err


def test_minimize_with_infinite_tolerance(tmp_path):
    code, out = run(tmp_path, "minimize", "--set", "optimizer.tol_grad=inf", "--set", "mesh.resolution=32")
    assert code == 0
    res = report(out)["results"]
    assert res["iterations"] == 0 and res["converged"]
    assert (out / "descent.png").exists() and (out / "field.png").exists()


def test_minimize_stall_exit_three(tmp_path, capsys):
    code, out = run(tmp_path, "minimize", "--set", "mesh.resolution=32", "--set", "optimizer.c1=0.999",
                    "--set", "optimizer.max_backtracks=2", "--set", "optimizer.tol_grad=1e-12", "--no-figures")
    assert code == 3
    assert report(out)["results"]["status"] == "stalled"
    assert "stalled" in capsys.readouterr().err


def test_report_embeds_resolved_config(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("[experiment]\nell = 1, 2\n")
    code, out = run(tmp_path, "cutoff-decay", "--config", str(cfg_path), "--set", "mesh.resolution=512",
                    "--seed", "7", "--no-figures")
    assert code == 0
    rep = report(out)
    expected = resolve("cutoff-decay", cfg_path, ["mesh.resolution=512"])
    expected["experiment.seed"] = 7
    assert set(rep["config"]) == set(DEFAULTS)
    for k, v in expected.items():
        got = rep["config"][k]
        if v == float("inf"):
            assert got == "inf"
        else:
            assert got == (list(v) if isinstance(v, tuple) else v)
    assert [r["ell"] for r in rep["results"]["rows"]] == [1, 2]


def test_deterministic_runs_are_byte_identical(tmp_path):
    args = ["superdifficult", "--set", "experiment.grid=100", "--deterministic"]
    c1, o1 = run(tmp_path, *args, name="a")
    c2, o2 = run(tmp_path, *args, name="b")
    assert c1 == c2 == 0
    for name in ("report.json", "superdifficult.csv", "superdifficult.png"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()
    assert "wall_seconds" not in report(o1)["provenance"]


def test_non_deterministic_runs_record_timing(tmp_path):
    code, out = run(tmp_path, "superdifficult", "--set", "experiment.grid=50", "--no-figures")
    assert code == 0
    prov = report(out)["provenance"]
    assert prov["reduction"] == "unordered" and prov["wall_seconds"] >= 0
    assert prov["version"] == __version__


def test_threads_flag(tmp_path):
    old = get_num_threads()
    try:
        code, _ = run(tmp_path, "superdifficult", "--threads", "2", "--set", "experiment.grid=50", "--no-figures")
        assert code == 0 and get_num_threads() == 2
        code, _ = run(tmp_path, "superdifficult", "--threads", "0", "--no-figures", name="bad")
        assert code == 2
    finally:
        set_num_threads(old)


def test_field_file_chains_commands(tmp_path):
    code, out = run(tmp_path, "minimize", "--set", "mesh.resolution=48", "--set", "optimizer.max_iters=50",
                    "--no-figures")
    assert code == 0
    field = load_field(out / "field.json")
    assert field.mesh.size == 48
    code, out2 = run(tmp_path, "balance-check", "--set", f"experiment.field={out / 'field.json'}",
                     "--no-figures", name="bal")
    assert code == 0
    assert len(report(out2)["results"]["balance"]) == 2


def test_bad_field_file_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _ = run(tmp_path, "balance-check", "--set", f"experiment.field={bad}")
    assert code == 2
    assert "experiment.field" in capsys.readouterr().err


def test_continue_and_bubble_small(tmp_path):
    common = ["--set", "mesh.resolution=48", "--set", "schedule=0.7,0.6", "--no-figures"]
    code, out = run(tmp_path, "continue", *common, name="c")
    assert code == 0
    stages = report(out)["results"]["stages"]
    assert [s["degree"] for s in stages] == [1, 1]
    code, out = run(tmp_path, "bubble", *common, "--set", "experiment.eps=1e6", name="b")
    assert code == 0
    rows = list(csv.reader(open(out / "balance.csv")))
    assert len(rows) == 1 + 2 * 2


def test_rescale_and_glue_checks(tmp_path):
    code, out = run(tmp_path, "rescale-check", "--set", "mesh.resolution=256", "--set", "experiment.samples=500",
                    name="r")
    assert code == 0
    res = report(out)["results"]
    assert res["kernel_max_violation"] <= 0
    assert all(r["rel_deviation"] < 0.02 for r in res["invariance"])
    assert (out / "bound.png").exists()
    code, out = run(tmp_path, "glue-check", "--set", "mesh.resolution=512", "--no-figures", name="g")
    assert code == 0
    assert report(out)["results"]["boundary_exact"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracmap.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fracmap.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
