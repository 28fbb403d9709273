import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conelab.cli import EXIT_CONFIG, EXIT_OK, PHASE_NAMES, build_parser, main

GOLDEN = Path(__file__).parent / "golden"
SUBCOMMANDS = ("stat-dim", "width", "intersect", "cp", "logistic-exists", "phase", "defaults", "selftest")


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def data_lines(out):
    return [line for line in out.splitlines() if not line.startswith("#")]


# ------------------------------------------------------------------ help text


def _help_texts():
    p = build_parser()
    texts = {"conelab": p.format_help()}
    sub = next(a for a in p._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, sp in sub.choices.items():
        texts[name] = sp.format_help()
    return texts, sub


def test_help_matches_golden():
    texts, _ = _help_texts()
    assert set(texts) == {"conelab", *SUBCOMMANDS}
    for name, text in texts.items():
        path = GOLDEN / f"help_{name}.txt"
        if os.environ.get("CONELAB_UPDATE_GOLDEN"):
            path.write_text(text)
        assert path.read_text() == text, f"help for {name} changed; rerun with CONELAB_UPDATE_GOLDEN=1"


def test_help_lists_every_flag():
    texts, sub = _help_texts()
    for name, sp in sub.choices.items():
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in texts[name], (name, flag)


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["stat-dim", "--help"]) == 0
    capsys.readouterr()


# ------------------------------------------------------------------ exit codes


def test_stat_dim_orthant(capsys):
    code, out, _ = run(["stat-dim", "--cone", "orthant:40", "--trials", "1000", "--seed", "1"], capsys)
    assert code == EXIT_OK
    lines = data_lines(out)
    assert lines[0] == "cone,delta_hat,se,ci_lo,ci_hi,n"
    fields = lines[1].split(",")
    mean, se = float(fields[1]), float(fields[2])
    assert abs(mean - 20) <= 4 * se
    assert out.startswith("# conelab v") and "seed=1" in out.splitlines()[0]
    assert '"closed_form":20.0' in out


def test_stat_dim_polar_route(capsys):
    code, out, _ = run(["stat-dim", "--cone", "soc:10", "--trials", "2000", "--route", "polar"], capsys)
    assert code == EXIT_OK
    mean, se = map(float, data_lines(out)[1].split(",")[1:3])
    assert abs(mean - 5) <= 4 * se


def test_invalid_cone_names_field(capsys):
    code, _, err = run(["stat-dim", "--cone", "orthant:0"], capsys)
    assert code == EXIT_CONFIG
    assert "--cone" in err and "dimension" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["phase", "escape", "--config", "missing.json"],
        ["stat-dim", "--cone", "orthant:3", "--bogus"],
        ["stat-dim"],
        ["stat-dim", "--cone", "orthant:3", "--trials", "1"],
        ["stat-dim", "--cone", "orthant:3", "--seed", "-4"],
        ["width", "--cone", "trivial:3", "--cap", "sphere"],
        ["intersect", "--A", "orthant:3", "--B", "orthant:4"],
        ["intersect", "--A", "orthant:3", "--B", "soc:3", "--dim", "4"],
        ["cp", "--cone", "orthant:4", "--m", "2", "--x", "e9"],
        ["cp", "--cone", "orthant:4", "--m", "2", "--b", "1,2,3"],
        ["logistic-exists", "--cone", "full:3"],
        ["nonsense"],
        [],
    ],
)
def test_config_errors_exit_2(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(argv, capsys)
    assert code == EXIT_CONFIG
    assert err


def test_intersect(capsys):
    code, out, _ = run(["intersect", "--A", "orthant:3", "--B", "neg:(orthant:3)"], capsys)
    assert code == EXIT_OK
    lines = data_lines(out)
    assert lines[0] == "verdict,rho,iters"
    assert lines[1].startswith("trivial,")
    code, out, _ = run(["intersect", "--A", "soc:3", "--B", "orthant:3", "--dim", "3"], capsys)
    assert data_lines(out)[1].startswith("nontrivial,")


def test_width(capsys):
    code, out, _ = run(["width", "--cone", "full:1", "--trials", "4000"], capsys)
    assert code == EXIT_OK
    est, se = map(float, data_lines(out)[1].split(",")[2:4])
    assert abs(est - np.sqrt(2 / np.pi)) <= 4 * se


def test_cp_with_matrix_file(capsys, tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("1,1\n")
    code, out, _ = run(["cp", "--cone", "orthant:2", "--m", "1", "--matrix", str(path), "--b", "1"], capsys)
    assert code == EXIT_OK
    kind, value, flag = data_lines(out)[1].split(",")
    assert kind == "bounded" and abs(float(value) - 1) <= 1e-6 and flag == ""
    code, out, _ = run(["cp", "--cone", "orthant:2", "--m", "1", "--matrix", str(path), "--b", "-1"], capsys)
    assert data_lines(out)[1].startswith("infeasible,")
    code, _, err = run(["cp", "--cone", "orthant:2", "--m", "2", "--matrix", str(path)], capsys)
    assert code == EXIT_CONFIG and "shape" in err


def test_cp_drawn_unbounded(capsys):
    code, out, _ = run(["cp", "--cone", "orthant:20", "--m", "2", "--x", "e1", "--seed", "3", "--strict"], capsys)
    assert code == EXIT_OK
    assert data_lines(out)[1].startswith("unbounded,inf")


def test_logistic_from_file(capsys, tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,1\n-1,1\n")
    code, out, _ = run(["logistic-exists", "--cone", "full:1", "--file", str(path)], capsys)
    assert code == EXIT_OK and data_lines(out)[1].startswith("true,2,")
    path.write_text("1,1\n1,2\n")
    code, out, _ = run(["logistic-exists", "--cone", "full:1", "--file", str(path)], capsys)
    assert data_lines(out)[1].startswith("false,2,")
    path.write_text("0,1\n1,2\n")
    assert run(["logistic-exists", "--cone", "full:1", "--file", str(path)], capsys)[0] == EXIT_CONFIG


def test_logistic_drawn(capsys):
    code, out, _ = run(["logistic-exists", "--cone", "full:5", "--m", "60", "--seed", "2"], capsys)
    assert code == EXIT_OK and data_lines(out)[1].startswith("true,60,")


def test_defaults_table(capsys):
    code, out, _ = run(["defaults"], capsys)
    assert code == EXIT_OK
    assert "detector,starts,16" in out and "detector,rho_tol,0.0001" in out and "experiment,n_dir,50" in out


# ------------------------------------------------------------------ phase


def _config(tmp_path, **kw):
    base = {"cone_K": "subspace:10:3", "axis": "ell", "grid": [4, 7, 8, 10], "trials": 20, "seed": 5}
    base.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base))
    return path


def test_phase_escape(capsys, tmp_path):
    path = _config(tmp_path)
    out_path = tmp_path / "grid.csv"
    code, out, _ = run(["phase", "escape", "--config", str(path), "--out", str(out_path)], capsys)
    assert code == EXIT_OK and out == ""
    lines = out_path.read_text().splitlines()
    assert lines[0].startswith("# conelab v") and "seed=5" in lines[0]
    assert [line.split(",")[3] for line in lines[2:6]] == ["0", "0", "1", "1"]


def test_phase_experiment_mismatch(capsys, tmp_path):
    path = _config(tmp_path, experiment="kinematic")
    code, _, err = run(["phase", "escape", "--config", str(path)], capsys)
    assert code == EXIT_CONFIG and "does not match" in err


def test_phase_rejects_unknown_key(capsys, tmp_path):
    path = _config(tmp_path, colour="red")
    code, _, err = run(["phase", "escape", "--config", str(path)], capsys)
    assert code == EXIT_CONFIG and "colour" in err


def test_phase_names_cover_experiments():
    from conelab.phase_lab import EXPERIMENTS

    assert sorted(PHASE_NAMES.values()) == sorted(EXPERIMENTS)


def test_workers_env_fallback(capsys, tmp_path, monkeypatch):
    path = _config(tmp_path, cone_K="orthant:10", grid=[3, 5])
    code, serial, _ = run(["phase", "escape", "--config", str(path)], capsys)
    monkeypatch.setenv("CONELAB_WORKERS", "2")
    code2, parallel, _ = run(["phase", "escape", "--config", str(path)], capsys)
    assert code == code2 == EXIT_OK and serial == parallel
    monkeypatch.setenv("CONELAB_WORKERS", "many")
    assert run(["phase", "escape", "--config", str(path)], capsys)[0] == EXIT_CONFIG
    assert run(["phase", "escape", "--config", str(path), "--workers", "0"], capsys)[0] == EXIT_CONFIG


# ------------------------------------------------------------------ binary


def test_console_script_and_module():
    res = subprocess.run([sys.executable, "-m", "conelab", "stat-dim", "--cone", "orthant:0"],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_CONFIG
    res = subprocess.run([sys.executable, "-m", "conelab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("conelab ")


def test_selftest_passes(capsys):
    code, out, _ = run(["selftest"], capsys)
    assert code == EXIT_OK
    assert out.count("PASS") == 5 and "FAIL" not in out
