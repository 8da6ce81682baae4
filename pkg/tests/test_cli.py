"""End-to-end command line runs (in-process, plus one subprocess check)."""

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from bsvie.cli import _DIAG_FIELDS, main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _write(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload, indent=1))
    return str(p)


def _tree_cfg(label="ent", steps=16, **extra):
    cfg = {
        "run": {"label": label, "horizon": 1.0, "steps": steps, "seed": 3,
                "backend": "tree"},
        "problem": {
            "generator": {"family": "entropic_diag", "gamma": 1.0},
            "free_term": {"kind": "terminal", "functional": "terminal_value",
                          "scale": -1.0},
        },
    }
    cfg.update(extra)
    return cfg


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_bsde_tree_run(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _tree_cfg())
    out = tmp_path / "out"
    assert main(["solve-bsde", "--config", cfg, "--out", str(out), "--threads", "4"]) == 0
    rows = _read_rows(out / "ent_bsde.csv")
    assert rows[0] == ["t", "component", "stat", "value"]
    assert len(rows) > 1
    png = (out / "ent_bsde_y.png").read_bytes()
    assert png.startswith(PNG_MAGIC)
    manifest = json.loads((out / "ent_manifest.json").read_text())
    assert manifest["command"] == "solve-bsde"
    assert manifest["threads"] == 4
    assert manifest["seed"] == 3
    assert len(manifest["config_sha256"]) == 64
    assert manifest["extra"]["root_value"][0] == pytest.approx(0.5, abs=1e-10)
    stdout = capsys.readouterr().out
    assert "solve-bsde ok" in stdout


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, "c.json", _tree_cfg())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve-bsde", "--config", cfg, "--out", str(a)]) == 0
    assert main(["solve-bsde", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "ent_bsde.csv").read_bytes() == (b / "ent_bsde.csv").read_bytes()
    assert (a / "ent_bsde_y.png").read_bytes() == (b / "ent_bsde_y.png").read_bytes()


def test_solve_bsvie_run(tmp_path):
    payload = _tree_cfg(label="vol")
    payload["problem"]["free_term"] = {
        "kind": "process", "functional": "bounded_sin", "scale": 0.1,
        "time_profile": "affine_decay",
    }
    payload["problem"]["generator"]["coef_y"] = -0.4
    payload["solver"] = {"picard": {"max_outer": 15, "eps_outer": 1e-8}}
    cfg = _write(tmp_path, "v.json", payload)
    out = tmp_path / "out"
    assert main(["solve-bsvie", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_rows(out / "vol_bsvie_diagonal.csv")
    assert rows[0] == ["t", "component", "Y", "picard_iters"]
    manifest = json.loads((out / "vol_manifest.json").read_text())
    assert manifest["extra"]["verdict"] == "converged"
    assert manifest["extra"]["iterations"] <= 15


def test_schema_error_exits_2_with_path(tmp_path, capsys):
    payload = _tree_cfg()
    payload["problem"]["generator"] = {"family": "subquad_diag", "gamma": 1.0,
                                       "kappa": 2.0, "delta": 1.5}
    cfg = _write(tmp_path, "bad.json", payload)
    assert main(["solve-bsde", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "problem.generator.delta" in err


def test_unknown_key_exits_2(tmp_path, capsys):
    payload = _tree_cfg()
    payload["run"]["stepss"] = 4
    cfg = _write(tmp_path, "bad.json", payload)
    assert main(["solve-bsde", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "stepss" in capsys.readouterr().err


def test_inner_stall_exits_3(tmp_path, capsys):
    payload = _tree_cfg(label="stall", steps=10)
    payload["problem"]["generator"] = {"family": "linear", "coef_y": -60.0}
    payload["problem"]["free_term"] = {"kind": "terminal", "functional": "bounded_sin"}
    cfg = _write(tmp_path, "s.json", payload)
    assert main(["solve-bsde", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "inner fixed point" in capsys.readouterr().err


def test_blowup_exits_4(tmp_path, capsys):
    payload = _tree_cfg(label="boom", steps=32)
    payload["problem"]["generator"] = {"family": "superquad", "p": 3.0}
    payload["problem"]["free_term"] = {"kind": "terminal", "functional": "tanh_scaled",
                                       "scale": 8.0}
    cfg = _write(tmp_path, "b.json", payload)
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["solve-bsde", "--config", cfg, "--out", str(tmp_path / "o")]) == 4
    assert "non-finite" in capsys.readouterr().err


def test_seed_override_recorded_and_effective(tmp_path):
    payload = _tree_cfg(label="mc", steps=10)
    payload["run"]["backend"] = "mc"
    payload["solver"] = {"mc": {"n_paths": 2000}}
    cfg = _write(tmp_path, "m.json", payload)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve-bsde", "--config", cfg, "--out", str(a)]) == 0
    assert main(["solve-bsde", "--config", cfg, "--out", str(b), "--seed", "99"]) == 0
    ma = json.loads((a / "mc_manifest.json").read_text())
    mb = json.loads((b / "mc_manifest.json").read_text())
    assert ma["seed"] == 3 and mb["seed"] == 99
    assert (a / "mc_bsde.csv").read_bytes() != (b / "mc_bsde.csv").read_bytes()
    assert ma["config_sha256"] != mb["config_sha256"]


def test_risk_extended_reports_k_hat(tmp_path):
    payload = {
        "run": {"label": "rk", "horizon": 1.0, "steps": 20, "backend": "tree"},
        "risk": {"method": "extended_bsde", "gamma": 1.0, "alpha": 0.5, "kappa": 2.0,
                 "position": {"kind": "terminal", "functional": "bounded_sin"}},
    }
    cfg = _write(tmp_path, "r.json", payload)
    out = tmp_path / "out"
    assert main(["risk", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_rows(out / "rk_risk.csv")
    assert rows[0] == ["t", "kind", "value", "method"]
    assert rows[1][1] == "k_hat"
    assert float(rows[1][2]) > 0
    manifest = json.loads((out / "rk_manifest.json").read_text())
    assert manifest["extra"]["z_convention"] == "negated"


def test_risk_requires_section(tmp_path, capsys):
    cfg = _write(tmp_path, "r.json", _tree_cfg())
    assert main(["risk", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "risk" in capsys.readouterr().err


def test_verify_pipeline(tmp_path):
    payload = {
        "run": {"label": "vf", "horizon": 1.0, "steps": 24, "backend": "tree"},
        "problem": {
            "generator": {"family": "subquad_diag", "gamma": 1.0, "kappa": 2.0,
                          "delta": 0.5},
            "free_term": {"kind": "terminal", "functional": "bounded_sin"},
        },
        "verify": {"checks": ["assumptions", "exp_moment_bound", "bmo", "reduction"],
                   "hypotheses": ["diagonal_subquadratic_convex"],
                   "alpha0": 0.0, "beta": 0.5, "delta": 0.5, "crosscheck": True},
    }
    cfg = _write(tmp_path, "v.json", payload)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_rows(out / "vf_diagnostics.csv")
    assert rows[0] == _DIAG_FIELDS
    by_check = {}
    for r in rows[1:]:
        by_check.setdefault(r[0], []).append(r)
    assert by_check["assumptions/diagonal_subquadratic_convex"][0][-1] == "pass"
    assert by_check["exp_moment_bound/crosscheck"][0][-1] == "pass"
    assert by_check["reduction"][0][-1] == "converged"
    assert "bmo_estimate" in by_check
    manifest = json.loads((out / "vf_manifest.json").read_text())
    assert manifest["extra"]["exp_moment_bound"]["verdict"] == "holds"
    assert manifest["extra"]["reduction_discrepancy"] == 0.0
    assert (out / "vf_diagnostics.png").read_bytes().startswith(PNG_MAGIC)


def test_verify_gate_refusal_is_a_row_not_an_exit(tmp_path):
    payload = {
        "run": {"label": "rf", "horizon": 1.0, "steps": 16, "backend": "tree"},
        "problem": {
            "generator": {"family": "entropic_diag", "gamma": 1.0, "coef_y": 0.5},
            "free_term": {"kind": "terminal", "functional": "bounded_sin"},
        },
        "verify": {"checks": ["exp_moment_bound"], "beta": 0.5, "delta": 1.0},
    }
    cfg = _write(tmp_path, "v.json", payload)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_rows(out / "rf_diagnostics.csv")
    verdicts = [r[-1] for r in rows[1:] if r[0] == "exp_moment_bound"]
    assert verdicts and verdicts[0].startswith("refused:")


def test_sweep_fits_first_order(tmp_path):
    payload = _tree_cfg(label="sw")
    payload["sweep"] = {"steps_ladder": [10, 20, 40]}
    cfg = _write(tmp_path, "s.json", payload)
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_rows(out / "sw_sweep.csv")
    assert rows[0] == ["steps", "h", "value", "reference", "abs_error"]
    assert len(rows) == 4
    manifest = json.loads((out / "sw_manifest.json").read_text())
    assert manifest["extra"]["fitted_order"] > 0.8


def test_sweep_rejects_non_quadratic_driver(tmp_path, capsys):
    payload = _tree_cfg(label="sw")
    payload["problem"]["generator"] = {"family": "subquad_diag", "gamma": 1.0,
                                       "kappa": 2.0, "delta": 0.5}
    payload["sweep"] = {"steps_ladder": [10, 20]}
    cfg = _write(tmp_path, "s.json", payload)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "closed form" in capsys.readouterr().err


def test_demo_superquad_run(tmp_path):
    payload = {
        "run": {"label": "dm", "horizon": 1.0, "steps": 8, "backend": "tree"},
        "demo": {"p": 3.0, "terminal_scale": 4.0, "steps_ladder": [8, 16]},
    }
    cfg = _write(tmp_path, "d.json", payload)
    out = tmp_path / "out"
    assert main(["demo-superquad", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "dm_manifest.json").read_text())
    assert manifest["extra"]["verdict"] == "instability observed"
    rows = _read_rows(out / "dm_diagnostics.csv")
    assert rows[0] == _DIAG_FIELDS
    assert len(rows) == 3


def test_unknown_command_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "x.json"])
    assert exc.value.code == 2


def test_console_script_subprocess(tmp_path):
    exe = shutil.which("bsvie")
    assert exe, "console script should be installed"
    cfg = _write(tmp_path, "c.json", _tree_cfg(steps=8))
    res = subprocess.run(
        [exe, "solve-bsde", "--config", cfg, "--out", str(tmp_path / "o")],
        capture_output=True, text=True, timeout=120,
    )
    assert res.returncode == 0, res.stderr
    assert "solve-bsde ok" in res.stdout
