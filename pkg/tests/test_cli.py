import json

import pytest

from honeycomb_bie import perturb
from honeycomb_bie.cli import MANIFEST_SCHEMA, main

FAST = ["--n-nodes", "48"]


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["dirac", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_override_exits_2(tmp_path, capsys):
    assert main(["dirac", "--n-nodes", "50", "--out", str(tmp_path)]) == 2
    assert "n_nodes" in capsys.readouterr().err
    assert not (tmp_path / "manifest.json").exists()


def test_emit_config_round_trips(tmp_path, capsys):
    assert main(["dirac", "--eta", "0.3", "--emit-config"]) == 0
    text = capsys.readouterr().out
    p = tmp_path / "run.cfg"
    p.write_text(text)
    assert main(["dirac", "--config", str(p), "--emit-config"]) == 0
    assert capsys.readouterr().out == text


def test_dirac_manifest(tmp_path):
    out = tmp_path / "dirac"
    assert main(["dirac", "--out", str(out)] + FAST) == 0
    m = _manifest(out)
    assert set(MANIFEST_SCHEMA) <= set(m)
    assert m["command"] == "dirac" and m["config"]["solver"]["n_nodes"] == 48
    h = m["headline"]
    assert h["lambda_star"] == pytest.approx(25.092371, abs=1e-5)
    assert h["multiplicity"] == 2
    assert h["m_star"] == pytest.approx(3.90, abs=0.02)
    assert m["files"] == ["cone_samples.csv"]
    assert (out / "cone_samples.csv").read_text().startswith("angle_rad,radius,lambda_minus,lambda_plus\n")
    assert not list(out.glob(".manifest.*"))


def test_dirac_check_reports_literal_window(tmp_path, capsys):
    # the default Dirac point lies above the |K|^2 +- 3 window, so the check fails
    assert main(["dirac", "--check", "--out", str(tmp_path)] + FAST) == 4
    assert "check in_window: FAIL" in capsys.readouterr().out
    assert _manifest(tmp_path)["checks"]["in_window"]["pass"] is False


def test_csv_output_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["coeffs", "--out", str(tmp_path / d)] + FAST) == 0
    for name in ("coefficients.csv", "structure.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gap_check_failure_exits_4(tmp_path, monkeypatch):
    real = perturb.compare_gap

    def poor_overlap(coeffs, dirac, eps=0.05):
        rep = real(coeffs, dirac, eps)
        rep.swap_overlaps = (0.5, 0.5)
        return rep

    monkeypatch.setattr(perturb, "compare_gap", poor_overlap)
    assert main(["gap", "--check", "--out", str(tmp_path)] + FAST) == 4
    checks = _manifest(tmp_path)["checks"]
    assert checks["swap_overlaps"]["pass"] is False
    assert checks["gap_vs_prediction"]["pass"] is True


def test_solver_error_exits_3(tmp_path, capsys):
    # a window below the first band holds no Dirac point
    assert main(["dirac", "--set", "dirac.lam_lo=1", "--set", "dirac.lam_hi=2", "--out", str(tmp_path)] + FAST) == 3
    assert "solver error" in capsys.readouterr().err
