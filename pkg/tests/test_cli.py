import os

import pytest

from pathgibbs.cli import main


def test_validate_config_ok(tmp_path, capsys):
    f = tmp_path / "good.cfg"
    f.write_text("study.variant = cluster_identity\nsampler.seed = 3\n")
    assert main(["validate-config", "--config", str(f)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_shipped_config():
    cfg = os.path.join(os.path.dirname(__file__), "..", "configs",
                       "pphi1_harmonic.cfg")
    assert main(["validate-config", "--config", cfg]) == 0


def test_unknown_key_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("study.not_a_key = 1\n")
    code = main(["validate-config", "--config", str(f)])
    assert code == 1
    assert "study.not_a_key" in capsys.readouterr().err


def test_missing_seed_is_usage_error(tmp_path, capsys):
    f = tmp_path / "c.cfg"
    f.write_text("study.variant = cluster_identity\n")
    code = main(["cluster", "--config", str(f), "--out", str(tmp_path)])
    assert code == 1
    assert "seed" in capsys.readouterr().err


def test_subcommand_study_mismatch(tmp_path, capsys):
    f = tmp_path / "c.cfg"
    f.write_text("study.variant = polaron_energy\n")
    code = main(["phase", "--config", str(f), "--seed", "1", "--out", str(tmp_path)])
    assert code == 1


def test_spectral_anchor_run(tmp_path, capsys):
    code = main(["spectral", "--seed", "1", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "[PASS] harmonic_E0" in out
    assert os.path.exists(tmp_path / "spectral" / "manifest.json")


def test_spectral_failure_exit_code(tmp_path, capsys):
    f = tmp_path / "coarse.cfg"
    f.write_text("spectral.n_points = 41\nspectral.m = 4\n")
    code = main(["spectral", "--config", str(f), "--seed", "1",
                 "--out", str(tmp_path)])
    assert code == 2  # anchors cannot hold on a 41-point grid
    assert "[FAIL]" in capsys.readouterr().out


def test_cluster_study_via_cli(tmp_path, capsys):
    f = tmp_path / "cluster.cfg"
    f.write_text(
        "study.variant = cluster_identity\n"
        "study.N_values = 2,3\n"
        "study.positions = 2,3\n"
        "study.eta_ladder = 0.01,0.04\n"
        "study.eta_coupled_ladder = 0.005,0.04\n"
        "study.eta_order = 3\n"
    )
    code = main(["cluster", "--config", str(f), "--seed", "2",
                 "--out", str(tmp_path), "--deterministic"])
    assert code == 0
    assert os.path.exists(tmp_path / "cluster" / "cluster.csv")


def test_out_env_override(tmp_path, monkeypatch, capsys):
    target = tmp_path / "env_out"
    monkeypatch.setenv("PATHGIBBS_OUT", str(target))
    code = main(["spectral", "--seed", "1", "--out", str(tmp_path / "ignored")])
    assert code == 0
    assert os.path.exists(target / "spectral" / "manifest.json")
