import json
import os

import numpy as np
import pytest

from pathgibbs.config import load_config, parse_config_text, render_config
from pathgibbs.errors import ConfigError, DomainError
from pathgibbs.experiments import (
    StudySpec,
    run_cluster_identity,
    run_pphi1_validation,
    write_csv,
)

SMALL_PPHI1 = {
    "n_samples": 1_000_000,
    "n_replicas": 1024,
    "n_grid": 1201,
    "dlr_sweeps": 800,
    "burn_in": 300,
}

SMALL_CLUSTER = {
    "N_values": (2, 3, 4),
    "positions": (2, 3),
    "eta_ladder": (0.01, 0.04),
    "eta_coupled_ladder": (0.005, 0.04),
    "eta_order": 3,
}


def test_study_spec_validation():
    with pytest.raises(DomainError):
        StudySpec("unknown_study")
    with pytest.raises(DomainError):
        StudySpec("phase_transition", {"gamma": 2.5})
    StudySpec("phase_transition", {"gamma": 1.5})


def test_pphi1_outputs_and_manifest(tmp_path):
    asr = run_pphi1_validation(StudySpec("pphi1_validation", dict(SMALL_PPHI1)),
                               str(tmp_path), seed=1)
    assert asr.all_passed
    out = tmp_path / "pphi1"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1
    assert manifest["spectral_digest"]
    assert manifest["rng"].startswith("numpy PCG64")
    assert all(r["passed"] for r in manifest["assertions"])
    marginal = (out / "marginal.csv").read_text().splitlines()
    assert marginal[0] == "x,nu_density,empirical_density,ci_lo,ci_hi"
    assert len(marginal) > 10
    cov = (out / "covariance.csv").read_text().splitlines()
    assert cov[0] == "lag,cov,stderr"


def test_cluster_deterministic_rerun_byte_identical(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    for d in (a_dir, b_dir):
        asr = run_cluster_identity(
            StudySpec("cluster_identity", dict(SMALL_CLUSTER)), str(d),
            seed=9, deterministic=True)
        assert asr.all_passed
    a = (a_dir / "cluster" / "cluster.csv").read_bytes()
    b = (b_dir / "cluster" / "cluster.csv").read_bytes()
    assert a == b


def test_cluster_identity_outputs(tmp_path):
    asr = run_cluster_identity(StudySpec("cluster_identity", dict(SMALL_CLUSTER)),
                               str(tmp_path), seed=2)
    assert asr.all_passed
    rows = (tmp_path / "cluster" / "cluster.csv").read_text().splitlines()
    assert rows[0] == "order,partial_sum,direct_value,lambda,N,n_positions"
    assert len(rows) > 10


def test_write_csv_full_precision(tmp_path):
    f = tmp_path / "x.csv"
    write_csv(str(f), ["a", "b"], [(1.0 / 3.0, 2)])
    text = f.read_text().splitlines()
    assert text[0] == "a,b"
    val = float(text[1].split(",")[0])
    assert val == 1.0 / 3.0  # repr round-trips exactly


# ---------------------------------------------------------------------------
# configuration


def test_config_roundtrip(tmp_path):
    cfg_text = """
# comment line
study.variant = pphi1_validation
study.T_ladder = 2.0,4.0,8.0
study.n_samples = 1000   # trailing comment
sampler.seed = 7
"""
    cfg = parse_config_text(cfg_text)
    assert cfg["study.variant"] == "pphi1_validation"
    assert cfg["study.T_ladder"] == [2.0, 4.0, 8.0]
    assert cfg["study.n_samples"] == 1000
    echoed = render_config(cfg)
    assert parse_config_text(echoed) == cfg


def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config_text("study.bogus_key = 1\n")
    assert "study.bogus_key" in str(err.value)


def test_config_bad_value_and_range():
    with pytest.raises(ConfigError):
        parse_config_text("study.n_samples = many\n")
    with pytest.raises(ConfigError):
        parse_config_text("study.gamma = 2.5\n")
    with pytest.raises(ConfigError):
        parse_config_text("just a line without equals\n")


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    names = os.listdir(root)
    assert len(names) >= 6
    for name in names:
        cfg = load_config(os.path.join(root, name))
        assert parse_config_text(render_config(cfg)) == cfg
