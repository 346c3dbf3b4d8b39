"""Command line behavior: argument handling, exit codes, and the printed
summaries for run, sweep, list-experiments, and validate-config."""

import os

import numpy as np
import pytest

from maco_sim import cli, experiments
from maco_sim.cli import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK

BASE_YAML = """\
machine:
  nodes: 1
workload:
  m: 32
  n: 32
  k: 32
  precision: fp32
  tr: 32
  tc: 32
  ttr: 16
  ttc: 16
  stash: false
run:
  seed: 5
"""


@pytest.fixture
def base_config(tmp_path):
    path = tmp_path / "base.yaml"
    path.write_text(BASE_YAML)
    return str(path)


def test_run_writes_csv(base_config, tmp_path, capsys):
    out = str(tmp_path / "run.csv")
    assert cli.main(["run", "--config", base_config, "--out", out]) == EXIT_OK
    assert os.path.exists(out)
    text = capsys.readouterr().out
    assert "GFLOPS" in text and out in text


def test_run_needs_exactly_one_source(base_config):
    assert cli.main(["run"]) == EXIT_CONFIG
    assert cli.main(["run", "--config", base_config,
                     "--experiment", "peak_ideal"]) == EXIT_CONFIG


def test_run_missing_file_is_config_error(tmp_path):
    missing = str(tmp_path / "none.yaml")
    assert cli.main(["run", "--config", missing]) == EXIT_CONFIG


def test_run_bad_override_is_config_error(base_config):
    assert cli.main(["run", "--config", base_config,
                     "--set", "workload.precision=bogus"]) == EXIT_CONFIG
    assert cli.main(["run", "--config", base_config,
                     "--set", "nonsense"]) == EXIT_CONFIG


def test_run_reports_functional_mismatch(base_config, monkeypatch):
    real = experiments._oracle

    def skewed(a, b, c0=None):
        return real(a, b, c0) + np.array(1, dtype=a.dtype)

    monkeypatch.setattr(experiments, "_oracle", skewed)
    assert cli.main(["run", "--config", base_config]) == EXIT_MISMATCH


def test_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "fig7_scalability" in text and "peak_ideal" in text


def test_validate_config_echoes_effective_values(base_config, capsys):
    assert cli.main(["validate-config", "--config", base_config,
                     "--set", "machine.nodes=4"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "machine.nodes=4" in text
    assert 'workload.precision="fp32"' in text


def test_sweep_exit_codes(base_config, tmp_path, capsys):
    out_ok = str(tmp_path / "ok")
    code = cli.main(["sweep", "--config", base_config,
                     "--axis", "workload.k=16,32", "--out", out_ok])
    assert code == EXIT_OK
    assert "2/2 runs ok" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out_ok, "manifest.json"))

    out_bad = str(tmp_path / "bad")
    code = cli.main(["sweep", "--config", base_config,
                     "--axis", "workload.precision=fp32,nosuch",
                     "--out", out_bad])
    assert code == EXIT_MISMATCH
    assert "1/2 runs ok" in capsys.readouterr().out
