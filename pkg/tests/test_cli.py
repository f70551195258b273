import json

import numpy as np
import pytest

from cvthdmr import cli
from cvthdmr.config import ExperimentConfig, read_csv
from cvthdmr.errors import ConvergenceError
from cvthdmr.parameter_space import read_points_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def samples(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("sample", "-p", 3, "-n", 200, "--seed", 1, "--out", d / "x.csv") == 0
    return d


def test_sample_and_cluster(samples, capsys):
    X = read_points_csv(samples / "x.csv")
    assert X.shape == (200, 3)
    assert run("cluster", "--input", samples / "x.csv", "--clusters", 3, "--out", samples / "cl") == 0
    assert "E_total" in capsys.readouterr().out
    part = json.loads((samples / "cl" / "partition.json").read_text())
    assert part["L"] == 3 and sum(part["counts"]) == 200


def test_build_predict_integrate(samples, capsys):
    model = samples / "m.jsonl"
    assert run("build", "--input", samples / "x.csv", "--clusters", 2, "--order", 2, "--nodes-per-dim", 5,
               "--out", model) == 0
    assert "with 122 model evaluations" in capsys.readouterr().out
    assert run("predict", "--model", model, "--input", samples / "x.csv", "--out", samples / "y.csv") == 0
    _, rows = read_csv(samples / "y.csv")
    assert len(rows) == 200
    assert run("predict", "--model", model, "--input", samples / "x.csv", "--average",
               "--out", samples / "ya.csv") == 0
    assert run("integrate", "--model", model, "--points", 4096, "--out", samples / "i.csv") == 0
    value = float(capsys.readouterr().out.split()[-1])
    assert abs(value - 1) < 0.05


def test_integrate_per_term_tensor(samples, capsys):
    model = samples / "m1.jsonl"
    assert run("build", "--input", samples / "x.csv", "--clusters", 1, "--order", 2, "--nodes-per-dim", 5,
               "--out", model) == 0
    assert run("integrate", "--model", model, "--method", "per-term-tensor") == 0
    assert run("integrate", "--model", model, "--method", "per-term-tensor", "--dist", "beta") == 2


def test_config_errors_exit_2(samples, tmp_path):
    assert run("cluster", "--input", samples / "x.csv", "--clusters", 500, "--out", tmp_path) == 2
    assert run("predict", "--model", tmp_path / "none.jsonl", "--input", samples / "x.csv",
               "--out", tmp_path / "y.csv") == 2
    assert run("sample", "--dist", "gamma", "--out", tmp_path / "x.csv") == 2
    assert run("experiment", "quadrature", "--order", 9, "--out", tmp_path) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"N": -1}')
    assert run("experiment", "diffusion", "--config", bad) == 2
    assert run() == 2
    assert run("--help") == 0


def test_numeric_failure_exit_3(samples, tmp_path, monkeypatch):
    def boom(*a, **kw):
        raise ConvergenceError("did not converge")

    monkeypatch.setattr(cli, "lloyd", boom)
    assert run("cluster", "--input", samples / "x.csv", "--clusters", 2, "--out", tmp_path) == 3


def test_experiment_write_config(tmp_path):
    out = tmp_path / "cfg.json"
    assert run("experiment", "diffusion", "--seed", 4, "--clusters", 1, 2, "--samples", 100,
               "--write-config", out) == 0
    cfg = ExperimentConfig.load(out)
    assert cfg.kind == "diffusion" and cfg.L == [1, 2] and cfg.N == 100
    assert cfg.seeds == {"samples": 4, "cvt": 4, "test": 5, "random_anchor": 6}


def test_experiment_and_plots(tmp_path):
    cfg = ExperimentConfig.diffusion(N=60, L=[1, 2], n_test=10, grid=5)
    cfg.save(tmp_path / "c.json")
    res = tmp_path / "res"
    assert run("experiment", "diffusion", "--config", tmp_path / "c.json", "--out", res) == 0
    assert (res / "diffusion_models.csv").exists()
    assert run("export-plots", "--results", res) == 0
    assert (res / "plots" / "E_vs_L.svg").exists()
    assert run("export-plots", "--results", tmp_path / "nothing") == 2
