import pytest

from cvthdmr.config import ExperimentConfig, read_csv
from cvthdmr.errors import ParameterError
from cvthdmr.experiments import run_experiment
from cvthdmr.plots import export_plots


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("res")
    cfg = ExperimentConfig.quadrature(N=300, L=[1, 2], r=[1, 2], n_qmc=2**11, n_reference=2**12)
    run_experiment(cfg, out)
    return out


def test_quadrature_plot_files(results, tmp_path):
    paths = export_plots(results, tmp_path)
    names = sorted(p.name for p in paths)
    assert "epsilon_vs_r_uniform.csv" in names and "epsilon_vs_r_uniform.svg" in names
    _, rows = read_csv(tmp_path / "epsilon_vs_r_uniform.csv")
    assert rows and "r" in rows[0]
    assert (tmp_path / "epsilon_vs_r_uniform.svg").read_text().lstrip().startswith("<?xml")


def test_svg_output_reproducible(results, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    export_plots(results, a)
    export_plots(results, b)
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_missing_reports(tmp_path):
    with pytest.raises(ParameterError):
        export_plots(tmp_path)
